//! Synthetic mixed-type defect wafers with known pattern labels.
//!
//! Geometry is given in fractions of the wafer radius and angles in degrees
//! (0 = east, counterclockwise, rows grow downward).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wafer::{CellState, WaferMap};

pub const DEFAULT_FILL_RATE: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("grid must be at least 8x8, got {rows}x{cols}")]
    GridTooSmall { rows: usize, cols: usize },
    #[error("noise rate must lie in [0, 0.5), got {0}")]
    NoiseRate(f64),
    #[error("pattern {index}: {message}")]
    InvalidPattern { index: usize, message: String },
    #[error("pattern {0} rasterizes to no in-mask cells")]
    EmptyRaster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PatternKind {
    CenterDisk {
        radius: f64,
    },
    /// Round blob centered `distance` radii from the wafer center.
    EdgeZone {
        angle_deg: f64,
        distance: f64,
        radius: f64,
    },
    Donut {
        inner: f64,
        outer: f64,
    },
    PartialRing {
        inner: f64,
        outer: f64,
        start_deg: f64,
        extent_deg: f64,
    },
    /// One-cell-wide line of `length` chips starting at polar
    /// `(distance, angle_deg)`.
    Scratch {
        angle_deg: f64,
        distance: f64,
        direction_deg: f64,
        length: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    #[serde(flatten)]
    pub kind: PatternKind,
    #[serde(default = "default_fill_rate")]
    pub fill_rate: f64,
}

fn default_fill_rate() -> f64 {
    DEFAULT_FILL_RATE
}

impl PatternSpec {
    pub fn new(kind: PatternKind) -> Self {
        Self {
            kind,
            fill_rate: DEFAULT_FILL_RATE,
        }
    }

    pub fn with_fill(mut self, fill_rate: f64) -> Self {
        self.fill_rate = fill_rate;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let frac = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} must lie in [0, 1], got {v}"))
            }
        };
        if !(self.fill_rate > 0.0 && self.fill_rate <= 1.0) {
            return Err(format!("fill_rate must lie in (0, 1], got {}", self.fill_rate));
        }
        match self.kind {
            PatternKind::CenterDisk { radius } => frac("radius", radius),
            PatternKind::EdgeZone {
                distance, radius, ..
            } => {
                frac("distance", distance)?;
                frac("radius", radius)
            }
            PatternKind::Donut { inner, outer } => {
                frac("inner", inner)?;
                frac("outer", outer)?;
                if inner >= outer {
                    return Err("inner must be < outer".into());
                }
                Ok(())
            }
            PatternKind::PartialRing {
                inner,
                outer,
                extent_deg,
                ..
            } => {
                frac("inner", inner)?;
                frac("outer", outer)?;
                if inner >= outer {
                    return Err("inner must be < outer".into());
                }
                if !(extent_deg > 0.0 && extent_deg <= 360.0) {
                    return Err("extent_deg must lie in (0, 360]".into());
                }
                Ok(())
            }
            PatternKind::Scratch {
                distance, length, ..
            } => {
                frac("distance", distance)?;
                if length == 0 {
                    return Err("length must be >= 1".into());
                }
                Ok(())
            }
        }
    }
}

/// Circle inscribed in a `rows x cols` grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaferGeometry {
    pub rows: usize,
    pub cols: usize,
    pub center: [f64; 2],
    pub radius: f64,
}

impl WaferGeometry {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            center: [(rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0],
            radius: rows.min(cols) as f64 / 2.0,
        }
    }

    pub fn in_mask(&self, r: usize, c: usize) -> bool {
        let (dy, dx) = (r as f64 - self.center[0], c as f64 - self.center[1]);
        dy * dy + dx * dx <= self.radius * self.radius
    }

    /// Normalized radius and angle in degrees `[0, 360)` of a cell.
    pub fn polar(&self, r: usize, c: usize) -> (f64, f64) {
        let (dy, dx) = (r as f64 - self.center[0], c as f64 - self.center[1]);
        let rho = (dy * dy + dx * dx).sqrt() / self.radius;
        let theta = (-dy).atan2(dx).to_degrees().rem_euclid(360.0);
        (rho, theta)
    }

    /// Grid position `(row, col)` of polar coordinates.
    pub fn point(&self, distance: f64, angle_deg: f64) -> [f64; 2] {
        let a = angle_deg.to_radians();
        [
            self.center[0] - distance * self.radius * a.sin(),
            self.center[1] + distance * self.radius * a.cos(),
        ]
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.rows * self.cols)
            .map(|k| self.in_mask(k / self.cols, k % self.cols))
            .collect()
    }
}

fn angle_within(theta: f64, start: f64, extent: f64) -> bool {
    (theta - start).rem_euclid(360.0) <= extent
}

/// In-mask cells covered by one pattern, row-major.
pub fn rasterize(geo: &WaferGeometry, kind: &PatternKind) -> Vec<usize> {
    let cols = geo.cols;
    let mut covered = vec![false; geo.rows * cols];
    match *kind {
        PatternKind::Scratch {
            angle_deg,
            distance,
            direction_deg,
            length,
        } => {
            let start = geo.point(distance, angle_deg);
            // step so the major axis advances one cell per chip
            let dir = direction_deg.to_radians();
            let (dy, dx) = (-dir.sin(), dir.cos());
            let major = dy.abs().max(dx.abs());
            let steps = (length - 1) as f64 / major;
            let a = [start[0].round() as i64, start[1].round() as i64];
            let b = [
                a[0] + (steps * dy).round() as i64,
                a[1] + (steps * dx).round() as i64,
            ];
            for (r, c) in bresenham(a, b) {
                if r >= 0 && c >= 0 && (r as usize) < geo.rows && (c as usize) < cols {
                    covered[r as usize * cols + c as usize] = true;
                }
            }
        }
        _ => {
            for (k, cell) in covered.iter_mut().enumerate() {
                let (r, c) = (k / cols, k % cols);
                let (rho, theta) = geo.polar(r, c);
                *cell = match *kind {
                    PatternKind::CenterDisk { radius } => rho <= radius,
                    PatternKind::EdgeZone {
                        angle_deg,
                        distance,
                        radius,
                    } => {
                        let p = geo.point(distance, angle_deg);
                        let d = ((r as f64 - p[0]).powi(2) + (c as f64 - p[1]).powi(2)).sqrt();
                        d <= radius * geo.radius
                    }
                    PatternKind::Donut { inner, outer } => rho >= inner && rho <= outer,
                    PatternKind::PartialRing {
                        inner,
                        outer,
                        start_deg,
                        extent_deg,
                    } => rho >= inner && rho <= outer && angle_within(theta, start_deg, extent_deg),
                    PatternKind::Scratch { .. } => unreachable!(),
                };
            }
        }
    }
    (0..covered.len())
        .filter(|&k| covered[k] && geo.in_mask(k / cols, k % cols))
        .collect()
}

/// Grid cells on the line between two points, endpoints included.
fn bresenham(a: [i64; 2], b: [i64; 2]) -> Vec<(i64, i64)> {
    let (mut r, mut c) = (a[0], a[1]);
    let (dr, dc) = ((b[0] - r).abs(), -(b[1] - c).abs());
    let (sr, sc) = ((b[0] - r).signum(), (b[1] - c).signum());
    let mut err = dr + dc;
    let mut out = vec![(r, c)];
    while (r, c) != (b[0], b[1]) {
        let e2 = 2 * err;
        if e2 >= dc {
            err += dc;
            r += sr;
        }
        if e2 <= dr {
            err += dr;
            c += sc;
        }
        out.push((r, c));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthWafer {
    pub map: WaferMap,
    /// Per cell, row-major: 0 for functional, noise or outside, else the
    /// 1-based index of the pattern that produced the defect.
    pub truth_labels: Vec<usize>,
    pub noise_rate: f64,
    pub specs: Vec<PatternSpec>,
    pub seed: u64,
}

/// JSON sidecar carrying the truth labels of a generated wafer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub noise_rate: f64,
    pub specs: Vec<PatternSpec>,
    /// `labels[row][col]`
    pub labels: Vec<Vec<usize>>,
}

impl SynthWafer {
    pub fn sidecar(&self) -> TruthSidecar {
        let cols = self.map.cols();
        TruthSidecar {
            rows: self.map.rows(),
            cols,
            seed: self.seed,
            noise_rate: self.noise_rate,
            specs: self.specs.clone(),
            labels: self.truth_labels.chunks(cols).map(|r| r.to_vec()).collect(),
        }
    }
}

impl TruthSidecar {
    pub fn flat_labels(&self) -> Vec<usize> {
        self.labels.iter().flatten().copied().collect()
    }
}

pub fn generate(
    rows: usize,
    cols: usize,
    specs: &[PatternSpec],
    noise_rate: f64,
    seed: u64,
) -> Result<SynthWafer, GenerationError> {
    if rows < 8 || cols < 8 {
        return Err(GenerationError::GridTooSmall { rows, cols });
    }
    if !(0.0..0.5).contains(&noise_rate) {
        return Err(GenerationError::NoiseRate(noise_rate));
    }
    for (i, spec) in specs.iter().enumerate() {
        spec.validate().map_err(|message| GenerationError::InvalidPattern {
            index: i + 1,
            message,
        })?;
    }
    let geo = WaferGeometry::new(rows, cols);
    let mask = geo.mask();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covered = vec![false; rows * cols];
    let mut defective = vec![false; rows * cols];
    let mut truth = vec![0usize; rows * cols];
    for (i, spec) in specs.iter().enumerate() {
        let raster = rasterize(&geo, &spec.kind);
        if raster.is_empty() {
            return Err(GenerationError::EmptyRaster(i + 1));
        }
        for k in raster {
            covered[k] = true;
            if rng.random::<f64>() < spec.fill_rate {
                defective[k] = true;
                truth[k] = i + 1;
            }
        }
    }
    for k in 0..rows * cols {
        if mask[k] && !covered[k] && rng.random::<f64>() < noise_rate {
            defective[k] = true;
        }
    }
    let cells = (0..rows * cols)
        .map(|k| match (mask[k], defective[k]) {
            (false, _) => CellState::OutsideMask,
            (true, false) => CellState::Functional,
            (true, true) => CellState::Defective,
        })
        .collect();
    let map = WaferMap::new(rows, cols, cells).expect("dimensions match");
    Ok(SynthWafer {
        map,
        truth_labels: truth,
        noise_rate,
        specs: specs.to_vec(),
        seed,
    })
}

/// One wafer of the mixed-type benchmark suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteWafer {
    pub name: String,
    pub family: String,
    pub specs: Vec<PatternSpec>,
    pub seed: u64,
}

pub const SUITE_SIZE: usize = 38;
pub const SUITE_NOISE: f64 = 0.05;

/// Twelve mixed-type wafers: four center + partial ring, two center + zone,
/// three two-zone, two donut + partial ring and one scratch pair.
pub fn mixed_type_suite() -> Vec<SuiteWafer> {
    use PatternKind::*;
    let disk = |radius| PatternSpec::new(CenterDisk { radius });
    let ring = |start_deg, extent_deg| {
        PatternSpec::new(PartialRing {
            inner: 0.70,
            outer: 0.97,
            start_deg,
            extent_deg,
        })
    };
    let zone = |angle_deg, radius| {
        PatternSpec::new(EdgeZone {
            angle_deg,
            distance: 0.72,
            radius,
        })
    };
    let donut = || PatternSpec::new(Donut {
        inner: 0.18,
        outer: 0.48,
    });
    let scratch = |angle_deg, distance, direction_deg, length| {
        PatternSpec::new(Scratch {
            angle_deg,
            distance,
            direction_deg,
            length,
        })
        .with_fill(1.0)
    };
    let wafers: Vec<(&str, Vec<PatternSpec>)> = vec![
        ("center+partial-ring", vec![disk(0.30), ring(20.0, 180.0)]),
        ("center+zone", vec![disk(0.28), zone(300.0, 0.26)]),
        ("two-zone", vec![zone(45.0, 0.25), zone(200.0, 0.27)]),
        ("two-zone", vec![zone(90.0, 0.26), zone(330.0, 0.24)]),
        ("two-zone", vec![zone(150.0, 0.25), zone(15.0, 0.25)]),
        ("center+partial-ring", vec![disk(0.25), ring(200.0, 160.0)]),
        ("center+partial-ring", vec![disk(0.33), ring(100.0, 220.0)]),
        ("donut+partial-ring", vec![donut(), ring(0.0, 200.0)]),
        ("donut+partial-ring", vec![donut(), ring(150.0, 180.0)]),
        ("center+zone", vec![disk(0.30), zone(120.0, 0.25)]),
        ("scratch-pair", vec![scratch(150.0, 0.6, 315.0, 18), scratch(20.0, 0.75, 240.0, 16)]),
        ("center+partial-ring", vec![disk(0.28), ring(260.0, 200.0)]),
    ];
    wafers
        .into_iter()
        .enumerate()
        .map(|(i, (family, specs))| SuiteWafer {
            name: format!("wafer{:02}", i + 1),
            family: family.to_string(),
            specs,
            seed: 1000 + i as u64,
        })
        .collect()
}

impl SuiteWafer {
    pub fn generate(&self) -> SynthWafer {
        generate(SUITE_SIZE, SUITE_SIZE, &self.specs, SUITE_NOISE, self.seed)
            .expect("suite specs are valid")
    }
}
