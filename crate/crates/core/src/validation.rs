//! Cluster validity indices, ground-truth reconstruction and the Wilcoxon
//! signed-rank test.
//!
//! Degenerate inputs yield [`IndexError::Undefined`] with a reason instead of
//! NaN so reports stay machine-checkable.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::iwmm::PointSet;
use crate::wafer::{CellState, Neighborhood, WaferMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
}

/// Cluster labels `1..=K` over `n` observations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Validates contiguous 1-based labels.
    pub fn new(labels: Vec<usize>) -> Result<Self, IndexError> {
        if labels.is_empty() {
            return Err(IndexError::InvalidPartition("empty label vector".into()));
        }
        let k = *labels.iter().max().expect("non-empty");
        let mut used = vec![false; k + 1];
        for &l in &labels {
            used[l] = true;
        }
        if used[0] || used[1..].iter().any(|&u| !u) {
            return Err(IndexError::InvalidPartition(
                "labels must be contiguous 1..K".into(),
            ));
        }
        Ok(Self { labels, k })
    }

    /// Relabels arbitrary keys to `1..=K` in order of first appearance.
    pub fn from_raw<T: Hash + Eq + Copy>(raw: &[T]) -> Result<Self, IndexError> {
        let mut map: HashMap<T, usize> = HashMap::new();
        let labels = raw
            .iter()
            .map(|key| {
                let next = map.len() + 1;
                *map.entry(*key).or_insert(next)
            })
            .collect();
        Self::new(labels)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l - 1] += 1;
        }
        sizes
    }
}

fn check_len(a: usize, b: usize) -> Result<(), IndexError> {
    if a != b {
        return Err(IndexError::Dimension {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

/// Per-cluster and grand centroids of a labeled point set.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGeometry {
    pub grand_centroid: [f64; 2],
    pub centroids: Vec<[f64; 2]>,
    pub members: Vec<Vec<usize>>,
}

impl ClusterGeometry {
    pub fn new(points: &PointSet, part: &Partition) -> Result<Self, IndexError> {
        check_len(points.len(), part.len())?;
        let mut members = vec![Vec::new(); part.k()];
        for (i, &l) in part.labels().iter().enumerate() {
            members[l - 1].push(i);
        }
        let mean = |idx: &mut dyn Iterator<Item = usize>| {
            let (mut sx, mut sy, mut c) = (0.0, 0.0, 0.0);
            for i in idx {
                let p = points.coords()[i];
                sx += p[0];
                sy += p[1];
                c += 1.0;
            }
            [sx / c, sy / c]
        };
        let grand_centroid = mean(&mut (0..points.len()));
        let centroids = members.iter().map(|m| mean(&mut m.iter().copied())).collect();
        Ok(Self {
            grand_centroid,
            centroids,
            members,
        })
    }
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Calinski-Harabasz: `(n-K)/(K-1) * between / within`.
pub fn ch_index(points: &PointSet, part: &Partition) -> Result<f64, IndexError> {
    let geo = ClusterGeometry::new(points, part)?;
    let k = part.k();
    if k < 2 {
        return Err(IndexError::Undefined("CH requires >= 2 clusters".into()));
    }
    let n = part.len();
    let mut between = 0.0;
    let mut within = 0.0;
    for (c, members) in geo.members.iter().enumerate() {
        between += members.len() as f64 * sq_dist(geo.centroids[c], geo.grand_centroid);
        within += members
            .iter()
            .map(|&i| sq_dist(points.coords()[i], geo.centroids[c]))
            .sum::<f64>();
    }
    if within <= 0.0 {
        return Err(IndexError::Undefined("zero within-cluster dispersion".into()));
    }
    Ok((n - k) as f64 / (k - 1) as f64 * between / within)
}

/// Generalized Dunn index with centroid-based separation and diameter-based
/// compactness.
pub fn gdi_index(points: &PointSet, part: &Partition) -> Result<f64, IndexError> {
    let geo = ClusterGeometry::new(points, part)?;
    let k = part.k();
    if k < 2 {
        return Err(IndexError::Undefined("GDI requires >= 2 clusters".into()));
    }
    let spread: Vec<f64> = geo
        .members
        .iter()
        .enumerate()
        .map(|(c, m)| {
            m.iter()
                .map(|&i| sq_dist(points.coords()[i], geo.centroids[c]).sqrt())
                .sum()
        })
        .collect();
    let mut separation = f64::INFINITY;
    for a in 0..k {
        for b in a + 1..k {
            let size = (geo.members[a].len() + geo.members[b].len()) as f64;
            separation = separation.min((spread[a] + spread[b]) / size);
        }
    }
    let mut diameter: f64 = 0.0;
    for m in &geo.members {
        for (x, &i) in m.iter().enumerate() {
            for &j in &m[x + 1..] {
                diameter = diameter.max(sq_dist(points.coords()[i], points.coords()[j]));
            }
        }
    }
    if diameter <= 0.0 {
        return Err(IndexError::Undefined("zero max diameter".into()));
    }
    Ok(separation / diameter.sqrt())
}

/// Contingency counts `n_ij` between two partitions of the same items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contingency {
    pub table: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

impl Contingency {
    pub fn new(a: &Partition, b: &Partition) -> Result<Self, IndexError> {
        check_len(a.len(), b.len())?;
        let mut table = vec![vec![0u64; b.k()]; a.k()];
        for (&x, &y) in a.labels().iter().zip(b.labels()) {
            table[x - 1][y - 1] += 1;
        }
        let row_sums = table.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..b.k()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            table,
            row_sums,
            col_sums,
            n: a.len() as u64,
        })
    }
}

/// Pair agreement counts between a reference `a` and a prediction `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    /// same cluster in both
    pub same_both: u64,
    /// different clusters in both
    pub diff_both: u64,
    /// same in `a`, different in `b`
    pub same_a_only: u64,
    /// different in `a`, same in `b`
    pub same_b_only: u64,
}

impl PairCounts {
    pub fn new(a: &Partition, b: &Partition) -> Result<Self, IndexError> {
        let c = Contingency::new(a, b)?;
        let choose2 = |x: u64| x * x.saturating_sub(1) / 2;
        let same_both: u64 = c.table.iter().flatten().map(|&x| choose2(x)).sum();
        let same_a: u64 = c.row_sums.iter().map(|&x| choose2(x)).sum();
        let same_b: u64 = c.col_sums.iter().map(|&x| choose2(x)).sum();
        let total = choose2(c.n);
        Ok(Self {
            same_both,
            diff_both: total + same_both - same_a - same_b,
            same_a_only: same_a - same_both,
            same_b_only: same_b - same_both,
        })
    }

    pub fn total(&self) -> u64 {
        self.same_both + self.diff_both + self.same_a_only + self.same_b_only
    }
}

pub fn rand_index(a: &Partition, b: &Partition) -> Result<f64, IndexError> {
    let pc = PairCounts::new(a, b)?;
    if a.len() < 2 {
        return Err(IndexError::Undefined("Rand index needs >= 2 items".into()));
    }
    Ok((pc.same_both + pc.diff_both) as f64 / pc.total() as f64)
}

/// Hubert-Arabie adjusted Rand index written over pair counts.
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64, IndexError> {
    let pc = PairCounts::new(a, b)?;
    if a.len() < 2 {
        return Err(IndexError::Undefined("ARI needs >= 2 items".into()));
    }
    let total = pc.total() as f64;
    let (g, d) = (pc.same_both as f64, pc.diff_both as f64);
    let (t, z) = (pc.same_a_only as f64, pc.same_b_only as f64);
    let chance = (g + t) * (g + z) + (z + d) * (t + d);
    let num = total * (g + d) - chance;
    let den = total * total - chance;
    if den == 0.0 {
        return if a.labels() == b.labels() || Partition::from_raw(a.labels())? == Partition::from_raw(b.labels())? {
            Ok(1.0)
        } else {
            Err(IndexError::Undefined("degenerate ARI denominator".into()))
        };
    }
    Ok(num / den)
}

/// Normalizer applied to the mutual information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NmiNormalization {
    /// `I / sqrt(H(A) H(B))`
    #[default]
    Sqrt,
    /// `I / max(H(A), H(B))`
    Max,
    /// `I / ((H(A) + H(B)) / 2)`
    Arithmetic,
    /// `I / H(A | B)`, the conditional-entropy normalizer as typeset in the
    /// source formula. Unbounded above.
    Conditional,
}

impl std::str::FromStr for NmiNormalization {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sqrt" => Ok(Self::Sqrt),
            "max" => Ok(Self::Max),
            "arithmetic" => Ok(Self::Arithmetic),
            "conditional" => Ok(Self::Conditional),
            other => Err(format!("unknown NMI normalization {other:?}")),
        }
    }
}

/// Normalized mutual information between reference `a` and prediction `b`.
pub fn nmi_index(a: &Partition, b: &Partition, norm: NmiNormalization) -> Result<f64, IndexError> {
    let c = Contingency::new(a, b)?;
    if a.len() < 2 {
        return Err(IndexError::Undefined("NMI needs >= 2 items".into()));
    }
    let n = c.n as f64;
    let mut mi = 0.0;
    let mut cond = 0.0;
    for (i, row) in c.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij == 0 {
                continue;
            }
            let pij = nij as f64 / n;
            let (ai, bj) = (c.row_sums[i] as f64, c.col_sums[j] as f64);
            mi += pij * (pij / (ai * bj / (n * n))).ln();
            cond -= pij * (pij / (bj / n)).ln();
        }
    }
    let entropy = |sums: &[u64]| -> f64 {
        sums.iter()
            .filter(|&&s| s > 0)
            .map(|&s| {
                let p = s as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let (ha, hb) = (entropy(&c.row_sums), entropy(&c.col_sums));
    let normalizer = match norm {
        NmiNormalization::Sqrt => (ha * hb).sqrt(),
        NmiNormalization::Max => ha.max(hb),
        NmiNormalization::Arithmetic => 0.5 * (ha + hb),
        NmiNormalization::Conditional => cond,
    };
    if normalizer <= 1e-15 {
        let identical = Partition::from_raw(a.labels())? == Partition::from_raw(b.labels())?;
        return if identical {
            Ok(1.0)
        } else {
            Err(IndexError::Undefined("zero normalizer".into()))
        };
    }
    Ok(mi / normalizer)
}

/// One-pass 3x3 window vote: a chip is defective in the reconstruction iff at
/// least 4 of the 9 window cells (itself included, outside cells as 0) are
/// defective.
pub fn reconstruct_ground_truth(map: &WaferMap) -> WaferMap {
    let (rows, cols) = (map.rows(), map.cols());
    let cells = (0..rows * cols)
        .map(|k| {
            let (r, c) = (k / cols, k % cols);
            let state = map.cells()[k];
            if !state.in_mask() {
                return CellState::OutsideMask;
            }
            let mut count = 0;
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr >= 0 && nc >= 0 {
                        if let Some(CellState::Defective) = map.get(nr as usize, nc as usize) {
                            count += 1;
                        }
                    }
                }
            }
            if count >= 4 {
                CellState::Defective
            } else {
                CellState::Functional
            }
        })
        .collect();
    let mut out = WaferMap::new(rows, cols, cells).expect("same mask as a valid map");
    out.name = map.name.clone();
    out
}

/// Per-cell component ids (1-based, row-major discovery order) of the
/// defective chips; 0 elsewhere.
pub fn component_labels(map: &WaferMap, nb: Neighborhood) -> Vec<usize> {
    let (rows, cols) = (map.rows(), map.cols());
    let mut labels = vec![0usize; rows * cols];
    let mut next = 0;
    for start in 0..rows * cols {
        if labels[start] != 0 || !map.cells()[start].is_defective() {
            continue;
        }
        next += 1;
        labels[start] = next;
        let mut stack = vec![start];
        while let Some(k) = stack.pop() {
            let (r, c) = (k / cols, k % cols);
            for &(dr, dc) in nb.all_offsets() {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr as usize >= rows || nc as usize >= cols {
                    continue;
                }
                let nk = nr as usize * cols + nc as usize;
                if labels[nk] == 0 && map.cells()[nk].is_defective() {
                    labels[nk] = next;
                    stack.push(nk);
                }
            }
        }
    }
    labels
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub statistic: f64,
    /// Nonzero differences used.
    pub n: usize,
    pub p_two_sided: f64,
    pub exact: bool,
}

/// Largest sample for which the exact null distribution is used.
pub const WILCOXON_EXACT_LIMIT: usize = 15;

/// Midranks of `values` (1-based).
pub(crate) fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult, IndexError> {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Err(IndexError::Undefined("all differences are zero".into()));
    }
    let ranks = midranks(&nonzero.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let statistic: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();

    if n <= WILCOXON_EXACT_LIMIT {
        // midranks are multiples of 1/2, so doubled ranks are integers
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max_sum: usize = doubled.iter().sum();
        let mut counts = vec![0u64; max_sum + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=max_sum).rev() {
                counts[s] += counts[s - r];
            }
        }
        let observed = (2.0 * statistic).round() as usize;
        let total = (1u64 << n) as f64;
        let lower: u64 = counts[..=observed].iter().sum();
        let upper: u64 = counts[observed..].iter().sum();
        let p = (2.0 * lower.min(upper) as f64 / total).min(1.0);
        return Ok(WilcoxonResult {
            statistic,
            n,
            p_two_sided: p,
            exact: true,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let diff = statistic - mean;
    let correction = 0.5 * diff.signum() * if diff == 0.0 { 0.0 } else { 1.0 };
    let z = (diff - correction) / var.sqrt();
    let normal = Normal::standard();
    let p = (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0);
    Ok(WilcoxonResult {
        statistic,
        n,
        p_two_sided: p,
        exact: false,
    })
}

/// A validity index value, or the reason it is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: Option<f64>,
    pub undefined_reason: Option<String>,
}

impl Metric {
    pub fn undefined(reason: impl Into<String>) -> Self {
        Self {
            value: None,
            undefined_reason: Some(reason.into()),
        }
    }
}

impl From<Result<f64, IndexError>> for Metric {
    fn from(r: Result<f64, IndexError>) -> Self {
        match r {
            Ok(v) => Self {
                value: Some(v),
                undefined_reason: None,
            },
            Err(e) => Self::undefined(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub ch: Metric,
    pub gdi: Metric,
    pub ri: Metric,
    pub ari: Metric,
    pub nmi: Metric,
    pub nmi_normalization: NmiNormalization,
    /// Points scored by the internal indices.
    pub n_points: usize,
    /// Points scored by the external indices.
    pub n_external: usize,
    pub flags: Vec<String>,
}

/// Scores a clustering. Internal indices use `points`/`predicted`; external
/// indices use the `(truth, predicted)` pair, which may be defined over a
/// different point set.
pub fn evaluate(
    points: &PointSet,
    predicted: &Partition,
    external: Option<(&Partition, &Partition)>,
    norm: NmiNormalization,
) -> EvaluationReport {
    let ch: Metric = ch_index(points, predicted).into();
    let gdi: Metric = gdi_index(points, predicted).into();
    let mut flags = Vec::new();
    let (ri, ari, nmi, n_external) = match external {
        Some((truth, pred)) => (
            rand_index(truth, pred).into(),
            adjusted_rand_index(truth, pred).into(),
            nmi_index(truth, pred, norm).into(),
            truth.len(),
        ),
        None => {
            flags.push("no ground truth supplied".to_string());
            let m = Metric::undefined("no ground truth");
            (m.clone(), m.clone(), m, 0)
        }
    };
    for (name, m) in [("ch", &ch), ("gdi", &gdi), ("ri", &ri), ("ari", &ari), ("nmi", &nmi)] {
        if let Some(reason) = &m.undefined_reason {
            flags.push(format!("{name}: {reason}"));
        }
    }
    EvaluationReport {
        ch,
        gdi,
        ri,
        ari,
        nmi,
        nmi_normalization: norm,
        n_points: points.len(),
        n_external,
        flags,
    }
}
