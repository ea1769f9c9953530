//! Infinite warped mixture model: a GPLVM warp from a 2-D latent space onto
//! the observed chip coordinates, with a Dirichlet-process Gaussian mixture
//! on the latent points. Assignments are resampled by collapsed Gibbs and the
//! latent coordinates by hybrid Monte Carlo.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

const LN_PI: f64 = 1.144_729_885_849_400_2;
const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Jitter is multiplied by 10 this many times before giving up.
const JITTER_ESCALATIONS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IwmmError {
    #[error("empty point set")]
    EmptyInput,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Point = [f64; 2];

/// Observed 2-D coordinates, `n >= 1`, all finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    coords: Vec<Point>,
}

impl PointSet {
    pub fn new(coords: Vec<Point>) -> Result<Self, IwmmError> {
        if coords.is_empty() {
            return Err(IwmmError::EmptyInput);
        }
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(IwmmError::InvalidInput("non-finite coordinate".into()));
        }
        Ok(Self { coords })
    }

    /// Chip `(row, col)` pairs as points `[row, col]`.
    pub fn from_cells(cells: &[(usize, usize)]) -> Result<Self, IwmmError> {
        Self::new(cells.iter().map(|&(r, c)| [r as f64, c as f64]).collect())
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Centered copy scaled by one common factor so the per-axis variance
    /// averages to 1. A single scale keeps the shape undistorted.
    pub fn standardized(&self) -> PointSet {
        let n = self.len() as f64;
        let mean = [
            self.coords.iter().map(|p| p[0]).sum::<f64>() / n,
            self.coords.iter().map(|p| p[1]).sum::<f64>() / n,
        ];
        let var = self
            .coords
            .iter()
            .map(|p| (p[0] - mean[0]).powi(2) + (p[1] - mean[1]).powi(2))
            .sum::<f64>()
            / (2.0 * n);
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        PointSet {
            coords: self
                .coords
                .iter()
                .map(|p| [(p[0] - mean[0]) / scale, (p[1] - mean[1]) / scale])
                .collect(),
        }
    }
}

/// Squared-exponential kernel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub length_scale: f64,
    pub jitter: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            signal_variance: 1.0,
            length_scale: 1.0,
            jitter: 1e-6,
        }
    }
}

impl KernelParams {
    pub fn new(signal_variance: f64, length_scale: f64, jitter: f64) -> Result<Self, IwmmError> {
        let k = Self {
            signal_variance,
            length_scale,
            jitter,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), IwmmError> {
        for (name, v) in [
            ("signal_variance", self.signal_variance),
            ("length_scale", self.length_scale),
            ("jitter", self.jitter),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(IwmmError::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    fn kernel(&self, a: Point, b: Point) -> f64 {
        let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        self.signal_variance * (-d2 / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

/// Symmetric 2x2 matrix stored as `[xx, xy, yy]`.
pub type Sym2 = [f64; 3];

fn sym_det(m: Sym2) -> f64 {
    m[0] * m[2] - m[1] * m[1]
}

fn sym_inv(m: Sym2) -> Option<Sym2> {
    let d = sym_det(m);
    if !(d > 0.0 && m[0] > 0.0) || !d.is_finite() {
        return None;
    }
    Some([m[2] / d, -m[1] / d, m[0] / d])
}

fn sym_quad(m: Sym2, v: Point) -> f64 {
    m[0] * v[0] * v[0] + 2.0 * m[1] * v[0] * v[1] + m[2] * v[1] * v[1]
}

fn sym_mul(m: Sym2, v: Point) -> Point {
    [m[0] * v[0] + m[1] * v[1], m[1] * v[0] + m[2] * v[1]]
}

/// Gaussian-Wishart prior on each cluster's mean and precision, plus the
/// Dirichlet-process concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GwHyper {
    pub m: Point,
    pub p: f64,
    /// Scale matrix `R`, symmetric positive definite.
    pub scale: Sym2,
    pub r: f64,
    pub alpha: f64,
}

impl Default for GwHyper {
    fn default() -> Self {
        Self {
            m: [0.0, 0.0],
            p: 1.0,
            scale: [1.0, 0.0, 1.0],
            r: 3.0,
            alpha: 1.0,
        }
    }
}

impl GwHyper {
    pub fn validate(&self) -> Result<(), IwmmError> {
        if sym_inv(self.scale).is_none() {
            return Err(IwmmError::InvalidConfig("R must be positive definite".into()));
        }
        if !(self.r > 1.0) {
            return Err(IwmmError::InvalidConfig("r must exceed 1".into()));
        }
        if !(self.p > 0.0) || !(self.alpha > 0.0) {
            return Err(IwmmError::InvalidConfig("p and alpha must be > 0".into()));
        }
        if self.m.iter().any(|v| !v.is_finite()) {
            return Err(IwmmError::InvalidConfig("m must be finite".into()));
        }
        Ok(())
    }
}

/// Sufficient statistics of one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClusterStats {
    pub n: usize,
    pub sum: Point,
    /// `sum z z^T`
    pub outer: Sym2,
}

impl ClusterStats {
    pub fn add(&mut self, z: Point) {
        self.n += 1;
        self.sum[0] += z[0];
        self.sum[1] += z[1];
        self.outer[0] += z[0] * z[0];
        self.outer[1] += z[0] * z[1];
        self.outer[2] += z[1] * z[1];
    }

    pub fn remove(&mut self, z: Point) {
        self.n -= 1;
        self.sum[0] -= z[0];
        self.sum[1] -= z[1];
        self.outer[0] -= z[0] * z[0];
        self.outer[1] -= z[0] * z[1];
        self.outer[2] -= z[1] * z[1];
    }

    /// Posterior parameters `(p_k, r_k, m_k, S_k)`.
    pub fn posterior(&self, h: &GwHyper) -> Posterior {
        let pk = h.p + self.n as f64;
        let rk = h.r + self.n as f64;
        let mk = [
            (h.p * h.m[0] + self.sum[0]) / pk,
            (h.p * h.m[1] + self.sum[1]) / pk,
        ];
        let sk = [
            h.scale[0] + self.outer[0] + h.p * h.m[0] * h.m[0] - pk * mk[0] * mk[0],
            h.scale[1] + self.outer[1] + h.p * h.m[0] * h.m[1] - pk * mk[0] * mk[1],
            h.scale[2] + self.outer[2] + h.p * h.m[1] * h.m[1] - pk * mk[1] * mk[1],
        ];
        Posterior {
            n: self.n,
            p: pk,
            r: rk,
            m: mk,
            s: sk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub n: usize,
    pub p: f64,
    pub r: f64,
    pub m: Point,
    pub s: Sym2,
}

impl Posterior {
    /// Log of the cluster's marginal likelihood with mean and precision
    /// integrated out.
    pub fn log_marginal(&self, h: &GwHyper) -> Result<f64, IwmmError> {
        let det_s = sym_det(self.s);
        if !(det_s > 0.0 && self.s[0] > 0.0) {
            return Err(IwmmError::Numerical("posterior scale not positive definite".into()));
        }
        let mut v = -(self.n as f64) * LN_PI + h.p.ln() - self.p.ln()
            + 0.5 * h.r * sym_det(h.scale).ln()
            - 0.5 * self.r * det_s.ln();
        for j in 1..=2 {
            let j = j as f64;
            v += ln_gamma((self.r + 1.0 - j) / 2.0) - ln_gamma((h.r + 1.0 - j) / 2.0);
        }
        Ok(v)
    }

    /// Student-t predictive log density of a new point joining this cluster.
    pub fn log_predictive(&self, z: Point) -> Result<f64, IwmmError> {
        let nu = self.r - 1.0;
        let factor = (self.p + 1.0) / (self.p * nu);
        let scale = [self.s[0] * factor, self.s[1] * factor, self.s[2] * factor];
        let inv = sym_inv(scale)
            .ok_or_else(|| IwmmError::Numerical("predictive scale not positive definite".into()))?;
        let d = [z[0] - self.m[0], z[1] - self.m[1]];
        Ok(ln_gamma((nu + 2.0) / 2.0) - ln_gamma(nu / 2.0) - (nu * std::f64::consts::PI).ln()
            - 0.5 * sym_det(scale).ln()
            - (nu + 2.0) / 2.0 * (1.0 + sym_quad(inv, d) / nu).ln())
    }
}

fn check_labels(assignments: &[usize]) -> Result<usize, IwmmError> {
    let k = assignments.iter().copied().max().unwrap_or(0);
    let mut used = vec![false; k + 1];
    for &a in assignments {
        used[a] = true;
    }
    if used[0] || used.iter().skip(1).any(|u| !u) {
        return Err(IwmmError::InvalidInput("labels must be contiguous 1..K".into()));
    }
    Ok(k)
}

fn stats_from(z: &[Point], assignments: &[usize], k: usize) -> Vec<ClusterStats> {
    let mut stats = vec![ClusterStats::default(); k];
    for (zi, &a) in z.iter().zip(assignments) {
        stats[a - 1].add(*zi);
    }
    stats
}

/// Latent coordinates, assignments and per-cluster statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub z: Vec<Point>,
    assignments: Vec<usize>,
    pub kernel: KernelParams,
    stats: Vec<ClusterStats>,
}

impl LatentState {
    pub fn new(z: Vec<Point>, assignments: Vec<usize>, kernel: KernelParams) -> Result<Self, IwmmError> {
        if z.len() != assignments.len() {
            return Err(IwmmError::InvalidInput("Z and A lengths differ".into()));
        }
        let k = check_labels(&assignments)?;
        let stats = stats_from(&z, &assignments, k);
        Ok(Self {
            z,
            assignments,
            kernel,
            stats,
        })
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn k(&self) -> usize {
        self.stats.len()
    }

    pub fn stats(&self) -> &[ClusterStats] {
        &self.stats
    }

    pub fn recompute_stats(&mut self) {
        self.stats = stats_from(&self.z, &self.assignments, self.stats.len());
    }

    /// Largest deviation between the incremental statistics and a
    /// from-scratch recomputation.
    pub fn stats_drift(&self) -> f64 {
        let fresh = stats_from(&self.z, &self.assignments, self.stats.len());
        let mut drift: f64 = 0.0;
        for (a, b) in self.stats.iter().zip(&fresh) {
            if a.n != b.n {
                return f64::INFINITY;
            }
            for (x, y) in a.sum.iter().chain(&a.outer).zip(b.sum.iter().chain(&b.outer)) {
                drift = drift.max((x - y).abs());
            }
        }
        drift
    }

    pub fn log_marginal(&self, h: &GwHyper) -> Result<f64, IwmmError> {
        self.stats.iter().map(|s| s.posterior(h).log_marginal(h)).sum()
    }

    /// Takes point `i` out of its cluster, dropping the cluster if it empties
    /// (the last cluster takes its label).
    fn detach(&mut self, i: usize) -> Result<(), IwmmError> {
        let a = self.assignments[i];
        if a == 0 || a > self.stats.len() || self.stats[a - 1].n == 0 {
            return Err(IwmmError::Internal(format!("point {i} has invalid label {a}")));
        }
        self.stats[a - 1].remove(self.z[i]);
        self.assignments[i] = 0;
        if self.stats[a - 1].n == 0 {
            let last = self.stats.len();
            self.stats.swap_remove(a - 1);
            if a != last {
                for l in self.assignments.iter_mut() {
                    if *l == last {
                        *l = a;
                    }
                }
            }
        }
        Ok(())
    }

    fn attach(&mut self, i: usize, label: usize) {
        if label > self.stats.len() {
            self.stats.push(ClusterStats::default());
        }
        self.stats[label - 1].add(self.z[i]);
        self.assignments[i] = label;
    }
}

/// Log of the GPLVM likelihood `p(S | Z, theta)` for 2-D outputs.
pub fn gplvm_log_likelihood(s: &PointSet, z: &[Point], k: &KernelParams) -> Result<f64, IwmmError> {
    gplvm_terms(s, z, k, false).map(|(v, _)| v)
}

/// Analytic gradient of [`gplvm_log_likelihood`] with respect to `Z`.
pub fn gplvm_grad(s: &PointSet, z: &[Point], k: &KernelParams) -> Result<Vec<Point>, IwmmError> {
    gplvm_terms(s, z, k, true).map(|(_, g)| g.expect("gradient requested"))
}

fn gplvm_terms(
    s: &PointSet,
    z: &[Point],
    k: &KernelParams,
    want_grad: bool,
) -> Result<(f64, Option<Vec<Point>>), IwmmError> {
    let n = s.len();
    if z.len() != n {
        return Err(IwmmError::InvalidInput(format!(
            "Z has {} rows, S has {n}",
            z.len()
        )));
    }
    k.validate()?;
    let kmat = DMatrix::from_fn(n, n, |i, j| k.kernel(z[i], z[j]));
    let mut jitter = k.jitter;
    let chol = loop {
        let mut sigma = kmat.clone();
        for i in 0..n {
            sigma[(i, i)] += jitter;
        }
        if let Some(c) = sigma.cholesky() {
            break c;
        }
        jitter *= 10.0;
        if jitter > k.jitter * 10f64.powi(JITTER_ESCALATIONS as i32) {
            return Err(IwmmError::Numerical("kernel matrix not positive definite".into()));
        }
    };
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let smat = DMatrix::from_fn(n, 2, |i, d| s.coords()[i][d]);
    let w = chol.solve(&smat);
    let trace = smat.dot(&w);
    let value = -(n as f64) * LN_2PI - log_det - 0.5 * trace;
    if !value.is_finite() {
        return Err(IwmmError::Numerical("non-finite GPLVM likelihood".into()));
    }
    if !want_grad {
        return Ok((value, None));
    }
    let inv = chol.inverse();
    let inv_l2 = 1.0 / (k.length_scale * k.length_scale);
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        let (mut gx, mut gy) = (0.0, 0.0);
        for j in 0..n {
            if i == j {
                continue;
            }
            let g = 0.5 * (w[(i, 0)] * w[(j, 0)] + w[(i, 1)] * w[(j, 1)]) - inv[(i, j)];
            let c = -2.0 * g * kmat[(i, j)] * inv_l2;
            gx += c * (z[i][0] - z[j][0]);
            gy += c * (z[i][1] - z[j][1]);
        }
        grad[i] = [gx, gy];
    }
    Ok((value, Some(grad)))
}

/// Log of `p(Z | A, m, p, R, r)`: the product of per-cluster marginals.
pub fn latent_marginal_log(z: &[Point], assignments: &[usize], h: &GwHyper) -> Result<f64, IwmmError> {
    if z.len() != assignments.len() {
        return Err(IwmmError::InvalidInput("Z and A lengths differ".into()));
    }
    let k = check_labels(assignments)?;
    stats_from(z, assignments, k)
        .iter()
        .map(|s| s.posterior(h).log_marginal(h))
        .sum()
}

/// Gradient of [`latent_marginal_log`] with respect to `Z`.
pub fn latent_marginal_grad(z: &[Point], assignments: &[usize], h: &GwHyper) -> Result<Vec<Point>, IwmmError> {
    let k = check_labels(assignments)?;
    let stats = stats_from(z, assignments, k);
    let mut post = Vec::with_capacity(k);
    for s in &stats {
        let p = s.posterior(h);
        let inv = sym_inv(p.s)
            .ok_or_else(|| IwmmError::Numerical("posterior scale not positive definite".into()))?;
        post.push((p, inv));
    }
    Ok(z.iter()
        .zip(assignments)
        .map(|(zi, &a)| {
            let (p, inv) = &post[a - 1];
            let g = sym_mul(*inv, [zi[0] - p.m[0], zi[1] - p.m[1]]);
            [-p.r * g[0], -p.r * g[1]]
        })
        .collect())
}

/// Chinese-restaurant-process log prior of an assignment vector.
pub fn crp_log_prior(assignments: &[usize], alpha: f64) -> f64 {
    let n = assignments.len();
    let mut sizes = std::collections::BTreeMap::new();
    for &a in assignments {
        *sizes.entry(a).or_insert(0usize) += 1;
    }
    sizes.len() as f64 * alpha.ln()
        + sizes.values().map(|&c| ln_gamma(c as f64)).sum::<f64>()
        + ln_gamma(alpha)
        - ln_gamma(alpha + n as f64)
}

fn sample_log_weights(logw: &[f64], rng: &mut impl Rng) -> usize {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logw.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Resamples the cluster of point `i` given everything else. Returns the new
/// label.
pub fn gibbs_assignment_step(
    state: &mut LatentState,
    i: usize,
    h: &GwHyper,
    rng: &mut impl Rng,
) -> Result<usize, IwmmError> {
    if i >= state.z.len() {
        return Err(IwmmError::InvalidInput(format!("index {i} out of range")));
    }
    state.detach(i)?;
    let zi = state.z[i];
    let mut logw = Vec::with_capacity(state.k() + 1);
    for s in &state.stats {
        logw.push((s.n as f64).ln() + s.posterior(h).log_predictive(zi)?);
    }
    logw.push(h.alpha.ln() + ClusterStats::default().posterior(h).log_predictive(zi)?);
    let label = sample_log_weights(&logw, rng) + 1;
    state.attach(i, label);
    Ok(label)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub step_size: f64,
    pub leapfrog_steps: usize,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            leapfrog_steps: 10,
        }
    }
}

/// Log target for the latent coordinates with assignments held fixed.
pub struct LatentTarget<'a> {
    pub s: &'a PointSet,
    pub assignments: &'a [usize],
    pub kernel: &'a KernelParams,
    pub hyper: &'a GwHyper,
}

impl LatentTarget<'_> {
    pub fn log_density(&self, z: &[Point]) -> Result<f64, IwmmError> {
        Ok(gplvm_log_likelihood(self.s, z, self.kernel)?
            + latent_marginal_log(z, self.assignments, self.hyper)?)
    }

    pub fn log_density_grad(&self, z: &[Point]) -> Result<(f64, Vec<Point>), IwmmError> {
        let (v, g) = gplvm_terms(self.s, z, self.kernel, true)?;
        let mut g = g.expect("gradient requested");
        let gm = latent_marginal_grad(z, self.assignments, self.hyper)?;
        for (a, b) in g.iter_mut().zip(&gm) {
            a[0] += b[0];
            a[1] += b[1];
        }
        Ok((v + latent_marginal_log(z, self.assignments, self.hyper)?, g))
    }
}

/// Runs `steps` leapfrog steps of size `eps` (negative `eps` integrates
/// backwards). Returns the end point, its momentum and log density.
pub fn leapfrog(
    target: &LatentTarget<'_>,
    z: &[Point],
    momentum: &[Point],
    eps: f64,
    steps: usize,
) -> Result<(Vec<Point>, Vec<Point>, f64), IwmmError> {
    let mut z = z.to_vec();
    let mut q = momentum.to_vec();
    let (mut logp, mut grad) = target.log_density_grad(&z)?;
    for _ in 0..steps {
        for (m, g) in q.iter_mut().zip(&grad) {
            m[0] += 0.5 * eps * g[0];
            m[1] += 0.5 * eps * g[1];
        }
        for (zi, m) in z.iter_mut().zip(&q) {
            zi[0] += eps * m[0];
            zi[1] += eps * m[1];
        }
        (logp, grad) = target.log_density_grad(&z)?;
        for (m, g) in q.iter_mut().zip(&grad) {
            m[0] += 0.5 * eps * g[0];
            m[1] += 0.5 * eps * g[1];
        }
    }
    Ok((z, q, logp))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmcOutcome {
    pub accepted: bool,
    /// `H(end) - H(start)`; infinite when the proposal failed numerically.
    pub delta_h: f64,
}

fn kinetic(q: &[Point]) -> f64 {
    0.5 * q.iter().map(|m| m[0] * m[0] + m[1] * m[1]).sum::<f64>()
}

/// One HMC transition of `Z` targeting the GPLVM likelihood times the latent
/// mixture marginal.
pub fn hmc_latent_step(
    state: &mut LatentState,
    s: &PointSet,
    h: &GwHyper,
    cfg: &HmcConfig,
    rng: &mut impl Rng,
) -> Result<HmcOutcome, IwmmError> {
    let q0: Vec<Point> = (0..state.z.len())
        .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
        .collect();
    let u: f64 = rng.random();
    let target = LatentTarget {
        s,
        assignments: &state.assignments,
        kernel: &state.kernel,
        hyper: h,
    };
    let start = target.log_density(&state.z)?;
    let h0 = -start + kinetic(&q0);
    let proposal = leapfrog(&target, &state.z, &q0, cfg.step_size, cfg.leapfrog_steps);
    let (z1, q1, end) = match proposal {
        Ok(p) => p,
        Err(_) => {
            return Ok(HmcOutcome {
                accepted: false,
                delta_h: f64::INFINITY,
            })
        }
    };
    let delta_h = -end + kinetic(&q1) - h0;
    if !delta_h.is_finite() {
        return Ok(HmcOutcome {
            accepted: false,
            delta_h: f64::INFINITY,
        });
    }
    let accepted = u.ln() < -delta_h;
    if accepted {
        state.z = z1;
        state.recompute_stats();
    }
    Ok(HmcOutcome { accepted, delta_h })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iters: usize,
    pub burn_in: usize,
    pub hmc: HmcConfig,
    /// Tune the step size toward ~2/3 acceptance during burn-in only.
    pub adapt_step: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iters: 1000,
            burn_in: 500,
            hmc: HmcConfig::default(),
            adapt_step: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub k: usize,
    pub log_joint: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwmmResult {
    pub assignments: Vec<usize>,
    pub k_hat: usize,
    pub latent_coords: Vec<Point>,
    pub trace: Vec<TraceEntry>,
    /// Iteration the reported sample comes from.
    pub best_iteration: usize,
    pub acceptance_rate: f64,
    pub final_step_size: f64,
}

/// Joint log density `p(S, Z, A | ...)`.
pub fn log_joint(
    s: &PointSet,
    state: &LatentState,
    h: &GwHyper,
) -> Result<f64, IwmmError> {
    Ok(gplvm_log_likelihood(s, &state.z, &state.kernel)?
        + state.log_marginal(h)?
        + crp_log_prior(&state.assignments, h.alpha))
}

/// Fits the model. `s` is standardized internally and `Z` starts at the
/// standardized coordinates with every point in its own cluster.
pub fn iwmm_fit(
    s: &PointSet,
    h: &GwHyper,
    k0: &KernelParams,
    mcmc: &McmcConfig,
    seed: u64,
) -> Result<IwmmResult, IwmmError> {
    if s.is_empty() {
        return Err(IwmmError::EmptyInput);
    }
    h.validate()?;
    k0.validate()?;
    if mcmc.iters <= mcmc.burn_in {
        return Err(IwmmError::InvalidConfig("iters must exceed burn_in".into()));
    }
    if !(mcmc.hmc.step_size >= 0.0 && mcmc.hmc.step_size.is_finite()) {
        return Err(IwmmError::InvalidConfig("step_size must be >= 0".into()));
    }
    let std = s.standardized();
    let n = std.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = LatentState::new(std.coords().to_vec(), (1..=n).collect(), *k0)?;
    let mut hmc = mcmc.hmc;
    let mut trace = Vec::with_capacity(mcmc.iters);
    let mut best: Option<(f64, usize, Vec<usize>, Vec<Point>)> = None;
    let mut accepted_kept = 0usize;

    for iter in 0..mcmc.iters {
        for i in 0..n {
            gibbs_assignment_step(&mut state, i, h, &mut rng)?;
        }
        let outcome = hmc_latent_step(&mut state, &std, h, &hmc, &mut rng)?;
        let kept = iter >= mcmc.burn_in;
        if !kept && mcmc.adapt_step {
            hmc.step_size *= if outcome.accepted { 1.05 } else { 0.9 };
        }
        let joint = log_joint(&std, &state, h)?;
        trace.push(TraceEntry {
            k: state.k(),
            log_joint: joint,
            accepted: outcome.accepted,
        });
        if kept {
            accepted_kept += usize::from(outcome.accepted);
            if best.as_ref().is_none_or(|b| joint > b.0) {
                best = Some((joint, iter, state.assignments.clone(), state.z.clone()));
            }
        }
    }
    let (_, best_iteration, assignments, latent_coords) =
        best.ok_or_else(|| IwmmError::Internal("no kept iterations".into()))?;
    let k_hat = check_labels(&assignments)?;
    Ok(IwmmResult {
        assignments,
        k_hat,
        latent_coords,
        trace,
        best_iteration,
        acceptance_rate: accepted_kept as f64 / (mcmc.iters - mcmc.burn_in) as f64,
        final_step_size: hmc.step_size,
    })
}
