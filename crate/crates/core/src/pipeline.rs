//! Filter, cluster and score one wafer end to end.
//!
//! External indices are computed over the raw defective chips: a chip's
//! predicted label is its iWMM cluster when the filter kept it and 0
//! otherwise, and its reference label is the generator's pattern id (0 for
//! noise). Without generator labels the reference comes from King-connected
//! components of the reconstructed ground truth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{FilterError, FilterResult, SpatialFilter};
use crate::iwmm::{iwmm_fit, GwHyper, IwmmError, IwmmResult, KernelParams, McmcConfig, PointSet};
use crate::validation::{
    component_labels, evaluate, reconstruct_ground_truth, EvaluationReport, Metric, NmiNormalization,
    Partition,
};
use crate::wafer::{Neighborhood, WaferError, WaferMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Iwmm(#[from] IwmmError),
    #[error(transparent)]
    Wafer(#[from] WaferError),
    #[error("truth labels cover {actual} cells, wafer has {expected}")]
    TruthShape { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ClusterConfig {
    pub hyper: GwHyper,
    pub kernel: KernelParams,
    pub mcmc: McmcConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub filtered: WaferMap,
    pub filter: FilterResult,
    /// Kept chips `(row, col)`, row-major.
    pub kept: Vec<(usize, usize)>,
    pub fit: Option<IwmmResult>,
    pub report: EvaluationReport,
}

/// Runs iWMM on the defective chips of a (filtered) map.
pub fn cluster_map(
    map: &WaferMap,
    cfg: &ClusterConfig,
    seed: u64,
) -> Result<(Vec<(usize, usize)>, IwmmResult), PipelineError> {
    let coords = map.defective_coords();
    let points = PointSet::from_cells(&coords)?;
    let fit = iwmm_fit(&points, &cfg.hyper, &cfg.kernel, &cfg.mcmc, seed)?;
    Ok((coords, fit))
}

/// Reference labels per cell: generator labels if given, otherwise
/// components of the reconstructed ground truth.
pub fn reference_labels(raw: &WaferMap, truth: Option<&[usize]>) -> Result<Vec<usize>, PipelineError> {
    match truth {
        Some(t) if t.len() != raw.cells().len() => Err(PipelineError::TruthShape {
            expected: raw.cells().len(),
            actual: t.len(),
        }),
        Some(t) => Ok(t.to_vec()),
        None => Ok(component_labels(&reconstruct_ground_truth(raw), Neighborhood::King)),
    }
}

/// `(reference, predicted)` partitions over the raw defective chips.
pub fn external_partitions(
    raw: &WaferMap,
    reference: &[usize],
    kept: &[(usize, usize)],
    assignments: &[usize],
) -> Option<(Partition, Partition)> {
    let cols = raw.cols();
    let mut predicted = vec![0usize; raw.cells().len()];
    for (&(r, c), &a) in kept.iter().zip(assignments) {
        predicted[r * cols + c] = a;
    }
    let cells: Vec<usize> = raw
        .defective_coords()
        .iter()
        .map(|&(r, c)| r * cols + c)
        .collect();
    let truth: Vec<usize> = cells.iter().map(|&k| reference[k]).collect();
    let pred: Vec<usize> = cells.iter().map(|&k| predicted[k]).collect();
    Some((Partition::from_raw(&truth).ok()?, Partition::from_raw(&pred).ok()?))
}

pub fn run_pipeline(
    raw: &WaferMap,
    truth: Option<&[usize]>,
    filter: &dyn SpatialFilter,
    cfg: &ClusterConfig,
    nmi: NmiNormalization,
    seed: u64,
) -> Result<PipelineOutcome, PipelineError> {
    let result = filter.filter(raw)?;
    let filtered = raw.with_labels(&result.labels)?;
    let reference = reference_labels(raw, truth)?;
    let (kept, fit, report) = if filtered.defective_count() == 0 {
        let ext = external_partitions(raw, &reference, &[], &[]);
        let mut report = match &ext {
            Some((t, p)) => {
                let dummy = PointSet::new(vec![[0.0, 0.0]])?;
                let mut r = evaluate(&dummy, &Partition::new(vec![1]).expect("valid"), Some((t, p)), nmi);
                r.n_points = 0;
                r
            }
            None => {
                let dummy = PointSet::new(vec![[0.0, 0.0]])?;
                let mut r = evaluate(&dummy, &Partition::new(vec![1]).expect("valid"), None, nmi);
                r.n_points = 0;
                r
            }
        };
        report.ch = Metric::undefined("filter kept no chips");
        report.gdi = Metric::undefined("filter kept no chips");
        report.flags.push("filter kept no chips".into());
        (Vec::new(), None, report)
    } else {
        let (kept, fit) = cluster_map(&filtered, cfg, seed)?;
        let points = PointSet::from_cells(&kept)?;
        let pred = Partition::new(fit.assignments.clone()).map_err(|e| IwmmError::Internal(e.to_string()))?;
        let ext = external_partitions(raw, &reference, &kept, &fit.assignments);
        let report = evaluate(&points, &pred, ext.as_ref().map(|(t, p)| (t, p)), nmi);
        (kept, Some(fit), report)
    };
    Ok(PipelineOutcome {
        filtered,
        filter: result,
        kept,
        fit,
        report,
    })
}
