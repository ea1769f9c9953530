//! Spatial pattern recognition for wafer bin maps: adjacency-clustering
//! (graph-cut) and connected-path filtering of defective chips, followed by
//! infinite warped mixture clustering and cluster validation.

pub mod acfilter;
pub mod cpf;
pub mod filter;
pub mod flow;
pub mod iwmm;
pub mod pipeline;
pub mod synthgen;
pub mod validation;
pub mod wafer;

pub use filter::{FilterParams, FilterRegistry, FilterResult, Rational, SpatialFilter};
pub use wafer::{CellState, GridFormat, Neighborhood, WaferMap};
