//! Problem files, the end-to-end solve, persistence, replay verification and
//! plot data.

pub mod persist;
pub mod problem;
pub mod solve;
pub mod verify;

use std::path::PathBuf;

use thiserror::Error;

pub use persist::{read_protocol, write_protocol, GeodesicSeed, ProtocolSidecar};
pub use problem::{load_problem, Problem, ProblemSpec, SubspaceChoice};
pub use solve::{run_solve, Origin, PathOutcome, SolveOptions, SolveReport, TStarSource};
pub use verify::{emit_plot_data, verify_loaded, verify_protocol, write_plot_data, PlotData, ReplayReport};

use crate::bounds::BoundsError;
use crate::continuation::ContinuationError;
use crate::dynamics::DynError;
use crate::liealg::LieError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid problem field \"{field}\": {reason}")]
    Schema { field: String, reason: String },
    #[error("target is not unitary (defect {defect:.3e} exceeds {limit:.1e})")]
    NonUnitary { defect: f64, limit: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Continuation(#[from] ContinuationError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}
