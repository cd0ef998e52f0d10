//! Operator bases, the allowed/forbidden split, the q-metric and matrix-log
//! branch enumeration.

pub mod basis;
pub mod branches;
pub mod matrix;
pub mod split;

pub use basis::{build_pauli_basis, pauli_string, OperatorBasis, MAX_DIMENSION};
pub use branches::{log_branches, to_special_unitary, BranchOptions, BranchSeed};
pub use matrix::CMatrix;
pub use split::{
    apply_fq, apply_gq, forbidden_fraction, preset, project, q_inner, AllowedSpec, HermitianOperator, StructureTable, Subspace,
    SubspaceSplit, PRESETS,
};

#[derive(Debug, thiserror::Error)]
pub enum LieError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("dimension {dim} exceeds the supported maximum {cap}")]
    TooLarge { dim: usize, cap: usize },
    #[error("allowed vector {index} is linearly dependent on the previous ones")]
    LinearDependence { index: usize },
    #[error("matrix is not unitary (max |U^dag U - I| = {0:.3e})")]
    NonUnitary(f64),
    #[error("unknown subspace preset '{0}'")]
    UnknownPreset(String),
    #[error("penalty q must be positive and finite, got {0}")]
    InvalidPenalty(f64),
}
