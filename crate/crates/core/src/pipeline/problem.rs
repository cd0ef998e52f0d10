use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::bounds::ScanConfig;
use crate::liealg::matrix::{frobenius_distance, polar_unitary, unitarity_error, CMatrix};
use crate::liealg::{build_pauli_basis, preset, to_special_unitary, SubspaceSplit, MAX_DIMENSION};

pub const SCHEMA_VERSION: u32 = 1;

/// Problem files are rejected above this unitarity defect even with
/// `unitarize` set.
pub const UNITARIZE_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SubspaceChoice {
    Preset(String),
    /// Allowed directions as coefficient vectors over the normalized Pauli
    /// basis (qubit 1 leftmost, I < X < Y < Z per factor, identity dropped).
    Allowed(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Integrator tolerance along the continuation.
    pub integrator: f64,
    /// Endpoint residual accepted by the continuation corrector.
    pub corrector: f64,
    /// Integrator tolerance of the final shoot, normalization and replay.
    pub final_shoot: f64,
    /// Largest unitarity defect accepted without projection.
    pub unitarity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { integrator: 1e-9, corrector: 1e-10, final_shoot: 1e-12, unitarity: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QSchedule {
    pub q_max: f64,
    pub dq_initial: f64,
    pub dq_min: f64,
    pub dq_max: f64,
}

impl Default for QSchedule {
    fn default() -> Self {
        Self { q_max: 100.0, dq_initial: 0.25, dq_min: 1e-3, dq_max: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchLimits {
    pub max_shift: i64,
    /// Skips the bound scan when set (units of 1/E).
    pub t_star: Option<f64>,
    /// Branches are kept while ‖H̄‖ < E·T*·(1 + margin).
    pub margin: f64,
}

impl Default for BranchLimits {
    fn default() -> Self {
        Self { max_shift: 2, t_star: None, margin: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSettings {
    pub q_prime: f64,
    pub num_guesses: usize,
    pub radius: f64,
    /// Non-commuting bootstrap solutions continued, lowest norm first.
    pub max_paths: usize,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self { q_prime: 5.0, num_guesses: 32, radius: 0.5, max_paths: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShootSettings {
    pub max_iters: usize,
    pub residual_tol: f64,
    pub fd_step: f64,
}

impl Default for ShootSettings {
    fn default() -> Self {
        Self { max_iters: 100, residual_tol: 1e-12, fd_step: 1e-6 }
    }
}

fn default_samples() -> usize {
    512
}

fn default_seed() -> u64 {
    2024
}

/// Versioned problem file. Everything after `E` is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub target_re: Vec<Vec<f64>>,
    pub target_im: Vec<Vec<f64>>,
    /// Polar-project a target whose unitarity defect is below 1e−3.
    #[serde(default)]
    pub unitarize: bool,
    pub subspace: SubspaceChoice,
    #[serde(rename = "E", alias = "energy")]
    pub energy: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub q_schedule: QSchedule,
    #[serde(default)]
    pub branches: BranchLimits,
    #[serde(default)]
    pub bootstrap: BootstrapSettings,
    #[serde(default)]
    pub bound: ScanConfig,
    #[serde(default)]
    pub shooting: ShootSettings,
    /// Samples of the exported constant-speed protocol.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Seed of the special-case bootstrap guesses.
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
    /// Worker threads; absent means available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn schema(field: &str, reason: impl Into<String>) -> PipelineError {
    PipelineError::Schema { field: field.to_string(), reason: reason.into() }
}

fn positive(field: &str, v: f64) -> Result<(), PipelineError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(schema(field, format!("must be positive and finite, got {v}")))
    }
}

impl ProblemSpec {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let spec: ProblemSpec = serde_json::from_str(text).map_err(|e| schema("<document>", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Structural and range checks that do not need the target factorized.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version)));
        }
        positive("E", self.energy)?;
        let n = self.target_re.len();
        if !(2..=MAX_DIMENSION).contains(&n) {
            return Err(schema("target_re", format!("need between 2 and {MAX_DIMENSION} rows, got {n}")));
        }
        if self.target_im.len() != n {
            return Err(schema("target_im", format!("has {} rows, target_re has {n}", self.target_im.len())));
        }
        for (field, rows) in [("target_re", &self.target_re), ("target_im", &self.target_im)] {
            if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
                return Err(schema(field, format!("row {i} has {} entries, expected {n}", r.len())));
            }
            if rows.iter().flatten().any(|x| !x.is_finite()) {
                return Err(schema(field, "entries must be finite"));
            }
        }
        let t = &self.tolerances;
        positive("tolerances.integrator", t.integrator)?;
        positive("tolerances.corrector", t.corrector)?;
        positive("tolerances.final_shoot", t.final_shoot)?;
        positive("tolerances.unitarity", t.unitarity)?;
        let q = &self.q_schedule;
        if !(q.q_max.is_finite() && q.q_max >= 1.0) {
            return Err(schema("q_schedule.q_max", format!("must be at least 1, got {}", q.q_max)));
        }
        positive("q_schedule.dq_initial", q.dq_initial)?;
        positive("q_schedule.dq_min", q.dq_min)?;
        positive("q_schedule.dq_max", q.dq_max)?;
        if q.dq_min > q.dq_max {
            return Err(schema("q_schedule.dq_min", "exceeds dq_max"));
        }
        let b = &self.branches;
        if b.max_shift < 0 {
            return Err(schema("branches.max_shift", "must be non-negative"));
        }
        if let Some(ts) = b.t_star {
            positive("branches.t_star", ts)?;
        }
        if !(b.margin.is_finite() && b.margin >= 0.0) {
            return Err(schema("branches.margin", "must be non-negative"));
        }
        let bs = &self.bootstrap;
        if !(bs.q_prime.is_finite() && bs.q_prime > 1.0) {
            return Err(schema("bootstrap.q_prime", format!("must exceed 1, got {}", bs.q_prime)));
        }
        positive("bootstrap.radius", bs.radius)?;
        if bs.num_guesses == 0 {
            return Err(schema("bootstrap.num_guesses", "must be at least 1"));
        }
        let sc = &self.bound;
        positive("bound.t_min", sc.t_min)?;
        positive("bound.t_step", sc.t_step)?;
        if !(sc.t_max >= sc.t_min) {
            return Err(schema("bound.t_max", "must not be below t_min"));
        }
        if !(sc.threshold > 0.0 && sc.threshold <= 1.0) {
            return Err(schema("bound.threshold", "must lie in (0, 1]"));
        }
        if sc.num_segments < 2 {
            return Err(schema("bound.num_segments", "must be at least 2"));
        }
        positive("shooting.residual_tol", self.shooting.residual_tol)?;
        positive("shooting.fd_step", self.shooting.fd_step)?;
        if self.samples < 2 {
            return Err(schema("samples", "must be at least 2"));
        }
        if self.workers == Some(0) {
            return Err(schema("workers", "must be at least 1"));
        }
        Ok(())
    }

    pub fn target_matrix(&self) -> CMatrix {
        let n = self.target_re.len();
        CMatrix::from_fn(n, n, |i, j| Complex64::new(self.target_re[i][j], self.target_im[i][j]))
    }

    /// SHA-256 of the compact JSON of the effective spec.
    pub fn config_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// A validated spec with its split and the target in SU(n).
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub split: SubspaceSplit,
    /// Target divided by e^{iφ}, det = 1.
    pub target: CMatrix,
    /// φ with U_file = e^{iφ}·target (after any projection).
    pub phase: f64,
    /// ‖U_file − polar(U_file)‖_F, zero when no projection was applied.
    pub projection_distance: f64,
    pub source: Option<PathBuf>,
}

impl Problem {
    pub fn from_spec(spec: ProblemSpec) -> Result<Self, PipelineError> {
        spec.validate()?;
        let raw = spec.target_matrix();
        let n = raw.nrows();
        let defect = unitarity_error(&raw);
        let (u, projection_distance) = if defect <= spec.tolerances.unitarity {
            (raw, 0.0)
        } else if spec.unitarize && defect <= UNITARIZE_LIMIT {
            let p = polar_unitary(&raw);
            let d = frobenius_distance(&p, &raw);
            log::info!("target projected onto U({n}): defect {defect:.3e}, moved by {d:.3e}");
            (p, d)
        } else {
            return Err(PipelineError::NonUnitary {
                defect,
                limit: if spec.unitarize { UNITARIZE_LIMIT } else { spec.tolerances.unitarity },
            });
        };
        let split = match &spec.subspace {
            SubspaceChoice::Preset(name) => preset(name)?,
            SubspaceChoice::Allowed(vectors) => {
                if !n.is_power_of_two() {
                    return Err(schema("subspace.allowed", format!("custom splits need n = 2^k, got n = {n}")));
                }
                let basis = build_pauli_basis(n.trailing_zeros() as usize)?;
                if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != basis.len()) {
                    return Err(schema("subspace.allowed", format!("vector {i} has {} entries, expected {}", v.len(), basis.len())));
                }
                SubspaceSplit::from_vectors("custom", &basis, vectors, None)?
            }
        };
        if split.dim() != n {
            return Err(schema("subspace", format!("split acts on dimension {} but the target is {n}x{n}", split.dim())));
        }
        let (target, phase) = to_special_unitary(&u, 1e-8)?;
        Ok(Self { spec, split, target, phase, projection_distance, source: None })
    }
}

/// Reads, validates and factorizes a problem file.
pub fn load_problem(path: &Path) -> Result<Problem, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io { path: path.to_path_buf(), source: e })?;
    let mut p = Problem::from_spec(ProblemSpec::from_json(&text)?)?;
    p.source = Some(path.to_path_buf());
    Ok(p)
}
