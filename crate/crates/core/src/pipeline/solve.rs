use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::persist::{split_labels, write_csv, write_json, write_protocol, GeodesicSeed, ProtocolSidecar, INTERPOLATION};
use super::verify::verify_loaded;
use super::{PipelineError, Problem};
use crate::bounds::{estimate_t_star, ScanPoint};
use crate::continuation::{bootstrap_special, continue_path, BootstrapConfig, PathSample, PathStatus, QPath, StepControl};
use crate::dynamics::{
    brachistochrone_endpoint, gate_fidelity, protocol_from_brachistochrone, replay_allowed, ControlProtocol, ProtocolSource,
};
use crate::liealg::{log_branches, BranchOptions, SubspaceSplit};
use crate::shooting::{shoot, Family, ShootOptions, ShootingProblem};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Bootstrap solutions whose parts commute below this are the constant
/// special-case geodesics again and are not continued.
pub const COMMUTING_TOL: f64 = 1e-6;

/// A solution counts as verified when its replay infidelity is below this.
pub const VERIFIED_INFIDELITY: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TStarSource {
    Override,
    Estimated,
    /// The scan never reached the threshold; T* is the scan's upper edge.
    LowConfidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    LogBranch { branch: usize, sector: String },
    Bootstrap { rank: usize, q_prime: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalShoot {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Endpoint fidelity of the (α, qβ) seed before shooting.
    pub seed_fidelity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathOutcome {
    pub id: usize,
    pub origin: Origin,
    /// ‖H⁰‖ at the start of the path.
    pub seed_norm: f64,
    /// ‖[P_A H⁰, P_B H⁰]‖ at the start of the path.
    pub commutator_norm: f64,
    pub special_case: bool,
    pub q_start: f64,
    pub status: PathStatus,
    pub first: Option<PathSample>,
    pub last: Option<PathSample>,
    pub shoot: Option<FinalShoot>,
    /// ‖μ⁰‖/E of the brachistochrone solution.
    pub time: Option<f64>,
    /// 1 − replay fidelity of the exported protocol.
    pub infidelity: Option<f64>,
    /// 1 − fidelity of the shooting endpoint itself.
    pub endpoint_infidelity: Option<f64>,
    pub norm_drift: Option<f64>,
    pub verified: bool,
    pub solution: Option<Vec<f64>>,
    pub protocol_file: Option<String>,
    pub error: Option<String>,
    #[serde(skip)]
    pub path: Option<QPath>,
    #[serde(skip)]
    pub protocol: Option<ControlProtocol>,
}

impl PathOutcome {
    pub fn q_stop(&self) -> Option<f64> {
        match &self.status {
            PathStatus::Terminated { q_stop, .. } => Some(*q_stop),
            _ => None,
        }
    }

    pub fn is_log_branch(&self, index: usize) -> bool {
        matches!(&self.origin, Origin::LogBranch { branch, .. } if *branch == index)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapCandidate {
    pub norm: f64,
    pub fidelity: f64,
    pub commutator_norm: f64,
    pub continued: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub q_prime: f64,
    pub guesses: usize,
    pub candidates: Vec<BootstrapCandidate>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub bound: f64,
    pub branches: f64,
    pub bootstrap: f64,
    pub continuation: f64,
    pub shooting: f64,
    pub verification: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestProtocol {
    pub path_id: usize,
    pub time: f64,
    pub infidelity: f64,
    pub protocol_file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub problem: String,
    /// φ with U_file = e^{iφ}·U_SU.
    pub global_phase: f64,
    pub t_star: f64,
    pub t_star_source: TStarSource,
    pub bound_scan: Vec<ScanPoint>,
    /// E·T*·(1 + margin); log branches at or above it are not followed.
    pub branch_norm_limit: f64,
    pub branches_enumerated: usize,
    pub bootstrap: Option<BootstrapSummary>,
    pub paths: Vec<PathOutcome>,
    pub best: Option<BestProtocol>,
    pub timings: PhaseTimings,
}

impl SolveReport {
    pub fn best_outcome(&self) -> Option<&PathOutcome> {
        self.best.as_ref().and_then(|b| self.paths.iter().find(|p| p.id == b.path_id))
    }

    pub fn log_branch(&self, index: usize) -> Option<&PathOutcome> {
        self.paths.iter().find(|p| p.is_log_branch(index))
    }

    /// Converged, verified paths sorted by protocol time.
    pub fn ranked(&self) -> Vec<&PathOutcome> {
        let mut v: Vec<&PathOutcome> = self.paths.iter().filter(|p| p.verified).collect();
        v.sort_by(|a, b| a.time.unwrap_or(f64::INFINITY).total_cmp(&b.time.unwrap_or(f64::INFINITY)).then(a.id.cmp(&b.id)));
        v
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    /// Report, protocols and path checkpoints are written here when set.
    pub out_dir: Option<PathBuf>,
}

fn vnorm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn commutator_norm(split: &SubspaceSplit, h: &[f64]) -> f64 {
    let na = split.n_allowed();
    let mut a = h.to_vec();
    let mut b = h.to_vec();
    a[na..].iter_mut().for_each(|x| *x = 0.0);
    b[..na].iter_mut().for_each(|x| *x = 0.0);
    vnorm(&split.bracket(&a, &b))
}

struct Job {
    id: usize,
    origin: Origin,
    q_start: f64,
    h0: Vec<f64>,
    special: bool,
    commutator: f64,
}

fn step_control(problem: &Problem) -> StepControl {
    let s = &problem.spec;
    StepControl {
        dq_initial: s.q_schedule.dq_initial,
        dq_min: s.q_schedule.dq_min,
        dq_max: s.q_schedule.dq_max,
        integrator_tol: s.tolerances.integrator,
        corrector_tol: s.tolerances.corrector,
        ..StepControl::default()
    }
}

fn new_outcome(job: &Job) -> PathOutcome {
    PathOutcome {
        id: job.id,
        origin: job.origin.clone(),
        seed_norm: vnorm(&job.h0),
        commutator_norm: job.commutator,
        special_case: job.special,
        q_start: job.q_start,
        status: PathStatus::Extending,
        first: None,
        last: None,
        shoot: None,
        time: None,
        infidelity: None,
        endpoint_infidelity: None,
        norm_drift: None,
        verified: false,
        solution: None,
        protocol_file: None,
        error: None,
        path: None,
        protocol: None,
    }
}

fn run_path(problem: &Problem, job: &Job, checkpoints: Option<&Path>) -> PathOutcome {
    let mut out = new_outcome(job);
    if job.special {
        out.status = PathStatus::Terminated {
            q_stop: job.q_start,
            reason: format!("special case: allowed and forbidden parts commute (‖[P_A H, P_B H]‖ = {:.3e})", job.commutator),
        };
        return out;
    }
    let split = &problem.split;
    let na = split.n_allowed();
    // A seed inside the allowed subspace is already a constant-speed solution.
    let q_max = if vnorm(&job.h0[na..]) < 1e-12 { job.q_start } else { problem.spec.q_schedule.q_max };
    let ckpt = checkpoints.map(|d| d.join(format!("path_{}.json", job.id)));
    match continue_path(split, &problem.target, job.id, job.q_start, &job.h0, q_max, &step_control(problem), ckpt.as_deref()) {
        Ok(path) => {
            out.status = path.status.clone();
            out.first = path.samples.first().cloned();
            out.last = path.samples.last().cloned();
            out.path = Some(path);
        }
        Err(e) => {
            out.status = PathStatus::Terminated { q_stop: job.q_start, reason: e.to_string() };
            out.error = Some(e.to_string());
        }
    }
    out
}

fn final_shoot(problem: &Problem, out: &mut PathOutcome) {
    let Some(last) = out.path.as_ref().filter(|p| p.is_completed()).and_then(|p| p.last().cloned()) else { return };
    let split = &problem.split;
    let spec = &problem.spec;
    let tol = spec.tolerances.final_shoot;
    let na = split.n_allowed();
    let seed: Vec<f64> = last.h0.iter().enumerate().map(|(i, x)| if i < na { *x } else { last.q * x }).collect();
    let seed_fidelity = brachistochrone_endpoint(split, &seed, 1.0, tol)
        .ok()
        .and_then(|e| gate_fidelity(&e.unitary, &problem.target).ok())
        .unwrap_or(f64::NAN);
    let opts = ShootOptions {
        max_iters: spec.shooting.max_iters,
        residual_tol: spec.shooting.residual_tol,
        fd_step: spec.shooting.fd_step,
        ..ShootOptions::default()
    };
    let result = ShootingProblem::new(Family::Brachistochrone, split, problem.target.clone(), tol).and_then(|p| shoot(&p, &seed, &opts));
    match result {
        Ok(r) => {
            out.shoot = Some(FinalShoot { converged: r.converged, iterations: r.iterations, residual: r.residual_norm, seed_fidelity });
            if r.converged {
                out.time = Some(vnorm(&r.initial_data[..na]) / spec.energy);
                out.endpoint_infidelity = gate_fidelity(&r.endpoint, &problem.target).ok().map(|f| (1.0 - f).max(0.0));
                out.solution = Some(r.initial_data);
            }
        }
        Err(e) => {
            out.shoot = Some(FinalShoot { converged: false, iterations: 0, residual: f64::NAN, seed_fidelity });
            out.error = Some(format!("brachistochrone shoot: {e}"));
        }
    }
}

fn export(problem: &Problem, out: &mut PathOutcome) {
    let Some(x0) = out.solution.clone() else { return };
    let spec = &problem.spec;
    let tol = spec.tolerances.final_shoot;
    let made = protocol_from_brachistochrone(&problem.split, &x0, spec.energy, spec.samples, tol);
    let mut protocol = match made {
        Ok(p) => p,
        Err(e) => {
            out.error = Some(format!("normalization: {e}"));
            return;
        }
    };
    protocol.source = ProtocolSource {
        branch: match out.origin {
            Origin::LogBranch { branch, .. } => Some(branch),
            Origin::Bootstrap { .. } => None,
        },
        sector: match &out.origin {
            Origin::LogBranch { sector, .. } => Some(sector.clone()),
            Origin::Bootstrap { .. } => None,
        },
        q_path: out.path.as_ref().map(|p| vec![p.samples[0].q, p.last().map_or(0.0, |s| s.q)]).unwrap_or_default(),
        note: match &out.origin {
            Origin::LogBranch { branch, .. } => format!("log branch {branch}"),
            Origin::Bootstrap { rank, q_prime } => format!("bootstrap solution {rank} at q' = {q_prime}"),
        },
    };
    match verify_loaded(problem, &protocol) {
        Ok(r) => {
            protocol.infidelity = r.infidelity;
            out.infidelity = Some(r.infidelity);
            out.norm_drift = Some(r.norm_drift);
            out.verified = r.infidelity < VERIFIED_INFIDELITY;
        }
        Err(e) => out.error = Some(format!("replay: {e}")),
    }
    out.protocol = Some(protocol);
}

fn bootstrap(problem: &Problem, limit: f64, next_id: &mut usize) -> Result<(BootstrapSummary, Vec<Job>), PipelineError> {
    let split = &problem.split;
    let spec = &problem.spec;
    let cfg = BootstrapConfig {
        q_prime: spec.bootstrap.q_prime,
        num_guesses: spec.bootstrap.num_guesses,
        rng_seed: spec.rng_seed,
        radius: spec.bootstrap.radius,
        ..BootstrapConfig::default()
    };
    let sols = bootstrap_special(split, &problem.target, &cfg)?;
    let mut candidates = Vec::new();
    let mut jobs = Vec::new();
    for s in &sols {
        let h = &s.initial_data;
        let comm = commutator_norm(split, h);
        let fidelity = replay_allowed(split, h, cfg.q_prime, 1.0, cfg.tol)
            .ok()
            .and_then(|u| gate_fidelity(&u, &problem.target).ok())
            .unwrap_or(f64::NAN);
        let norm = vnorm(h);
        let continued = comm >= COMMUTING_TOL && norm < limit && jobs.len() < spec.bootstrap.max_paths;
        if continued {
            jobs.push(Job {
                id: *next_id,
                origin: Origin::Bootstrap { rank: candidates.len() + 1, q_prime: cfg.q_prime },
                q_start: cfg.q_prime,
                h0: h.clone(),
                special: false,
                commutator: comm,
            });
            *next_id += 1;
        }
        candidates.push(BootstrapCandidate { norm, fidelity, commutator_norm: comm, continued });
    }
    Ok((BootstrapSummary { q_prime: cfg.q_prime, guesses: cfg.num_guesses, candidates }, jobs))
}

fn rel(out_dir: &Path, p: &Path) -> String {
    p.strip_prefix(out_dir).unwrap_or(p).to_string_lossy().into_owned()
}

/// Bound, branch enumeration, continuation, final shoot and verification.
/// Paths that fail are reported, never raised; only setup and I/O errors
/// are returned as errors.
pub fn run_solve(problem: &Problem, opts: &SolveOptions) -> Result<SolveReport, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(problem.spec.workers.unwrap_or(0)).build()?;
    pool.install(|| solve_inner(problem, opts))
}

fn solve_inner(problem: &Problem, opts: &SolveOptions) -> Result<SolveReport, PipelineError> {
    let spec = &problem.spec;
    let split = &problem.split;
    let start = Instant::now();
    let mut timings = PhaseTimings::default();

    let clock = Instant::now();
    let (t_star, t_star_source, bound_scan) = match spec.branches.t_star {
        Some(t) => (t, TStarSource::Override, Vec::new()),
        None => {
            let est = estimate_t_star(split, &problem.target, spec.energy, &spec.bound)?;
            let src = if est.confident { TStarSource::Estimated } else { TStarSource::LowConfidence };
            (est.t_star, src, est.scan)
        }
    };
    timings.bound = clock.elapsed().as_secs_f64();
    log::info!("T* = {t_star}/E ({t_star_source:?})");

    let clock = Instant::now();
    let limit = spec.energy * t_star * (1.0 + spec.branches.margin);
    let seeds = log_branches(&problem.target, split, &BranchOptions { max_norm: limit, max_shift: spec.branches.max_shift })?;
    let mut jobs: Vec<Job> = seeds
        .iter()
        .map(|b| {
            let h0 = b.operator.as_slice().to_vec();
            let commutator = commutator_norm(split, &h0);
            let has_b = vnorm(&h0[split.n_allowed()..]) >= 1e-12;
            Job {
                id: b.index,
                origin: Origin::LogBranch { branch: b.index, sector: b.sector_label() },
                q_start: 1.0,
                special: has_b && commutator < crate::continuation::SPECIAL_CASE_TOL,
                commutator,
                h0,
            }
        })
        .collect();
    timings.branches = clock.elapsed().as_secs_f64();
    log::info!("{} log branches below ‖H̄‖ = {limit:.4}", seeds.len());

    let clock = Instant::now();
    let mut next_id = seeds.len() + 1;
    let bootstrap_summary = if jobs.iter().any(|j| j.special) {
        let (summary, extra) = bootstrap(problem, limit, &mut next_id)?;
        jobs.extend(extra);
        Some(summary)
    } else {
        None
    };
    timings.bootstrap = clock.elapsed().as_secs_f64();

    let checkpoints = opts.out_dir.as_ref().map(|d| d.join("paths"));
    if let Some(dir) = &checkpoints {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io { path: dir.clone(), source: e })?;
    }
    let clock = Instant::now();
    let mut outcomes: Vec<PathOutcome> = jobs.par_iter().map(|j| run_path(problem, j, checkpoints.as_deref())).collect();
    timings.continuation = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    outcomes.par_iter_mut().for_each(|o| final_shoot(problem, o));
    timings.shooting = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    outcomes.par_iter_mut().for_each(|o| export(problem, o));
    timings.verification = clock.elapsed().as_secs_f64();

    let mut report = SolveReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: spec.config_hash(),
        problem: spec.name.clone(),
        global_phase: problem.phase,
        t_star,
        t_star_source,
        bound_scan,
        branch_norm_limit: limit,
        branches_enumerated: seeds.len(),
        bootstrap: bootstrap_summary,
        paths: outcomes,
        best: None,
        timings,
    };
    report.best = report.ranked().first().map(|p| BestProtocol {
        path_id: p.id,
        time: p.time.unwrap_or(f64::NAN),
        infidelity: p.infidelity.unwrap_or(f64::NAN),
        protocol_file: None,
    });

    if let Some(dir) = &opts.out_dir {
        persist(problem, &mut report, dir)?;
    }
    report.timings.total = start.elapsed().as_secs_f64();
    if let Some(dir) = &opts.out_dir {
        write_json(&dir.join("report.json"), &report)?;
    }
    match &report.best {
        Some(b) => log::info!("best protocol: path {} with T = {:.6}/E, infidelity {:.2e}", b.path_id, b.time, b.infidelity),
        None => log::warn!("no path produced a verified brachistochrone solution"),
    }
    Ok(report)
}

fn persist(problem: &Problem, report: &mut SolveReport, dir: &Path) -> Result<(), PipelineError> {
    let (allowed_labels, forbidden_labels) = split_labels(&problem.split);
    if !report.bound_scan.is_empty() {
        let rows: Vec<Vec<f64>> = report.bound_scan.iter().map(|p| vec![p.time, p.best_fidelity]).collect();
        write_csv(&dir.join("bound_scan.csv"), &["T".to_string(), "best_fidelity".to_string()], &rows)?;
    }
    for o in report.paths.iter_mut() {
        let (Some(protocol), Some(x0)) = (&o.protocol, &o.solution) else { continue };
        let file = dir.join("protocols").join(format!("path_{}.csv", o.id));
        let sidecar = ProtocolSidecar {
            schema_version: REPORT_SCHEMA_VERSION,
            problem: problem.spec.name.clone(),
            config_hash: report.config_hash.clone(),
            energy: protocol.energy,
            time: protocol.time,
            infidelity: protocol.infidelity,
            samples: protocol.times.len(),
            interpolation: INTERPOLATION.into(),
            allowed_labels: allowed_labels.clone(),
            forbidden_labels: forbidden_labels.clone(),
            source: protocol.source.clone(),
            initial_data: x0.clone(),
            geodesic: o.last.as_ref().map(|s| GeodesicSeed { q: s.q, h0: s.h0.clone() }),
        };
        write_protocol(&file, protocol, &sidecar)?;
        o.protocol_file = Some(rel(dir, &file));
    }
    if let Some(b) = report.best.as_mut() {
        b.protocol_file = report.paths.iter().find(|p| p.id == b.path_id).and_then(|p| p.protocol_file.clone());
    }
    Ok(())
}
