//! Homotopy in the penalty parameter q: the geodesic-deformation derivative,
//! predictor–corrector path following and the commuting special case.

use crate::dynamics::flows::project_blocks;
use crate::dynamics::ode::{integrate, OdeOptions, Record};
use crate::dynamics::{gate_fidelity, replay_allowed, DynError, UNITARITY_TOL};
use crate::liealg::matrix::{identity_to_slice, matrix_from_slice, neg_i_h_times_u, CMatrix};
use crate::liealg::{apply_fq, apply_gq, forbidden_fraction, HermitianOperator, LieError, SubspaceSplit};
use crate::shooting::{endpoint_residual, shoot, Family, ShootError, ShootOptions, ShootingProblem, ShootingResult};
use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Condition number of 𝒥_T above which the deformation derivative is undefined.
pub const DEFAULT_COND_LIMIT: f64 = 1e12;

/// Commutator norm below which a seed is treated as the special case.
pub const SPECIAL_CASE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ContinuationError {
    #[error("deformation derivative undefined at q = {q} (condition number {cond:.3e})")]
    DerivativeUndefined { q: f64, cond: f64 },
    #[error("deformation derivative vanishes at q = 1: allowed and forbidden parts commute")]
    SpecialCaseZero,
    #[error("corrector failed at q = {q} (residual {residual:.3e})")]
    Corrector { q: f64, residual: f64 },
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error(transparent)]
    Shoot(#[from] ShootError),
    #[error("invalid continuation input: {0}")]
    Invalid(String),
    #[error("checkpoint I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint is malformed: {0}")]
    Json(#[from] serde_json::Error),
}

/// K̇ = −i(F_q([K, G_q H]) + F_q([H, G_q K])), plus M = −i F_q²([P_A H, P_B H])
/// when `include_inhomogeneous` is set.
pub fn k_rhs(
    split: &SubspaceSplit,
    k: &HermitianOperator,
    h: &HermitianOperator,
    q: f64,
    include_inhomogeneous: bool,
) -> Result<HermitianOperator, LieError> {
    let gh = apply_gq(split, h, q)?;
    let gk = apply_gq(split, k, q)?;
    let s = &HermitianOperator::from_slice(&split.bracket(k.as_slice(), gh.as_slice()))
        + &HermitianOperator::from_slice(&split.bracket(h.as_slice(), gk.as_slice()));
    let mut out = apply_fq(split, &s, q)?;
    if include_inhomogeneous {
        let m = inhomogeneous_term(split, h.as_slice(), q);
        out = &out + &HermitianOperator::from_slice(&m);
    }
    Ok(out)
}

fn split_parts(split: &SubspaceSplit, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let na = split.n_allowed();
    let mut a = vec![0.0; h.len()];
    let mut b = vec![0.0; h.len()];
    a[..na].copy_from_slice(&h[..na]);
    b[na..].copy_from_slice(&h[na..]);
    (a, b)
}

fn inhomogeneous_term(split: &SubspaceSplit, h: &[f64], q: f64) -> Vec<f64> {
    let (a, b) = split_parts(split, h);
    let mut c = split.bracket(&a, &b);
    for x in &mut c[split.n_allowed()..] {
        *x /= q * q;
    }
    c
}

/// Coefficient matrix of the homogeneous K-equation at H.
fn k_operator(split: &SubspaceSplit, h: &[f64], q: f64, l: &mut DMatrix<f64>) {
    let na = split.n_allowed();
    let g = |i: usize| if i < na { 1.0 } else { q };
    l.fill(0.0);
    for &(a, b, c, f) in split.structure().nonzeros() {
        let (a, b, c) = (a as usize, b as usize, c as usize);
        l[(c, a)] += f * g(b) * h[b];
        l[(c, b)] += f * h[a] * g(b);
    }
    for c in na..split.len() {
        for j in 0..split.len() {
            l[(c, j)] /= q;
        }
    }
}

/// Matrix of the linear map 𝒥_T together with the data needed for the
/// deformation derivative, all from one joint integration along the geodesic.
#[derive(Debug, Clone)]
pub struct DeformationOperator {
    pub q: f64,
    pub horizon: f64,
    pub h0: Vec<f64>,
    /// Column i is 𝒥_T(e_i).
    pub jt: DMatrix<f64>,
    pub condition_number: f64,
    /// ∫ U†K_p U dt for the particular solution with K_p(0) = 0.
    pub particular: DVector<f64>,
    pub endpoint: CMatrix,
    pub final_coeffs: Vec<f64>,
    /// Accepted integrator steps.
    pub steps: usize,
}

impl DeformationOperator {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.jt * DVector::from_column_slice(x)).as_slice().to_vec()
    }

    /// Least-squares solve; singular values below 1e−12·σ_max are dropped.
    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let svd = self.jt.clone().svd(true, true);
        let cut = 1e-12 * svd.singular_values.max();
        svd.solve(b, cut).expect("SVD with vectors")
    }

    /// dH⁰/dq = −𝒥_T⁻¹(∫U†K_pU dt), valid at any q.
    pub fn direct_derivative(&self) -> Vec<f64> {
        (-self.solve(&self.particular)).as_slice().to_vec()
    }
}

/// Layout of the joint state [h, U, K (d×d), J (d×d), k_p, j_p].
struct Offsets {
    u: usize,
    k: usize,
    j: usize,
    kp: usize,
    jp: usize,
    end: usize,
}

impl Offsets {
    fn new(d: usize, n: usize) -> Self {
        let u = d;
        let k = u + 2 * n * n;
        let j = k + d * d;
        let kp = j + d * d;
        let jp = kp + d;
        Self { u, k, j, kp, jp, end: jp + d }
    }
}

/// Integrates the geodesic from H(0) = h0 together with the homogeneous
/// K-equation for every basis direction and the particular solution, and
/// accumulates ∫U†K U dt for each.
pub fn assemble_jt(split: &SubspaceSplit, h0: &[f64], q: f64, horizon: f64, tol: f64) -> Result<DeformationOperator, ContinuationError> {
    if !(q.is_finite() && q >= 1.0) {
        return Err(ContinuationError::Invalid(format!("q must be at least 1, got {q}")));
    }
    if h0.len() != split.len() || h0.iter().any(|v| !v.is_finite()) {
        return Err(ContinuationError::Invalid("initial generator has wrong length or is not finite".into()));
    }
    let n = split.dim();
    let d = split.len();
    let na = split.n_allowed();
    let o = Offsets::new(d, n);
    let mut y0 = vec![0.0; o.end];
    y0[..d].copy_from_slice(h0);
    identity_to_slice(n, &mut y0[o.u..o.k]);
    for i in 0..d {
        y0[o.k + i * d + i] = 1.0;
    }

    let mut l = DMatrix::zeros(d, d);
    let mut r = DMatrix::zeros(d, d);
    let mut hbuf = vec![Complex64::new(0.0, 0.0); n * n];
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let h = &y[..d];
        let (a, b) = split_parts(split, h);
        let c = split.bracket(&a, &b);
        for i in 0..d {
            dy[i] = if i < na { (q - 1.0) * c[i] } else { (q - 1.0) * c[i] / q };
        }
        split.assemble_into(h, &mut hbuf);
        neg_i_h_times_u(n, &hbuf, &y[o.u..o.k], &mut dy[o.u..o.k]);

        k_operator(split, h, q, &mut l);
        split.adjoint_action(&matrix_from_slice(n, &y[o.u..o.k]), &mut r);
        let k = DMatrixView::from_slice(&y[o.k..o.j], d, d);
        DMatrixViewMut::from_slice(&mut dy[o.k..o.j], d, d).gemm(1.0, &l, &k, 0.0);
        DMatrixViewMut::from_slice(&mut dy[o.j..o.kp], d, d).gemm(1.0, &r, &k, 0.0);

        let kp = DMatrixView::from_slice(&y[o.kp..o.jp], d, 1);
        let mut dkp = DMatrixViewMut::from_slice(&mut dy[o.kp..o.jp], d, 1);
        dkp.gemm(1.0, &l, &kp, 0.0);
        for i in 0..d {
            dkp[i] += if i < na { c[i] } else { c[i] / (q * q) };
        }
        DMatrixViewMut::from_slice(&mut dy[o.jp..o.end], d, 1).gemm(1.0, &r, &kp, 0.0);
    };
    let threshold = UNITARITY_TOL / 10.0;
    let mut hook = |_t: f64, y: &mut [f64]| project_blocks(n, y, &[o.u], threshold);
    let sol = integrate(rhs, 0.0, horizon, &y0, &OdeOptions::with_tol(tol), Record::Endpoint, Some(&mut hook)).map_err(DynError::from)?;
    let y = sol.last();
    let jt = DMatrix::from_column_slice(d, d, &y[o.j..o.kp]);
    let sv = jt.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    Ok(DeformationOperator {
        q,
        horizon,
        h0: h0.to_vec(),
        jt,
        condition_number,
        particular: DVector::from_column_slice(&y[o.jp..o.end]),
        endpoint: matrix_from_slice(n, &y[o.u..o.k]),
        final_coeffs: y[..d].to_vec(),
        steps: sol.stats.accepted,
    })
}

/// True iff ‖[P_A H0, P_B H0]‖_F < 1e−10.
pub fn detect_special_case(split: &SubspaceSplit, h0: &[f64]) -> bool {
    let (a, b) = split_parts(split, h0);
    split.bracket(&a, &b).iter().map(|x| x * x).sum::<f64>().sqrt() < SPECIAL_CASE_TOL
}

/// dH⁰/dq from an assembled operator, using the q = 1 or q > 1 closed form.
pub fn derivative_from_operator(split: &SubspaceSplit, op: &DeformationOperator, cond_limit: f64) -> Result<Vec<f64>, ContinuationError> {
    let q = op.q;
    if !(op.condition_number <= cond_limit) {
        return Err(ContinuationError::DerivativeUndefined { q, cond: op.condition_number });
    }
    if q == 1.0 {
        let (_, b) = split_parts(split, &op.h0);
        if b.iter().all(|x| *x == 0.0) {
            return Ok(vec![0.0; split.len()]);
        }
        if detect_special_case(split, &op.h0) {
            return Err(ContinuationError::SpecialCaseZero);
        }
        return Ok(op.direct_derivative());
    }
    let g = apply_gq(split, &HermitianOperator::from_slice(&op.h0), q)?.coeffs;
    let y = op.solve(&g);
    Ok((0..split.len()).map(|i| (op.horizon * y[i] - g[i]) / (q * (q - 1.0))).collect())
}

/// dH⁰/dq along the geodesic family through (q, H0).
pub fn deformation_derivative(split: &SubspaceSplit, h0: &[f64], q: f64, tol: f64) -> Result<Vec<f64>, ContinuationError> {
    let op = assemble_jt(split, h0, q, 1.0, tol)?;
    derivative_from_operator(split, &op, DEFAULT_COND_LIMIT)
}

/// One sample of a continuation path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSample {
    pub q: f64,
    pub h0: Vec<f64>,
    /// Gate fidelity of the P_A-replayed control.
    pub fidelity: f64,
    pub condition_number: f64,
    pub residual: f64,
    pub forbidden_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PathStatus {
    Extending,
    Terminated { q_stop: f64, reason: String },
    Completed { q_max: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QPath {
    pub branch_index: usize,
    pub samples: Vec<PathSample>,
    pub status: PathStatus,
}

impl QPath {
    pub fn last(&self) -> Option<&PathSample> {
        self.samples.last()
    }

    pub fn sample_at(&self, q: f64) -> Option<&PathSample> {
        self.samples.iter().find(|s| (s.q - q).abs() < 1e-9)
    }

    pub fn is_completed(&self) -> bool {
        matches!(self.status, PathStatus::Completed { .. })
    }

    pub fn save(&self, path: &Path) -> Result<(), ContinuationError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ContinuationError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

#[derive(Debug, Clone)]
pub struct StepControl {
    pub dq_initial: f64,
    pub dq_min: f64,
    pub dq_max: f64,
    pub growth: f64,
    /// Integrator tolerance inside the continuation.
    pub integrator_tol: f64,
    pub corrector_tol: f64,
    pub corrector_iters: usize,
    /// Re-shoot after each predictor step; otherwise integrate dH⁰/dq with RK4.
    pub corrector: bool,
    pub cond_limit: f64,
    /// Never step across an integer q, so every integer gets a sample.
    pub land_on_integers: bool,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dq_initial: 0.25,
            dq_min: 1e-3,
            dq_max: 1.0,
            growth: 1.5,
            integrator_tol: 1e-9,
            corrector_tol: 1e-10,
            corrector_iters: 8,
            corrector: true,
            cond_limit: DEFAULT_COND_LIMIT,
            land_on_integers: true,
        }
    }
}

/// Corrected point on the geodesic family at fixed q.
#[derive(Debug, Clone)]
pub struct Corrected {
    pub h0: Vec<f64>,
    pub operator: DeformationOperator,
    pub residual: f64,
    pub iterations: usize,
}

fn vnorm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton re-shoot of the geodesic boundary-value problem at fixed q, using
/// 𝒥_T as the Jacobian of the endpoint mismatch.
pub fn correct(split: &SubspaceSplit, target: &CMatrix, q: f64, guess: &[f64], ctl: &StepControl) -> Result<Corrected, ContinuationError> {
    let mut x = guess.to_vec();
    let mut prev = f64::INFINITY;
    for it in 0..=ctl.corrector_iters {
        let op = assemble_jt(split, &x, q, 1.0, ctl.integrator_tol)?;
        let r = endpoint_residual(split, &op.endpoint, target);
        let rn = vnorm(&r);
        if rn < ctl.corrector_tol {
            return Ok(Corrected { h0: x, operator: op, residual: rn, iterations: it });
        }
        if !(rn < prev) || it == ctl.corrector_iters {
            return Err(ContinuationError::Corrector { q, residual: rn });
        }
        prev = rn;
        let dx = op.solve(&DVector::from_column_slice(&r));
        for (xi, di) in x.iter_mut().zip(dx.iter()) {
            *xi -= di;
        }
    }
    unreachable!("loop returns on its last iteration")
}

fn sample(split: &SubspaceSplit, target: &CMatrix, c: &Corrected, tol: f64) -> Result<PathSample, ContinuationError> {
    let q = c.operator.q;
    let v = replay_allowed(split, &c.h0, q, 1.0, tol)?;
    Ok(PathSample {
        q,
        h0: c.h0.clone(),
        fidelity: gate_fidelity(&v, target)?,
        condition_number: c.operator.condition_number,
        residual: c.residual,
        forbidden_fraction: forbidden_fraction(split, &HermitianOperator::from_slice(&c.h0)),
    })
}

fn next_step(q: f64, dq: f64, q_max: f64, land: bool) -> f64 {
    let mut step = dq.min(q_max - q);
    if land {
        let next = (q + 1e-9).floor() + 1.0;
        step = step.min(next - q);
    }
    step
}

fn terminate(path: &mut QPath, q: f64, reason: String) {
    log::info!("branch {} terminated at q = {q}: {reason}", path.branch_index);
    path.status = PathStatus::Terminated { q_stop: q, reason };
}

/// Follows the geodesic family through (q_start, h0) up to q_max. A path
/// that stops early is returned with a terminated status, not as an error.
#[allow(clippy::too_many_arguments)]
pub fn continue_path(
    split: &SubspaceSplit,
    target: &CMatrix,
    branch_index: usize,
    q_start: f64,
    h0: &[f64],
    q_max: f64,
    ctl: &StepControl,
    checkpoint: Option<&Path>,
) -> Result<QPath, ContinuationError> {
    if !(q_start >= 1.0 && q_max >= q_start) {
        return Err(ContinuationError::Invalid(format!("need 1 ≤ q_start ≤ q_max, got {q_start}, {q_max}")));
    }
    let mut path = QPath { branch_index, samples: Vec::new(), status: PathStatus::Extending };
    let mut cur = correct(split, target, q_start, h0, ctl)?;
    path.samples.push(sample(split, target, &cur, ctl.integrator_tol)?);
    let mut q = q_start;
    let mut dq = ctl.dq_initial;
    while q < q_max - 1e-12 {
        let derivative = match derivative_from_operator(split, &cur.operator, ctl.cond_limit) {
            Ok(dv) => dv,
            Err(e @ (ContinuationError::DerivativeUndefined { .. } | ContinuationError::SpecialCaseZero)) => {
                terminate(&mut path, q, e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let dnorm = vnorm(&derivative);
        let mut accepted = None;
        while dq >= ctl.dq_min {
            let step = next_step(q, dq, q_max, ctl.land_on_integers);
            let result = if ctl.corrector {
                let pred: Vec<f64> = cur.h0.iter().zip(&derivative).map(|(x, v)| x + step * v).collect();
                match correct(split, target, q + step, &pred, ctl) {
                    Ok(c) => {
                        let jump = vnorm(&c.h0.iter().zip(&pred).map(|(a, b)| a - b).collect::<Vec<_>>());
                        if jump <= 10.0 * step * step * dnorm + 1e-9 {
                            Some(c)
                        } else {
                            log::debug!("q = {}: corrector jumped {jump:.3e}", q + step);
                            None
                        }
                    }
                    Err(ContinuationError::Corrector { .. } | ContinuationError::Dyn(_)) => None,
                    Err(e) => return Err(e),
                }
            } else {
                rk4_step(split, target, &cur, &derivative, step, ctl)?
            };
            match result {
                Some(c) => {
                    accepted = Some((step, c));
                    break;
                }
                None => dq /= 2.0,
            }
        }
        let Some((step, next)) = accepted else {
            terminate(&mut path, q, format!("corrector failed with Δq below {}", ctl.dq_min));
            break;
        };
        q = if ctl.land_on_integers && (q + step - (q + step).round()).abs() < 1e-9 { (q + step).round() } else { q + step };
        let mut next = next;
        next.operator.q = q;
        if next.iterations <= 3 {
            dq = (dq * ctl.growth).min(ctl.dq_max);
        }
        cur = next;
        path.samples.push(sample(split, target, &cur, ctl.integrator_tol)?);
        log::debug!("branch {branch_index}: q = {q:.4}, ‖H⁰‖ = {:.6}", vnorm(&cur.h0));
        if let Some(p) = checkpoint {
            path.save(p)?;
        }
    }
    if path.status == PathStatus::Extending {
        path.status = PathStatus::Completed { q_max };
    }
    if let Some(p) = checkpoint {
        path.save(p)?;
    }
    Ok(path)
}

/// Classical RK4 step of dH⁰/dq without re-shooting.
fn rk4_step(
    split: &SubspaceSplit,
    target: &CMatrix,
    cur: &Corrected,
    k1: &[f64],
    step: f64,
    ctl: &StepControl,
) -> Result<Option<Corrected>, ContinuationError> {
    let q = cur.operator.q;
    let eval = |qq: f64, x: &[f64]| -> Result<Option<Vec<f64>>, ContinuationError> {
        let op = assemble_jt(split, x, qq, 1.0, ctl.integrator_tol)?;
        match derivative_from_operator(split, &op, ctl.cond_limit) {
            Ok(v) => Ok(Some(v)),
            Err(ContinuationError::DerivativeUndefined { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let axpy = |a: &[f64], s: f64, b: &[f64]| a.iter().zip(b).map(|(x, y)| x + s * y).collect::<Vec<f64>>();
    let x = &cur.h0;
    let Some(k2) = eval(q + step / 2.0, &axpy(x, step / 2.0, k1))? else { return Ok(None) };
    let Some(k3) = eval(q + step / 2.0, &axpy(x, step / 2.0, &k2))? else { return Ok(None) };
    let Some(k4) = eval(q + step, &axpy(x, step, &k3))? else { return Ok(None) };
    let h0: Vec<f64> = (0..x.len()).map(|i| x[i] + step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
    let operator = assemble_jt(split, &h0, q + step, 1.0, ctl.integrator_tol)?;
    let residual = vnorm(&endpoint_residual(split, &operator.endpoint, target));
    Ok(Some(Corrected { h0, operator, residual, iterations: 0 }))
}

/// Settings for [`bootstrap_special`].
#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    pub q_prime: f64,
    pub num_guesses: usize,
    pub rng_seed: u64,
    /// Guesses are componentwise uniform in [−radius, radius].
    pub radius: f64,
    /// Integrator tolerance and residual target of the global phase.
    pub coarse_tol: f64,
    pub coarse_residual: f64,
    pub coarse_iters: usize,
    /// Integrator tolerance and residual target of the polishing solve.
    pub tol: f64,
    pub residual_tol: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            q_prime: 5.0,
            num_guesses: 32,
            rng_seed: 2024,
            radius: 0.5,
            coarse_tol: 1e-8,
            coarse_residual: 1e-6,
            coarse_iters: 40,
            tol: 1e-12,
            residual_tol: 1e-10,
        }
    }
}

/// Converged geodesic solutions at q' from seeded uniform random guesses,
/// deduplicated (distance < 1e−6) and sorted by ‖H⁰‖.
pub fn bootstrap_special(split: &SubspaceSplit, target: &CMatrix, cfg: &BootstrapConfig) -> Result<Vec<ShootingResult>, ContinuationError> {
    if !(cfg.q_prime > 1.0) {
        return Err(ContinuationError::Invalid(format!("bootstrap needs q' > 1, got {}", cfg.q_prime)));
    }
    let family = Family::Geodesic { q: cfg.q_prime };
    let coarse = ShootingProblem::new(family, split, target.clone(), cfg.coarse_tol)?;
    let fine = ShootingProblem::new(family, split, target.clone(), cfg.tol)?;
    let coarse_opts = ShootOptions {
        residual_tol: cfg.coarse_residual,
        max_iters: cfg.coarse_iters,
        max_step: Some(2.0 * cfg.radius.max(1.0)),
        ..ShootOptions::default()
    };
    let fine_opts = ShootOptions { residual_tol: cfg.residual_tol, max_iters: 20, ..ShootOptions::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let guesses: Vec<Vec<f64>> =
        (0..cfg.num_guesses).map(|_| (0..split.len()).map(|_| rng.random_range(-cfg.radius..=cfg.radius)).collect()).collect();
    let mut found: Vec<ShootingResult> = guesses
        .par_iter()
        .filter_map(|g| {
            let rough = shoot(&coarse, g, &coarse_opts).ok()?;
            shoot(&fine, &rough.initial_data, &fine_opts).ok()
        })
        .filter(|r| r.converged)
        .collect();
    found.sort_by(|a, b| vnorm(&a.initial_data).total_cmp(&vnorm(&b.initial_data)));
    let mut unique: Vec<ShootingResult> = Vec::new();
    for r in found {
        let dup = unique.iter().any(|u| vnorm(&u.initial_data.iter().zip(&r.initial_data).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-6);
        if !dup {
            unique.push(r);
        }
    }
    log::info!("bootstrap at q' = {}: {} distinct solutions from {} guesses", cfg.q_prime, unique.len(), cfg.num_guesses);
    Ok(unique)
}
