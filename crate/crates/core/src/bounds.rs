//! Upper-bound estimate T* of the minimum gate time from fixed-time fidelity
//! optimization over piecewise-constant controls in the allowed subspace.

use crate::dynamics::propagate_piecewise;
use crate::liealg::matrix::{trace_product, CMatrix};
use crate::liealg::SubspaceSplit;
use argmin::core::{CostFunction, Executor, Gradient};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("invalid bound estimate input: {0}")]
    Invalid(String),
}

/// N segments of constant allowed-subspace control, each of norm E.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseProtocol {
    pub num_segments: usize,
    /// One row of allowed coefficients per segment.
    pub controls: Vec<Vec<f64>>,
    pub duration: f64,
    pub energy: f64,
}

impl PiecewiseProtocol {
    pub fn segment_duration(&self) -> f64 {
        self.duration / self.num_segments as f64
    }

    /// Propagator of the protocol.
    pub fn unitary(&self, split: &SubspaceSplit) -> CMatrix {
        let d = split.len();
        let full: Vec<Vec<f64>> = self
            .controls
            .iter()
            .map(|c| {
                let mut v = vec![0.0; d];
                v[..c.len()].copy_from_slice(c);
                v
            })
            .collect();
        propagate_piecewise(split, &full, self.segment_duration())
    }
}

/// exp(−i dt H) together with the eigen-data needed for its derivative.
struct Segment {
    u: CMatrix,
    v: CMatrix,
    gamma: CMatrix,
}

fn segment(h: &CMatrix, dt: f64) -> Segment {
    let n = h.nrows();
    let eig = h.clone().symmetric_eigen();
    let v = eig.eigenvectors.clone();
    let e = &eig.eigenvalues;
    let f = |x: f64| Complex64::from_polar(1.0, -dt * x);
    let gamma = CMatrix::from_fn(n, n, |a, b| {
        let de = e[a] - e[b];
        if de.abs() < 1e-10 {
            Complex64::new(0.0, -dt) * f(e[a])
        } else {
            (f(e[a]) - f(e[b])) / de
        }
    });
    let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(n, e.iter().map(|&x| f(x))));
    Segment { u: &v * diag * v.adjoint(), v, gamma }
}

/// Fidelity |Tr(W†U)|²/n² of piecewise controls and its gradient with
/// respect to every control coefficient (segment-major).
pub fn fidelity_gradient(split: &SubspaceSplit, target: &CMatrix, controls: &[f64], dt: f64) -> (f64, Vec<f64>) {
    let n = split.dim();
    let na = split.n_allowed();
    let segs = controls.len() / na;
    let allowed: Vec<&CMatrix> = (0..na).map(|j| split.basis().element(j)).collect();
    let parts: Vec<Segment> = (0..segs)
        .map(|k| {
            let mut h = CMatrix::zeros(n, n);
            for (j, a) in allowed.iter().enumerate() {
                h += *a * Complex64::new(controls[k * na + j], 0.0);
            }
            segment(&h, dt)
        })
        .collect();
    // fwd[k] = U_k ⋯ U_1, bwd[k] = U_N ⋯ U_{k+1}
    let mut fwd = vec![CMatrix::identity(n, n)];
    for p in &parts {
        let next = &p.u * fwd.last().unwrap();
        fwd.push(next);
    }
    let mut bwd = vec![CMatrix::identity(n, n); segs + 1];
    for k in (0..segs).rev() {
        bwd[k] = &bwd[k + 1] * &parts[k].u;
    }
    let wd = target.adjoint();
    let g = trace_product(&wd, &fwd[segs]);
    let nn = (n * n) as f64;
    let fid = g.norm_sqr() / nn;
    let mut grad = vec![0.0; controls.len()];
    for (k, p) in parts.iter().enumerate() {
        // Tr(W† L dU R) = Tr(Z dU) with Z = R W† L
        let z = &fwd[k] * &wd * &bwd[k + 1];
        let zt = p.v.adjoint() * z * &p.v;
        let pm = CMatrix::from_fn(n, n, |a, b| zt[(b, a)] * p.gamma[(a, b)]);
        let q = &p.v * pm.transpose() * p.v.adjoint();
        for (j, a) in allowed.iter().enumerate() {
            let dtr = trace_product(&q, a);
            grad[k * na + j] = 2.0 * (g.conj() * dtr).re / nn;
        }
    }
    (fid, grad)
}

struct FixedTime<'a> {
    split: &'a SubspaceSplit,
    target: &'a CMatrix,
    na: usize,
    energy: f64,
    dt: f64,
    best: &'a Mutex<(f64, Vec<f64>)>,
}

impl FixedTime<'_> {
    /// Segment-wise c_k = E·v_k/‖v_k‖.
    fn controls(&self, v: &[f64]) -> Vec<f64> {
        let mut c = v.to_vec();
        for seg in c.chunks_mut(self.na) {
            let len = seg.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            seg.iter_mut().for_each(|x| *x *= self.energy / len);
        }
        c
    }

    fn evaluate(&self, v: &[f64]) -> (f64, Vec<f64>) {
        let c = self.controls(v);
        let (fid, gc) = fidelity_gradient(self.split, self.target, &c, self.dt);
        {
            let mut best = self.best.lock().expect("no poisoning");
            if fid > best.0 {
                *best = (fid, c.clone());
            }
        }
        let mut gv = vec![0.0; v.len()];
        for k in 0..v.len() / self.na {
            let r = k * self.na..(k + 1) * self.na;
            let vk = &v[r.clone()];
            let len = vk.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
            let dot: f64 = gc[r.clone()].iter().zip(vk).map(|(g, x)| g * x).sum::<f64>() / len;
            for (i, idx) in r.enumerate() {
                gv[idx] = -(self.energy / len) * (gc[idx] - dot * vk[i] / len);
            }
        }
        (1.0 - fid, gv)
    }
}

impl CostFunction for FixedTime<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, v: &Self::Param) -> Result<f64, argmin::core::Error> {
        Ok(self.evaluate(v).0)
    }
}

impl Gradient for FixedTime<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, v: &Self::Param) -> Result<Vec<f64>, argmin::core::Error> {
        Ok(self.evaluate(v).1)
    }
}

/// Maximizes gate fidelity at fixed duration T over N constant-norm segments
/// with L-BFGS, starting from seeded random controls. Returns the best
/// protocol seen, however poor.
#[allow(clippy::too_many_arguments)]
pub fn optimize_fixed_t(
    split: &SubspaceSplit,
    target: &CMatrix,
    duration: f64,
    energy: f64,
    num_segments: usize,
    rng_seed: u64,
    max_iters: u64,
) -> Result<(PiecewiseProtocol, f64), BoundsError> {
    if !(duration > 0.0 && energy > 0.0) || num_segments < 2 {
        return Err(BoundsError::Invalid(format!("need T > 0, E > 0 and N ≥ 2, got T = {duration}, E = {energy}, N = {num_segments}")));
    }
    if target.nrows() != split.dim() {
        return Err(BoundsError::Invalid("target dimension does not match the split".into()));
    }
    let na = split.n_allowed();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let init: Vec<f64> = (0..num_segments * na).map(|_| rng.random_range(-1.0..1.0)).collect();
    let best = Mutex::new((f64::NEG_INFINITY, Vec::new()));
    let problem = FixedTime { split, target, na, energy, dt: duration / num_segments as f64, best: &best };
    problem.evaluate(&init);
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 10)
        .with_tolerance_grad(1e-12)
        .and_then(|s| s.with_tolerance_cost(1e-15))
        .expect("valid tolerances");
    let outcome = Executor::new(problem, solver).configure(|s| s.param(init).max_iters(max_iters)).run();
    match outcome {
        Ok(r) => log::debug!("T = {duration}: {} after {} iterations", r.state.termination_status, r.state.iter),
        Err(e) => log::debug!("optimizer stopped early at T = {duration}: {e}"),
    }
    let (fid, c) = best.into_inner().expect("no poisoning");
    let controls = c.chunks(na).map(|s| s.to_vec()).collect();
    Ok((PiecewiseProtocol { num_segments, controls, duration, energy }, fid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    pub restarts: usize,
    pub num_segments: usize,
    pub threshold: f64,
    pub max_iters: u64,
    pub bisection_steps: usize,
    pub rng_seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            t_min: 5.0,
            t_max: 7.2,
            t_step: 0.1,
            restarts: 3,
            num_segments: 40,
            threshold: 1.0 - 1e-6,
            max_iters: 1000,
            bisection_steps: 4,
            rng_seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanPoint {
    /// Duration in units of 1/E.
    pub time: f64,
    pub best_fidelity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TStarEstimate {
    /// Smallest duration (units of 1/E) reaching the threshold.
    pub t_star: f64,
    /// False when no scanned duration reached the threshold.
    pub confident: bool,
    pub scan: Vec<ScanPoint>,
    pub best: Option<PiecewiseProtocol>,
}

fn best_of_restarts(
    split: &SubspaceSplit,
    target: &CMatrix,
    time: f64,
    energy: f64,
    cfg: &ScanConfig,
    salt: u64,
) -> Result<(PiecewiseProtocol, f64), BoundsError> {
    let mut best: Option<(PiecewiseProtocol, f64)> = None;
    for r in 0..cfg.restarts.max(1) {
        let seed = cfg.rng_seed.wrapping_mul(1_000_003).wrapping_add(salt * 31 + r as u64);
        let (p, f) = optimize_fixed_t(split, target, time / energy, energy, cfg.num_segments, seed, cfg.max_iters)?;
        if best.as_ref().is_none_or(|b| f > b.1) {
            best = Some((p, f));
        }
        if f >= cfg.threshold {
            break;
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Scans T upward on the configured grid until the best of the restarts
/// reaches the fidelity threshold, then bisects between the last failing
/// and the first passing grid point.
pub fn estimate_t_star(split: &SubspaceSplit, target: &CMatrix, energy: f64, cfg: &ScanConfig) -> Result<TStarEstimate, BoundsError> {
    if !(cfg.t_min > 0.0 && cfg.t_max >= cfg.t_min && cfg.t_step > 0.0) {
        return Err(BoundsError::Invalid("scan range must be positive and non-empty".into()));
    }
    let steps = ((cfg.t_max - cfg.t_min) / cfg.t_step + 1e-9).floor() as usize;
    let mut scan = Vec::new();
    let mut prev_fail: Option<f64> = None;
    for i in 0..=steps {
        let time = ((cfg.t_min + i as f64 * cfg.t_step) * 1e9).round() / 1e9;
        let (p, f) = best_of_restarts(split, target, time, energy, cfg, i as u64)?;
        log::info!("T = {time:.3}/E: best fidelity {f:.6}");
        scan.push(ScanPoint { time, best_fidelity: f });
        if f >= cfg.threshold {
            let (mut hi, mut best) = (time, p);
            if let Some(mut lo) = prev_fail {
                for b in 0..cfg.bisection_steps {
                    let mid = 0.5 * (lo + hi);
                    let (pm, fm) = best_of_restarts(split, target, mid, energy, cfg, 1000 + b as u64)?;
                    scan.push(ScanPoint { time: mid, best_fidelity: fm });
                    if fm >= cfg.threshold {
                        hi = mid;
                        best = pm;
                    } else {
                        lo = mid;
                    }
                }
            }
            scan.sort_by(|a, b| a.time.total_cmp(&b.time));
            return Ok(TStarEstimate { t_star: hi, confident: true, scan, best: Some(best) });
        }
        prev_fail = Some(time);
    }
    log::warn!("no duration up to {}/E reached fidelity {}", cfg.t_max, cfg.threshold);
    Ok(TStarEstimate { t_star: cfg.t_max, confident: false, scan, best: None })
}
