//! Gate fidelity, cubic-spline resampling and constant-speed protocols.

use super::flows::{
    brachistochrone_rhs, geodesic_rhs, integrate_schrodinger, BrachistochroneState, FlowOptions, Trajectory, TrajectoryKind,
};
use super::DynError;
use crate::liealg::matrix::CMatrix;
use crate::liealg::SubspaceSplit;
use serde::{Deserialize, Serialize};

/// F = |Tr(U_tg† U)|² / n², insensitive to global phase.
pub fn gate_fidelity(u: &CMatrix, target: &CMatrix) -> Result<f64, DynError> {
    let tr = trace_overlap(u, target)?;
    Ok(tr * tr)
}

/// |Tr(U_tg† U)| / n.
pub fn trace_overlap(u: &CMatrix, target: &CMatrix) -> Result<f64, DynError> {
    if u.shape() != target.shape() || u.nrows() != u.ncols() {
        return Err(DynError::Invalid(format!("dimension mismatch: {:?} vs {:?}", u.shape(), target.shape())));
    }
    let n = u.nrows();
    let mut acc = num_complex::Complex64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += target[(k, i)].conj() * u[(k, i)];
        }
    }
    Ok((acc.norm() / n as f64).min(1.0))
}

/// Cubic spline through vector-valued samples.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    t: Vec<f64>,
    y: Vec<Vec<f64>>,
    m: Vec<Vec<f64>>,
}

impl CubicSpline {
    pub fn new(t: &[f64], y: &[Vec<f64>]) -> Result<Self, DynError> {
        let k = t.len();
        if k < 2 || y.len() != k {
            return Err(DynError::Invalid("spline needs at least two matching samples".into()));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(DynError::Invalid("spline knots must be strictly increasing".into()));
        }
        let dim = y[0].len();
        let mut m = vec![vec![0.0; dim]; k];
        if k > 2 {
            // clamped ends with slopes from the cubic through the first/last
            // four knots keep the error O(h⁴) up to the boundary
            let clamp = k >= 4;
            let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
            let (lo, hi) = if clamp { (0, k) } else { (1, k - 1) };
            let size = hi - lo;
            for c in 0..dim {
                let mut sub = vec![0.0; size];
                let mut diag = vec![0.0; size];
                let mut sup = vec![0.0; size];
                let mut rhs = vec![0.0; size];
                for (r, i) in (lo..hi).enumerate() {
                    if i == 0 {
                        let s0 = end_slope(&t[..4], &[y[0][c], y[1][c], y[2][c], y[3][c]]);
                        diag[r] = 2.0 * h[0];
                        sup[r] = h[0];
                        rhs[r] = 6.0 * ((y[1][c] - y[0][c]) / h[0] - s0);
                    } else if i == k - 1 {
                        let tt = [t[k - 1], t[k - 2], t[k - 3], t[k - 4]];
                        let sn = end_slope(&tt, &[y[k - 1][c], y[k - 2][c], y[k - 3][c], y[k - 4][c]]);
                        sub[r] = h[k - 2];
                        diag[r] = 2.0 * h[k - 2];
                        rhs[r] = 6.0 * (sn - (y[k - 1][c] - y[k - 2][c]) / h[k - 2]);
                    } else {
                        sub[r] = h[i - 1];
                        diag[r] = 2.0 * (h[i - 1] + h[i]);
                        sup[r] = h[i];
                        rhs[r] = 6.0 * ((y[i + 1][c] - y[i][c]) / h[i] - (y[i][c] - y[i - 1][c]) / h[i - 1]);
                    }
                }
                if !clamp {
                    sub[0] = 0.0;
                    sup[size - 1] = 0.0;
                }
                for r in 1..size {
                    let w = sub[r] / diag[r - 1];
                    diag[r] -= w * sup[r - 1];
                    rhs[r] -= w * rhs[r - 1];
                }
                let mut sol = vec![0.0; size];
                for r in (0..size).rev() {
                    let next = if r + 1 < size { sup[r] * sol[r + 1] } else { 0.0 };
                    sol[r] = (rhs[r] - next) / diag[r];
                }
                for r in 0..size {
                    m[lo + r][c] = sol[r];
                }
            }
        }
        Ok(Self { t: t.to_vec(), y: y.to_vec(), m })
    }

    fn locate(&self, t: f64) -> usize {
        match self.t.binary_search_by(|x| x.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(self.t.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.t.len() - 2),
        }
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let i = self.locate(t);
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - t) / h;
        let b = (t - self.t[i]) / h;
        for c in 0..out.len() {
            out[c] = a * self.y[i][c]
                + b * self.y[i + 1][c]
                + ((a * a * a - a) * self.m[i][c] + (b * b * b - b) * self.m[i + 1][c]) * h * h / 6.0;
        }
    }

    pub fn derivative(&self, t: f64, out: &mut [f64]) {
        let i = self.locate(t);
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - t) / h;
        let b = (t - self.t[i]) / h;
        for c in 0..out.len() {
            out[c] = (self.y[i + 1][c] - self.y[i][c]) / h - (3.0 * a * a - 1.0) / 6.0 * h * self.m[i][c]
                + (3.0 * b * b - 1.0) / 6.0 * h * self.m[i + 1][c];
        }
    }
}

/// Derivative at x[0] of the cubic interpolating four points.
fn end_slope(x: &[f64], y: &[f64; 4]) -> f64 {
    let mut d = 0.0;
    for j in 0..4 {
        if j == 0 {
            d += y[0] * (1..4).map(|m| 1.0 / (x[0] - x[m])).sum::<f64>();
        } else {
            let num: f64 = (1..4).filter(|&m| m != j).map(|m| x[0] - x[m]).product();
            let den: f64 = (0..4).filter(|&m| m != j).map(|m| x[j] - x[m]).product();
            d += y[j] * num / den;
        }
    }
    d
}

/// Provenance of a protocol.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ProtocolSource {
    pub branch: Option<usize>,
    pub sector: Option<String>,
    pub q_path: Vec<f64>,
    pub note: String,
}

/// Constant-speed control schedule: μ(t) with ||μ|| = E, plus λ(t).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ControlProtocol {
    pub times: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub energy: f64,
    pub time: f64,
    pub infidelity: f64,
    pub source: ProtocolSource,
}

impl ControlProtocol {
    pub fn n_samples(&self) -> usize {
        self.times.len()
    }

    /// Largest relative deviation of ||μ(t_i)|| from E.
    pub fn norm_drift(&self) -> f64 {
        if self.energy == 0.0 {
            return 0.0;
        }
        self.mu.iter().map(|m| (m.iter().map(|x| x * x).sum::<f64>().sqrt() - self.energy).abs() / self.energy).fold(0.0, f64::max)
    }

    /// Re-integrates U̇ = −iΣμ_j(t)A_j U with μ cubic-spline interpolated on
    /// the sample grid.
    pub fn replay(&self, split: &SubspaceSplit, tol: f64) -> Result<CMatrix, DynError> {
        let n = split.dim();
        if self.time == 0.0 || self.times.len() < 2 {
            return Ok(CMatrix::identity(n, n));
        }
        let na = split.n_allowed();
        if self.mu.iter().any(|m| m.len() != na) {
            return Err(DynError::Invalid(format!("protocol has controls of the wrong dimension (expected {na})")));
        }
        let spline = CubicSpline::new(&self.times, &self.mu)?;
        let mut mu = vec![0.0; na];
        let tr = integrate_schrodinger(
            split,
            |t, c| {
                spline.eval(t, &mut mu);
                c[..na].copy_from_slice(&mu);
                c[na..].iter_mut().for_each(|x| *x = 0.0);
            },
            self.time,
            &FlowOptions::endpoint(tol),
        )?;
        Ok(tr.final_unitary().clone())
    }
}

/// Reparametrizes a trajectory to constant speed ||H|| = E and resamples it
/// on `samples` uniform points. λ is rescaled by the same local factor.
pub fn normalize_protocol(split: &SubspaceSplit, traj: &Trajectory, energy: f64, samples: usize) -> Result<ControlProtocol, DynError> {
    if !(energy.is_finite() && energy > 0.0) {
        return Err(DynError::Invalid(format!("energy bound must be positive, got {energy}")));
    }
    let na = split.n_allowed();
    let nb = split.n_forbidden();
    let k = traj.times.len();
    let norms: Vec<f64> = traj.generators.iter().map(|h| h.norm()).collect();
    let samples = samples.max(2);
    if norms.iter().all(|&x| x == 0.0) {
        return Ok(ControlProtocol {
            times: vec![0.0; 1],
            mu: vec![vec![0.0; na]],
            lambda: vec![vec![0.0; nb]],
            energy,
            time: 0.0,
            infidelity: 0.0,
            source: ProtocolSource::default(),
        });
    }
    if k < 2 {
        return Err(DynError::Invalid("trajectory needs at least two samples".into()));
    }
    if norms.iter().any(|&x| x < 1e-9) {
        return Err(DynError::SingularReparametrization);
    }
    let gens: Vec<Vec<f64>> = traj.generators.iter().map(|h| h.as_slice().to_vec()).collect();
    let lam: Vec<Vec<f64>> = match &traj.multipliers {
        Some(l) => l.clone(),
        None => vec![vec![0.0; nb]; k],
    };
    let hspline = CubicSpline::new(&traj.times, &gens)?;
    let lspline = CubicSpline::new(&traj.times, &lam)?;
    let d = split.len();
    let mut buf = vec![0.0; d];
    let mut norm_at = |t: f64| {
        hspline.eval(t, &mut buf);
        buf.iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    // cumulative length by Simpson's rule per sample interval
    let mut cum = vec![0.0; k];
    for i in 0..k - 1 {
        let (a, b) = (traj.times[i], traj.times[i + 1]);
        cum[i + 1] = cum[i] + (b - a) / 6.0 * (norms[i] + 4.0 * norm_at(0.5 * (a + b)) + norms[i + 1]);
    }
    let total = cum[k - 1];
    let new_time = total / energy;
    let mut times = Vec::with_capacity(samples);
    let mut mu = Vec::with_capacity(samples);
    let mut lambda = Vec::with_capacity(samples);
    let mut hb = vec![0.0; d];
    let mut lb = vec![0.0; nb];
    for j in 0..samples {
        let s = if j + 1 == samples { new_time } else { new_time * j as f64 / (samples - 1) as f64 };
        let target = s * energy;
        let i = match cum.binary_search_by(|x| x.partial_cmp(&target).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(k - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(k - 2),
        };
        let (a, b) = (traj.times[i], traj.times[i + 1]);
        // Newton on the partial Simpson integral within [a, b]
        let partial = |t: f64, f: &mut dyn FnMut(f64) -> f64| cum[i] + (t - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + t)) + f(t));
        let mut t = a + (b - a) * ((target - cum[i]) / (cum[i + 1] - cum[i]).max(f64::MIN_POSITIVE)).clamp(0.0, 1.0);
        for _ in 0..20 {
            let g = partial(t, &mut norm_at) - target;
            let dg = norm_at(t);
            let step = g / dg;
            t = (t - step).clamp(a, b);
            if step.abs() < 1e-15 * (1.0 + t.abs()) {
                break;
            }
        }
        hspline.eval(t, &mut hb);
        lspline.eval(t, &mut lb);
        let scale = energy / hb.iter().map(|x| x * x).sum::<f64>().sqrt();
        times.push(s);
        mu.push(hb[..na].iter().map(|x| x * scale).collect());
        lambda.push(lb.iter().map(|x| x * scale).collect());
    }
    Ok(ControlProtocol { times, mu, lambda, energy, time: new_time, infidelity: f64::NAN, source: ProtocolSource::default() })
}

/// Exact constant-speed protocol for a brachistochrone solution x0 = (μ⁰, λ⁰)
/// solved on [0, 1]: ||μ|| is conserved, so the reparametrization is linear.
pub fn protocol_from_brachistochrone(
    split: &SubspaceSplit,
    x0: &[f64],
    energy: f64,
    samples: usize,
    tol: f64,
) -> Result<ControlProtocol, DynError> {
    let st = BrachistochroneState::from_flat(split, x0);
    let speed = st.mu.iter().map(|x| x * x).sum::<f64>().sqrt();
    if speed == 0.0 {
        let na = split.n_allowed();
        return Ok(ControlProtocol {
            times: vec![0.0],
            mu: vec![vec![0.0; na]],
            lambda: vec![vec![0.0; split.n_forbidden()]],
            energy,
            time: 0.0,
            infidelity: 0.0,
            source: ProtocolSource::default(),
        });
    }
    let c = energy / speed;
    let scaled = BrachistochroneState { mu: st.mu.iter().map(|x| x * c).collect(), lambda: st.lambda.iter().map(|x| x * c).collect() };
    let tr = super::flows::integrate_brachistochrone(split, &scaled, 1.0 / c, &FlowOptions::sampled(tol, samples))?;
    Ok(ControlProtocol {
        times: tr.times.clone(),
        mu: tr.generators.iter().map(|h| h.as_slice()[..split.n_allowed()].to_vec()).collect(),
        lambda: tr.multipliers.clone().unwrap_or_default(),
        energy,
        time: 1.0 / c,
        infidelity: f64::NAN,
        source: ProtocolSource::default(),
    })
}

/// max_i ||(μ̇, λ̇) − QBE(μ, λ)|| with derivatives from a cubic spline.
pub fn qbe_residual(split: &SubspaceSplit, times: &[f64], mu: &[Vec<f64>], lambda: &[Vec<f64>]) -> Result<f64, DynError> {
    let flat: Vec<Vec<f64>> = mu.iter().zip(lambda).map(|(m, l)| m.iter().chain(l).copied().collect()).collect();
    let sp = CubicSpline::new(times, &flat)?;
    let d = split.len();
    let na = split.n_allowed();
    let mut der = vec![0.0; d];
    let mut worst = 0.0f64;
    for (i, &t) in times.iter().enumerate() {
        sp.derivative(t, &mut der);
        let st = BrachistochroneState { mu: mu[i].clone(), lambda: lambda[i].clone() };
        let r = brachistochrone_rhs(split, &st);
        let e: f64 = (0..d)
            .map(|c| {
                let rhs = if c < na { r.mu[c] } else { r.lambda[c - na] };
                (der[c] - rhs).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        worst = worst.max(e);
    }
    Ok(worst)
}

/// QBE residual of (μ, λ) := (α^q, qβ^q) along a q-geodesic, using the exact
/// geodesic derivative at each stored sample.
pub fn geodesic_qbe_residual(split: &SubspaceSplit, traj: &Trajectory) -> Result<f64, DynError> {
    let q = match traj.kind {
        TrajectoryKind::Geodesic { q } => q,
        _ => return Err(DynError::Invalid("expected a geodesic trajectory".into())),
    };
    let na = split.n_allowed();
    let mut worst = 0.0f64;
    for h in &traj.generators {
        let hd = geodesic_rhs(split, h, q)?;
        let st = BrachistochroneState { mu: h.as_slice()[..na].to_vec(), lambda: h.as_slice()[na..].iter().map(|x| q * x).collect() };
        let r = brachistochrone_rhs(split, &st);
        let mut e = 0.0;
        for c in 0..split.len() {
            let (lhs, rhs) = if c < na { (hd.coeffs[c], r.mu[c]) } else { (q * hd.coeffs[c], r.lambda[c - na]) };
            e += (lhs - rhs).powi(2);
        }
        worst = worst.max(e.sqrt());
    }
    Ok(worst)
}
