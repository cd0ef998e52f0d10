//! Right-hand sides and integrators for the Schrödinger, q-geodesic and
//! brachistochrone flows. States are flat `f64` vectors: coefficient blocks
//! first, then unitaries in interleaved row-major layout.

use super::ode::{integrate, OdeOptions, OdeSolution, Record};
use super::DynError;
use crate::liealg::matrix::{
    expm_hermitian, identity_to_slice, matrix_from_slice, matrix_to_slice, neg_i_h_times_u, polar_unitary, unitarity_error, CMatrix,
};
use crate::liealg::{apply_fq, apply_gq, HermitianOperator, LieError, SubspaceSplit};
use num_complex::Complex64;

/// Default unitarity tolerance; projection kicks in at a tenth of it.
pub const UNITARITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryKind {
    Geodesic { q: f64 },
    Brachistochrone,
    Replay,
}

/// Time-sampled solution of one of the flows.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub times: Vec<f64>,
    pub unitaries: Vec<CMatrix>,
    /// H(t_i); for brachistochrone runs the forbidden block is zero.
    pub generators: Vec<HermitianOperator>,
    /// λ(t_i) for brachistochrone runs.
    pub multipliers: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn final_unitary(&self) -> &CMatrix {
        self.unitaries.last().expect("trajectory is non-empty")
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn max_unitarity_error(&self) -> f64 {
        self.unitaries.iter().map(unitarity_error).fold(0.0, f64::max)
    }

    /// Largest relative deviation of `f(sample)` from its initial value.
    pub fn relative_drift(values: &[f64]) -> f64 {
        let v0 = values.first().copied().unwrap_or(0.0);
        let scale = v0.abs().max(f64::MIN_POSITIVE);
        values.iter().map(|v| (v - v0).abs() / scale).fold(0.0, f64::max)
    }
}

/// (μ, λ): allowed controls and forbidden-direction multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct BrachistochroneState {
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl BrachistochroneState {
    pub fn as_flat(&self) -> Vec<f64> {
        let mut v = self.mu.clone();
        v.extend_from_slice(&self.lambda);
        v
    }

    pub fn from_flat(split: &SubspaceSplit, x: &[f64]) -> Self {
        let na = split.n_allowed();
        Self { mu: x[..na].to_vec(), lambda: x[na..].to_vec() }
    }
}

fn check_q(q: f64) -> Result<(), DynError> {
    if !(q.is_finite() && q > 0.0) {
        return Err(LieError::InvalidPenalty(q).into());
    }
    Ok(())
}

/// Ḣ = −i F_q([H, G_q H]) for the q-geodesic.
pub fn geodesic_rhs(split: &SubspaceSplit, h: &HermitianOperator, q: f64) -> Result<HermitianOperator, LieError> {
    let g = apply_gq(split, h, q)?;
    let b = HermitianOperator::from_slice(&split.bracket(h.as_slice(), g.as_slice()));
    apply_fq(split, &b, q)
}

/// (μ̇, λ̇) = components of −i[H, Λ] with H = Σ μ_j A_j, Λ = Σ λ_k B_k.
pub fn brachistochrone_rhs(split: &SubspaceSplit, state: &BrachistochroneState) -> BrachistochroneState {
    let d = split.len();
    let na = split.n_allowed();
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    x[..na].copy_from_slice(&state.mu);
    y[na..].copy_from_slice(&state.lambda);
    let b = split.bracket(&x, &y);
    BrachistochroneState { mu: b[..na].to_vec(), lambda: b[na..].to_vec() }
}

/// Max |U†U − I| for an interleaved block, without allocating.
fn unitarity_defect_slice(n: usize, u: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let (mut re, mut im) = (0.0, 0.0);
            for k in 0..n {
                let (ar, ai) = (u[2 * (k * n + i)], -u[2 * (k * n + i) + 1]);
                let (br, bi) = (u[2 * (k * n + j)], u[2 * (k * n + j) + 1]);
                re += ar * br - ai * bi;
                im += ar * bi + ai * br;
            }
            if i == j {
                re -= 1.0;
            }
            worst = worst.max((re * re + im * im).sqrt());
        }
    }
    worst
}

pub(crate) fn project_blocks(n: usize, y: &mut [f64], offsets: &[usize], threshold: f64) -> bool {
    let mut changed = false;
    let len = 2 * n * n;
    for &off in offsets {
        let block = &mut y[off..off + len];
        if unitarity_defect_slice(n, block) > threshold {
            let fixed = polar_unitary(&matrix_from_slice(n, block));
            matrix_to_slice(&fixed, block);
            changed = true;
        }
    }
    changed
}

/// Result of integrating a flow to its endpoint only.
#[derive(Debug, Clone)]
pub struct FlowEnd {
    pub unitary: CMatrix,
    /// Final coefficient block (H for geodesics, (μ, λ) for brachistochrones).
    pub coeffs: Vec<f64>,
    /// P_A-replay unitary, when requested.
    pub replay: Option<CMatrix>,
    pub rhs_evals: usize,
}

/// Options shared by the flow integrators.
#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    pub tol: f64,
    /// Number of uniform samples to record (0 records only the endpoint).
    pub samples: usize,
    pub unitarity_tol: f64,
}

impl FlowOptions {
    pub fn endpoint(tol: f64) -> Self {
        Self { tol, samples: 0, unitarity_tol: UNITARITY_TOL }
    }

    pub fn sampled(tol: f64, samples: usize) -> Self {
        Self { tol, samples, unitarity_tol: UNITARITY_TOL }
    }
}

fn grid(t_end: f64, samples: usize) -> Vec<f64> {
    let m = samples.max(2);
    (0..m).map(|i| if i + 1 == m { t_end } else { t_end * i as f64 / (m - 1) as f64 }).collect()
}

/// Geodesic state layout: [h (d), U (2n²), V (2n², optional replay)].
struct GeodesicSystem<'a> {
    split: &'a SubspaceSplit,
    q: f64,
    replay: bool,
    hbuf: Vec<Complex64>,
    abuf: Vec<f64>,
    bbuf: Vec<f64>,
    cbuf: Vec<f64>,
}

impl<'a> GeodesicSystem<'a> {
    fn new(split: &'a SubspaceSplit, q: f64, replay: bool) -> Self {
        let n = split.dim();
        let d = split.len();
        Self { split, q, replay, hbuf: vec![Complex64::new(0.0, 0.0); n * n], abuf: vec![0.0; d], bbuf: vec![0.0; d], cbuf: vec![0.0; d] }
    }

    fn state_len(&self) -> usize {
        let n = self.split.dim();
        self.split.len() + if self.replay { 4 } else { 2 } * n * n
    }

    fn rhs(&mut self, y: &[f64], dy: &mut [f64]) {
        let d = self.split.len();
        let na = self.split.n_allowed();
        let n = self.split.dim();
        let h = &y[..d];
        // Ḣ = (q − 1) F_q(−i[P_A H, P_B H])
        self.abuf.iter_mut().for_each(|x| *x = 0.0);
        self.bbuf.iter_mut().for_each(|x| *x = 0.0);
        self.abuf[..na].copy_from_slice(&h[..na]);
        self.bbuf[na..].copy_from_slice(&h[na..]);
        self.split.structure().bracket_into(&self.abuf, &self.bbuf, &mut self.cbuf);
        let s = self.q - 1.0;
        for i in 0..d {
            dy[i] = if i < na { s * self.cbuf[i] } else { s * self.cbuf[i] / self.q };
        }
        let len = 2 * n * n;
        self.split.assemble_into(h, &mut self.hbuf);
        neg_i_h_times_u(n, &self.hbuf, &y[d..d + len], &mut dy[d..d + len]);
        if self.replay {
            self.split.assemble_into(&self.abuf, &mut self.hbuf);
            neg_i_h_times_u(n, &self.hbuf, &y[d + len..d + 2 * len], &mut dy[d + len..d + 2 * len]);
        }
    }
}

fn run_system<S>(
    mut rhs: S,
    y0: &[f64],
    n: usize,
    unitary_offsets: &[usize],
    t_end: f64,
    opts: &FlowOptions,
    record: Record,
) -> Result<OdeSolution, DynError>
where
    S: FnMut(f64, &[f64], &mut [f64]),
{
    let ode = OdeOptions::with_tol(opts.tol);
    let threshold = opts.unitarity_tol / 10.0;
    let mut hook = |_t: f64, y: &mut [f64]| project_blocks(n, y, unitary_offsets, threshold);
    Ok(integrate(|t, y, dy| rhs(t, y, dy), 0.0, t_end, y0, &ode, record, Some(&mut hook))?)
}

fn geodesic_initial(split: &SubspaceSplit, h0: &[f64], replay: bool) -> Vec<f64> {
    let n = split.dim();
    let d = split.len();
    let len = 2 * n * n;
    let mut y = vec![0.0; d + if replay { 2 * len } else { len }];
    y[..d].copy_from_slice(h0);
    identity_to_slice(n, &mut y[d..d + len]);
    if replay {
        identity_to_slice(n, &mut y[d + len..]);
    }
    y
}

/// Integrates the q-geodesic from H(0) = h0 to `t_end`, returning only the
/// endpoint. With `replay`, also propagates V̇ = −i P_A(H(t)) V.
pub fn geodesic_endpoint(split: &SubspaceSplit, h0: &[f64], q: f64, t_end: f64, tol: f64, replay: bool) -> Result<FlowEnd, DynError> {
    check_q(q)?;
    check_len(split, h0)?;
    let n = split.dim();
    let d = split.len();
    let mut sys = GeodesicSystem::new(split, q, replay);
    let y0 = geodesic_initial(split, h0, replay);
    debug_assert_eq!(y0.len(), sys.state_len());
    let offsets: Vec<usize> = if replay { vec![d, d + 2 * n * n] } else { vec![d] };
    let sol = run_system(|_t, y, dy| sys.rhs(y, dy), &y0, n, &offsets, t_end, &FlowOptions::endpoint(tol), Record::Endpoint)?;
    let y = sol.last();
    let len = 2 * n * n;
    Ok(FlowEnd {
        unitary: matrix_from_slice(n, &y[d..d + len]),
        coeffs: y[..d].to_vec(),
        replay: replay.then(|| matrix_from_slice(n, &y[d + len..d + 2 * len])),
        rhs_evals: sol.stats.rhs_evals,
    })
}

/// Integrates the q-geodesic and records `opts.samples` uniform samples.
pub fn integrate_geodesic(
    split: &SubspaceSplit,
    h0: &HermitianOperator,
    q: f64,
    t_end: f64,
    opts: &FlowOptions,
) -> Result<Trajectory, DynError> {
    check_q(q)?;
    check_len(split, h0.as_slice())?;
    check_time(t_end)?;
    let n = split.dim();
    let d = split.len();
    let mut sys = GeodesicSystem::new(split, q, false);
    let y0 = geodesic_initial(split, h0.as_slice(), false);
    let record = if opts.samples == 0 { Record::Endpoint } else { Record::Grid(grid(t_end, opts.samples)) };
    let sol = run_system(|_t, y, dy| sys.rhs(y, dy), &y0, n, &[d], t_end, opts, record)?;
    let mut traj = Trajectory {
        kind: TrajectoryKind::Geodesic { q },
        times: Vec::new(),
        unitaries: Vec::new(),
        generators: Vec::new(),
        multipliers: None,
    };
    if opts.samples == 0 {
        traj.times.push(0.0);
        traj.unitaries.push(CMatrix::identity(n, n));
        traj.generators.push(h0.clone());
    }
    for (t, y) in sol.t.iter().zip(&sol.y) {
        traj.times.push(*t);
        traj.generators.push(HermitianOperator::from_slice(&y[..d]));
        traj.unitaries.push(matrix_from_slice(n, &y[d..]));
    }
    traj.unitaries[0] = CMatrix::identity(n, n);
    Ok(traj)
}

/// U(T) under the P_A-projected control of a q-geodesic: the "replayed" gate.
pub fn replay_allowed(split: &SubspaceSplit, h0: &[f64], q: f64, t_end: f64, tol: f64) -> Result<CMatrix, DynError> {
    Ok(geodesic_endpoint(split, h0, q, t_end, tol, true)?.replay.expect("replay requested"))
}

fn brach_initial(split: &SubspaceSplit, x0: &[f64]) -> Vec<f64> {
    let n = split.dim();
    let d = split.len();
    let mut y = vec![0.0; d + 2 * n * n];
    y[..d].copy_from_slice(x0);
    identity_to_slice(n, &mut y[d..]);
    y
}

/// State layout [μ (d_A), λ (d_B), U (2n²)].
fn brach_rhs_fn(split: &SubspaceSplit) -> impl FnMut(f64, &[f64], &mut [f64]) + '_ {
    let n = split.dim();
    let d = split.len();
    let na = split.n_allowed();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut c = vec![0.0; d];
    let mut hbuf = vec![Complex64::new(0.0, 0.0); n * n];
    move |_t, y, dy| {
        a[..na].copy_from_slice(&y[..na]);
        b[na..].copy_from_slice(&y[na..d]);
        split.structure().bracket_into(&a, &b, &mut c);
        dy[..d].copy_from_slice(&c);
        split.assemble_into(&a, &mut hbuf);
        neg_i_h_times_u(n, &hbuf, &y[d..], &mut dy[d..]);
    }
}

/// Integrates the brachistochrone flow from x0 = (μ⁰, λ⁰), endpoint only.
pub fn brachistochrone_endpoint(split: &SubspaceSplit, x0: &[f64], t_end: f64, tol: f64) -> Result<FlowEnd, DynError> {
    check_len(split, x0)?;
    let n = split.dim();
    let d = split.len();
    let y0 = brach_initial(split, x0);
    let sol = run_system(brach_rhs_fn(split), &y0, n, &[d], t_end, &FlowOptions::endpoint(tol), Record::Endpoint)?;
    let y = sol.last();
    Ok(FlowEnd { unitary: matrix_from_slice(n, &y[d..]), coeffs: y[..d].to_vec(), replay: None, rhs_evals: sol.stats.rhs_evals })
}

/// Integrates the brachistochrone flow with uniform samples.
pub fn integrate_brachistochrone(
    split: &SubspaceSplit,
    state: &BrachistochroneState,
    t_end: f64,
    opts: &FlowOptions,
) -> Result<Trajectory, DynError> {
    let x0 = state.as_flat();
    check_len(split, &x0)?;
    check_time(t_end)?;
    let n = split.dim();
    let d = split.len();
    let na = split.n_allowed();
    let y0 = brach_initial(split, &x0);
    let samples = opts.samples.max(2);
    let sol = run_system(brach_rhs_fn(split), &y0, n, &[d], t_end, opts, Record::Grid(grid(t_end, samples)))?;
    let mut traj = Trajectory {
        kind: TrajectoryKind::Brachistochrone,
        times: sol.t.clone(),
        unitaries: Vec::new(),
        generators: Vec::new(),
        multipliers: Some(Vec::new()),
    };
    for y in &sol.y {
        let mut h = vec![0.0; d];
        h[..na].copy_from_slice(&y[..na]);
        traj.generators.push(HermitianOperator::from_slice(&h));
        traj.multipliers.as_mut().unwrap().push(y[na..d].to_vec());
        traj.unitaries.push(matrix_from_slice(n, &y[d..]));
    }
    traj.unitaries[0] = CMatrix::identity(n, n);
    Ok(traj)
}

/// Integrates U̇ = −iH(t)U with H(t) supplied as coefficients by `h_of_t`.
pub fn integrate_schrodinger<F>(split: &SubspaceSplit, mut h_of_t: F, t_end: f64, opts: &FlowOptions) -> Result<Trajectory, DynError>
where
    F: FnMut(f64, &mut [f64]),
{
    check_time(t_end)?;
    let n = split.dim();
    let d = split.len();
    let mut coeffs = vec![0.0; d];
    let mut hbuf = vec![Complex64::new(0.0, 0.0); n * n];
    let mut y0 = vec![0.0; 2 * n * n];
    identity_to_slice(n, &mut y0);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        h_of_t(t, &mut coeffs);
        split.assemble_into(&coeffs, &mut hbuf);
        neg_i_h_times_u(n, &hbuf, y, dy);
    };
    let record = if opts.samples == 0 { Record::Steps } else { Record::Grid(grid(t_end, opts.samples)) };
    let sol = run_system(rhs, &y0, n, &[0], t_end, opts, record)?;
    let mut traj = Trajectory {
        kind: TrajectoryKind::Replay,
        times: sol.t.clone(),
        unitaries: sol.y.iter().map(|y| matrix_from_slice(n, y)).collect(),
        generators: Vec::with_capacity(sol.t.len()),
        multipliers: None,
    };
    let mut c = vec![0.0; d];
    for &t in &sol.t {
        h_of_t(t, &mut c);
        traj.generators.push(HermitianOperator::from_slice(&c));
    }
    traj.unitaries[0] = CMatrix::identity(n, n);
    Ok(traj)
}

/// Ordered product of segment exponentials for piecewise-constant controls.
pub fn propagate_piecewise(split: &SubspaceSplit, controls: &[Vec<f64>], dt: f64) -> CMatrix {
    let n = split.dim();
    let mut u = CMatrix::identity(n, n);
    for c in controls {
        u = expm_hermitian(&split.basis().synthesize(c), dt) * u;
    }
    u
}

fn check_len(split: &SubspaceSplit, x: &[f64]) -> Result<(), DynError> {
    if x.len() != split.len() {
        return Err(DynError::Invalid(format!("expected {} coefficients, got {}", split.len(), x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(DynError::Invalid("initial data is not finite".into()));
    }
    Ok(())
}

fn check_time(t: f64) -> Result<(), DynError> {
    if !(t.is_finite() && t > 0.0) {
        return Err(DynError::Invalid(format!("duration must be positive, got {t}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::matrix::{commutator, frobenius_distance, I};
    use crate::liealg::{preset, project, q_inner, Subspace};
    use proptest::prelude::*;

    fn heis() -> SubspaceSplit {
        preset("two_qubit_heisenberg").unwrap()
    }

    fn pseudo(d: usize, seed: u64, scale: f64) -> Vec<f64> {
        let mut s = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        (0..d)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                scale * (((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0)
            })
            .collect()
    }

    #[test]
    fn geodesic_rhs_vanishes_at_q_one_and_on_allowed() {
        let s = heis();
        let h = HermitianOperator::from_slice(&pseudo(15, 1, 2.0));
        assert!(geodesic_rhs(&s, &h, 1.0).unwrap().norm() < 1e-14);
        let a = project(&s, &h, Subspace::Allowed);
        assert!(geodesic_rhs(&s, &a, 7.0).unwrap().norm() < 1e-14);
    }

    #[test]
    fn geodesic_rhs_matches_dense_commutator() {
        let s = heis();
        let q = 7.0;
        let h = HermitianOperator::from_slice(&pseudo(15, 2, 1.5));
        let hm = s.matrix(&h);
        let gm = s.matrix(&apply_gq(&s, &h, q).unwrap());
        let dense = commutator(&hm, &gm) * Complex64::new(0.0, -1.0);
        let expect = apply_fq(&s, &s.decompose(&dense), q).unwrap();
        let got = geodesic_rhs(&s, &h, q).unwrap();
        assert!((&got - &expect).norm() < 1e-12);
        // the fast in-place form agrees
        let mut sys = GeodesicSystem::new(&s, q, false);
        let y = geodesic_initial(&s, h.as_slice(), false);
        let mut dy = vec![0.0; y.len()];
        sys.rhs(&y, &mut dy);
        for i in 0..15 {
            assert!((dy[i] - got.coeffs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn brachistochrone_rhs_properties() {
        let s = heis();
        let zero = BrachistochroneState { mu: pseudo(7, 3, 1.0), lambda: vec![0.0; 8] };
        let r = brachistochrone_rhs(&s, &zero);
        assert!(r.mu.iter().chain(&r.lambda).all(|v| *v == 0.0));
        for seed in 0..20 {
            let st = BrachistochroneState { mu: pseudo(7, 10 + seed, 2.0), lambda: pseudo(8, 50 + seed, 2.0) };
            let r = brachistochrone_rhs(&s, &st);
            let dot_mu: f64 = st.mu.iter().zip(&r.mu).map(|(a, b)| a * b).sum();
            let dot_l: f64 = st.lambda.iter().zip(&r.lambda).map(|(a, b)| a * b).sum();
            assert!(dot_mu.abs() < 1e-12 && dot_l.abs() < 1e-12);
            // dense oracle: Ḟ = −i[H, Λ] projected on A and B
            let mut hv = vec![0.0; 15];
            hv[..7].copy_from_slice(&st.mu);
            let mut lv = vec![0.0; 15];
            lv[7..].copy_from_slice(&st.lambda);
            let dense = commutator(&s.basis().synthesize(&hv), &s.basis().synthesize(&lv)) * Complex64::new(0.0, -1.0);
            let c = s.basis().decompose(&dense);
            for j in 0..7 {
                assert!((c[j] - r.mu[j]).abs() < 1e-12);
            }
            for k in 0..8 {
                assert!((c[7 + k] - r.lambda[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_hamiltonian_flows() {
        let s = heis();
        let h = pseudo(15, 4, 1.0);
        let exact = expm_hermitian(&s.basis().synthesize(&h), 1.0);
        let end = geodesic_endpoint(&s, &h, 1.0, 1.0, 1e-12, false).unwrap();
        assert!(frobenius_distance(&end.unitary, &exact) < 1e-10);
        let mut mu = h.clone();
        mu[7..].iter_mut().for_each(|x| *x = 0.0);
        let exact_a = expm_hermitian(&s.basis().synthesize(&mu), 1.0);
        let b = brachistochrone_endpoint(&s, &mu, 1.0, 1e-12).unwrap();
        assert!(frobenius_distance(&b.unitary, &exact_a) < 1e-10);
        let tr = integrate_schrodinger(&s, |_t, c| c.copy_from_slice(&h), 1.0, &FlowOptions::sampled(1e-12, 5)).unwrap();
        assert!(frobenius_distance(tr.final_unitary(), &exact) < 1e-10);
        let zero = integrate_schrodinger(&s, |_t, c| c.iter_mut().for_each(|x| *x = 0.0), 3.0, &FlowOptions::endpoint(1e-12)).unwrap();
        assert!(frobenius_distance(zero.final_unitary(), &CMatrix::identity(4, 4)) < 1e-15);
    }

    #[test]
    fn piecewise_constant_matches_product_of_exponentials() {
        let s = heis();
        let segs: Vec<Vec<f64>> = (0..4).map(|k| pseudo(15, 20 + k, 1.0)).collect();
        let dt = 0.3;
        let tr = integrate_schrodinger(
            &s,
            |t, c| {
                let k = ((t / dt) as usize).min(3);
                c.copy_from_slice(&segs[k]);
            },
            1.2,
            &FlowOptions::endpoint(1e-12),
        )
        .unwrap();
        let exact = propagate_piecewise(&s, &segs, dt);
        // adaptive stepping resolves the jumps to a few ulps of the tolerance
        assert!(frobenius_distance(tr.final_unitary(), &exact) < 1e-8);
    }

    #[test]
    fn geodesic_conservation_laws() {
        let s = heis();
        let q = 4.0;
        let h0 = HermitianOperator::from_slice(&pseudo(15, 9, 1.2));
        let tr = integrate_geodesic(&s, &h0, q, 1.0, &FlowOptions::sampled(1e-12, 64)).unwrap();
        let norms: Vec<f64> = tr.generators.iter().map(|h| q_inner(&s, h, h, q).unwrap()).collect();
        assert!(Trajectory::relative_drift(&norms) < 1e-8);
        let g0 = s.matrix(&apply_gq(&s, &h0, q).unwrap());
        for (u, h) in tr.unitaries.iter().zip(&tr.generators) {
            let g = s.matrix(&apply_gq(&s, h, q).unwrap());
            assert!(frobenius_distance(&(u.adjoint() * g * u), &g0) < 1e-7);
        }
        assert!(tr.max_unitarity_error() < 1e-10);
        assert_eq!(tr.unitaries[0], CMatrix::identity(4, 4));
    }

    #[test]
    fn allowed_initial_data_stays_constant() {
        let s = heis();
        let mut h = pseudo(15, 7, 1.0);
        h[7..].iter_mut().for_each(|x| *x = 0.0);
        let tr = integrate_geodesic(&s, &HermitianOperator::from_slice(&h), 30.0, 1.0, &FlowOptions::sampled(1e-12, 8)).unwrap();
        for g in &tr.generators {
            assert!((g.as_slice().iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)) < 1e-14);
        }
    }

    #[test]
    fn replay_at_q_one_uses_allowed_part() {
        let s = heis();
        let h = pseudo(15, 5, 1.0);
        let v = replay_allowed(&s, &h, 1.0, 1.0, 1e-12).unwrap();
        let mut a = h.clone();
        a[7..].iter_mut().for_each(|x| *x = 0.0);
        assert!(frobenius_distance(&v, &expm_hermitian(&s.basis().synthesize(&a), 1.0)) < 1e-10);
    }

    #[test]
    fn brachistochrone_conservation() {
        let s = heis();
        let st = BrachistochroneState { mu: pseudo(7, 31, 2.0), lambda: pseudo(8, 32, 2.0) };
        let tr = integrate_brachistochrone(&s, &st, 1.0, &FlowOptions::sampled(1e-12, 33)).unwrap();
        let tr2: Vec<f64> = tr.generators.iter().map(|h| h.norm().powi(2)).collect();
        let ln: Vec<f64> = tr.multipliers.as_ref().unwrap().iter().map(|l| l.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        assert!(Trajectory::relative_drift(&tr2) < 1e-8);
        assert!(Trajectory::relative_drift(&ln) < 1e-8);
        // Tr(H²) computed from the dense matrix agrees
        let hm = s.matrix(&tr.generators[10]);
        assert!(((&hm * &hm).trace().re - tr2[10]).abs() < 1e-10);
        let _ = I;
    }

    #[test]
    fn rejects_bad_input() {
        let s = heis();
        assert!(geodesic_endpoint(&s, &[0.0; 14], 1.0, 1.0, 1e-10, false).is_err());
        assert!(geodesic_endpoint(&s, &[0.0; 15], 0.0, 1.0, 1e-10, false).is_err());
        assert!(integrate_geodesic(&s, &HermitianOperator::zeros(15), 2.0, -1.0, &FlowOptions::endpoint(1e-10)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn geodesic_q_norm_conserved(v in proptest::collection::vec(-1.5f64..1.5, 15), q in 1.0f64..50.0) {
            let s = heis();
            let h0 = HermitianOperator::from_slice(&v);
            let tr = integrate_geodesic(&s, &h0, q, 1.0, &FlowOptions::sampled(1e-12, 16)).unwrap();
            let norms: Vec<f64> = tr.generators.iter().map(|h| q_inner(&s, h, h, q).unwrap()).collect();
            prop_assert!(Trajectory::relative_drift(&norms) < 1e-8);
        }
    }
}
