//! Shooting solver for the two-point boundary-value problems U(T; x0) = target
//! of the geodesic and brachistochrone flows.

use crate::dynamics::{brachistochrone_endpoint, geodesic_endpoint, DynError, FlowEnd};
use crate::liealg::matrix::{from_spectrum, unitarity_error, unitary_eigen, CMatrix};
use crate::liealg::SubspaceSplit;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Geodesic { q: f64 },
    Brachistochrone,
}

#[derive(Debug, Clone)]
pub struct ShootingProblem<'a> {
    pub family: Family,
    pub split: &'a SubspaceSplit,
    /// Sector-adjusted target α·U_tg.
    pub target: CMatrix,
    pub horizon: f64,
    /// Integrator tolerance (rtol = atol).
    pub tol: f64,
}

impl<'a> ShootingProblem<'a> {
    pub fn new(family: Family, split: &'a SubspaceSplit, target: CMatrix, tol: f64) -> Result<Self, ShootError> {
        let err = unitarity_error(&target);
        if err > 1e-10 {
            return Err(ShootError::Invalid(format!("target is not unitary (defect {err:.2e})")));
        }
        if target.nrows() != split.dim() {
            return Err(ShootError::Invalid("target dimension does not match the split".into()));
        }
        Ok(Self { family, split, target, horizon: 1.0, tol })
    }

    /// Integrates the flow from x0 to the horizon.
    pub fn flow(&self, x0: &[f64]) -> Result<FlowEnd, DynError> {
        match self.family {
            Family::Geodesic { q } => geodesic_endpoint(self.split, x0, q, self.horizon, self.tol, false),
            Family::Brachistochrone => brachistochrone_endpoint(self.split, x0, self.horizon, self.tol),
        }
    }
}

#[derive(Debug, Error)]
pub enum ShootError {
    #[error("shooting did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64, last: Vec<f64> },
    #[error("Jacobian is singular (condition number {cond:.3e})")]
    SingularJacobian { cond: f64, last: Vec<f64> },
    #[error("residual evaluation failed while probing coordinate {index}: {source}")]
    Probe { index: usize, source: DynError },
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error("invalid shooting problem: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct ShootOptions {
    pub max_iters: usize,
    pub residual_tol: f64,
    pub step_tol: f64,
    /// Relative finite-difference step (floor and scale).
    pub fd_step: f64,
    /// Backtracking factors 1, 1/2, …, 1/2^damping_levels.
    pub damping_levels: u32,
    pub armijo: f64,
    /// Newton rejections after which only Levenberg–Marquardt steps are taken.
    pub lm_switch: usize,
    pub singular_cond: f64,
    /// Newton steps longer than this are shortened to it.
    pub max_step: Option<f64>,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            residual_tol: 1e-12,
            step_tol: 1e-14,
            fd_step: 1e-6,
            damping_levels: 8,
            armijo: 1e-4,
            lm_switch: 2,
            singular_cond: 1e14,
            max_step: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShootingResult {
    pub initial_data: Vec<f64>,
    pub endpoint: CMatrix,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub rhs_evals: usize,
}

/// Mismatch coordinates of an endpoint: the basis coefficients of
/// −i·log(M) with M = U†·target stripped of its nearest n-th root of unity.
/// Near the branch cut the anti-Hermitian part (M − M†)/(2i) is used instead.
pub fn endpoint_residual(split: &SubspaceSplit, u: &CMatrix, target: &CMatrix) -> Vec<f64> {
    let n = u.nrows();
    let mut m = u.adjoint() * target;
    let k = (n as f64 * m.trace().arg() / (2.0 * PI)).round();
    m *= Complex64::from_polar(1.0, -2.0 * PI * k / n as f64);
    let (phases, v) = unitary_eigen(&m);
    if phases.iter().any(|p| p.abs() >= PI - 0.1) {
        let h = (&m - m.adjoint()) * Complex64::new(0.0, -0.5);
        return split.basis().decompose(&h);
    }
    // Schur vectors of a normal matrix are eigenvectors
    split.basis().decompose(&from_spectrum(&v, &phases))
}

pub fn residual(problem: &ShootingProblem, x0: &[f64]) -> Result<Vec<f64>, ShootError> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(ShootError::Invalid("initial data is not finite".into()));
    }
    let end = problem.flow(x0)?;
    Ok(endpoint_residual(problem.split, &end.unitary, &problem.target))
}

/// Central finite-difference Jacobian with h_i = max(h, h·|x_i|).
pub fn jacobian(problem: &ShootingProblem, x0: &[f64], fd_step: f64) -> Result<DMatrix<f64>, ShootError> {
    let d = x0.len();
    let cols: Vec<Result<Vec<f64>, ShootError>> = (0..d)
        .into_par_iter()
        .map(|i| {
            let h = fd_step.max(fd_step * x0[i].abs());
            let mut xp = x0.to_vec();
            let mut xm = x0.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let rp = residual(problem, &xp).map_err(|e| probe_error(i, e))?;
            let rm = residual(problem, &xm).map_err(|e| probe_error(i, e))?;
            Ok(rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        })
        .collect();
    let mut j = DMatrix::zeros(d, d);
    for (i, c) in cols.into_iter().enumerate() {
        let c = c?;
        for r in 0..d {
            j[(r, i)] = c[r];
        }
    }
    Ok(j)
}

fn probe_error(index: usize, e: ShootError) -> ShootError {
    match e {
        ShootError::Dyn(source) => ShootError::Probe { index, source },
        other => other,
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn condition(svd: &nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let s = &svd.singular_values;
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Damped Newton with Armijo backtracking, falling back to
/// Levenberg–Marquardt after rejected Newton steps.
pub fn shoot(problem: &ShootingProblem, guess: &[f64], opts: &ShootOptions) -> Result<ShootingResult, ShootError> {
    let d = problem.split.len();
    if guess.len() != d {
        return Err(ShootError::Invalid(format!("guess has {} entries, expected {d}", guess.len())));
    }
    let mut x = guess.to_vec();
    let mut end = problem.flow(&x)?;
    let mut rhs_evals = end.rhs_evals;
    let mut r = endpoint_residual(problem.split, &end.unitary, &problem.target);
    let mut rn = norm(&r);
    let mut rejections = 0usize;
    let mut lm_nu: Option<f64> = None;
    let mut iterations = 0usize;

    let done = |x: Vec<f64>, end: FlowEnd, rn: f64, it: usize, evals: usize| ShootingResult {
        initial_data: x,
        endpoint: end.unitary,
        residual_norm: rn,
        iterations: it,
        converged: true,
        rhs_evals: evals,
    };

    while iterations < opts.max_iters {
        if rn < opts.residual_tol {
            return Ok(done(x, end, rn, iterations, rhs_evals));
        }
        iterations += 1;
        let j = jacobian(problem, &x, opts.fd_step)?;
        rhs_evals += 2 * d * end.rhs_evals.max(1);
        let rv = DVector::from_column_slice(&r);
        let use_lm = rejections >= opts.lm_switch;

        let mut accepted = false;
        let mut last_step = f64::INFINITY;
        if !use_lm {
            let svd = j.clone().svd(true, true);
            let cond = condition(&svd);
            if !cond.is_finite() || cond > opts.singular_cond {
                return Err(ShootError::SingularJacobian { cond, last: x });
            }
            let mut step = svd.solve(&(-&rv), 0.0).map_err(|e| ShootError::Invalid(e.to_string()))?;
            if let Some(cap) = opts.max_step {
                let len = step.norm();
                if len > cap {
                    step *= cap / len;
                }
            }
            log::debug!("newton iter {iterations}: residual {rn:.3e}, cond {cond:.3e}, step {:.3e}", step.norm());
            let mut alpha = 1.0;
            for _ in 0..=opts.damping_levels {
                let xt: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + alpha * s).collect();
                if let Ok(e) = problem.flow(&xt) {
                    rhs_evals += e.rhs_evals;
                    let rt = endpoint_residual(problem.split, &e.unitary, &problem.target);
                    let rtn = norm(&rt);
                    if rtn * rtn <= (1.0 - 2.0 * opts.armijo * alpha) * rn * rn {
                        last_step = alpha * step.norm();
                        x = xt;
                        end = e;
                        r = rt;
                        rn = rtn;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                rejections += 1;
            }
        }
        if !accepted {
            // Levenberg–Marquardt: (JᵀJ + νI) s = −Jᵀr
            let jtj = j.transpose() * &j;
            let g = j.transpose() * &rv;
            let scale = jtj.diagonal().max().max(1e-300);
            let mut nu = lm_nu.unwrap_or(1e-3 * scale);
            for _ in 0..12 {
                let mut a = jtj.clone();
                for i in 0..d {
                    a[(i, i)] += nu;
                }
                if let Some(ch) = a.cholesky() {
                    let step = ch.solve(&(-&g));
                    let xt: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
                    if let Ok(e) = problem.flow(&xt) {
                        rhs_evals += e.rhs_evals;
                        let rt = endpoint_residual(problem.split, &e.unitary, &problem.target);
                        let rtn = norm(&rt);
                        if rtn < rn {
                            last_step = step.norm();
                            x = xt;
                            end = e;
                            r = rt;
                            rn = rtn;
                            accepted = true;
                            nu = (nu / 10.0).max(1e-12 * scale);
                            break;
                        }
                    }
                }
                nu *= 10.0;
            }
            lm_nu = Some(nu);
        }
        if rn < opts.residual_tol {
            return Ok(done(x, end, rn, iterations, rhs_evals));
        }
        if !accepted || last_step < opts.step_tol {
            break;
        }
    }
    Err(ShootError::NonConvergence { iterations, residual: rn, last: x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::matrix::{expm_hermitian, frobenius_distance};
    use crate::liealg::preset;

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
    fn exact_seed_has_tiny_residual_and_converges_immediately() {
        let s = preset("two_qubit_heisenberg").unwrap();
        let h = pseudo(15, 1, 1.0);
        let target = expm_hermitian(&s.basis().synthesize(&h), 1.0);
        let p = ShootingProblem::new(Family::Geodesic { q: 1.0 }, &s, target, 1e-12).unwrap();
        assert!(norm(&residual(&p, &h).unwrap()) < 1e-10);
        let res = shoot(&p, &h, &ShootOptions::default()).unwrap();
        assert!(res.converged && res.iterations <= 2);
    }

    #[test]
    fn zero_guess_residual_is_log_of_target() {
        let s = preset("two_qubit_heisenberg").unwrap();
        let h = pseudo(15, 2, 0.5);
        let target = expm_hermitian(&s.basis().synthesize(&h), 1.0);
        let p = ShootingProblem::new(Family::Geodesic { q: 3.0 }, &s, target, 1e-12).unwrap();
        let r = residual(&p, &[0.0; 15]).unwrap();
        // −i log(target) = −H
        for (a, b) in r.iter().zip(&h) {
            assert!((a + b).abs() < 1e-10);
        }
    }

    #[test]
    fn residual_is_linear_in_small_perturbations() {
        let s = preset("two_qubit_heisenberg").unwrap();
        let h = pseudo(15, 3, 1.0);
        let target = expm_hermitian(&s.basis().synthesize(&h), 1.0);
        let p = ShootingProblem::new(Family::Geodesic { q: 1.0 }, &s, target, 1e-13).unwrap();
        let dir = pseudo(15, 4, 1.0);
        let at = |eps: f64| {
            let x: Vec<f64> = h.iter().zip(&dir).map(|(a, b)| a + eps * b).collect();
            norm(&residual(&p, &x).unwrap())
        };
        let (a, b) = (at(1e-3), at(1e-4));
        assert!((a / b - 10.0).abs() < 0.05, "{a} {b}");
    }

    #[test]
    fn jacobian_matches_analytic_su2_derivative() {
        // brachistochrone family with λ = 0 on SU(2): U(1) = exp(−iH(μ))
        let s = preset("single_qubit_xy").unwrap();
        let mu = [0.4, -0.3];
        let target = expm_hermitian(&s.basis().synthesize(&[0.1, 0.2, 0.0]), 1.0);
        let p = ShootingProblem::new(Family::Brachistochrone, &s, target.clone(), 1e-13).unwrap();
        let x0 = [mu[0], mu[1], 0.0];
        let j = jacobian(&p, &x0, 1e-6).unwrap();
        // oracle: differentiate the closed-form exponential with the same residual map
        for c in 0..2 {
            let h = 1e-5;
            let mut xp = [mu[0], mu[1], 0.0];
            let mut xm = xp;
            xp[c] += h;
            xm[c] -= h;
            let up = expm_hermitian(&s.basis().synthesize(&xp), 1.0);
            let um = expm_hermitian(&s.basis().synthesize(&xm), 1.0);
            let rp = endpoint_residual(&s, &up, &target);
            let rm = endpoint_residual(&s, &um, &target);
            for r in 0..3 {
                let col = (rp[r] - rm[r]) / (2.0 * h);
                assert!((j[(r, c)] - col).abs() < 1e-6, "{} vs {}", j[(r, c)], col);
            }
        }
        let j2 = jacobian(&p, &x0, 1e-6).unwrap();
        assert_eq!(j, j2);
    }

    #[test]
    fn central_difference_error_is_third_order() {
        let s = preset("two_qubit_heisenberg").unwrap();
        let h0 = pseudo(15, 5, 0.8);
        let target = expm_hermitian(&s.basis().synthesize(&pseudo(15, 6, 0.8)), 1.0);
        let p = ShootingProblem::new(Family::Geodesic { q: 2.0 }, &s, target, 1e-13).unwrap();
        let j = jacobian(&p, &h0, 1e-6).unwrap();
        let i = 4;
        for h in [1e-2, 5e-3] {
            let mut xp = h0.clone();
            let mut xm = h0.clone();
            xp[i] += h;
            xm[i] -= h;
            let rp = residual(&p, &xp).unwrap();
            let rm = residual(&p, &xm).unwrap();
            let err: f64 = (0..15).map(|r| (rp[r] - rm[r] - 2.0 * h * j[(r, i)]).powi(2)).sum::<f64>().sqrt();
            assert!(err < 50.0 * h * h * h, "h={h} err={err}");
        }
    }

    #[test]
    fn newton_converges_locally_and_quadratically() {
        let s = preset("two_qubit_heisenberg").unwrap();
        let q = 3.0;
        let h_true = pseudo(15, 7, 1.0);
        let end = geodesic_endpoint(&s, &h_true, q, 1.0, 1e-13, false).unwrap();
        let p = ShootingProblem::new(Family::Geodesic { q }, &s, end.unitary, 1e-13).unwrap();
        let guess: Vec<f64> = h_true.iter().zip(pseudo(15, 8, 1e-3)).map(|(a, b)| a + b).collect();
        let res = shoot(&p, &guess, &ShootOptions::default()).unwrap();
        assert!(res.iterations <= 6, "{} iterations", res.iterations);
        let dist = norm(&res.initial_data.iter().zip(&h_true).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(dist < 1e-9);
        assert!(frobenius_distance(&res.endpoint, &p.target) < 1e-10);
    }

    #[test]
    fn deterministic_results() {
        let s = preset("single_qubit_xy").unwrap();
        let target = expm_hermitian(&s.basis().synthesize(&[0.0, 0.0, 1.2]), 1.0);
        let p = ShootingProblem::new(Family::Brachistochrone, &s, target, 1e-12).unwrap();
        let a = shoot(&p, &[1.0, 0.5, 1.0], &ShootOptions::default());
        let b = shoot(&p, &[1.0, 0.5, 1.0], &ShootOptions::default());
        match (a, b) {
            (Ok(a), Ok(b)) => assert_eq!(a.initial_data, b.initial_data),
            (Err(a), Err(b)) => assert_eq!(a.to_string(), b.to_string()),
            _ => panic!("nondeterministic outcome"),
        }
    }
}
