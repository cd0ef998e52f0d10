//! Adaptive Dormand–Prince 5(4) integrator with continuous (dense) output.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("maximum number of steps ({steps}) reached at t = {t}")]
    MaxSteps { steps: usize, t: f64 },
    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, ..Self::default() }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-12, h0: None, h_max: f64::INFINITY, max_steps: 200_000 }
    }
}

/// What the integrator keeps besides the endpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Endpoint,
    /// Every accepted step.
    Steps,
    /// The solution interpolated at the given increasing times.
    Grid(Vec<f64>),
    /// Full continuous extension, queryable with [`OdeSolution::eval`].
    Dense,
}

#[derive(Debug, Clone, Default)]
pub struct OdeStats {
    pub rhs_evals: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub projections: usize,
}

#[derive(Debug, Clone)]
struct DenseSegment {
    t0: f64,
    h: f64,
    // five coefficient vectors, concatenated
    coeffs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    /// Recorded times (endpoint only, steps, or the requested grid).
    pub t: Vec<f64>,
    /// States at `t`.
    pub y: Vec<Vec<f64>>,
    pub stats: OdeStats,
    dim: usize,
    segments: Vec<DenseSegment>,
}

impl OdeSolution {
    pub fn last(&self) -> &[f64] {
        self.y.last().expect("solution holds at least the endpoint")
    }

    pub fn has_dense(&self) -> bool {
        !self.segments.is_empty()
    }

    /// Continuous extension at `t` (requires [`Record::Dense`]).
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        assert!(self.has_dense(), "dense output was not recorded");
        let i = match self.segments.binary_search_by(|s| s.t0.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        let seg = &self.segments[i.min(self.segments.len() - 1)];
        interpolate(self.dim, &seg.coeffs, (t - seg.t0) / seg.h, out);
    }
}

fn interpolate(n: usize, r: &[f64], theta: f64, out: &mut [f64]) {
    let th1 = 1.0 - theta;
    for i in 0..n {
        out[i] = r[i] + theta * (r[n + i] + th1 * (r[2 * n + i] + theta * (r[3 * n + i] + th1 * r[4 * n + i])));
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// Integrates y' = f(t, y) from `t0` to `t1` (t1 > t0).
///
/// `project`, when given, is called on every accepted state and may modify it
/// in place (returning `true` if it did); the first stage of the next step is
/// then re-evaluated instead of reused.
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    opts: &OdeOptions,
    record: Record,
    mut project: Option<&mut dyn FnMut(f64, &mut [f64]) -> bool>,
) -> Result<OdeSolution, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut out_t = Vec::new();
    let mut out_y = Vec::new();
    let mut segments = Vec::new();
    let (grid, mut grid_pos) = match &record {
        Record::Grid(g) => (g.clone(), 0usize),
        _ => (Vec::new(), 0usize),
    };
    let keep_steps = matches!(record, Record::Steps);
    let keep_dense = matches!(record, Record::Dense);

    if keep_steps {
        out_t.push(t0);
        out_y.push(y0.to_vec());
    }
    while grid_pos < grid.len() && grid[grid_pos] <= t0 {
        out_t.push(grid[grid_pos]);
        out_y.push(y0.to_vec());
        grid_pos += 1;
    }
    if t1 <= t0 {
        if !keep_steps && grid.is_empty() {
            out_t.push(t0);
            out_y.push(y0.to_vec());
        }
        return Ok(OdeSolution { t: out_t, y: out_y, stats, dim: n, segments });
    }

    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut cont = vec![0.0; 5 * n];

    f(t0, &y, &mut k1);
    stats.rhs_evals += 1;
    let span = t1 - t0;
    let mut h = match opts.h0 {
        Some(h) => h,
        None => {
            let h = initial_step(&mut f, t0, &y, &k1, span, opts, &mut tmp, &mut k2);
            stats.rhs_evals += 1;
            h
        }
    }
    .min(opts.h_max)
    .min(span);
    let mut t = t0;
    let mut facold: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;

    loop {
        if steps >= opts.max_steps {
            return Err(OdeError::MaxSteps { steps, t });
        }
        let last = t + 1.01 * h >= t1;
        if last {
            h = t1 - t;
        }
        if h.abs() < 1e-14 * t.abs().max(1.0) || h <= 0.0 {
            return Err(OdeError::StepSizeUnderflow { t });
        }
        steps += 1;

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t1 } else { t + h };
        f(t_new, &tmp, &mut k6);
        for i in 0..n {
            y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t_new, &y_new, &mut k7);
        stats.rhs_evals += 6;

        let mut err = 0.0;
        let mut finite = true;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sk) * (e / sk);
            finite &= y_new[i].is_finite();
        }
        if !finite || !err.is_finite() {
            if h < 1e-10 * span {
                return Err(OdeError::NonFinite { t });
            }
            h *= 0.1;
            stats.rejected += 1;
            last_rejected = true;
            continue;
        }
        err = (err / n as f64).sqrt();

        let fac11 = err.powf(0.2 - BETA * 0.75);
        if err <= 1.0 {
            let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = (h / fac).min(opts.h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            facold = err.max(1e-4);
            stats.accepted += 1;

            if keep_dense || grid_pos < grid.len() {
                for i in 0..n {
                    let ydiff = y_new[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    cont[i] = y[i];
                    cont[n + i] = ydiff;
                    cont[2 * n + i] = bspl;
                    cont[3 * n + i] = ydiff - h * k7[i] - bspl;
                    cont[4 * n + i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                while grid_pos < grid.len() && grid[grid_pos] <= t_new {
                    let mut v = vec![0.0; n];
                    if grid[grid_pos] >= t_new {
                        v.copy_from_slice(&y_new);
                    } else {
                        interpolate(n, &cont, (grid[grid_pos] - t) / h, &mut v);
                    }
                    out_t.push(grid[grid_pos]);
                    out_y.push(v);
                    grid_pos += 1;
                }
                if keep_dense {
                    segments.push(DenseSegment { t0: t, h, coeffs: cont.clone() });
                }
            }

            let projected = match project.as_mut() {
                Some(p) => p(t_new, &mut y_new),
                None => false,
            };
            std::mem::swap(&mut y, &mut y_new);
            if projected {
                stats.projections += 1;
                f(t_new, &y, &mut k1);
                stats.rhs_evals += 1;
            } else {
                std::mem::swap(&mut k1, &mut k7);
            }
            t = t_new;
            if keep_steps {
                out_t.push(t);
                out_y.push(y.clone());
            }
            if last {
                break;
            }
            h = h_new;
            last_rejected = false;
        } else {
            h /= (fac11 / SAFE).min(1.0 / FAC_MIN);
            stats.rejected += 1;
            last_rejected = true;
        }
    }

    if !keep_steps && grid.is_empty() {
        out_t.push(t);
        out_y.push(y);
    } else {
        while grid_pos < grid.len() {
            out_t.push(grid[grid_pos]);
            out_y.push(y.clone());
            grid_pos += 1;
        }
    }
    Ok(OdeSolution { t: out_t, y: out_y, stats, dim: n, segments })
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F>(f: &mut F, t0: f64, y: &[f64], k1: &[f64], span: f64, opts: &OdeOptions, y1: &mut [f64], f1: &mut [f64]) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len() as f64;
    let sk = |v: f64| opts.atol + opts.rtol * v.abs();
    let dnf = (y.iter().zip(k1).map(|(yi, ki)| (ki / sk(*yi)).powi(2)).sum::<f64>() / n).sqrt();
    let dny = (y.iter().map(|yi| (yi / sk(*yi)).powi(2)).sum::<f64>() / n).sqrt();
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * dny / dnf };
    h = h.min(span).min(opts.h_max);
    for i in 0..y.len() {
        y1[i] = y[i] + h * k1[i];
    }
    f(t0 + h, y1, f1);
    let der2 = (y.iter().zip(k1.iter().zip(f1.iter())).map(|(yi, (a, b))| ((b - a) / sk(*yi)).powi(2)).sum::<f64>() / n).sqrt() / h;
    let der12 = dnf.max(der2);
    let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(0.2) };
    (100.0 * h).min(h1).min(span).min(opts.h_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(_t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = -y[0];
    }

    #[test]
    fn harmonic_oscillator_endpoint() {
        let sol = integrate(oscillator, 0.0, 10.0, &[1.0, 0.0], &OdeOptions::with_tol(1e-12), Record::Endpoint, None).unwrap();
        let y = sol.last();
        assert!((y[0] - 10f64.cos()).abs() < 1e-10);
        assert!((y[1] + 10f64.sin()).abs() < 1e-10);
        assert_eq!(sol.t, vec![10.0]);
    }

    #[test]
    fn dense_output_is_accurate_between_steps() {
        let sol = integrate(oscillator, 0.0, 5.0, &[1.0, 0.0], &OdeOptions::with_tol(1e-11), Record::Dense, None).unwrap();
        let mut v = [0.0; 2];
        for k in 0..=100 {
            let t = 0.05 * k as f64;
            sol.eval(t, &mut v);
            assert!((v[0] - t.cos()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn grid_records_requested_times() {
        let grid: Vec<f64> = (0..=8).map(|k| k as f64 * 0.25).collect();
        let sol = integrate(oscillator, 0.0, 2.0, &[1.0, 0.0], &OdeOptions::with_tol(1e-11), Record::Grid(grid.clone()), None).unwrap();
        assert_eq!(sol.t, grid);
        for (t, y) in sol.t.iter().zip(&sol.y) {
            assert!((y[0] - t.cos()).abs() < 1e-9);
        }
        assert_eq!(sol.y[0], vec![1.0, 0.0]);
    }

    #[test]
    fn order_five_error_scaling() {
        // fixed steps: error ratio for halved h should be near 2^5
        let run = |h: f64| {
            let o = OdeOptions { rtol: 1e3, atol: 1e3, h0: Some(h), h_max: h, max_steps: 1_000_000 };
            let sol = integrate(|_t, y: &[f64], dy: &mut [f64]| dy[0] = y[0], 0.0, 1.0, &[1.0], &o, Record::Endpoint, None).unwrap();
            (sol.last()[0] - 1f64.exp()).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!(ratio > 20.0 && ratio < 45.0, "ratio {ratio}");
    }

    #[test]
    fn projection_hook_is_applied() {
        let mut calls = 0;
        let mut normalize = |_t: f64, y: &mut [f64]| {
            calls += 1;
            let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
            y[0] /= r;
            y[1] /= r;
            true
        };
        let sol =
            integrate(oscillator, 0.0, 3.0, &[1.0, 0.0], &OdeOptions::with_tol(1e-8), Record::Endpoint, Some(&mut normalize)).unwrap();
        let y = sol.last();
        assert!(((y[0] * y[0] + y[1] * y[1]) - 1.0).abs() < 1e-15);
        assert_eq!(sol.stats.projections, sol.stats.accepted);
    }

    #[test]
    fn blow_up_reports_failure() {
        let r = integrate(
            |_t, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0],
            0.0,
            2.0,
            &[1.0],
            &OdeOptions::with_tol(1e-10),
            Record::Endpoint,
            None,
        );
        assert!(r.is_err());
    }

    #[test]
    fn deterministic() {
        let a = integrate(oscillator, 0.0, 7.0, &[0.3, 0.1], &OdeOptions::with_tol(1e-10), Record::Steps, None).unwrap();
        let b = integrate(oscillator, 0.0, 7.0, &[0.3, 0.1], &OdeOptions::with_tol(1e-10), Record::Steps, None).unwrap();
        assert_eq!(a.t, b.t);
        assert_eq!(a.y, b.y);
    }
}
