//! Branches of the traceless matrix logarithm of a special unitary.

use super::matrix::{expm_hermitian, frobenius_distance, from_spectrum, principal_angle, unitarity_error, unitary_eigen, CMatrix};
use super::split::{HermitianOperator, SubspaceSplit};
use super::LieError;
use num_complex::Complex64;
use std::f64::consts::PI;

const CLUSTER_TOL: f64 = 1e-9;
const DEDUP_TOL: f64 = 1e-8;
const TIE_TOL: f64 = 1e-9;

/// One traceless Hermitian H̄ with exp(−iH̄) = α·U.
#[derive(Debug, Clone)]
pub struct BranchSeed {
    /// 1-based position in the norm-sorted list.
    pub index: usize,
    pub operator: HermitianOperator,
    pub hs_norm: f64,
    /// α = exp(2πi·k/n).
    pub phase_sector: Complex64,
    pub sector_index: usize,
    /// Integer 2π shift applied to each eigenphase (per eigenvalue, in the
    /// order returned by the eigensolver).
    pub shifts: Vec<i64>,
}

impl BranchSeed {
    /// α·U, the matrix this seed exponentiates to.
    pub fn sector_target(&self, target: &CMatrix) -> CMatrix {
        target * self.phase_sector
    }

    /// Short label for α such as "1", "i", "-1", "-i".
    pub fn sector_label(&self) -> String {
        sector_label(self.phase_sector)
    }
}

pub fn sector_label(a: Complex64) -> String {
    let near = |x: f64, y: f64| (a.re - x).abs() < 1e-9 && (a.im - y).abs() < 1e-9;
    if near(1.0, 0.0) {
        "1".into()
    } else if near(-1.0, 0.0) {
        "-1".into()
    } else if near(0.0, 1.0) {
        "i".into()
    } else if near(0.0, -1.0) {
        "-i".into()
    } else {
        format!("exp({:.6}i)", a.arg())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BranchOptions {
    pub max_norm: f64,
    pub max_shift: i64,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self { max_norm: f64::INFINITY, max_shift: 2 }
    }
}

/// Divides U by a principal n-th root of det U. Returns the special unitary
/// and the phase φ with U = e^{iφ}·SU.
///
/// The determinant's argument is taken in [−π, π), so det = −1 maps to
/// φ = −π/n.
pub fn to_special_unitary(u: &CMatrix, tol: f64) -> Result<(CMatrix, f64), LieError> {
    if u.nrows() != u.ncols() {
        return Err(LieError::Invalid("matrix is not square".into()));
    }
    let err = unitarity_error(u);
    if err > tol {
        return Err(LieError::NonUnitary(err));
    }
    let n = u.nrows() as f64;
    let mut arg = u.determinant().arg();
    if arg >= PI - 1e-12 {
        arg -= 2.0 * PI;
    }
    let phi = arg / n;
    Ok((u * Complex64::from_polar(1.0, -phi), phi))
}

/// Groups eigenphases that coincide (on the circle) within `CLUSTER_TOL`.
fn cluster_phases(phases: &[f64]) -> Vec<Vec<usize>> {
    let n = phases.len();
    let mut label: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if principal_angle(phases[i] - phases[j]).abs() < CLUSTER_TOL {
                let (a, b) = (label[i], label[j]);
                for l in label.iter_mut() {
                    if *l == b {
                        *l = a;
                    }
                }
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if let Some(c) = clusters.iter_mut().find(|c| label[c[0]] == label[i]) {
            c.push(i);
        } else {
            clusters.push(vec![i]);
        }
    }
    clusters
}

/// Re-orthonormalizes each cluster's eigenvector block by QR with a positive
/// real diagonal in R, so degenerate eigenspaces get a reproducible basis.
fn canonical_vectors(q: &CMatrix, clusters: &[Vec<usize>]) -> CMatrix {
    let mut out = q.clone();
    for c in clusters {
        if c.len() < 2 {
            continue;
        }
        let block = CMatrix::from_fn(q.nrows(), c.len(), |r, k| q[(r, c[k])]);
        let qr = block.qr();
        let (mut qq, r) = (qr.q(), qr.r());
        for k in 0..c.len() {
            let d = r[(k, k)];
            if d.norm() > 0.0 {
                let ph = d / d.norm();
                for row in 0..qq.nrows() {
                    qq[(row, k)] *= ph;
                }
            }
        }
        for (k, &col) in c.iter().enumerate() {
            for row in 0..q.nrows() {
                out[(row, col)] = qq[(row, k)];
            }
        }
    }
    out
}

/// Enumerates traceless H̄ with exp(−iH̄) = α·U over all sectors α^n = 1 and
/// integer shift vectors with |m_i| ≤ max_shift, constant within degenerate
/// eigenvalue clusters. Sorted by norm, then sector index, then shifts.
pub fn log_branches(target: &CMatrix, split: &SubspaceSplit, opts: &BranchOptions) -> Result<Vec<BranchSeed>, LieError> {
    let n = target.nrows();
    if n != split.dim() {
        return Err(LieError::Invalid(format!("target is {n}x{n} but the split acts on dimension {}", split.dim())));
    }
    let err = unitarity_error(target);
    if err > 1e-10 {
        return Err(LieError::NonUnitary(err));
    }
    if (target.determinant() - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(LieError::Invalid("target must have unit determinant".into()));
    }
    let (phases, q) = unitary_eigen(target);
    let clusters = cluster_phases(&phases);
    let vectors = canonical_vectors(&q, &clusters);
    let phase_sum: f64 = phases.iter().sum();
    let s = opts.max_shift;
    let mut seeds: Vec<BranchSeed> = Vec::new();
    for k in 0..n {
        let sector_arg = principal_angle(2.0 * PI * k as f64 / n as f64);
        let alpha = Complex64::from_polar(1.0, sector_arg);
        // Σ h_i = 0 with h_i = −(θ_i + arg α) + 2π m_i
        let needed = (phase_sum + n as f64 * sector_arg) / (2.0 * PI);
        let needed_int = needed.round();
        if (needed - needed_int).abs() > 1e-6 {
            continue;
        }
        let mut cluster_shift = vec![-s; clusters.len()];
        loop {
            let total: i64 = clusters.iter().zip(&cluster_shift).map(|(c, m)| c.len() as i64 * m).sum();
            if total == needed_int as i64 {
                let mut shifts = vec![0i64; n];
                for (c, m) in clusters.iter().zip(&cluster_shift) {
                    for &i in c {
                        shifts[i] = *m;
                    }
                }
                let values: Vec<f64> = (0..n).map(|i| -(phases[i] + sector_arg) + 2.0 * PI * shifts[i] as f64).collect();
                let hm = from_spectrum(&vectors, &values);
                let op = split.decompose(&hm);
                let hs_norm = op.norm();
                if hs_norm <= opts.max_norm {
                    seeds.push(BranchSeed { index: 0, operator: op, hs_norm, phase_sector: alpha, sector_index: k, shifts });
                }
            }
            // odometer increment
            let mut pos = 0;
            while pos < cluster_shift.len() {
                cluster_shift[pos] += 1;
                if cluster_shift[pos] <= s {
                    break;
                }
                cluster_shift[pos] = -s;
                pos += 1;
            }
            if pos == cluster_shift.len() {
                break;
            }
        }
    }
    // norms equal to ~1e-9 count as ties so the sector/shift order decides
    let key = |x: f64| (x / TIE_TOL).round() as i64;
    seeds.sort_by(|a, b| key(a.hs_norm).cmp(&key(b.hs_norm)).then(a.sector_index.cmp(&b.sector_index)).then(a.shifts.cmp(&b.shifts)));
    let mut unique: Vec<BranchSeed> = Vec::new();
    for seed in seeds {
        let dup = unique
            .iter()
            .rev()
            .take_while(|u| (seed.hs_norm - u.hs_norm).abs() < DEDUP_TOL)
            .any(|u| (&u.operator - &seed.operator).norm() < DEDUP_TOL);
        if !dup {
            unique.push(seed);
        }
    }
    for (i, s) in unique.iter_mut().enumerate() {
        s.index = i + 1;
        debug_assert!(frobenius_distance(&expm_hermitian(&split.matrix(&s.operator), 1.0), &(target * s.phase_sector)) < 1e-9);
    }
    Ok(unique)
}
