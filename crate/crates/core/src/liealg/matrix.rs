//! Small dense complex-matrix helpers used throughout the solver.
//!
//! Everything here works on `DMatrix<Complex64>`; the matrices involved are
//! tiny (n ≤ 16), so clarity wins over blocking or SIMD tricks.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;

pub type CMatrix = DMatrix<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Tr(AB) without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn frobenius_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm()
}

/// Largest entry magnitude of U†U − I.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let n = u.nrows();
    let g = u.adjoint() * u;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Largest entry magnitude of A − A†.
pub fn hermiticity_error(a: &CMatrix) -> f64 {
    (a - a.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// exp(−i t H) for Hermitian H via the Hermitian eigendecomposition.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = CMatrix::from_diagonal(&eig.eigenvalues.map(|e| Complex64::from_polar(1.0, -t * e)));
    v * phases * v.adjoint()
}

/// Nearest unitary in Frobenius norm (the unitary polar factor), via SVD.
pub fn polar_unitary(u: &CMatrix) -> CMatrix {
    let svd = u.clone().svd(true, true);
    let w = svd.u.expect("left singular vectors requested");
    let vt = svd.v_t.expect("right singular vectors requested");
    w * vt
}

/// Newton–Schulz refinement toward the unitary polar factor; cheap when the
/// input is already unitary to ~1e-8.
pub fn newton_schulz_unitary(u: &CMatrix, iterations: usize) -> CMatrix {
    let n = u.nrows();
    let three = CMatrix::identity(n, n) * Complex64::new(3.0, 0.0);
    let mut x = u.clone();
    for _ in 0..iterations {
        let g = x.adjoint() * &x;
        x = &x * (&three - g) * Complex64::new(0.5, 0.0);
    }
    x
}

/// Eigendecomposition of a unitary matrix: principal eigenphases in (−π, π]
/// and an orthonormal eigenvector matrix (columns).
///
/// Uses two Hermitian eigenproblems instead of a Schur iteration, which stalls
/// on nearly scalar matrices: the Hermitian part (M + M†)/2 has eigenvalues
/// cos θ, and each cluster of nearly equal cosines is split by the
/// anti-Hermitian part (M − M†)/2i restricted to that cluster.
pub fn unitary_eigen(u: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = u.nrows();
    let half = Complex64::new(0.5, 0.0);
    let c = (u + u.adjoint()) * half;
    let s = (u - u.adjoint()) * Complex64::new(0.0, -0.5);
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut vectors = CMatrix::zeros(n, n);
    let mut col = 0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eig.eigenvalues[order[end]] - eig.eigenvalues[order[end - 1]] < 1e-4 {
            end += 1;
        }
        let k = end - start;
        let block = CMatrix::from_fn(n, k, |r, j| eig.eigenvectors[(r, order[start + j])]);
        if k == 1 {
            vectors.set_column(col, &block.column(0));
        } else {
            let restricted = block.adjoint() * &s * &block;
            let inner = ((&restricted + restricted.adjoint()) * half).symmetric_eigen();
            let rotated = &block * inner.eigenvectors;
            for j in 0..k {
                vectors.set_column(col + j, &rotated.column(j));
            }
        }
        col += k;
        start = end;
    }
    let phases = (0..n)
        .map(|j| {
            let v = vectors.column(j);
            let rq = (v.adjoint() * u * v)[(0, 0)];
            principal_angle(rq.arg())
        })
        .collect();
    (phases, vectors)
}

/// Maps an angle into (−π, π].
pub fn principal_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Builds V diag(values) V† (Hermitian when `values` are real).
pub fn from_spectrum(vectors: &CMatrix, values: &[f64]) -> CMatrix {
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(values.len(), values.iter().map(|&x| Complex64::new(x, 0.0))));
    vectors * d * vectors.adjoint()
}

/// Reads an n×n complex matrix stored as interleaved (re, im) pairs in
/// row-major order.
pub fn matrix_from_slice(n: usize, data: &[f64]) -> CMatrix {
    CMatrix::from_fn(n, n, |r, c| {
        let k = 2 * (r * n + c);
        Complex64::new(data[k], data[k + 1])
    })
}

pub fn matrix_to_slice(m: &CMatrix, out: &mut [f64]) {
    let n = m.nrows();
    for r in 0..n {
        for c in 0..n {
            let k = 2 * (r * n + c);
            out[k] = m[(r, c)].re;
            out[k + 1] = m[(r, c)].im;
        }
    }
}

/// Writes the identity in interleaved row-major layout.
pub fn identity_to_slice(n: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for r in 0..n {
        out[2 * (r * n + r)] = 1.0;
    }
}

/// out = −i H U, with H a dense complex matrix in row-major `Complex64`
/// storage and U, out in interleaved layout.
pub fn neg_i_h_times_u(n: usize, h: &[Complex64], u: &[f64], out: &mut [f64]) {
    for r in 0..n {
        for c in 0..n {
            let mut re = 0.0;
            let mut im = 0.0;
            for k in 0..n {
                let a = h[r * n + k];
                let ur = u[2 * (k * n + c)];
                let ui = u[2 * (k * n + c) + 1];
                re += a.re * ur - a.im * ui;
                im += a.re * ui + a.im * ur;
            }
            // −i (re + i im) = im − i re
            out[2 * (r * n + c)] = im;
            out[2 * (r * n + c) + 1] = -re;
        }
    }
}

/// Projects an interleaved near-unitary block back onto U(n) when its
/// unitarity defect exceeds `threshold`. Returns whether it changed.
pub fn reunitarize_slice(n: usize, data: &mut [f64], threshold: f64) -> bool {
    let u = matrix_from_slice(n, data);
    if unitarity_error(&u) <= threshold {
        return false;
    }
    let fixed = polar_unitary(&u);
    matrix_to_slice(&fixed, data);
    true
}

/// Scaling-and-squaring Taylor exponential of a general complex matrix.
/// Independent of the eigendecomposition route; used as a cross-check.
pub fn expm_taylor(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let norm = a.norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / Complex64::new(2f64.powi(squarings), 0.0);
    let mut term = CMatrix::identity(n, n);
    let mut sum = CMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        sum += &term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}
