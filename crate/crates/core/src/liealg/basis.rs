//! Orthonormal bases of the traceless Hermitian operators.

use super::matrix::{hermiticity_error, trace_product, CMatrix};
use super::LieError;
use num_complex::Complex64;

/// Largest Hilbert-space dimension accepted by the basis builders.
pub const MAX_DIMENSION: usize = 16;

/// A Hilbert–Schmidt orthonormal basis {C_m} of the n²−1 dimensional space of
/// traceless Hermitian n×n matrices.
#[derive(Debug, Clone)]
pub struct OperatorBasis {
    dim: usize,
    elements: Vec<CMatrix>,
    labels: Vec<String>,
}

impl OperatorBasis {
    /// Wraps a list of matrices, checking Hermiticity, tracelessness and
    /// orthonormality to `tol`.
    pub fn new(dim: usize, elements: Vec<CMatrix>, labels: Vec<String>, tol: f64) -> Result<Self, LieError> {
        if elements.len() != labels.len() {
            return Err(LieError::Invalid(format!("{} elements but {} labels", elements.len(), labels.len())));
        }
        for (a, e) in elements.iter().enumerate() {
            if e.nrows() != dim || e.ncols() != dim {
                return Err(LieError::Invalid(format!("element {a} is not {dim}x{dim}")));
            }
            if hermiticity_error(e) > tol {
                return Err(LieError::Invalid(format!("element {a} is not Hermitian")));
            }
            if e.trace().norm() > tol {
                return Err(LieError::Invalid(format!("element {a} is not traceless")));
            }
        }
        for a in 0..elements.len() {
            for b in a..elements.len() {
                let g = trace_product(&elements[a], &elements[b]);
                let expect = if a == b { 1.0 } else { 0.0 };
                if (g - Complex64::new(expect, 0.0)).norm() > tol {
                    return Err(LieError::Invalid(format!("elements {a} and {b} are not orthonormal")));
                }
            }
        }
        Ok(Self { dim, elements, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    pub fn element(&self, m: usize) -> &CMatrix {
        &self.elements[m]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Σ_m c_m C_m.
    pub fn synthesize(&self, coeffs: &[f64]) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for (c, e) in coeffs.iter().zip(&self.elements) {
            if *c != 0.0 {
                out += e * Complex64::new(*c, 0.0);
            }
        }
        out
    }

    /// Coefficients Re Tr(C_m X); exact for Hermitian traceless X.
    pub fn decompose(&self, x: &CMatrix) -> Vec<f64> {
        self.elements.iter().map(|e| trace_product(e, x).re).collect()
    }
}

fn pauli(symbol: char) -> [[Complex64; 2]; 2] {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match symbol {
        'I' => [[o, z], [z, o]],
        'X' => [[z, o], [o, z]],
        'Y' => [[z, -i], [i, z]],
        'Z' => [[o, z], [z, -o]],
        _ => unreachable!("not a Pauli symbol"),
    }
}

/// Dense matrix of a Pauli string; the leftmost symbol acts on the most
/// significant tensor factor (qubit 1).
pub fn pauli_string(label: &str) -> CMatrix {
    let mut m = CMatrix::from_element(1, 1, Complex64::new(1.0, 0.0));
    for s in label.chars() {
        let p = pauli(s);
        let k = m.nrows();
        let mut next = CMatrix::zeros(2 * k, 2 * k);
        for r in 0..k {
            for c in 0..k {
                for pr in 0..2 {
                    for pc in 0..2 {
                        next[(2 * r + pr, 2 * c + pc)] = m[(r, c)] * p[pr][pc];
                    }
                }
            }
        }
        m = next;
    }
    m
}

/// Normalized non-identity Pauli strings on `num_qubits` qubits, each scaled
/// by 1/√(2^k) so that Tr(C²) = 1.
///
/// Ordering is lexicographic in the alphabet I < X < Y < Z with qubit 1
/// leftmost, so for two qubits: IX, IY, IZ, XI, XX, …, ZZ.
pub fn build_pauli_basis(num_qubits: usize) -> Result<OperatorBasis, LieError> {
    if num_qubits == 0 {
        return Err(LieError::Invalid("num_qubits must be at least 1".into()));
    }
    if num_qubits >= usize::BITS as usize || (1usize << num_qubits) > MAX_DIMENSION {
        return Err(LieError::TooLarge { dim: 1usize.checked_shl(num_qubits as u32).unwrap_or(usize::MAX), cap: MAX_DIMENSION });
    }
    let dim = 1usize << num_qubits;
    let scale = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
    let symbols = ['I', 'X', 'Y', 'Z'];
    let mut labels = Vec::with_capacity(dim * dim - 1);
    let mut elements = Vec::with_capacity(dim * dim - 1);
    for code in 1..dim * dim {
        let label: String = (0..num_qubits).rev().map(|q| symbols[(code >> (2 * q)) & 3]).collect();
        elements.push(pauli_string(&label) * scale);
        labels.push(label);
    }
    OperatorBasis::new(dim, elements, labels, 1e-12)
}
