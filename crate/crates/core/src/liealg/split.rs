//! Allowed/forbidden splitting of the traceless Hermitian operators, the
//! structure constants of the split basis, and the q-metric operators.

use super::basis::{build_pauli_basis, OperatorBasis};
use super::matrix::{commutator, trace_product, CMatrix};
use super::LieError;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

/// A traceless Hermitian operator as a real coefficient vector over a split's
/// orthonormal basis (allowed components first, then forbidden ones).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    pub coeffs: DVector<f64>,
}

impl HermitianOperator {
    pub fn new(coeffs: DVector<f64>) -> Self {
        Self { coeffs }
    }

    pub fn from_slice(c: &[f64]) -> Self {
        Self { coeffs: DVector::from_column_slice(c) }
    }

    pub fn zeros(len: usize) -> Self {
        Self { coeffs: DVector::zeros(len) }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Hilbert–Schmidt norm (the Euclidean norm of the coefficients).
    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.coeffs.as_slice()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { coeffs: &self.coeffs * s }
    }
}

impl Add for &HermitianOperator {
    type Output = HermitianOperator;
    fn add(self, rhs: Self) -> HermitianOperator {
        HermitianOperator { coeffs: &self.coeffs + &rhs.coeffs }
    }
}

impl Sub for &HermitianOperator {
    type Output = HermitianOperator;
    fn sub(self, rhs: Self) -> HermitianOperator {
        HermitianOperator { coeffs: &self.coeffs - &rhs.coeffs }
    }
}

impl Mul<f64> for &HermitianOperator {
    type Output = HermitianOperator;
    fn mul(self, rhs: f64) -> HermitianOperator {
        self.scaled(rhs)
    }
}

impl Neg for &HermitianOperator {
    type Output = HermitianOperator;
    fn neg(self) -> HermitianOperator {
        self.scaled(-1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subspace {
    Allowed,
    Forbidden,
}

/// Real structure constants f with [C_a, C_b] = i Σ_c f_abc C_c.
///
/// With that convention the coefficients of −i[X, Y] are Σ_ab f_abc x_a y_b,
/// which is what [`StructureTable::bracket`] evaluates.
#[derive(Debug, Clone)]
pub struct StructureTable {
    dim: usize,
    dense: Vec<f64>,
    nonzeros: Vec<(u32, u32, u32, f64)>,
}

impl StructureTable {
    pub fn from_basis(elements: &[CMatrix]) -> Self {
        let d = elements.len();
        let mut dense = vec![0.0; d * d * d];
        let mut nonzeros = Vec::new();
        for a in 0..d {
            for b in 0..d {
                if a == b {
                    continue;
                }
                let comm = commutator(&elements[a], &elements[b]);
                for (c, e) in elements.iter().enumerate() {
                    // Tr([C_a,C_b] C_c) = i f_abc
                    let v = (trace_product(&comm, e) * Complex64::new(0.0, -1.0)).re;
                    if v.abs() > 1e-14 {
                        dense[(a * d + b) * d + c] = v;
                        nonzeros.push((a as u32, b as u32, c as u32, v));
                    }
                }
            }
        }
        Self { dim: d, dense, nonzeros }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.dense[(a * self.dim + b) * self.dim + c]
    }

    /// Entries (a, b, c, f_abc) with f_abc ≠ 0.
    pub fn nonzeros(&self) -> &[(u32, u32, u32, f64)] {
        &self.nonzeros
    }

    pub fn nonzero_count(&self) -> usize {
        self.nonzeros.len()
    }

    /// out_c = Σ_ab f_abc x_a y_b, the coefficients of −i[X, Y].
    pub fn bracket_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(a, b, c, f) in &self.nonzeros {
            out[c as usize] += f * x[a as usize] * y[b as usize];
        }
    }

    pub fn bracket(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.bracket_into(x, y, &mut out);
        out
    }
}

/// Sparse entries of a basis matrix, used for fast assembly of Σ c_m C_m.
#[derive(Debug, Clone)]
struct SparseElement {
    entries: Vec<(usize, Complex64)>,
}

/// Orthonormal split basis {A_j} ∪ {B_k} with precomputed structure table.
#[derive(Debug, Clone)]
pub struct SubspaceSplit {
    name: String,
    basis: OperatorBasis,
    n_allowed: usize,
    structure: StructureTable,
    sparse: Vec<SparseElement>,
}

/// How the allowed subspace is specified.
#[derive(Debug, Clone)]
pub enum AllowedSpec {
    /// A named preset, e.g. `two_qubit_heisenberg`.
    Preset(String),
    /// Coefficient vectors over the source basis. They are Gram–Schmidt
    /// orthonormalized; the forbidden space is the orthogonal complement.
    Vectors(Vec<Vec<f64>>),
}

/// Names accepted by [`AllowedSpec::Preset`].
pub const PRESETS: &[&str] = &["two_qubit_heisenberg", "single_qubit_xy", "full"];

const DEPENDENCE_TOL: f64 = 1e-9;

impl SubspaceSplit {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn basis(&self) -> &OperatorBasis {
        &self.basis
    }

    pub fn structure(&self) -> &StructureTable {
        &self.structure
    }

    /// Hilbert-space dimension n.
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// n² − 1.
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn n_allowed(&self) -> usize {
        self.n_allowed
    }

    pub fn n_forbidden(&self) -> usize {
        self.len() - self.n_allowed
    }

    pub fn allowed_indices(&self) -> std::ops::Range<usize> {
        0..self.n_allowed
    }

    pub fn forbidden_indices(&self) -> std::ops::Range<usize> {
        self.n_allowed..self.len()
    }

    pub fn labels(&self) -> &[String] {
        self.basis.labels()
    }

    pub fn matrix(&self, op: &HermitianOperator) -> CMatrix {
        self.basis.synthesize(op.as_slice())
    }

    pub fn decompose(&self, x: &CMatrix) -> HermitianOperator {
        HermitianOperator::from_slice(&self.basis.decompose(x))
    }

    /// Dense Σ c_m C_m in row-major storage, written into `out` (len n²).
    pub fn assemble_into(&self, coeffs: &[f64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (c, el) in coeffs.iter().zip(&self.sparse) {
            if *c == 0.0 {
                continue;
            }
            for &(k, v) in &el.entries {
                out[k] += v * *c;
            }
        }
    }

    /// Coefficient matrix of X ↦ U†XU: column a holds the coefficients of U†C_aU.
    pub fn adjoint_action(&self, u: &CMatrix, out: &mut DMatrix<f64>) {
        let n = self.dim();
        let ud = u.adjoint();
        let mut t = CMatrix::zeros(n, n);
        for (a, el) in self.sparse.iter().enumerate() {
            t.fill(Complex64::new(0.0, 0.0));
            for &(k, v) in &el.entries {
                let (i, j) = (k / n, k % n);
                for c in 0..n {
                    t[(i, c)] += v * u[(j, c)];
                }
            }
            let w = &ud * &t;
            for (b, eb) in self.sparse.iter().enumerate() {
                let mut acc = 0.0;
                for &(k, v) in &eb.entries {
                    acc += (v * w[(k % n, k / n)]).re;
                }
                out[(b, a)] = acc;
            }
        }
    }

    /// Coefficients of −i[X, Y] for coefficient vectors x, y.
    pub fn bracket(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.structure.bracket(x, y)
    }

    /// Builds a split from a source basis and an allowed-space spec.
    pub fn build(basis: &OperatorBasis, spec: &AllowedSpec) -> Result<Self, LieError> {
        match spec {
            AllowedSpec::Preset(name) => preset(name),
            AllowedSpec::Vectors(v) => Self::from_vectors("custom", basis, v, None),
        }
    }

    /// Orthonormalizes `allowed` (and optionally an explicit `forbidden`
    /// list) over `basis`. Without an explicit forbidden list the complement
    /// is built by Gram–Schmidt over the source basis elements in order.
    pub fn from_vectors(name: &str, basis: &OperatorBasis, allowed: &[Vec<f64>], forbidden: Option<&[Vec<f64>]>) -> Result<Self, LieError> {
        let d = basis.len();
        for (i, v) in allowed.iter().enumerate() {
            if v.len() != d {
                return Err(LieError::Invalid(format!("allowed vector {i} has length {}, expected {d}", v.len())));
            }
        }
        let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(d);
        for (i, v) in allowed.iter().enumerate() {
            match orthogonalize(&ortho, DVector::from_column_slice(v)) {
                Some(u) => ortho.push(u),
                None => return Err(LieError::LinearDependence { index: i }),
            }
        }
        let n_allowed = ortho.len();
        let mut labels: Vec<String> = Vec::with_capacity(d);
        for v in &ortho {
            labels.push(describe(basis, v));
        }
        match forbidden {
            Some(list) => {
                for (i, v) in list.iter().enumerate() {
                    if v.len() != d {
                        return Err(LieError::Invalid(format!("forbidden vector {i} has wrong length")));
                    }
                    match orthogonalize(&ortho, DVector::from_column_slice(v)) {
                        Some(u) => {
                            labels.push(describe(basis, &u));
                            ortho.push(u);
                        }
                        None => return Err(LieError::LinearDependence { index: n_allowed + i }),
                    }
                }
                if ortho.len() != d {
                    return Err(LieError::Invalid(format!("allowed plus forbidden vectors span {} of {d} dimensions", ortho.len())));
                }
            }
            None => {
                for m in 0..d {
                    if ortho.len() == d {
                        break;
                    }
                    let mut e = DVector::zeros(d);
                    e[m] = 1.0;
                    if let Some(u) = orthogonalize(&ortho, e) {
                        labels.push(describe(basis, &u));
                        ortho.push(u);
                    }
                }
            }
        }
        let elements: Vec<CMatrix> = ortho.iter().map(|v| basis.synthesize(v.as_slice())).collect();
        let split_basis = OperatorBasis::new(basis.dim(), elements, labels, 1e-12)?;
        Ok(Self::from_split_basis(name, split_basis, n_allowed))
    }

    fn from_split_basis(name: &str, basis: OperatorBasis, n_allowed: usize) -> Self {
        let structure = StructureTable::from_basis(basis.elements());
        let n = basis.dim();
        let sparse = basis
            .elements()
            .iter()
            .map(|e| SparseElement {
                entries: (0..n * n)
                    .filter_map(|k| {
                        let v = e[(k / n, k % n)];
                        (v.norm() > 1e-15).then_some((k, v))
                    })
                    .collect(),
            })
            .collect();
        Self { name: name.to_string(), basis, n_allowed, structure, sparse }
    }

    pub fn shared(self) -> Arc<Self> {
        Arc::new(self)
    }
}

fn orthogonalize(existing: &[DVector<f64>], mut v: DVector<f64>) -> Option<DVector<f64>> {
    let start = v.norm();
    if start == 0.0 {
        return None;
    }
    // two passes of modified Gram–Schmidt
    for _ in 0..2 {
        for u in existing {
            let p = u.dot(&v);
            v -= u * p;
        }
    }
    let n = v.norm();
    if n <= DEPENDENCE_TOL * start {
        return None;
    }
    Some(v / n)
}

fn describe(basis: &OperatorBasis, v: &DVector<f64>) -> String {
    let terms: Vec<(usize, f64)> = v.iter().enumerate().filter(|(_, c)| c.abs() > 1e-12).map(|(i, c)| (i, *c)).collect();
    if terms.len() == 1 && (terms[0].1 - 1.0).abs() < 1e-12 {
        return basis.labels()[terms[0].0].clone();
    }
    terms.iter().map(|(i, c)| format!("{:+.4}{}", c, basis.labels()[*i])).collect::<Vec<_>>().join("")
}

fn unit(d: usize, idx: &[(usize, f64)]) -> Vec<f64> {
    let mut v = vec![0.0; d];
    for &(i, c) in idx {
        v[i] = c;
    }
    v
}

/// Builds a named preset split.
pub fn preset(name: &str) -> Result<SubspaceSplit, LieError> {
    match name {
        "two_qubit_heisenberg" => {
            let basis = build_pauli_basis(2)?;
            let ix = |l: &str| basis.index_of(l).expect("two-qubit Pauli label");
            let d = basis.len();
            let s3 = 1.0 / 3f64.sqrt();
            let s6 = 1.0 / 6f64.sqrt();
            let s2 = 1.0 / 2f64.sqrt();
            let mut allowed = vec![unit(d, &[(ix("XX"), s3), (ix("YY"), s3), (ix("ZZ"), s3)])];
            for l in ["IX", "IY", "IZ", "XI", "YI", "ZI"] {
                allowed.push(unit(d, &[(ix(l), 1.0)]));
            }
            let mut forbidden: Vec<Vec<f64>> = ["YX", "ZX", "XY", "ZY", "XZ", "YZ"].iter().map(|l| unit(d, &[(ix(l), 1.0)])).collect();
            forbidden.push(unit(d, &[(ix("XX"), 2.0 * s6), (ix("YY"), -s6), (ix("ZZ"), -s6)]));
            forbidden.push(unit(d, &[(ix("YY"), s2), (ix("ZZ"), -s2)]));
            let mut split = SubspaceSplit::from_vectors(name, &basis, &allowed, Some(&forbidden))?;
            let mut labels: Vec<String> =
                ["HEIS", "IX", "IY", "IZ", "XI", "YI", "ZI", "YX", "ZX", "XY", "ZY", "XZ", "YZ"].iter().map(|s| s.to_string()).collect();
            labels.push("XXYYZZ_2".into());
            labels.push("YYZZ_1".into());
            split.basis = OperatorBasis::new(4, split.basis.elements().to_vec(), labels, 1e-12)?;
            Ok(split)
        }
        "single_qubit_xy" => {
            let basis = build_pauli_basis(1)?;
            SubspaceSplit::from_vectors(name, &basis, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], None)
        }
        "full" => {
            let basis = build_pauli_basis(2)?;
            let d = basis.len();
            let all: Vec<Vec<f64>> = (0..d).map(|i| unit(d, &[(i, 1.0)])).collect();
            SubspaceSplit::from_vectors(name, &basis, &all, None)
        }
        other => Err(LieError::UnknownPreset(other.to_string())),
    }
}

/// Keeps the components in `which`, zeroing the complement.
pub fn project(split: &SubspaceSplit, op: &HermitianOperator, which: Subspace) -> HermitianOperator {
    let mut out = op.clone();
    let zero = match which {
        Subspace::Allowed => split.forbidden_indices(),
        Subspace::Forbidden => split.allowed_indices(),
    };
    for i in zero {
        out.coeffs[i] = 0.0;
    }
    out
}

fn check_q(q: f64) -> Result<(), LieError> {
    if q.is_finite() && q > 0.0 {
        Ok(())
    } else {
        Err(LieError::InvalidPenalty(q))
    }
}

/// G_q = P_A + q P_B.
pub fn apply_gq(split: &SubspaceSplit, op: &HermitianOperator, q: f64) -> Result<HermitianOperator, LieError> {
    check_q(q)?;
    Ok(scale_forbidden(split, op, q))
}

/// F_q = G_q⁻¹ = P_A + q⁻¹ P_B.
pub fn apply_fq(split: &SubspaceSplit, op: &HermitianOperator, q: f64) -> Result<HermitianOperator, LieError> {
    check_q(q)?;
    Ok(scale_forbidden(split, op, 1.0 / q))
}

pub(crate) fn scale_forbidden(split: &SubspaceSplit, op: &HermitianOperator, s: f64) -> HermitianOperator {
    let mut out = op.clone();
    for i in split.forbidden_indices() {
        out.coeffs[i] *= s;
    }
    out
}

/// ⟨X, Y⟩_q = Σ_j α_j α'_j + q Σ_k β_k β'_k.
pub fn q_inner(split: &SubspaceSplit, x: &HermitianOperator, y: &HermitianOperator, q: f64) -> Result<f64, LieError> {
    check_q(q)?;
    let na = split.n_allowed();
    let a: f64 = (0..na).map(|i| x.coeffs[i] * y.coeffs[i]).sum();
    let b: f64 = split.forbidden_indices().map(|i| x.coeffs[i] * y.coeffs[i]).sum();
    Ok(a + q * b)
}

/// ‖P_B X‖ / ‖X‖.
pub fn forbidden_fraction(split: &SubspaceSplit, x: &HermitianOperator) -> f64 {
    let n = x.norm();
    if n == 0.0 {
        return 0.0;
    }
    project(split, x, Subspace::Forbidden).norm() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::matrix::{frobenius_distance, I};
    use proptest::prelude::*;

    fn heis() -> SubspaceSplit {
        preset("two_qubit_heisenberg").unwrap()
    }

    fn lcg_vec(d: usize, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_add(17);
        (0..d)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn heisenberg_preset_dimensions() {
        let s = heis();
        assert_eq!(s.n_allowed(), 7);
        assert_eq!(s.n_forbidden(), 8);
        // the coupling direction is (XX+YY+ZZ)/(2√3)
        let h = s.basis().element(0);
        let expect = (crate::liealg::basis::pauli_string("XX")
            + crate::liealg::basis::pauli_string("YY")
            + crate::liealg::basis::pauli_string("ZZ"))
            / Complex64::new(2.0 * 3f64.sqrt(), 0.0);
        assert!(frobenius_distance(h, &expect) < 1e-14);
    }

    #[test]
    fn allowed_and_forbidden_are_orthogonal() {
        let s = heis();
        for j in s.allowed_indices() {
            for k in s.forbidden_indices() {
                let t = trace_product(s.basis().element(j), s.basis().element(k));
                assert!(t.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn full_allowed_spec_leaves_no_forbidden_space() {
        let b = build_pauli_basis(2).unwrap();
        let all: Vec<Vec<f64>> = (0..15).map(|i| unit(15, &[(i, 1.0)])).collect();
        let s = SubspaceSplit::build(&b, &AllowedSpec::Vectors(all)).unwrap();
        assert_eq!(s.n_forbidden(), 0);
        let x = HermitianOperator::from_slice(&lcg_vec(15, 3));
        assert_eq!(project(&s, &x, Subspace::Forbidden).norm(), 0.0);
    }

    #[test]
    fn linear_dependence_reports_offending_index() {
        let b = build_pauli_basis(1).unwrap();
        let spec = AllowedSpec::Vectors(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![2.0, -3.0, 0.0]]);
        match SubspaceSplit::build(&b, &spec) {
            Err(LieError::LinearDependence { index }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_preset_rejected() {
        assert!(matches!(preset("nope"), Err(LieError::UnknownPreset(_))));
    }

    #[test]
    fn structure_constants_reproduce_commutators() {
        let s = heis();
        let el = s.basis().elements();
        let f = s.structure();
        for a in 0..15 {
            for b in 0..15 {
                let mut recon = CMatrix::zeros(4, 4);
                for (c, e) in el.iter().enumerate() {
                    recon += e * (I * f.get(a, b, c));
                }
                assert!(frobenius_distance(&commutator(&el[a], &el[b]), &recon) < 1e-10);
                for c in 0..15 {
                    assert!((f.get(a, b, c) + f.get(b, a, c)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bracket_matches_dense_commutator() {
        let s = heis();
        let x = lcg_vec(15, 1);
        let y = lcg_vec(15, 2);
        let dense = commutator(&s.basis().synthesize(&x), &s.basis().synthesize(&y)) * Complex64::new(0.0, -1.0);
        let coeffs = s.bracket(&x, &y);
        assert!(frobenius_distance(&s.basis().synthesize(&coeffs), &dense) < 1e-12);
    }

    #[test]
    fn penalty_operators() {
        let s = heis();
        let x = HermitianOperator::from_slice(&lcg_vec(15, 5));
        assert_eq!(apply_gq(&s, &x, 1.0).unwrap(), x);
        let mut b = HermitianOperator::zeros(15);
        b.coeffs[9] = 0.7;
        assert_eq!(apply_gq(&s, &b, 5.0).unwrap(), b.scaled(5.0));
        let rt = apply_fq(&s, &apply_gq(&s, &x, 100.0).unwrap(), 100.0).unwrap();
        assert!((&rt - &x).norm() < 1e-14);
        assert!(apply_gq(&s, &x, 0.0).is_err());
        assert!(apply_fq(&s, &x, -2.0).is_err());
        assert!(q_inner(&s, &x, &x, 0.0).is_err());
    }

    #[test]
    fn q_inner_examples() {
        let s = heis();
        let mut a1 = HermitianOperator::zeros(15);
        a1.coeffs[0] = 1.0;
        assert_eq!(q_inner(&s, &a1, &a1, 37.0).unwrap(), 1.0);
        let mut b1 = HermitianOperator::zeros(15);
        b1.coeffs[7] = 1.0;
        assert_eq!(q_inner(&s, &b1, &b1, 9.0).unwrap(), 9.0);
    }

    #[test]
    fn q_inner_at_one_is_hilbert_schmidt() {
        let s = heis();
        for k in 0..100 {
            let x = HermitianOperator::from_slice(&lcg_vec(15, 2 * k));
            let y = HermitianOperator::from_slice(&lcg_vec(15, 2 * k + 1));
            let tr = trace_product(&s.matrix(&x), &s.matrix(&y));
            assert!((q_inner(&s, &x, &y, 1.0).unwrap() - tr.re).abs() < 1e-12);
            assert!(tr.im.abs() < 1e-12);
        }
    }

    #[test]
    fn assemble_matches_synthesize() {
        let s = heis();
        let x = lcg_vec(15, 11);
        let mut buf = vec![Complex64::new(0.0, 0.0); 16];
        s.assemble_into(&x, &mut buf);
        let m = s.basis().synthesize(&x);
        for k in 0..16 {
            assert!((buf[k] - m[(k / 4, k % 4)]).norm() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn projections_are_orthogonal_and_complete(v in proptest::collection::vec(-5.0f64..5.0, 15)) {
            let s = heis();
            let x = HermitianOperator::from_slice(&v);
            let a = project(&s, &x, Subspace::Allowed);
            let b = project(&s, &x, Subspace::Forbidden);
            prop_assert_eq!(&(&a + &b), &x);
            prop_assert_eq!(project(&s, &a, Subspace::Forbidden).norm(), 0.0);
            prop_assert_eq!(&project(&s, &a, Subspace::Allowed), &a);
            let lhs = a.norm().powi(2) + b.norm().powi(2);
            prop_assert!((lhs - x.norm().powi(2)).abs() < 1e-10);
        }

        #[test]
        fn q_inner_symmetric_and_positive(v in proptest::collection::vec(-5.0f64..5.0, 30), q in 1.0f64..200.0) {
            let s = heis();
            let x = HermitianOperator::from_slice(&v[..15]);
            let y = HermitianOperator::from_slice(&v[15..]);
            let xy = q_inner(&s, &x, &y, q).unwrap();
            let yx = q_inner(&s, &y, &x, q).unwrap();
            prop_assert!((xy - yx).abs() < 1e-12 * (1.0 + xy.abs()));
            prop_assert!(q_inner(&s, &x, &x, q).unwrap() >= 0.0);
        }
    }
}
