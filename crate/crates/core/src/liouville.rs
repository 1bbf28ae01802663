//! Liouville representation of states, channels and measurements.
//!
//! Operators are vectorized row-major: the matrix element `ρ[i][j]` lands at
//! index `i·d + j`. With that convention a unitary acts as `U ⊗ U*` and a Kraus
//! channel as `Σ A ⊗ A*`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CharbError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// A vectorized operator `|A⟩⟩` on a `dim`-dimensional Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVec {
    dim: usize,
    data: CVector,
}

impl DensityVec {
    pub fn from_vector(dim: usize, data: CVector) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(CharbError::Dimension(format!(
                "vector of length {} is not d² for d = {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &CVector {
        &self.data
    }

    /// Pure state `|ψ⟩⟨ψ|` for a normalized ket.
    pub fn pure(ket: &CVector) -> Self {
        let d = ket.len();
        let rho = ket * ket.adjoint();
        vectorize(&rho).expect("outer product is square").with_dim(d)
    }

    /// Computational basis projector `|k⟩⟨k|`.
    pub fn basis_projector(dim: usize, k: usize) -> Self {
        let mut data = CVector::zeros(dim * dim);
        data[k * dim + k] = ONE;
        Self { dim, data }
    }

    /// `|𝟙⟩⟩` for the full space.
    pub fn identity(dim: usize) -> Self {
        let mut data = CVector::zeros(dim * dim);
        for k in 0..dim {
            data[k * dim + k] = ONE;
        }
        Self { dim, data }
    }

    fn with_dim(mut self, d: usize) -> Self {
        self.dim = d;
        self
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { dim: self.dim, data: &self.data * s }
    }

    pub fn add(&self, other: &DensityVec) -> Result<Self> {
        check_dims(self.dim, other.dim)?;
        Ok(Self { dim: self.dim, data: &self.data + &other.data })
    }

    pub fn to_matrix(&self) -> CMatrix {
        devectorize(self)
    }
}

/// A channel (or any linear map on operators) in the Liouville representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    data: CMatrix,
}

impl Superoperator {
    pub fn from_matrix(dim: usize, data: CMatrix) -> Result<Self> {
        if data.nrows() != dim * dim || data.ncols() != dim * dim {
            return Err(CharbError::Dimension(format!(
                "superoperator must be {0}×{0} for d = {dim}, got {1}×{2}",
                dim * dim,
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, data: CMatrix::identity(dim * dim, dim * dim) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    /// `self ∘ other`, i.e. `other` acts first.
    pub fn compose(&self, other: &Superoperator) -> Result<Self> {
        check_dims(self.dim, other.dim)?;
        Ok(Self { dim: self.dim, data: &self.data * &other.data })
    }

    pub fn apply(&self, v: &DensityVec) -> Result<DensityVec> {
        check_dims(self.dim, v.dim)?;
        Ok(DensityVec { dim: self.dim, data: &self.data * &v.data })
    }

    pub fn adjoint(&self) -> Self {
        Self { dim: self.dim, data: self.data.adjoint() }
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { dim: self.dim, data: &self.data * Complex64::new(s, 0.0) }
    }

    pub fn add(&self, other: &Superoperator) -> Result<Self> {
        check_dims(self.dim, other.dim)?;
        Ok(Self { dim: self.dim, data: &self.data + &other.data })
    }

    /// Choi matrix `J[(k,i),(l,j)] = Λ̂[(k,l),(i,j)]`, i.e. `Σ_ij Λ(|i⟩⟨j|) ⊗ |i⟩⟨j|`
    /// with the output factor first.
    pub fn choi(&self) -> CMatrix {
        let d = self.dim;
        let mut j = CMatrix::zeros(d * d, d * d);
        for k in 0..d {
            for l in 0..d {
                for i in 0..d {
                    for jj in 0..d {
                        j[(k * d + i, l * d + jj)] = self.data[(k * d + l, i * d + jj)];
                    }
                }
            }
        }
        j
    }

    /// Smallest eigenvalue of the Hermitian part of the Choi matrix.
    pub fn min_choi_eigenvalue(&self) -> f64 {
        let c = self.choi();
        let h = (&c + c.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = h.symmetric_eigenvalues();
        eig.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Largest deviation of `⟨⟨𝟙|Λ̂` from `⟨⟨𝟙|`.
    pub fn trace_preservation_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut s = ZERO;
                for k in 0..d {
                    s += self.data[(k * d + k, i * d + j)];
                }
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((s - target).norm());
            }
        }
        worst
    }

    /// CPTP check: Choi positivity within `tol` and trace preservation within `tol`.
    pub fn is_cptp(&self, tol: f64) -> bool {
        self.trace_preservation_defect() <= tol && self.min_choi_eigenvalue() >= -tol
    }

    /// Largest elementwise deviation from another superoperator.
    pub fn max_abs_diff(&self, other: &Superoperator) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(CharbError::Dimension(format!("dimension {a} does not match {b}")));
    }
    Ok(())
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn vectorize(rho: &CMatrix) -> Result<DensityVec> {
    let d = rho.nrows();
    if rho.ncols() != d {
        return Err(CharbError::Dimension(format!(
            "cannot vectorize a non-square {}×{} matrix",
            d,
            rho.ncols()
        )));
    }
    let data = CVector::from_fn(d * d, |k, _| rho[(k / d, k % d)]);
    Ok(DensityVec { dim: d, data })
}

pub fn devectorize(v: &DensityVec) -> CMatrix {
    let d = v.dim;
    CMatrix::from_fn(d, d, |i, j| v.data[i * d + j])
}

/// `Tr(A†B) = ⟨⟨A|B⟩⟩`.
pub fn hs_inner(a: &DensityVec, b: &DensityVec) -> Result<Complex64> {
    check_dims(a.dim, b.dim)?;
    Ok(a.data.dotc(&b.data))
}

pub fn is_unitary(u: &CMatrix, tol: f64) -> bool {
    if u.nrows() != u.ncols() {
        return false;
    }
    let prod = u.adjoint() * u;
    max_abs_diff(&prod, &CMatrix::identity(u.nrows(), u.nrows())) <= tol
}

pub fn unitary_to_super(u: &CMatrix) -> Result<Superoperator> {
    if !is_unitary(u, 1e-10) {
        return Err(CharbError::InvalidInput("matrix is not unitary within 1e-10".into()));
    }
    Ok(unitary_to_super_unchecked(u))
}

/// `U ⊗ U*` without the unitarity check.
pub fn unitary_to_super_unchecked(u: &CMatrix) -> Superoperator {
    let conj = u.map(|z| z.conj());
    Superoperator { dim: u.nrows(), data: u.kronecker(&conj) }
}

/// Deviation of `Σ A†A` from the identity.
pub fn kraus_completeness_defect(kraus: &[CMatrix]) -> f64 {
    let Some(first) = kraus.first() else { return f64::INFINITY };
    let d = first.nrows();
    let mut acc = CMatrix::zeros(d, d);
    for a in kraus {
        acc += a.adjoint() * a;
    }
    max_abs_diff(&acc, &CMatrix::identity(d, d))
}

/// `Σ A ⊗ A*`. Trace-decreasing Kraus sets are accepted; use
/// [`kraus_completeness_defect`] when completeness matters.
pub fn kraus_to_super(kraus: &[CMatrix]) -> Result<Superoperator> {
    let first = kraus
        .first()
        .ok_or_else(|| CharbError::InvalidInput("empty Kraus set".into()))?;
    let d = first.nrows();
    let mut data = CMatrix::zeros(d * d, d * d);
    for a in kraus {
        if a.nrows() != d || a.ncols() != d {
            return Err(CharbError::Dimension("Kraus operators must be square and equal-sized".into()));
        }
        data += a.kronecker(&a.map(|z| z.conj()));
    }
    Ok(Superoperator { dim: d, data })
}

/// Strict variant of [`kraus_to_super`] requiring completeness within 1e-8.
pub fn kraus_to_channel(kraus: &[CMatrix]) -> Result<Superoperator> {
    let defect = kraus_completeness_defect(kraus);
    if defect > 1e-8 {
        return Err(CharbError::InvalidInput(format!(
            "Kraus operators are not trace preserving (defect {defect:.3e})"
        )));
    }
    kraus_to_super(kraus)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let z = CMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { ONE };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Haar-random element of SO(dim), `dim` even.
pub fn haar_special_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(CharbError::InvalidInput(format!("SO sampling needs an even positive dimension, got {dim}")));
    }
    let mut buf = vec![0.0; dim * dim];
    sample_special_orthogonal_into(dim, rng, &mut buf);
    Ok(DMatrix::from_row_slice(dim, dim, &buf))
}

/// Row-major Haar SO(dim) sample written into `out` without allocating.
///
/// Gram–Schmidt (with reorthogonalization) on Gaussian columns gives the QR factor with a positive
/// diagonal of R, which is Haar on O(dim); the first column is negated when the
/// determinant comes out negative.
pub fn sample_special_orthogonal_into<R: Rng + ?Sized>(dim: usize, rng: &mut R, out: &mut [f64]) {
    debug_assert_eq!(out.len(), dim * dim);
    for x in out.iter_mut() {
        *x = rng.sample(StandardNormal);
    }
    // columns are out[i*dim + j] for fixed j
    for j in 0..dim {
        // two passes keep orthogonality at machine precision
        for _ in 0..2 {
            for k in 0..j {
                let mut dot = 0.0;
                for i in 0..dim {
                    dot += out[i * dim + j] * out[i * dim + k];
                }
                for i in 0..dim {
                    out[i * dim + j] -= dot * out[i * dim + k];
                }
            }
        }
        let mut norm = 0.0;
        for i in 0..dim {
            norm += out[i * dim + j] * out[i * dim + j];
        }
        let inv = 1.0 / norm.sqrt();
        for i in 0..dim {
            out[i * dim + j] *= inv;
        }
    }
    if real_determinant(dim, out) < 0.0 {
        for i in 0..dim {
            out[i * dim] = -out[i * dim];
        }
    }
}

/// Determinant of a small row-major real matrix by Gaussian elimination.
pub fn real_determinant(dim: usize, m: &[f64]) -> f64 {
    let mut a = m.to_vec();
    let mut det = 1.0;
    for c in 0..dim {
        let mut p = c;
        for r in c + 1..dim {
            if a[r * dim + c].abs() > a[p * dim + c].abs() {
                p = r;
            }
        }
        if a[p * dim + c] == 0.0 {
            return 0.0;
        }
        if p != c {
            for k in 0..dim {
                a.swap(c * dim + k, p * dim + k);
            }
            det = -det;
        }
        let piv = a[c * dim + c];
        det *= piv;
        for r in c + 1..dim {
            let f = a[r * dim + c] / piv;
            if f != 0.0 {
                for k in c..dim {
                    a[r * dim + k] -= f * a[c * dim + k];
                }
            }
        }
    }
    det
}

/// An orthonormal basis of Hermitian operators, used to express superoperators
/// as real matrices (transfer matrices) for fast simulation.
#[derive(Debug, Clone)]
pub struct HermitianFrame {
    dim: usize,
    /// Columns are the vectorized basis operators.
    basis: CMatrix,
}

impl HermitianFrame {
    /// Standard basis: `|k⟩⟨k|`, `(|j⟩⟨k|+|k⟩⟨j|)/√2`, `i(|k⟩⟨j|−|j⟩⟨k|)/√2`.
    pub fn standard(dim: usize) -> Self {
        let d2 = dim * dim;
        let mut basis = CMatrix::zeros(d2, d2);
        let mut col = 0;
        for k in 0..dim {
            basis[(k * dim + k, col)] = ONE;
            col += 1;
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for j in 0..dim {
            for k in j + 1..dim {
                basis[(j * dim + k, col)] = Complex64::new(s, 0.0);
                basis[(k * dim + j, col)] = Complex64::new(s, 0.0);
                col += 1;
                basis[(j * dim + k, col)] = Complex64::new(0.0, -s);
                basis[(k * dim + j, col)] = Complex64::new(0.0, s);
                col += 1;
            }
        }
        Self { dim, basis }
    }

    /// Frame from explicit Hermitian, HS-orthonormal operators.
    pub fn from_operators(ops: &[CMatrix]) -> Result<Self> {
        let first = ops.first().ok_or_else(|| CharbError::InvalidInput("empty frame".into()))?;
        let dim = first.nrows();
        if ops.len() != dim * dim {
            return Err(CharbError::Dimension("frame must contain d² operators".into()));
        }
        let mut basis = CMatrix::zeros(dim * dim, dim * dim);
        for (c, op) in ops.iter().enumerate() {
            if max_abs_diff(op, &op.adjoint()) > 1e-12 {
                return Err(CharbError::InvalidInput("frame operator is not Hermitian".into()));
            }
            let v = vectorize(op)?;
            basis.set_column(c, v.data());
        }
        let gram = basis.adjoint() * &basis;
        if max_abs_diff(&gram, &CMatrix::identity(dim * dim, dim * dim)) > 1e-10 {
            return Err(CharbError::InvalidInput("frame operators are not orthonormal".into()));
        }
        Ok(Self { dim, basis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    /// Real transfer matrix `B†Λ̂B`, row-major.
    pub fn transfer_matrix(&self, s: &Superoperator) -> Vec<f64> {
        let m = self.basis.adjoint() * s.matrix() * &self.basis;
        let n = m.nrows();
        let mut out = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                out[r * n + c] = m[(r, c)].re;
            }
        }
        out
    }

    /// Real coordinates `B†|v⟩⟩` of a Hermitian operator.
    pub fn coordinates(&self, v: &DensityVec) -> Vec<f64> {
        let c = self.basis.adjoint() * v.data();
        c.iter().map(|z| z.re).collect()
    }
}

/// Row-major dense matrix–vector product `out = m·v`.
#[inline]
pub fn real_matvec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * n..(r + 1) * n];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(v.iter()) {
            acc += a * b;
        }
        *o = acc;
    }
}

/// Row-major product of two square real matrices.
pub fn real_matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// Pauli matrices indexed 0..4 as I, X, Y, Z.
pub fn pauli(k: usize) -> CMatrix {
    let z = ZERO;
    let o = ONE;
    match k {
        0 => CMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        1 => CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        2 => CMatrix::from_row_slice(2, 2, &[z, -I, I, z]),
        3 => CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => panic!("pauli index must be < 4"),
    }
}

/// Kronecker product of a list of matrices (first factor most significant).
pub fn kron_all(ms: &[CMatrix]) -> CMatrix {
    let mut acc = CMatrix::identity(1, 1);
    for m in ms {
        acc = acc.kronecker(m);
    }
    acc
}
