//! Majorana operators and compilation of SO(2n) rotations into nearest-neighbor
//! matchgate circuits.
//!
//! Conventions. Qubit 1 is the most significant bit of a basis index. The
//! Majoranas are `c_{2k−1} = Z₁⋯Z_{k−1}X_k` and `c_{2k} = Z₁⋯Z_{k−1}Y_k`. The
//! rotation induced by a unitary is read off from `U c_ℓ U† = Σ_m R_{ℓm} c_m`,
//! which makes `U ↦ R` an anti-homomorphism: `R(U₁U₂) = R(U₂)R(U₁)`.
//!
//! A gate `(ℓ, m, θ)` is the unitary `exp((θ/2) c_ℓ c_m)`. It maps
//! `c_ℓ ↦ cos θ c_ℓ − sin θ c_m` and `c_m ↦ sin θ c_ℓ + cos θ c_m`, so its
//! induced rotation is [`givens`]`(ℓ, m, θ)`. A circuit `g₁, …, g_K` (time
//! order) realizes `U_K⋯U₁` whose rotation is `G(g₁)⋯G(g_K)`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CharbError, Result};
use crate::liouville::{CMatrix, ONE};

/// Sparse Pauli operator `i^phase · X^x · Z^z` on at most 64 qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PauliString {
    pub x: u64,
    pub z: u64,
    pub phase: u8,
}

impl PauliString {
    pub fn identity() -> Self {
        Self { x: 0, z: 0, phase: 0 }
    }

    pub fn mul(&self, other: &PauliString) -> PauliString {
        let swaps = (self.z & other.x).count_ones() as u8;
        PauliString {
            x: self.x ^ other.x,
            z: self.z ^ other.z,
            phase: (self.phase + other.phase + 2 * swaps) % 4,
        }
    }

    pub fn phase_factor(&self) -> Complex64 {
        match self.phase % 4 {
            0 => ONE,
            1 => Complex64::new(0.0, 1.0),
            2 => -ONE,
            _ => Complex64::new(0.0, -1.0),
        }
    }

    /// Amplitude and target of `P|b⟩`.
    #[inline]
    pub fn act(&self, b: usize) -> (Complex64, usize) {
        let sign = if (self.z & b as u64).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        (self.phase_factor() * sign, b ^ self.x as usize)
    }

    pub fn to_dense(&self, n: usize) -> CMatrix {
        let dim = 1usize << n;
        let mut m = CMatrix::zeros(dim, dim);
        for b in 0..dim {
            let (amp, t) = self.act(b);
            m[(t, b)] = amp;
        }
        m
    }

    /// `M ← (a𝟙 + bP)·M` in place.
    pub fn left_apply_affine(&self, a: Complex64, b: Complex64, m: &mut CMatrix) {
        let dim = m.nrows();
        let src = m.clone();
        for row in 0..dim {
            let (amp, t) = self.act(row);
            for col in 0..m.ncols() {
                m[(t, col)] = a * src[(t, col)] + b * amp * src[(row, col)];
            }
        }
    }
}

fn qubit_bit(q: usize, n: usize) -> u64 {
    1u64 << (n - q)
}

/// Majorana `c_k` (1-based) as a Pauli string.
pub fn majorana_pauli(k: usize, n: usize) -> Result<PauliString> {
    if k == 0 || k > 2 * n || n == 0 || n > 63 {
        return Err(CharbError::InvalidInput(format!("Majorana index {k} out of range for n = {n}")));
    }
    let q = (k + 1) / 2;
    let zmask: u64 = (1..q).map(|j| qubit_bit(j, n)).fold(0, |a, b| a | b);
    let xb = qubit_bit(q, n);
    Ok(if k % 2 == 1 {
        PauliString { x: xb, z: zmask, phase: 0 }
    } else {
        PauliString { x: xb, z: zmask | xb, phase: 1 }
    })
}

/// Dense `2ⁿ×2ⁿ` Majorana operator `c_k`.
pub fn majorana(k: usize, n: usize) -> Result<CMatrix> {
    Ok(majorana_pauli(k, n)?.to_dense(n))
}

/// Product `c_{s₁}⋯c_{s_r}` for an increasing index list (1-based).
pub fn monomial_pauli(indices: &[usize], n: usize) -> Result<PauliString> {
    let mut p = PauliString::identity();
    for &k in indices {
        p = p.mul(&majorana_pauli(k, n)?);
    }
    Ok(p)
}

/// A planar rotation of Majorana indices `ell < m` (1-based) by `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MajoranaRotation {
    pub ell: usize,
    pub m: usize,
    pub theta: f64,
}

impl MajoranaRotation {
    pub fn is_nearest_neighbor(&self) -> bool {
        self.m.div_ceil(2) - self.ell.div_ceil(2) <= 1
    }
}

/// Givens matrix with `[ℓ][ℓ] = [m][m] = cos θ`, `[ℓ][m] = −sin θ`, `[m][ℓ] = sin θ`.
pub fn givens(dim: usize, ell: usize, m: usize, theta: f64) -> DMatrix<f64> {
    let mut g = DMatrix::identity(dim, dim);
    let (s, c) = theta.sin_cos();
    let (a, b) = (ell - 1, m - 1);
    g[(a, a)] = c;
    g[(b, b)] = c;
    g[(a, b)] = -s;
    g[(b, a)] = s;
    g
}

/// Product `G(g₁)⋯G(g_K)`.
pub fn rotation_of_gates(dim: usize, gates: &[MajoranaRotation]) -> DMatrix<f64> {
    let mut r = DMatrix::identity(dim, dim);
    for g in gates {
        r *= givens(dim, g.ell, g.m, g.theta);
    }
    r
}

fn check_special_orthogonal(r: &DMatrix<f64>, tol: f64) -> Result<()> {
    let n = r.nrows();
    if n != r.ncols() || n % 2 != 0 || n == 0 {
        return Err(CharbError::InvalidInput("rotation must be a square matrix of even size".into()));
    }
    let dev = (r.transpose() * r - DMatrix::identity(n, n)).abs().max();
    if dev > tol {
        return Err(CharbError::InvalidInput(format!("matrix is not orthogonal (deviation {dev:.2e})")));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > tol.max(1e-8) {
        return Err(CharbError::InvalidInput(format!("rotation has determinant {det:.6}, expected +1")));
    }
    Ok(())
}

/// One elimination step of the adjacent-pair Givens reduction.
#[derive(Debug, Clone, Copy)]
pub struct GivensStep {
    /// 0-based upper index of the adjacent pair `(k, k+1)`.
    pub k: usize,
    pub cos: f64,
    pub sin: f64,
}

/// Streams the adjacent-pair decomposition of a row-major rotation `r`
/// (destroyed in the process) to `emit`. Steps come out in time order, so the
/// product of their Givens matrices in that order reproduces the input.
///
/// Columns are cleared left to right, each from the bottom up, by rotating
/// rows `(i−1, i)`. The pivot step uses a non-negative radius so the diagonal
/// ends at +1; the other steps keep the sign of the upper entry so that a zero
/// lower entry yields the identity.
pub fn hoffman_stream<F: FnMut(GivensStep)>(dim: usize, r: &mut [f64], mut emit: F) {
    for j in 0..dim.saturating_sub(1) {
        for i in (j + 1..dim).rev() {
            let a = r[(i - 1) * dim + j];
            let b = r[i * dim + j];
            if b == 0.0 && (i - 1 != j || a >= 0.0) {
                continue;
            }
            let h = a.hypot(b);
            let rad = if i - 1 == j || a >= 0.0 { h } else { -h };
            let (c, s) = (a / rad, b / rad);
            for col in j..dim {
                let x = r[(i - 1) * dim + col];
                let y = r[i * dim + col];
                r[(i - 1) * dim + col] = c * x + s * y;
                r[i * dim + col] = -s * x + c * y;
            }
            emit(GivensStep { k: i - 1, cos: c, sin: s });
        }
    }
}

/// Decomposes `R ∈ SO(2n)` into at most `n(2n−1)` Givens rotations with
/// `R = G(g₁)⋯G(g_K)`. Near-zero angles are dropped.
pub fn hoffman_decompose(r: &DMatrix<f64>) -> Result<Vec<MajoranaRotation>> {
    check_special_orthogonal(r, 1e-10)?;
    let dim = r.nrows();
    let mut buf: Vec<f64> = (0..dim * dim).map(|k| r[(k / dim, k % dim)]).collect();
    let mut out = Vec::new();
    hoffman_stream(dim, &mut buf, |st| {
        let theta = st.sin.atan2(st.cos);
        if theta.abs() >= 1e-12 {
            out.push(MajoranaRotation { ell: st.k + 1, m: st.k + 2, theta });
        }
    });
    Ok(out)
}

/// Rewrites `(ℓ, m, θ)` as nearest-neighbor gates by conjugating with a chain
/// of quarter turns that carries `c_ℓ` next to `c_m`.
pub fn route_rotation(ell: usize, m: usize, theta: f64, n: usize) -> Result<Vec<MajoranaRotation>> {
    if ell == 0 || ell >= m || m > 2 * n {
        return Err(CharbError::InvalidInput(format!("invalid Majorana pair ({ell}, {m}) for n = {n}")));
    }
    let gap = m.div_ceil(2) - ell.div_ceil(2);
    if gap <= 1 {
        return Ok(vec![MajoranaRotation { ell, m, theta }]);
    }
    let s = gap - 1;
    let half = std::f64::consts::FRAC_PI_2;
    let mut gates = Vec::with_capacity(2 * s + 1);
    for j in 0..s {
        gates.push(MajoranaRotation { ell: ell + 2 * j, m: ell + 2 * j + 2, theta: -half });
    }
    gates.push(MajoranaRotation { ell: ell + 2 * s, m, theta });
    for j in (0..s).rev() {
        gates.push(MajoranaRotation { ell: ell + 2 * j, m: ell + 2 * j + 2, theta: half });
    }
    Ok(gates)
}

/// `exp((θ/2)c_ℓc_m) = cos(θ/2)𝟙 + sin(θ/2)c_ℓc_m` for a nearest-neighbor gate.
///
/// The spin double cover shows up at θ = 2π, which gives −𝟙; the natural
/// representation is unaffected.
pub fn rotation_unitary(g: &MajoranaRotation, n: usize) -> Result<CMatrix> {
    if !g.is_nearest_neighbor() {
        return Err(CharbError::InvalidInput(format!(
            "gate ({}, {}) is not nearest-neighbor; route it first",
            g.ell, g.m
        )));
    }
    let dim = 1usize << n;
    let mut u = CMatrix::identity(dim, dim);
    apply_gate_left(g, n, &mut u)?;
    Ok(u)
}

fn apply_gate_left(g: &MajoranaRotation, n: usize, u: &mut CMatrix) -> Result<()> {
    let p = majorana_pauli(g.ell, n)?.mul(&majorana_pauli(g.m, n)?);
    let half = 0.5 * g.theta;
    p.left_apply_affine(Complex64::new(half.cos(), 0.0), Complex64::new(half.sin(), 0.0), u);
    Ok(())
}

/// A nearest-neighbor matchgate circuit in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchgateCircuit {
    pub n: usize,
    pub gates: Vec<MajoranaRotation>,
}

impl MatchgateCircuit {
    pub fn to_text(&self) -> String {
        let mut s = format!("matchgate-circuit v1 n={}\n", self.n);
        for g in &self.gates {
            let _ = writeln!(s, "{} {} {:.16e}", g.ell, g.m, g.theta);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| CharbError::InvalidInput("empty circuit file".into()))?;
        let n = header
            .trim()
            .strip_prefix("matchgate-circuit v1 n=")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| CharbError::InvalidInput(format!("bad circuit header: {header}")))?;
        let mut gates = Vec::new();
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || CharbError::InvalidInput(format!("bad gate line: {line}"));
            if parts.len() != 3 {
                return Err(bad());
            }
            gates.push(MajoranaRotation {
                ell: parts[0].parse().map_err(|_| bad())?,
                m: parts[1].parse().map_err(|_| bad())?,
                theta: parts[2].parse().map_err(|_| bad())?,
            });
        }
        Ok(Self { n, gates })
    }

    /// `U_K⋯U₁`.
    pub fn unitary(&self) -> Result<CMatrix> {
        let dim = 1usize << self.n;
        let mut u = CMatrix::identity(dim, dim);
        for g in &self.gates {
            if !g.is_nearest_neighbor() {
                return Err(CharbError::InvalidInput("circuit contains a non-nearest-neighbor gate".into()));
            }
            apply_gate_left(g, self.n, &mut u)?;
        }
        Ok(u)
    }

    pub fn rotation(&self) -> DMatrix<f64> {
        rotation_of_gates(2 * self.n, &self.gates)
    }
}

/// Compiles a rotation into a nearest-neighbor circuit of at most `4n³` gates.
pub fn compile(r: &DMatrix<f64>) -> Result<MatchgateCircuit> {
    let n = r.nrows() / 2;
    let mut gates = Vec::new();
    for g in hoffman_decompose(r)? {
        for h in route_rotation(g.ell, g.m, g.theta, n)? {
            if h.theta.abs() >= 1e-12 {
                gates.push(h);
            }
        }
    }
    Ok(MatchgateCircuit { n, gates })
}

/// A unitary whose induced rotation is `r`.
pub fn unitary_from_rotation(r: &DMatrix<f64>) -> Result<CMatrix> {
    compile(r)?.unitary()
}

/// `R_{ℓm} = Tr(c_m U c_ℓ U†)/2ⁿ`, rejecting unitaries that leave the Majorana span.
pub fn induced_rotation(u: &CMatrix) -> Result<DMatrix<f64>> {
    let dim = u.nrows();
    if dim != u.ncols() || !dim.is_power_of_two() || dim < 2 {
        return Err(CharbError::InvalidInput("unitary must be 2ⁿ×2ⁿ".into()));
    }
    let n = dim.trailing_zeros() as usize;
    let cs: Vec<CMatrix> = (1..=2 * n).map(|k| majorana(k, n)).collect::<Result<_>>()?;
    let ud = u.adjoint();
    let mut r = DMatrix::zeros(2 * n, 2 * n);
    for l in 0..2 * n {
        let conj = u * &cs[l] * &ud;
        let mut residual = conj.clone();
        for m in 0..2 * n {
            let coef = (&cs[m] * &conj).trace() / dim as f64;
            if coef.im.abs() > 1e-6 {
                return Err(CharbError::InvalidInput("conjugated Majorana has complex coefficients".into()));
            }
            r[(l, m)] = coef.re;
            residual -= &cs[m] * Complex64::new(coef.re, 0.0);
        }
        let res = residual.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / (dim as f64).sqrt();
        if res > 1e-6 {
            return Err(CharbError::InvalidInput(format!(
                "unitary does not map Majoranas into their span (residual {res:.2e})"
            )));
        }
    }
    Ok(r)
}

/// Sign of the permutation sorting the concatenation of two index lists.
pub fn concat_sort_sign(a: &[usize], b: &[usize]) -> f64 {
    let seq: Vec<usize> = a.iter().chain(b.iter()).cloned().collect();
    let mut inv = 0usize;
    for i in 0..seq.len() {
        for j in i + 1..seq.len() {
            if seq[i] > seq[j] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Indices (1-based) of the set bits of a subset mask over `2n` Majoranas.
pub fn mask_indices(mask: u64) -> Vec<usize> {
    (0..64).filter(|b| mask >> b & 1 == 1).map(|b| b as usize + 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouville::{haar_special_orthogonal, max_abs_diff, pauli, kron_all};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_exp_gate(g: &MajoranaRotation, n: usize) -> CMatrix {
        // independent oracle: exponentiate via eigen-free series on (θ/2)c_ℓc_m
        let a = majorana(g.ell, n).unwrap() * majorana(g.m, n).unwrap() * Complex64::new(0.5 * g.theta, 0.0);
        let dim = 1 << n;
        let mut term = CMatrix::identity(dim, dim);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &a / Complex64::new(k as f64, 0.0);
            sum += &term;
        }
        sum
    }

    #[test]
    fn majorana_examples() {
        assert!(max_abs_diff(&majorana(1, 1).unwrap(), &pauli(1)) < 1e-15);
        assert!(max_abs_diff(&majorana(2, 1).unwrap(), &pauli(2)) < 1e-15);
        let c3 = majorana(3, 2).unwrap();
        assert!(max_abs_diff(&c3, &kron_all(&[pauli(3), pauli(1)])) < 1e-15);
        assert!(majorana(0, 2).is_err());
        assert!(majorana(5, 2).is_err());
    }

    #[test]
    fn majoranas_anticommute() {
        for n in 1..=4 {
            let dim = 1 << n;
            let cs: Vec<CMatrix> = (1..=2 * n).map(|k| majorana(k, n).unwrap()).collect();
            for (l, a) in cs.iter().enumerate() {
                assert!(max_abs_diff(a, &a.adjoint()) < 1e-15);
                for (m, b) in cs.iter().enumerate() {
                    let anti = a * b + b * a;
                    let expect = if l == m { CMatrix::identity(dim, dim) * Complex64::new(2.0, 0.0) } else { CMatrix::zeros(dim, dim) };
                    assert!(max_abs_diff(&anti, &expect) < 1e-14);
                }
            }
        }
    }

    #[test]
    fn pauli_string_product_matches_dense() {
        let n = 3;
        for a in 1..=6 {
            for b in 1..=6 {
                let pa = majorana_pauli(a, n).unwrap();
                let pb = majorana_pauli(b, n).unwrap();
                let dense = pa.to_dense(n) * pb.to_dense(n);
                assert!(max_abs_diff(&pa.mul(&pb).to_dense(n), &dense) < 1e-15);
            }
        }
    }

    #[test]
    fn gate_example_matches_y2x3() {
        let n = 3;
        let theta = 0.37;
        let g = MajoranaRotation { ell: 3, m: 5, theta };
        let u = rotation_unitary(&g, n).unwrap();
        let yx = kron_all(&[pauli(0), pauli(2), pauli(1)]);
        let expect = CMatrix::identity(8, 8) * Complex64::new((theta / 2.0).cos(), 0.0)
            - yx * Complex64::new(0.0, (theta / 2.0).sin());
        assert!(max_abs_diff(&u, &expect) < 1e-14);
        assert_eq!(route_rotation(3, 5, theta, n).unwrap().len(), 1);
    }

    #[test]
    fn gate_conjugation_action() {
        let n = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        use rand::Rng;
        for _ in 0..50 {
            let ell = rng.gen_range(1usize..6);
            let mut m = rng.gen_range(ell + 1..=6);
            if m.div_ceil(2) - ell.div_ceil(2) > 1 {
                m = ell + 1;
            }
            let theta: f64 = rng.gen_range(-3.0..3.0);
            let g = MajoranaRotation { ell, m, theta };
            let u = rotation_unitary(&g, n).unwrap();
            assert!(max_abs_diff(&u, &dense_exp_gate(&g, n)) < 1e-12);
            let cl = majorana(ell, n).unwrap();
            let cm = majorana(m, n).unwrap();
            let (s, c) = theta.sin_cos();
            let lhs = &u * &cl * u.adjoint();
            let rhs = &cl * Complex64::new(c, 0.0) - &cm * Complex64::new(s, 0.0);
            assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
            let lhs = &u * &cm * u.adjoint();
            let rhs = &cl * Complex64::new(s, 0.0) + &cm * Complex64::new(c, 0.0);
            assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
            for k in 1..=6 {
                if k != ell && k != m {
                    let ck = majorana(k, n).unwrap();
                    assert!(max_abs_diff(&(&u * &ck * u.adjoint()), &ck) < 1e-12);
                }
            }
            let r = induced_rotation(&u).unwrap();
            assert!((r - givens(6, ell, m, theta)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn full_turn_is_minus_identity() {
        let g = MajoranaRotation { ell: 1, m: 2, theta: 2.0 * std::f64::consts::PI };
        let u = rotation_unitary(&g, 2).unwrap();
        assert!(max_abs_diff(&u, &(CMatrix::identity(4, 4) * -ONE)) < 1e-12);
        let z = rotation_unitary(&MajoranaRotation { ell: 1, m: 2, theta: 0.0 }, 2).unwrap();
        assert!(max_abs_diff(&z, &CMatrix::identity(4, 4)) < 1e-15);
        assert!(rotation_unitary(&MajoranaRotation { ell: 1, m: 5, theta: 0.1 }, 3).is_err());
    }

    #[test]
    fn hoffman_examples() {
        assert!(hoffman_decompose(&DMatrix::identity(6, 6)).unwrap().is_empty());
        let r = givens(6, 1, 2, 0.8);
        let gs = hoffman_decompose(&r).unwrap();
        assert_eq!(gs.len(), 1);
        assert_eq!((gs[0].ell, gs[0].m), (1, 2));
        assert!((gs[0].theta - 0.8).abs() < 1e-14);
        let mut refl = DMatrix::<f64>::identity(4, 4);
        refl[(0, 0)] = -1.0;
        assert!(hoffman_decompose(&refl).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let r = haar_special_orthogonal(6, &mut rng).unwrap();
            let gs = hoffman_decompose(&r).unwrap();
            assert!(gs.len() <= 15);
            assert!((rotation_of_gates(6, &gs) - &r).abs().max() < 1e-9);
        }
    }

    #[test]
    fn routing_examples() {
        assert_eq!(route_rotation(1, 2, 0.3, 3).unwrap().len(), 1);
        let gates = route_rotation(1, 6, 0.3, 3).unwrap();
        assert_eq!(gates.len(), 3);
        assert!(gates.iter().all(|g| g.is_nearest_neighbor()));
        assert!((rotation_of_gates(6, &gates) - givens(6, 1, 6, 0.3)).abs().max() < 1e-12);
        for ell in 1..8 {
            for m in ell + 1..=8 {
                let gates = route_rotation(ell, m, -1.1, 4).unwrap();
                let s = (m.div_ceil(2) - ell.div_ceil(2)).saturating_sub(1);
                assert_eq!(gates.len(), 2 * s + 1);
                assert!((rotation_of_gates(8, &gates) - givens(8, ell, m, -1.1)).abs().max() < 1e-12);
            }
        }
    }

    #[test]
    fn compile_round_trip_and_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in 2..=3 {
            for _ in 0..20 {
                let r = haar_special_orthogonal(2 * n, &mut rng).unwrap();
                let circ = compile(&r).unwrap();
                assert!(circ.gates.len() <= 4 * n * n * n);
                let u = circ.unitary().unwrap();
                assert!((induced_rotation(&u).unwrap() - &r).abs().max() < 1e-9);
                // parity: U commutes with Z⊗…⊗Z
                let parity = kron_all(&vec![pauli(3); n]);
                assert!(max_abs_diff(&(&u * &parity), &(&parity * &u)) < 1e-12);
            }
        }
        let empty = compile(&DMatrix::identity(4, 4)).unwrap();
        assert!(empty.gates.is_empty());
        assert!(max_abs_diff(&empty.unitary().unwrap(), &CMatrix::identity(4, 4)) < 1e-15);
    }

    #[test]
    fn two_qubit_matchgate_form() {
        // for n = 2 the unitary acts on even {00,11} and odd {01,10} sectors with equal determinants
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let r = haar_special_orthogonal(4, &mut rng).unwrap();
            let u = unitary_from_rotation(&r).unwrap();
            let a = CMatrix::from_row_slice(2, 2, &[u[(0, 0)], u[(0, 3)], u[(3, 0)], u[(3, 3)]]);
            let b = CMatrix::from_row_slice(2, 2, &[u[(1, 1)], u[(1, 2)], u[(2, 1)], u[(2, 2)]]);
            for (i, j) in [(0, 1), (0, 2), (1, 0), (2, 0), (3, 1), (3, 2), (1, 3), (2, 3)] {
                assert!(u[(i, j)].norm() < 1e-12);
            }
            assert!((a.determinant() - b.determinant()).norm() < 1e-10);
        }
    }

    #[test]
    fn anti_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let r1 = haar_special_orthogonal(6, &mut rng).unwrap();
            let r2 = haar_special_orthogonal(6, &mut rng).unwrap();
            let u1 = unitary_from_rotation(&r1).unwrap();
            let u2 = unitary_from_rotation(&r2).unwrap();
            let u12 = unitary_from_rotation(&(&r1 * &r2)).unwrap();
            // R(U₂U₁) = R₁R₂, so U(R₁R₂) equals U₂U₁ up to sign
            let prod = &u2 * &u1;
            let ov = (u12.adjoint() * &prod).trace() / 8.0;
            assert!((ov.norm() - 1.0).abs() < 1e-9);
            assert!((ov.re.abs() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn non_matchgate_is_rejected() {
        let h = CMatrix::from_row_slice(2, 2, &[ONE, ONE, ONE, -ONE]) * Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let u = kron_all(&[h, pauli(0)]);
        assert!(induced_rotation(&u).is_err());
        assert!(max_abs_diff(
            &induced_rotation(&CMatrix::identity(4, 4)).unwrap().map(|x| Complex64::new(x, 0.0)),
            &CMatrix::identity(4, 4)
        ) < 1e-15);
    }

    #[test]
    fn circuit_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = haar_special_orthogonal(6, &mut rng).unwrap();
        let c = compile(&r).unwrap();
        let text = c.to_text();
        assert!(text.starts_with("matchgate-circuit v1 n=3\n"));
        let back = MatchgateCircuit::from_text(&text).unwrap();
        assert_eq!(back.gates.len(), c.gates.len());
        for (a, b) in back.gates.iter().zip(&c.gates) {
            assert_eq!(a.theta, b.theta);
        }
        assert!(MatchgateCircuit::from_text("nonsense").is_err());
    }

    #[test]
    fn small_generator_expansion() {
        // R = exp(2εA) with A supported on the first qubit's pair gives U ≈ 𝟙 + ε α₁₂ c₁c₂
        let eps = 1e-5;
        let mut a = DMatrix::<f64>::zeros(4, 4);
        a[(0, 1)] = -0.7;
        a[(1, 0)] = 0.7;
        let r = (a.clone() * (2.0 * eps)).exp();
        let u = unitary_from_rotation(&r).unwrap();
        let c12 = majorana(1, 2).unwrap() * majorana(2, 2).unwrap();
        let approx = CMatrix::identity(4, 4) + c12 * Complex64::new(0.7 * eps, 0.0);
        // sign of the lift is not fixed; compare up to ±
        let d1 = max_abs_diff(&u, &approx);
        let d2 = max_abs_diff(&u, &(approx.clone() * -ONE));
        assert!(d1.min(d2) < 1e-9);
    }
}
