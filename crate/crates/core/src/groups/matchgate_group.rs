use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use super::{ket, rank_projector, IrrepPlan};
use crate::error::{CharbError, Result};
use crate::fitting::FitModel;
use crate::liouville::{
    haar_special_orthogonal, kron_all, pauli, unitary_to_super, vectorize, CMatrix, CVector, DensityVec,
    HermitianFrame, Superoperator, ONE,
};
use crate::matchgate::{concat_sort_sign, mask_indices, monomial_pauli, unitary_from_rotation};
use crate::reptheory::{commutant_blocks, IrrepDescriptor};

/// A matchgate group element, stored as its SO(2n) rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchgateElement {
    pub rotation: DMatrix<f64>,
}

impl MatchgateElement {
    pub fn diagonal(signs: &[i8]) -> Self {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(signs.len(), signs.iter().map(|&s| s as f64)));
        Self { rotation: d }
    }

    pub fn unitary(&self) -> Result<CMatrix> {
        unitary_from_rotation(&self.rotation)
    }

    pub fn superop(&self) -> Result<Superoperator> {
        unitary_to_super(&self.unitary()?)
    }
}

/// The matchgate group on `n` qubits, acting on Majoranas through SO(2n).
#[derive(Debug, Clone)]
pub struct MatchgateGroup {
    n: usize,
    masks: Vec<u64>,
    index_of: Vec<u32>,
    frame: HermitianFrame,
    pairs: Vec<Vec<(u32, u32)>>,
    irreps: Vec<IrrepDescriptor>,
}

fn subsets_of_size(total: usize, k: usize) -> Vec<u64> {
    // lexicographic order on sorted index lists
    fn rec(start: usize, total: usize, k: usize, cur: u64, out: &mut Vec<u64>) {
        if k == 0 {
            out.push(cur);
            return;
        }
        for i in start..total {
            if total - i < k {
                break;
            }
            rec(i + 1, total, k - 1, cur | (1 << i), out);
        }
    }
    let mut out = Vec::new();
    rec(0, total, k, 0, &mut out);
    out
}

impl MatchgateGroup {
    pub fn new(n: usize) -> Result<Self> {
        if !(2..=6).contains(&n) {
            return Err(CharbError::InvalidInput(format!("matchgate group supports 2 ≤ n ≤ 6, got {n}")));
        }
        let m = 2 * n;
        let masks: Vec<u64> = (0..=m).flat_map(|k| subsets_of_size(m, k)).collect();
        let mut index_of = vec![0u32; 1 << m];
        for (i, &s) in masks.iter().enumerate() {
            index_of[s as usize] = i as u32;
        }
        let norm = (1u64 << n) as f64;
        let ops: Vec<CMatrix> = masks
            .iter()
            .map(|&s| {
                let idx = mask_indices(s);
                let k = idx.len();
                let kappa = if (k * k.saturating_sub(1) / 2) % 2 == 0 { ONE } else { Complex64::new(0.0, 1.0) };
                monomial_pauli(&idx, n).expect("valid indices").to_dense(n) * (kappa / norm.sqrt())
            })
            .collect();
        let frame = HermitianFrame::from_operators(&ops)?;
        let pairs = (0..m - 1)
            .map(|k| {
                masks
                    .iter()
                    .filter(|&&s| s >> k & 1 == 1 && s >> (k + 1) & 1 == 0)
                    .map(|&s| {
                        let t = (s & !(1 << k)) | (1 << (k + 1));
                        (index_of[s as usize], index_of[t as usize])
                    })
                    .collect()
            })
            .collect();
        let mut g = Self { n, masks, index_of, frame, pairs, irreps: Vec::new() };
        g.irreps = g.build_irreps()?;
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn name(&self) -> String {
        format!("matchgate:n={}", self.n)
    }

    /// Majorana subsets as bitmasks in frame order (degree, then lexicographic).
    pub fn masks(&self) -> &[u64] {
        &self.masks
    }

    pub fn mask_position(&self, mask: u64) -> usize {
        self.index_of[mask as usize] as usize
    }

    /// Frame of Hermitian monomials `κ_S c_S / 2^{n/2}`.
    pub fn frame(&self) -> &HermitianFrame {
        &self.frame
    }

    /// Frame index pairs `(S, S')` with `k ∈ S`, `k+1 ∉ S` and `S' = S − k + (k+1)` (0-based `k`).
    pub fn adjacent_pairs(&self, k: usize) -> &[(u32, u32)] {
        &self.pairs[k]
    }

    pub fn irreps(&self) -> &[IrrepDescriptor] {
        &self.irreps
    }

    pub fn identity(&self) -> MatchgateElement {
        MatchgateElement { rotation: DMatrix::identity(2 * self.n, 2 * self.n) }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MatchgateElement {
        MatchgateElement { rotation: haar_special_orthogonal(2 * self.n, rng).expect("even dimension") }
    }

    /// Element for the unitary product `later · earlier`.
    pub fn compose(&self, later: &MatchgateElement, earlier: &MatchgateElement) -> MatchgateElement {
        MatchgateElement { rotation: &earlier.rotation * &later.rotation }
    }

    pub fn inverse(&self, g: &MatchgateElement) -> MatchgateElement {
        MatchgateElement { rotation: g.rotation.transpose() }
    }

    /// `|S⟩⟩ = vec(c_S)/2^{n/2}`.
    pub fn monomial_vector(&self, mask: u64) -> CVector {
        let op = monomial_pauli(&mask_indices(mask), self.n).expect("valid indices").to_dense(self.n);
        vectorize(&op).expect("square").data().clone() / Complex64::new(((1u64 << self.n) as f64).sqrt(), 0.0)
    }

    /// `∗|S⟩⟩ = sign · |S^c⟩⟩`.
    pub fn hodge(&self, mask: u64) -> (f64, u64) {
        let full = (1u64 << (2 * self.n)) - 1;
        let comp = full & !mask;
        (concat_sort_sign(&mask_indices(mask), &mask_indices(comp)), comp)
    }

    fn build_irreps(&self) -> Result<Vec<IrrepDescriptor>> {
        let n = self.n;
        let mut out = Vec::new();
        for i in 0..n {
            let subsets = subsets_of_size(2 * n, i);
            let first: Vec<CVector> = subsets.iter().map(|&s| self.monomial_vector(s)).collect();
            let second: Vec<CVector> = subsets
                .iter()
                .map(|&s| {
                    let (sign, c) = self.hodge(s);
                    self.monomial_vector(c) * Complex64::new(sign, 0.0)
                })
                .collect();
            out.push(IrrepDescriptor::new(format!("H{i}"), vec![first, second])?);
        }
        let phase = Complex64::new(0.0, 1.0).powu(n as u32);
        let inv_sqrt2 = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let middle: Vec<u64> = subsets_of_size(2 * n, n).into_iter().filter(|s| s & 1 == 1).collect();
        for (label, sgn) in [("1", 1.0), ("2", -1.0)] {
            let vecs = middle
                .iter()
                .map(|&s| {
                    let (sign, c) = self.hodge(s);
                    (self.monomial_vector(s) + self.monomial_vector(c) * (phase * sign * sgn)) * inv_sqrt2
                })
                .collect();
            out.push(IrrepDescriptor::new(format!("H{n},{label}"), vec![vecs])?);
        }
        Ok(out)
    }

    /// Exact twirl through commutant-block reconstruction.
    pub fn twirl(&self, channel: &Superoperator) -> Result<Superoperator> {
        commutant_blocks(channel, &self.irreps)?.reassemble(&self.irreps, self.dim())
    }

    /// The `2^{2n−1}` diagonal elements `diag(σ)` with `∏σ = 1`.
    pub fn diagonal_subgroup(&self) -> Vec<Vec<i8>> {
        let m = 2 * self.n;
        (0u64..1 << m)
            .filter(|b| b.count_ones() % 2 == 0)
            .map(|b| (0..m).map(|k| if b >> k & 1 == 1 { -1 } else { 1 }).collect())
            .collect()
    }
}

pub fn matchgate_group(n: usize) -> Result<MatchgateGroup> {
    MatchgateGroup::new(n)
}

/// Product state with qubit `q` (1-based) in `|0⟩` unless listed in `special`
/// as `(q, ket)`.
fn product_state(n: usize, special: &[(usize, CVector)]) -> DensityVec {
    let mut v = CVector::from_element(1, ONE);
    for q in 1..=n {
        let f = special.iter().find(|(k, _)| *k == q).map(|(_, f)| f.clone()).unwrap_or_else(|| ket(2, 0));
        v = v.kronecker(&f);
    }
    DensityVec::pure(&v)
}

fn plus() -> CVector {
    CVector::from_element(2, Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0))
}

fn plus_i() -> CVector {
    CVector::from_vec(vec![Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0), Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2)])
}

fn half_plus_identity(op: CMatrix) -> Result<DensityVec> {
    let d = op.nrows();
    let m = (op + CMatrix::identity(d, d)) * Complex64::new(0.5, 0.0);
    vectorize(&m)
}

/// Pauli string with `paulis[q − 1]` on qubit `q`.
fn pauli_string(paulis: &[usize]) -> CMatrix {
    kron_all(&paulis.iter().map(|&k| pauli(k)).collect::<Vec<_>>())
}

fn z_string(n: usize, qubits: std::ops::RangeInclusive<usize>) -> CMatrix {
    pauli_string(&(1..=n).map(|q| if qubits.contains(&q) { 3 } else { 0 }).collect::<Vec<_>>())
}

/// State and measurement for plan `i ≥ 1`: the first reads the degree-`i`
/// monomial `c₁⋯cᵢ`, the second its Hodge dual `c_{i+1}⋯c_{2n}`. Neither
/// state is a parity eigenstate, so each setting sees one diagonal entry of
/// the 2×2 multiplicity block and their average decays as `(λ₁^N + λ₂^N)/4`.
fn degree_settings(n: usize, i: usize) -> Result<((DensityVec, DensityVec), (DensityVec, DensityVec))> {
    if i % 2 == 1 {
        // c₁⋯c_{2k−1} ∝ X_k and c_{2k}⋯c_{2n} ∝ Z⋯Z Y_k Z⋯Z
        let k = i.div_ceil(2);
        let x_k = pauli_string(&(1..=n).map(|q| if q == k { 1 } else { 0 }).collect::<Vec<_>>());
        let y_k = pauli_string(&(1..=n).map(|q| if q == k { 2 } else { 3 }).collect::<Vec<_>>());
        Ok((
            (product_state(n, &[(k, plus())]), half_plus_identity(x_k)?),
            (product_state(n, &[(k, plus_i())]), half_plus_identity(y_k)?),
        ))
    } else {
        // c₁⋯c_{2k} ∝ Z₁⋯Z_k and c_{2k+1}⋯c_{2n} ∝ Z_{k+1}⋯Z_n
        let k = i / 2;
        Ok((
            (product_state(n, &[(n, plus())]), half_plus_identity(z_string(n, 1..=k))?),
            (product_state(n, &[(1, plus())]), half_plus_identity(z_string(n, k + 1..=n))?),
        ))
    }
}

/// Plans `i = 0, …, n` using the diagonal subgroup and characters `σ₁⋯σᵢ`.
pub fn matchgate_plans(group: &MatchgateGroup) -> Result<Vec<IrrepPlan<Vec<i8>>>> {
    let n = group.n();
    let d = group.dim();
    let full = (1u64 << (2 * n)) - 1;
    let diag = group.diagonal_subgroup();
    let mut plans = Vec::new();
    for i in 0..=n {
        let head: u64 = (1u64 << i) - 1;
        let projector = rank_projector(d, &[group.monomial_vector(head), group.monomial_vector(full & !head)]);
        let characters: Vec<Complex64> = diag
            .iter()
            .map(|s| Complex64::new(s[..i].iter().map(|&x| x as f64).product(), 0.0))
            .collect();
        let (rho, meas, dual_setting) = if i == 0 {
            (DensityVec::basis_projector(d, 0), half_plus_identity(z_string(n, 1..=n))?, None)
        } else {
            let (first, second) = degree_settings(n, i)?;
            // for i = n the two irreps are inequivalent and one setting weighs them equally
            (first.0, first.1, (i < n).then_some(second))
        };
        let binom = |a: usize, b: usize| (0..b).fold(1usize, |acc, j| acc * (a - j) / (j + 1));
        let (irrep_ids, irrep_dim, multiplicity, fit_candidates) = if i == 0 {
            (vec!["H0".to_string()], 1, 2, vec![FitModel::ExpPlusConst])
        } else if i < n {
            (
                vec![format!("H{i}")],
                binom(2 * n, i),
                2,
                vec![FitModel::DoubleExpReal, FitModel::DoubleExpConj { with_constant: false }, FitModel::single_real()],
            )
        } else {
            let pair = if n % 2 == 0 { FitModel::DoubleExpReal } else { FitModel::DoubleExpConj { with_constant: false } };
            (vec![format!("H{n},1"), format!("H{n},2")], binom(2 * n, n) / 2, 1, vec![pair, FitModel::single_real()])
        };
        plans.push(IrrepPlan {
            id: format!("i{i}"),
            irrep_ids,
            irrep_dim,
            multiplicity,
            subgroup: diag.clone(),
            characters,
            projector,
            divisor: 1.0,
            initial_state: rho,
            measurement: meas,
            dual_setting,
            fit_candidates,
            post_rotation: ONE,
        });
    }
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouville::max_abs_diff;
    use crate::matchgate::induced_rotation;
    use crate::reptheory::{check_descriptors, projector_from_character, FiniteRep};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct DiagRep {
        us: Vec<CMatrix>,
        ss: Vec<Superoperator>,
    }

    impl FiniteRep for DiagRep {
        fn order(&self) -> usize {
            self.us.len()
        }
        fn hilbert_dim(&self) -> usize {
            self.us[0].nrows()
        }
        fn unitary(&self, k: usize) -> &CMatrix {
            &self.us[k]
        }
        fn superop(&self, k: usize) -> &Superoperator {
            &self.ss[k]
        }
    }

    #[test]
    fn irrep_dimensions_n3() {
        let g = matchgate_group(3).unwrap();
        let dims: Vec<(String, usize, usize)> = g.irreps().iter().map(|i| (i.id.clone(), i.dim, i.multiplicity)).collect();
        assert_eq!(
            dims,
            vec![
                ("H0".into(), 1, 2),
                ("H1".into(), 6, 2),
                ("H2".into(), 15, 2),
                ("H3,1".into(), 10, 1),
                ("H3,2".into(), 10, 1)
            ]
        );
        let total: usize = g.irreps().iter().map(|i| i.dim * i.multiplicity).sum();
        assert_eq!(total, 64);
        assert_eq!(g.diagonal_subgroup().len(), 32);
    }

    #[test]
    fn descriptors_intertwine_sampled_elements() {
        for n in [2, 3] {
            let g = matchgate_group(n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            let sups: Vec<Superoperator> = (0..4).map(|_| g.sample(&mut rng).superop().unwrap()).collect();
            let refs: Vec<&Superoperator> = sups.iter().collect();
            check_descriptors(g.irreps(), &refs).unwrap();
        }
    }

    #[test]
    fn elements_round_trip_and_preserve_parity() {
        let g = matchgate_group(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let parity = kron_all(&[pauli(3), pauli(3), pauli(3)]);
        for _ in 0..5 {
            let e = g.sample(&mut rng);
            let u = e.unitary().unwrap();
            assert!((induced_rotation(&u).unwrap() - &e.rotation).abs().max() < 1e-9);
            assert!(max_abs_diff(&(&u * &parity), &(&parity * &u)) < 1e-12);
        }
        let id = g.identity().superop().unwrap();
        assert!(id.max_abs_diff(&Superoperator::identity(8)) < 1e-15);
        let a = g.sample(&mut rng);
        let b = g.sample(&mut rng);
        let ab = g.compose(&a, &b).superop().unwrap();
        let expect = a.superop().unwrap().compose(&b.superop().unwrap()).unwrap();
        assert!(ab.max_abs_diff(&expect) < 1e-9);
        let inv = g.compose(&g.inverse(&a), &a).superop().unwrap();
        assert!(inv.max_abs_diff(&Superoperator::identity(8)) < 1e-9);
    }

    #[test]
    fn plans_intercepts_and_projectors() {
        let g = matchgate_group(3).unwrap();
        let plans = matchgate_plans(&g).unwrap();
        assert_eq!(plans.len(), 4);
        let diag = g.diagonal_subgroup();
        let rep = DiagRep {
            us: diag.iter().map(|s| MatchgateElement::diagonal(s).unitary().unwrap()).collect(),
            ss: diag.iter().map(|s| MatchgateElement::diagonal(s).superop().unwrap()).collect(),
        };
        for (i, p) in plans.iter().enumerate() {
            p.validate().unwrap();
            let expect = if i == 0 { 1.0 } else { 0.5 };
            assert!((p.intercept().unwrap() - Complex64::new(expect, 0.0)).norm() < 1e-12, "plan {i}");
            let from_chars = projector_from_character(&rep, &p.characters, 1).unwrap();
            assert!(from_chars.max_abs_diff(&p.projector) < 1e-12, "plan {i}");
        }
        // ī = 1: rank 2 onto |1⟩⟩ and |23456⟩⟩
        let tr = plans[1].projector.trace();
        assert!((tr - Complex64::new(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn hodge_commutes_with_elements() {
        let g = matchgate_group(2).unwrap();
        let d2 = 16;
        let mut star = CMatrix::zeros(d2, d2);
        for &s in g.masks() {
            let (sign, c) = g.hodge(s);
            star += g.monomial_vector(c) * g.monomial_vector(s).adjoint() * Complex64::new(sign, 0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..5 {
            let u = g.sample(&mut rng).superop().unwrap();
            assert!(max_abs_diff(&(u.matrix() * &star), &(&star * u.matrix())) < 1e-10);
        }
    }
}
