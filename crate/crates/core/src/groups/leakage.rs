use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FiniteGroup, IrrepPlan};
use crate::error::{CharbError, Result};
use crate::fitting::FitModel;
use crate::liouville::{CMatrix, DensityVec, ONE, ZERO};
use crate::reptheory::{decompose_natural_rep, projector_from_character, FiniteRep};

/// Dimension of the computational subspace `H₁` in the two-qubit leakage model.
pub const LEAKAGE_SPLIT: usize = 2;

fn direct_sum(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = CMatrix::zeros(n + m, n + m);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (m, m)).copy_from(b);
    out
}

fn hadamard() -> CMatrix {
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    CMatrix::from_row_slice(2, 2, &[s, s, s, -s])
}

fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// `⟨R_X, R_Z⟩` with `R_X = X ⊕ Z` and `R_Z = Z ⊕ (X+Z)/√2`, written in a basis
/// whose first two vectors span the computational subspace.
pub fn leakage_group() -> Result<FiniteGroup> {
    let rx = direct_sum(&pauli_x(), &pauli_z());
    let rz = direct_sum(&pauli_z(), &hadamard());
    let g = FiniteGroup::from_generators("leakage", &[rx, rz], 64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x1ea6);
    let irreps = decompose_natural_rep(&g, &mut rng)?;
    g.with_irreps(irreps)
}

fn trivial_leakage_plan(group: &FiniteGroup, d1: usize) -> Result<IrrepPlan<usize>> {
    let d = group.dim();
    let subgroup: Vec<usize> = (0..group.len()).collect();
    let characters = vec![ONE; subgroup.len()];
    let mut m = DensityVec::basis_projector(d, 0);
    for k in 1..d1 {
        m = m.add(&DensityVec::basis_projector(d, k))?;
    }
    Ok(IrrepPlan {
        id: "leakage".into(),
        irrep_ids: vec!["trivial".into()],
        irrep_dim: 1,
        multiplicity: 2,
        projector: projector_from_character(group, &characters, 1)?,
        subgroup,
        characters,
        divisor: 1.0,
        initial_state: DensityVec::basis_projector(d, 0),
        measurement: m,
        dual_setting: None,
        fit_candidates: vec![FitModel::ExpPlusConst],
        post_rotation: ONE,
    })
}

/// Trivial-character plan with `ρ = |0⟩⟨0|` and `M = 𝟙₁`.
pub fn leakage_plan(group: &FiniteGroup) -> Result<IrrepPlan<usize>> {
    if group.dim() != 4 {
        return Err(CharbError::InvalidInput("leakage plan expects the two-qubit leakage group".into()));
    }
    trivial_leakage_plan(group, LEAKAGE_SPLIT)
}

/// Single-qubit Cliffords on `H₁ = span{|0⟩,|1⟩}` with a leakage level `|2⟩`
/// and relative phases in multiples of π/4. Unlike [`leakage_group`], the
/// traceless part of `H₁ ⊗ H₁*` is an irrep shared with nothing else, so
/// character RB can isolate `λ_{1⊥}`.
pub fn qubit_leakage_group() -> Result<FiniteGroup> {
    let one = CMatrix::identity(1, 1);
    let s = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, Complex64::new(0.0, 1.0)]);
    let phase = CMatrix::from_element(1, 1, Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4));
    let gens = [
        direct_sum(&hadamard(), &one),
        direct_sum(&s, &one),
        direct_sum(&CMatrix::identity(2, 2), &phase),
    ];
    let g = FiniteGroup::from_generators("qubit_leakage", &gens, 1024)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x9b17);
    let irreps = decompose_natural_rep(&g, &mut rng)?;
    g.with_irreps(irreps)
}

/// Leakage plan and the `1⊥` plan (character `|Tr U₁|² − 1`, divisor 3) for
/// [`qubit_leakage_group`].
pub fn qubit_leakage_plans(group: &FiniteGroup) -> Result<Vec<IrrepPlan<usize>>> {
    if group.dim() != 3 {
        return Err(CharbError::InvalidInput("expected the qutrit-embedded qubit group".into()));
    }
    let leak = trivial_leakage_plan(group, 2)?;
    let subgroup: Vec<usize> = (0..group.len()).collect();
    let characters: Vec<Complex64> = subgroup
        .iter()
        .map(|&k| {
            let u = group.unitary(k);
            Complex64::new((u[(0, 0)] + u[(1, 1)]).norm_sqr() - 1.0, 0.0)
        })
        .collect();
    let rho = DensityVec::basis_projector(3, 0);
    let perp = IrrepPlan {
        id: "one_perp".into(),
        irrep_ids: vec!["one_perp".into()],
        irrep_dim: 3,
        multiplicity: 1,
        projector: projector_from_character(group, &characters, 3)?,
        subgroup,
        characters,
        divisor: 3.0,
        initial_state: rho.clone(),
        measurement: rho,
        dual_setting: None,
        fit_candidates: vec![FitModel::single_real()],
        post_rotation: ONE,
    };
    Ok(vec![leak, perp])
}
