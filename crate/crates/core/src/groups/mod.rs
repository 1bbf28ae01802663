//! Benchmarking groups and their per-irrep experiment plans.

mod finite;
mod leakage;
mod matchgate_group;
mod qutrit;

pub use finite::{canonical_phase, equal_up_to_phase, FiniteGroup};
pub use leakage::{leakage_group, leakage_plan, qubit_leakage_group, qubit_leakage_plans, LEAKAGE_SPLIT};
pub use matchgate_group::{matchgate_group, matchgate_plans, MatchgateElement, MatchgateGroup};
pub use qutrit::{
    qutrit_clifford_enumerate, qutrit_clifford_group, qutrit_weyl, subspace_group, subspace_plans,
    triplet_singlet_basis, QutritCliffordElement, OMEGA,
};

use num_complex::Complex64;

use crate::error::{CharbError, Result};
use crate::fitting::FitModel;
use crate::liouville::{hs_inner, CMatrix, CVector, DensityVec, Superoperator, ONE, ZERO};

/// Everything needed to measure one character-weighted survival curve.
#[derive(Debug, Clone)]
pub struct IrrepPlan<E> {
    pub id: String,
    /// Irreps whose decay rates this plan measures.
    pub irrep_ids: Vec<String>,
    pub irrep_dim: usize,
    pub multiplicity: usize,
    pub subgroup: Vec<E>,
    pub characters: Vec<Complex64>,
    pub projector: Superoperator,
    pub divisor: f64,
    pub initial_state: DensityVec,
    pub measurement: DensityVec,
    /// A second state and measurement. Each sequence uses one of the two
    /// settings with equal probability, so the curve is their average.
    pub dual_setting: Option<(DensityVec, DensityVec)>,
    pub fit_candidates: Vec<FitModel>,
    pub post_rotation: Complex64,
}

impl<E> IrrepPlan<E> {
    /// `(state, measurement)` pairs; the curve averages over them.
    pub fn settings(&self) -> Vec<(&DensityVec, &DensityVec)> {
        let mut v = vec![(&self.initial_state, &self.measurement)];
        if let Some((r, m)) = &self.dual_setting {
            v.push((r, m));
        }
        v
    }

    /// `⟨⟨M|P̂|ρ⟩⟩ / divisor`, before post-rotation.
    pub fn intercept(&self) -> Result<Complex64> {
        let settings = self.settings();
        let mut sum = ZERO;
        for (rho, meas) in &settings {
            sum += hs_inner(meas, &self.projector.apply(rho)?)?;
        }
        Ok(sum / (self.divisor * settings.len() as f64))
    }

    pub fn validate(&self) -> Result<()> {
        if self.subgroup.len() != self.characters.len() || self.subgroup.is_empty() {
            return Err(CharbError::InvalidInput(format!("plan {}: subgroup and characters disagree", self.id)));
        }
        let p = self.projector.matrix();
        let idem = crate::liouville::max_abs_diff(&(p * p), p);
        if idem > 1e-9 {
            return Err(CharbError::Numerical(format!("plan {}: projector is not idempotent", self.id)));
        }
        if self.fit_candidates.is_empty() {
            return Err(CharbError::InvalidInput(format!("plan {}: no fit model", self.id)));
        }
        Ok(())
    }
}

/// Computational basis ket `|k⟩`.
pub fn ket(dim: usize, k: usize) -> CVector {
    let mut v = CVector::from_element(dim, ZERO);
    v[k] = ONE;
    v
}

/// `Σ_k |v_k⟩⟩⟨⟨v_k|` as a superoperator.
pub fn rank_projector(dim: usize, vectors: &[CVector]) -> Superoperator {
    let d2 = dim * dim;
    let mut m = CMatrix::zeros(d2, d2);
    for v in vectors {
        m += v * v.adjoint();
    }
    Superoperator::from_matrix(dim, m).expect("square of size d²")
}
