use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;

use super::{ket, FiniteGroup, IrrepPlan};
#[cfg(test)]
use super::rank_projector;
use crate::error::{CharbError, Result};
use crate::fitting::FitModel;
use crate::liouville::{is_unitary, vectorize, CMatrix, CVector, DensityVec, ONE, ZERO};
use crate::reptheory::{projector_from_character, IrrepDescriptor, SubgroupView};

/// `ω = e^{2πi/3}`.
pub const OMEGA: Complex64 = Complex64::new(-0.5, 0.866_025_403_784_438_6);

fn omega_pow(k: i64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * k.rem_euclid(3) as f64 / 3.0)
}

/// `X^a Z^b` with `X|z⟩ = |z+1⟩`, `Z|z⟩ = ω^z|z⟩`.
pub fn qutrit_weyl(a: u8, b: u8) -> CMatrix {
    let mut m = CMatrix::zeros(3, 3);
    for z in 0..3usize {
        m[((z + a as usize) % 3, z)] = omega_pow((b as i64) * z as i64);
    }
    m
}

/// A single-qutrit Clifford: its action on `X` and `Z` and a canonical unitary.
#[derive(Debug, Clone)]
pub struct QutritCliffordElement {
    pub ax: u8,
    pub bx: u8,
    pub az: u8,
    pub bz: u8,
    pub eta_x: u8,
    pub eta_z: u8,
    pub unitary: CMatrix,
}

/// Solves `U P = P' U` for the two conjugation constraints, returning the
/// unique (up to phase) unitary solution.
fn solve_conjugation(px: &CMatrix, pz: &CMatrix) -> Result<CMatrix> {
    let x = qutrit_weyl(1, 0);
    let z = qutrit_weyl(0, 1);
    let mut a = CMatrix::zeros(18, 9);
    for k in 0..9 {
        let mut e = CMatrix::zeros(3, 3);
        e[(k / 3, k % 3)] = ONE;
        let cx = &e * &x - px * &e;
        let cz = &e * &z - pz * &e;
        for r in 0..9 {
            a[(r, k)] = cx[(r / 3, r % 3)];
            a[(9 + r, k)] = cz[(r / 3, r % 3)];
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| CharbError::Numerical("SVD failed".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap());
    if sv[order[0]] > 1e-9 || sv[order[1]] < 1e-6 {
        return Err(CharbError::Numerical("conjugation constraints do not have a unique solution".into()));
    }
    let row = vt.row(order[0]);
    let mut u = CMatrix::zeros(3, 3);
    for k in 0..9 {
        u[(k / 3, k % 3)] = row[k].conj();
    }
    let s = (u.adjoint() * &u)[(0, 0)].re;
    let u = u / Complex64::new(s.sqrt(), 0.0);
    if !is_unitary(&u, 1e-10) {
        return Err(CharbError::Numerical("conjugation solution is not unitary".into()));
    }
    Ok(super::canonical_phase(&u))
}

/// All 216 single-qutrit Cliffords modulo phase.
pub fn qutrit_clifford_enumerate() -> Result<Vec<QutritCliffordElement>> {
    let mut out = Vec::with_capacity(216);
    for ax in 0..3u8 {
        for bx in 0..3u8 {
            for az in 0..3u8 {
                for bz in 0..3u8 {
                    if (ax as i64 * bz as i64 - az as i64 * bx as i64).rem_euclid(3) != 1 {
                        continue;
                    }
                    for eta_x in 0..3u8 {
                        for eta_z in 0..3u8 {
                            let px = qutrit_weyl(ax, bx) * omega_pow(eta_x as i64);
                            let pz = qutrit_weyl(az, bz) * omega_pow(eta_z as i64);
                            let unitary = solve_conjugation(&px, &pz)?;
                            out.push(QutritCliffordElement { ax, bx, az, bz, eta_x, eta_z, unitary });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// The 216-element qutrit Clifford group with its natural-rep decomposition attached.
pub fn qutrit_clifford_group() -> Result<FiniteGroup> {
    let elems = qutrit_clifford_enumerate()?;
    let g = FiniteGroup::from_unitaries("qutrit_clifford", elems.into_iter().map(|e| e.unitary).collect())?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x3c1f);
    let irreps = crate::reptheory::decompose_natural_rep(&g, &mut rng)?;
    g.with_irreps(irreps)
}

/// Columns `|00⟩, |T⟩, |11⟩, |S⟩` with `|T⟩ = (|01⟩+|10⟩)/√2`, `|S⟩ = (|01⟩−|10⟩)/√2`.
pub fn triplet_singlet_basis() -> CMatrix {
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut w = CMatrix::zeros(4, 4);
    w[(0, 0)] = ONE;
    w[(1, 1)] = s;
    w[(2, 1)] = s;
    w[(3, 2)] = ONE;
    w[(1, 3)] = s;
    w[(2, 3)] = -s;
    w
}

/// `W (A ⊕ c) W†` for a 3×3 triplet block and singlet scalar.
fn embed(a: &CMatrix, c: Complex64) -> CMatrix {
    let mut b = CMatrix::zeros(4, 4);
    b.view_mut((0, 0), (3, 3)).copy_from(a);
    b[(3, 3)] = c;
    let w = triplet_singlet_basis();
    &w * b * w.adjoint()
}

fn principal_cube_root(z: Complex64) -> Complex64 {
    Complex64::from_polar(z.norm().cbrt(), z.arg() / 3.0)
}

/// The 648-element group `{U_T ⊕ ω^η det(U_T)^{1/3}}` preserving the triplet
/// and singlet subspaces of two qubits.
pub fn subspace_group() -> Result<FiniteGroup> {
    let cliffords = qutrit_clifford_enumerate()?;
    let mut unitaries = Vec::with_capacity(648);
    for c in &cliffords {
        let root = principal_cube_root(c.unitary.determinant());
        for eta in 0..3 {
            unitaries.push(embed(&c.unitary, omega_pow(eta) * root));
        }
    }
    let g = FiniteGroup::from_unitaries("subspace", unitaries)?;
    if g.len() != 648 {
        return Err(CharbError::Numerical(format!("subspace group has {} elements, expected 648", g.len())));
    }
    let irreps = subspace_irreps()?;
    g.with_irreps(irreps)
}

fn vec_of(a: &CMatrix) -> CVector {
    vectorize(a).expect("square").data().clone()
}

fn subspace_irreps() -> Result<Vec<IrrepDescriptor>> {
    let w = triplet_singlet_basis();
    let t: Vec<CVector> = (0..3).map(|k| w.column(k).into_owned()).collect();
    let s = w.column(3).into_owned();
    let inv3 = Complex64::new(1.0 / 3f64.sqrt(), 0.0);
    let pt = embed(&CMatrix::identity(3, 3), ZERO);
    let ps = embed(&CMatrix::zeros(3, 3), ONE);
    let trivial = IrrepDescriptor::new("trivial", vec![vec![vec_of(&pt) * inv3], vec![vec_of(&ps)]])?;
    let mut tperp = Vec::new();
    for a in 0..3u8 {
        for b in 0..3u8 {
            if (a, b) != (0, 0) {
                tperp.push(vec_of(&embed(&qutrit_weyl(a, b), ZERO)) * inv3);
            }
        }
    }
    let tperp = IrrepDescriptor::new("Tperp", vec![tperp])?;
    let ts = IrrepDescriptor::new("TS", vec![t.iter().map(|tk| vec_of(&(tk * s.adjoint()))).collect()])?;
    let st = IrrepDescriptor::new("ST", vec![t.iter().map(|tk| vec_of(&(&s * tk.adjoint()))).collect()])?;
    Ok(vec![trivial, tperp, ts, st])
}

/// Plans for the trivial, `T⊥` and `TS` irreps, plus `ST` when requested.
pub fn subspace_plans(group: &FiniteGroup, include_st: bool) -> Result<Vec<IrrepPlan<usize>>> {
    let lookup = |u: CMatrix| {
        group
            .find(&u)
            .ok_or_else(|| CharbError::Numerical("subgroup element missing from the subspace group".into()))
    };
    // Ḡ₁ = {XᵃZᵇ ⊕ ω^η}, Ḡ₂ = {Zᵇ ⊕ ω^η}; both have unit-determinant triplet blocks.
    let mut g1 = Vec::new();
    let mut a_of = Vec::new();
    for a in 0..3u8 {
        for b in 0..3u8 {
            for eta in 0..3 {
                g1.push(lookup(embed(&qutrit_weyl(a, b), omega_pow(eta)))?);
                a_of.push(a as i64);
            }
        }
    }
    let mut g2 = Vec::new();
    let mut b_minus_eta = Vec::new();
    for b in 0..3u8 {
        for eta in 0..3i64 {
            g2.push(lookup(embed(&qutrit_weyl(0, b), omega_pow(eta)))?);
            b_minus_eta.push(b as i64 - eta);
        }
    }

    let view1 = SubgroupView { parent: group, indices: &g1 };
    let view2 = SubgroupView { parent: group, indices: &g2 };
    let rho00 = DensityVec::basis_projector(4, 0);
    let m_even = DensityVec::basis_projector(4, 0).add(&DensityVec::basis_projector(4, 3))?;
    let rho01 = DensityVec::pure(&ket(4, 1));

    let chi_trivial = vec![ONE; g1.len()];
    let chi_tperp: Vec<Complex64> = a_of.iter().map(|&a| omega_pow(-a)).collect();
    let chi_ts: Vec<Complex64> = b_minus_eta.iter().map(|&k| omega_pow(k)).collect();
    let chi_st: Vec<Complex64> = b_minus_eta.iter().map(|&k| omega_pow(-k)).collect();

    let mut plans = vec![
        IrrepPlan {
            id: "trivial".into(),
            irrep_ids: vec!["trivial".into()],
            irrep_dim: 1,
            multiplicity: 2,
            subgroup: g1.clone(),
            projector: projector_from_character(&view1, &chi_trivial, 1)?,
            characters: chi_trivial,
            divisor: 1.0,
            initial_state: rho00.clone(),
            measurement: m_even.clone(),
            dual_setting: None,
            fit_candidates: vec![FitModel::ExpPlusConst],
            post_rotation: ONE,
        },
        IrrepPlan {
            id: "Tperp".into(),
            irrep_ids: vec!["Tperp".into()],
            irrep_dim: 8,
            multiplicity: 1,
            subgroup: g1.clone(),
            projector: projector_from_character(&view1, &chi_tperp, 1)?,
            characters: chi_tperp,
            divisor: 1.0,
            initial_state: rho00,
            measurement: m_even,
            dual_setting: None,
            fit_candidates: vec![FitModel::SingleExp { complex_coefficient: true, complex_rate: false }],
            post_rotation: Complex64::from_polar(1.0, PI / 3.0),
        },
        IrrepPlan {
            id: "TS".into(),
            irrep_ids: vec!["TS".into()],
            irrep_dim: 3,
            multiplicity: 1,
            subgroup: g2.clone(),
            projector: projector_from_character(&view2, &chi_ts, 1)?,
            characters: chi_ts,
            divisor: 1.0,
            initial_state: rho01.clone(),
            measurement: rho01.clone(),
            dual_setting: None,
            fit_candidates: vec![FitModel::SingleExp { complex_coefficient: true, complex_rate: true }],
            post_rotation: ONE,
        },
    ];
    if include_st {
        plans.push(IrrepPlan {
            id: "ST".into(),
            irrep_ids: vec!["ST".into()],
            irrep_dim: 3,
            multiplicity: 1,
            subgroup: g2.clone(),
            projector: projector_from_character(&view2, &chi_st, 1)?,
            characters: chi_st,
            divisor: 1.0,
            initial_state: rho01.clone(),
            measurement: rho01,
            dual_setting: None,
            fit_candidates: vec![FitModel::SingleExp { complex_coefficient: true, complex_rate: true }],
            post_rotation: ONE,
        });
    }
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouville::max_abs_diff;
    use crate::reptheory::{irreducibility_norm, natural_character, multiplicity_of_irrep, FiniteRep};

    fn omega_exp(k: i64) -> Complex64 {
        omega_pow(k)
    }

    #[test]
    fn clifford_count_identity_and_conjugation() {
        let elems = qutrit_clifford_enumerate().unwrap();
        assert_eq!(elems.len(), 216);
        let id = elems
            .iter()
            .find(|e| (e.ax, e.bx, e.az, e.bz, e.eta_x, e.eta_z) == (1, 0, 0, 1, 0, 0))
            .unwrap();
        assert!(max_abs_diff(&id.unitary, &CMatrix::identity(3, 3)) < 1e-12);
        for e in &elems {
            let u = &e.unitary;
            let ud = u.adjoint();
            let x = qutrit_weyl(1, 0);
            let z = qutrit_weyl(0, 1);
            assert!(max_abs_diff(&(u * &x * &ud), &(qutrit_weyl(e.ax, e.bx) * omega_exp(e.eta_x as i64))) < 1e-10);
            assert!(max_abs_diff(&(u * &z * &ud), &(qutrit_weyl(e.az, e.bz) * omega_exp(e.eta_z as i64))) < 1e-10);
            for a in 0..3i64 {
                for b in 0..3i64 {
                    let (ax, bx, az, bz) = (e.ax as i64, e.bx as i64, e.az as i64, e.bz as i64);
                    let p = e.eta_x as i64 * a + e.eta_z as i64 * b + 2 * (a * a - a) * ax * bx + 2 * (b * b - b) * az * bz + a * b * bx * az;
                    let na = ((a * ax + b * az).rem_euclid(3)) as u8;
                    let nb = ((a * bx + b * bz).rem_euclid(3)) as u8;
                    let lhs = u * qutrit_weyl(a as u8, b as u8) * &ud;
                    assert!(max_abs_diff(&lhs, &(qutrit_weyl(na, nb) * omega_exp(p))) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn subspace_group_structure() {
        let g = subspace_group().unwrap();
        assert_eq!(g.len(), 648);
        assert!(max_abs_diff(g.unitary(g.identity_index()), &CMatrix::identity(4, 4)) < 1e-12);
        let w = triplet_singlet_basis();
        for k in 0..g.len() {
            let b = w.adjoint() * g.unitary(k) * &w;
            for t in 0..3 {
                assert!(b[(t, 3)].norm() < 1e-12 && b[(3, t)].norm() < 1e-12);
            }
        }
        let chi = natural_character(&g);
        let triv = vec![ONE; g.len()];
        assert_eq!(multiplicity_of_irrep(&g, &chi, &triv).unwrap(), 2);
        // triplet-block characters of the three nontrivial irreps
        let mut tperp = Vec::new();
        let mut ts = Vec::new();
        let mut st = Vec::new();
        for k in 0..g.len() {
            let b = w.adjoint() * g.unitary(k) * &w;
            let tr_t = b[(0, 0)] + b[(1, 1)] + b[(2, 2)];
            let s = b[(3, 3)];
            tperp.push(Complex64::new(tr_t.norm_sqr() - 1.0, 0.0));
            ts.push(tr_t * s.conj());
            st.push(tr_t.conj() * s);
        }
        for c in [&tperp, &ts, &st] {
            assert!((irreducibility_norm(&g, c) - 1.0).abs() < 1e-8);
            assert_eq!(multiplicity_of_irrep(&g, &chi, c).unwrap(), 1);
        }
    }

    #[test]
    fn subspace_plans_match_expectations() {
        let g = subspace_group().unwrap();
        let plans = subspace_plans(&g, true).unwrap();
        assert_eq!(plans.len(), 4);
        let expected = [
            Complex64::new(2.0 / 3.0, 0.0),
            Complex64::from_polar(1.0 / 3.0, -PI / 3.0),
            Complex64::new(0.25, 0.0),
            Complex64::new(0.25, 0.0),
        ];
        for (p, e) in plans.iter().zip(expected) {
            p.validate().unwrap();
            assert!((p.intercept().unwrap() - e).norm() < 1e-12, "{}", p.id);
        }
        assert_eq!(plans[0].subgroup.len(), 27);
        assert_eq!(plans[2].subgroup.len(), 9);
        // hand-built projectors
        let w = triplet_singlet_basis();
        let zt = vec_of(&embed(&qutrit_weyl(0, 1), ZERO));
        let p_tperp = rank_projector(4, &[zt / Complex64::new(3f64.sqrt(), 0.0)]);
        assert!(plans[1].projector.max_abs_diff(&p_tperp) < 1e-12);
        let ts = vec_of(&(w.column(1).into_owned() * w.column(3).adjoint()));
        assert!(plans[2].projector.max_abs_diff(&rank_projector(4, &[ts])) < 1e-12);
        let pt = vec_of(&embed(&CMatrix::identity(3, 3), ZERO)) / Complex64::new(3f64.sqrt(), 0.0);
        let ps = vec_of(&embed(&CMatrix::zeros(3, 3), ONE));
        assert!(plans[0].projector.max_abs_diff(&rank_projector(4, &[pt, ps])) < 1e-12);
    }

    #[test]
    fn inverse_words() {
        use rand::{Rng, SeedableRng};
        let g = subspace_group().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let word: Vec<usize> = (0..30).map(|_| rng.gen_range(0..g.len())).collect();
            let mut acc = g.identity_index();
            let mut sup = crate::liouville::Superoperator::identity(4);
            for &k in &word {
                acc = g.product(k, acc);
                sup = g.superop(k).compose(&sup).unwrap();
            }
            let inv = g.inverse(acc);
            assert_eq!(g.product(inv, acc), g.identity_index());
            let total = g.superop(inv).compose(&sup).unwrap();
            assert!(total.max_abs_diff(&crate::liouville::Superoperator::identity(4)) < 1e-8);
        }
    }
}
