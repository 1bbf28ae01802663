use charb_core::channels::random_cptp;
use charb_core::groups::FiniteGroup;
use charb_core::liouville::{max_abs_diff, pauli, CMatrix, Superoperator, ONE};
use charb_core::reptheory::{
    commutant_blocks, decompose_natural_rep, descriptor_character, exact_twirl, irreducibility_norm,
    multiplicity_of_irrep, natural_character, projector_from_character, two_design_check,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pauli_group() -> FiniteGroup {
    FiniteGroup::from_generators("pauli1", &[pauli(1), pauli(3)], 16).unwrap()
}

fn clifford1() -> FiniteGroup {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let h = CMatrix::from_row_slice(2, 2, &[s.into(), s.into(), s.into(), (-s).into()]);
    let p = CMatrix::from_row_slice(2, 2, &[ONE, 0.0.into(), 0.0.into(), Complex64::new(0.0, 1.0)]);
    let g = FiniteGroup::from_generators("clifford1", &[h, p], 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let irreps = decompose_natural_rep(&g, &mut rng).unwrap();
    g.with_irreps(irreps).unwrap()
}

#[test]
fn group_orders() {
    assert_eq!(pauli_group().len(), 4);
    assert_eq!(clifford1().len(), 24);
}

#[test]
fn pauli_group_is_a_one_design_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = two_design_check(&pauli_group(), 5, &mut rng);
    assert!(r.max_deviation_deg1 < 1e-12);
    assert!(r.max_deviation_deg2 > 1e-2);
}

#[test]
fn clifford_group_is_a_two_design() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let r = two_design_check(&clifford1(), 10, &mut rng);
    assert!(r.max_deviation_deg1 < 1e-12);
    assert!(r.max_deviation_deg2 < 1e-12);
}

#[test]
fn clifford_natural_rep_decomposition() {
    let g = clifford1();
    let dims: Vec<(usize, usize)> = {
        let mut v: Vec<_> = g.irreps().iter().map(|i| (i.dim, i.multiplicity)).collect();
        v.sort();
        v
    };
    assert_eq!(dims, vec![(1, 1), (3, 1)]);
    let chi = natural_character(&g);
    assert_eq!(multiplicity_of_irrep(&g, &chi, &vec![ONE; g.len()]).unwrap(), 1);
    for ir in g.irreps() {
        let c = descriptor_character(&g, ir);
        assert!((irreducibility_norm(&g, &c) - 1.0).abs() < 1e-10);
    }
}

#[test]
fn trivial_character_projector_is_identity_ket() {
    let g = clifford1();
    let p = projector_from_character(&g, &vec![ONE; g.len()], 1).unwrap();
    let mut expect = CMatrix::zeros(4, 4);
    for a in [0, 3] {
        for b in [0, 3] {
            expect[(a, b)] = Complex64::new(0.5, 0.0);
        }
    }
    assert!(max_abs_diff(p.matrix(), &expect) < 1e-12);
}

#[test]
fn commutant_reassembly_equals_exact_twirl() {
    let g = clifford1();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let ch = random_cptp(2, 2, &mut rng).unwrap();
        let twirl = exact_twirl(&ch, &g);
        let blocks = commutant_blocks(&ch, g.irreps()).unwrap();
        let again = blocks.reassemble(g.irreps(), 2).unwrap();
        assert!(twirl.max_abs_diff(&again) < 1e-12);
        // idempotent
        assert!(exact_twirl(&twirl, &g).max_abs_diff(&twirl) < 1e-12);
        // a 2-design twirl is depolarizing with p = (Tr Λ̂ − 1)/3
        let p = (ch.trace().re - 1.0) / 3.0;
        let dep = charb_core::channels::depolarizing(2, p.clamp(0.0, 1.0)).unwrap();
        if (0.0..=1.0).contains(&p) {
            assert!(twirl.max_abs_diff(&dep) < 1e-12);
        }
    }
}

#[test]
fn twirl_preserves_trace_and_cptp() {
    let g = clifford1();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ch = random_cptp(2, 2, &mut rng).unwrap();
    let t = g.twirl(&ch);
    assert!((t.trace() - ch.trace()).norm() < 1e-12);
    assert!(t.is_cptp(1e-10));
    assert!(Superoperator::identity(2).max_abs_diff(&g.twirl(&Superoperator::identity(2))) < 1e-12);
}
