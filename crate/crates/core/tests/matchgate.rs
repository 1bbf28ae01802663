use charb_core::liouville::{haar_special_orthogonal, max_abs_diff, CMatrix};
use charb_core::matchgate::{compile, induced_rotation, majorana, MatchgateCircuit};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rot_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

#[test]
fn compile_round_trip_up_to_eight_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for n in 2..=8 {
        for _ in 0..3 {
            let r = haar_special_orthogonal(2 * n, &mut rng).unwrap();
            let c = compile(&r).unwrap();
            assert!(c.gates.len() <= 4 * n * n * n, "n={n}: {} gates", c.gates.len());
            assert!(c.gates.iter().all(|g| g.is_nearest_neighbor()));
            assert!(rot_diff(&c.rotation(), &r) < 1e-10, "n={n}");
            let again = MatchgateCircuit::from_text(&c.to_text()).unwrap();
            assert!(rot_diff(&again.rotation(), &r) < 1e-10);
        }
    }
}

#[test]
fn compiled_unitary_conjugates_majoranas() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for n in 1..=4 {
        let r = haar_special_orthogonal(2 * n, &mut rng).unwrap();
        let u = compile(&r).unwrap().unitary().unwrap();
        let dim = 1 << n;
        assert!(max_abs_diff(&(&u * u.adjoint()), &CMatrix::identity(dim, dim)) < 1e-10);
        let cs: Vec<CMatrix> = (1..=2 * n).map(|k| majorana(k, n).unwrap()).collect();
        for l in 0..2 * n {
            let lhs = &u * &cs[l] * u.adjoint();
            let mut rhs = CMatrix::zeros(dim, dim);
            for m in 0..2 * n {
                rhs += &cs[m] * Complex64::new(r[(l, m)], 0.0);
            }
            assert!(max_abs_diff(&lhs, &rhs) < 1e-9, "n={n} l={l}");
        }
        assert!(rot_diff(&induced_rotation(&u).unwrap(), &r) < 1e-9);
    }
}

#[test]
fn identity_compiles_to_empty_circuit() {
    let c = compile(&DMatrix::identity(6, 6)).unwrap();
    assert!(c.gates.is_empty());
    assert!(max_abs_diff(&c.unitary().unwrap(), &CMatrix::identity(8, 8)) < 1e-12);
}

#[test]
fn improper_or_non_orthogonal_input_is_rejected() {
    let mut r = DMatrix::<f64>::identity(4, 4);
    r[(0, 0)] = -1.0;
    assert!(compile(&r).is_err());
    let mut s = DMatrix::<f64>::identity(4, 4);
    s[(0, 1)] = 0.3;
    assert!(compile(&s).is_err());
}

#[test]
fn malformed_circuit_text_is_rejected() {
    assert!(MatchgateCircuit::from_text("").is_err());
    assert!(MatchgateCircuit::from_text("matchgate-circuit v1 n=x\n").is_err());
    assert!(MatchgateCircuit::from_text("matchgate-circuit v1 n=2\n1 2\n").is_err());
    let far = MatchgateCircuit::from_text("matchgate-circuit v1 n=3\n1 6 0.3\n").unwrap();
    assert!(far.unitary().is_err());
}
