use charb_core::channels::{
    depolarizing, random_block_channel, random_channel_with_fidelity, random_cptp,
    NoiseModel,
};
use charb_core::estimators::exact_leakage_seepage;
use charb_core::fitting::{fit_decay, select_model, FitModel};
use charb_core::groups::{
    leakage_group, leakage_plan, matchgate_group, matchgate_plans, qubit_leakage_group, qubit_leakage_plans,
    subspace_group, subspace_plans,
};
use charb_core::liouville::Superoperator;
use charb_core::rb_engine::{exact_curve, run_character_rb, run_leakage_rb, DecayDataset, ExperimentConfig, RbGroup};
use charb_core::reptheory::commutant_spectrum;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Largest |z| of simulated means against the exact curve, over both components.
fn max_z<G: RbGroup>(group: &G, plan: &charb_core::groups::IrrepPlan<G::Element>, noise: &NoiseModel, cfg: &ExperimentConfig) -> f64 {
    let ds = run_character_rb(group, plan, noise, cfg).unwrap();
    let exact = exact_curve(group, plan, noise, &cfg.lengths).unwrap();
    let mut worst: f64 = 0.0;
    for (p, e) in ds.points.iter().zip(&exact) {
        let e = e * plan.post_rotation;
        worst = worst.max((p.mean.re - e.re).abs() / p.stderr_re.max(1e-12));
        if p.stderr_im > 0.0 {
            worst = worst.max((p.mean.im - e.im).abs() / p.stderr_im);
        }
    }
    worst
}

#[test]
fn subspace_simulation_matches_exact_curve() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let g = subspace_group().unwrap();
    let noise = NoiseModel::gate_independent(random_channel_with_fidelity(4, 4, 0.95, &mut rng).unwrap());
    let cfg = ExperimentConfig::new(vec![1, 4, 12, 30], 8000, 3).unwrap();
    for plan in subspace_plans(&g, true).unwrap() {
        let z = max_z(&g, &plan, &noise, &cfg);
        assert!(z < 4.5, "{}: max |z| = {z}", plan.id);
    }
}

#[test]
fn leakage_simulation_matches_exact_curve() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let g = leakage_group().unwrap();
    let plan = leakage_plan(&g).unwrap();
    let noise = NoiseModel::gate_independent(random_channel_with_fidelity(4, 4, 0.95, &mut rng).unwrap());
    let cfg = ExperimentConfig::new(vec![1, 5, 20, 60], 8000, 4).unwrap();
    assert!(max_z(&g, &plan, &noise, &cfg) < 4.5);

    let q = qubit_leakage_group().unwrap();
    let noise = NoiseModel::gate_independent(random_channel_with_fidelity(3, 3, 0.95, &mut rng).unwrap());
    for plan in qubit_leakage_plans(&q).unwrap() {
        assert!(max_z(&q, &plan, &noise, &cfg) < 4.5, "{}", plan.id);
    }
}

#[test]
fn matchgate_simulation_matches_exact_curve() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let g = matchgate_group(2).unwrap();
    let noise = NoiseModel::gate_independent(random_channel_with_fidelity(4, 4, 0.95, &mut rng).unwrap());
    let cfg = ExperimentConfig::new(vec![1, 4, 12, 30], 6000, 5).unwrap();
    for plan in matchgate_plans(&g).unwrap() {
        let z = max_z(&g, &plan, &noise, &cfg);
        assert!(z < 4.5, "{}: max |z| = {z}", plan.id);
    }
}

#[test]
fn depolarizing_noise_decays_geometrically() {
    let g = subspace_group().unwrap();
    let lengths: Vec<usize> = (0..12).collect();
    for p in [0.9, 0.99] {
        let noise = NoiseModel::gate_independent(depolarizing(4, p).unwrap());
        for plan in subspace_plans(&g, false).unwrap().iter().skip(1) {
            let c = exact_curve(&g, plan, &noise, &lengths).unwrap();
            for w in c.windows(2) {
                assert!((w[1] / w[0] - p).norm() < 1e-10, "{}", plan.id);
            }
            assert!((c[0] - plan.intercept().unwrap() * p).norm() < 1e-12);
        }
    }
}

#[test]
fn depolarizing_simulation_recovers_rate() {
    let g = subspace_group().unwrap();
    let plans = subspace_plans(&g, false).unwrap();
    let plan = &plans[1];
    let noise = NoiseModel::gate_independent(depolarizing(4, 0.97).unwrap());
    let cfg = ExperimentConfig::new(vec![1, 3, 6, 10, 16, 25, 40, 60], 16_000, 6).unwrap();
    let ds = run_character_rb(&g, plan, &noise, &cfg).unwrap();
    let fit = select_model(&ds, &plan.fit_candidates).unwrap();
    let (se, _) = fit.lambda_stderr(0);
    assert!((fit.lambdas[0].re - 0.97).abs() < 4.0 * se, "{} ± {se}", fit.lambdas[0]);
}

#[test]
fn exact_curve_follows_commutant_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let g = subspace_group().unwrap();
    let ch = random_channel_with_fidelity(4, 4, 0.9, &mut rng).unwrap();
    let noise = NoiseModel::gate_independent(ch.clone());
    let spec = commutant_spectrum(&ch, g.irreps()).unwrap();
    let eig = |id: &str| spec.iter().find(|(k, _)| k == id).unwrap().1.clone();
    let lengths: Vec<usize> = (0..10).collect();
    let plans = subspace_plans(&g, true).unwrap();
    for plan in &plans[1..] {
        let c = exact_curve(&g, plan, &noise, &lengths).unwrap();
        let lam = eig(&plan.id)[0];
        for w in c.windows(2) {
            assert!((w[1] / w[0] - lam).norm() < 1e-9, "{}", plan.id);
        }
    }
    // the trivial block has eigenvalues {1, λ₀}: S(N) = A λ₀^N + B
    let c = exact_curve(&g, &plans[0], &noise, &lengths).unwrap();
    let lam0 = eig("trivial")[1].re;
    let d: Vec<f64> = c.windows(2).map(|w| (w[1] - w[0]).re).collect();
    for w in d.windows(2) {
        assert!((w[1] / w[0] - lam0).abs() < 1e-8);
    }
}

#[test]
fn fit_of_exact_curve_recovers_trivial_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let g = subspace_group().unwrap();
    let ch = random_channel_with_fidelity(4, 4, 0.97, &mut rng).unwrap();
    let noise = NoiseModel::gate_independent(ch.clone());
    let lam0 = commutant_spectrum(&ch, g.irreps()).unwrap()[0].1[1].re;
    let plan = &subspace_plans(&g, false).unwrap()[0];
    let lengths = vec![1, 2, 4, 7, 11, 17, 26, 40, 60, 90, 135, 200];
    let c = exact_curve(&g, plan, &noise, &lengths).unwrap();
    let values: Vec<f64> = c.iter().map(|z| z.re).collect();
    let ds = DecayDataset::from_real("trivial", &lengths, &values, 1e-6).unwrap();
    let fit = fit_decay(&ds, FitModel::ExpPlusConst).unwrap();
    assert!((fit.lambdas[0].re - lam0).abs() < 1e-3, "{} vs {lam0}", fit.lambdas[0]);
}

#[test]
fn leakage_closed_form_curve() {
    let mut rng = ChaCha8Rng::seed_from_u64(46);
    let g = leakage_group().unwrap();
    let plan = leakage_plan(&g).unwrap();
    for _ in 0..3 {
        let ch = random_channel_with_fidelity(4, 4, 0.95, &mut rng).unwrap();
        let (l, s) = exact_leakage_seepage(&ch, 2).unwrap();
        let noise = NoiseModel::gate_independent(ch);
        let lengths: Vec<usize> = (0..20).collect();
        let c = exact_curve(&g, &plan, &noise, &lengths).unwrap();
        for (n, v) in lengths.iter().zip(&c) {
            let closed = s / (l + s) + (l / (l + s)) * (1.0 - l - s).powi(*n as i32 + 1);
            assert!((v.re - closed).abs() < 1e-10, "N={n}: {} vs {closed}", v.re);
        }
    }
}

#[test]
fn spam_that_mixes_subspaces_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let g = leakage_group().unwrap();
    let plan = leakage_plan(&g).unwrap();
    let gate = random_channel_with_fidelity(4, 4, 0.97, &mut rng).unwrap();
    let cfg = ExperimentConfig::new(vec![1, 2], 10, 1).unwrap();
    let mixing = random_cptp(4, 4, &mut rng).unwrap();
    let bad = NoiseModel::with_spam(gate.clone(), mixing, Superoperator::identity(4)).unwrap();
    assert!(run_leakage_rb(&g, &plan, &bad, 2, &cfg).is_err());
    let block = random_block_channel(4, 2, &mut rng).unwrap();
    let good = NoiseModel::with_spam(gate, block.clone(), block).unwrap();
    assert!(run_leakage_rb(&g, &plan, &good, 2, &cfg).is_ok());
}

#[test]
fn inconsistent_inputs_are_rejected() {
    let g = leakage_group().unwrap();
    let plan = leakage_plan(&g).unwrap();
    let cfg = ExperimentConfig::new(vec![1, 2], 10, 1).unwrap();
    let wrong_dim = NoiseModel::gate_independent(Superoperator::identity(3));
    assert!(run_character_rb(&g, &plan, &wrong_dim, &cfg).is_err());
    let mut gd = cfg.clone();
    gd.gate_dependent = true;
    let noise = NoiseModel::gate_independent(Superoperator::identity(4));
    assert!(run_character_rb(&g, &plan, &noise, &gd).is_err());
    assert!(ExperimentConfig::new(vec![1, 2, 3], 5, 1).is_err());
    assert!(exact_curve(&g, &plan, &noise, &[3, 1]).is_err());
}

#[test]
fn budget_is_split_across_lengths() {
    let g = leakage_group().unwrap();
    let plan = leakage_plan(&g).unwrap();
    let cfg = ExperimentConfig::new(vec![1, 2, 4, 8], 103, 9).unwrap();
    let noise = NoiseModel::gate_independent(Superoperator::identity(4));
    let ds = run_character_rb(&g, &plan, &noise, &cfg).unwrap();
    let counts: Vec<usize> = ds.points.iter().map(|p| p.count).collect();
    assert_eq!(counts.iter().sum::<usize>(), 103);
    assert_eq!(counts, vec![28, 25, 25, 25]);
}

#[test]
fn conjugate_pair_data_selects_conjugate_model() {
    let lam = Complex64::from_polar(0.96, 0.08);
    let a = Complex64::new(0.3, 0.2);
    let lengths = vec![1, 2, 3, 5, 8, 12, 18, 26, 38, 55, 80];
    let values: Vec<Complex64> = lengths
        .iter()
        .map(|&n| a * lam.powu(n as u32) + (a * lam.powu(n as u32)).conj())
        .collect();
    let ds = DecayDataset::from_complex("pair", &lengths, &values, 1e-4).unwrap();
    let fit = select_model(
        &ds,
        &[FitModel::single_real(), FitModel::DoubleExpReal, FitModel::DoubleExpConj { with_constant: false }],
    )
    .unwrap();
    assert_eq!(fit.model, FitModel::DoubleExpConj { with_constant: false });
    assert!((fit.lambdas[0] - lam).norm() < 1e-4 || (fit.lambdas[0] - lam.conj()).norm() < 1e-4);
}
