//! Shot-level simulation of character RB and leakage RB, plus exact decay oracles.
//!
//! Each sequence draws its randomness from a stream seeded by
//! `(seed, plan id, N, sequence index)`, and per-length aggregation runs in
//! sequence order. Datasets are therefore identical for any thread count.

mod config;
pub mod dataset;
pub mod kernel;

pub use config::{default_lengths, n_max_for_rate, ExperimentConfig};
pub use dataset::{DecayDataset, DecayPoint};
pub use kernel::{FiniteKernel, MatchgateKernel, SequenceKernel};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channels::{mix_seed, GateNoise, NoiseModel};
use crate::error::{CharbError, Result};
use crate::groups::{FiniteGroup, IrrepPlan, MatchgateGroup};
use crate::liouville::{hs_inner, Superoperator};
use crate::reptheory::CompensatedSum;

/// A benchmarking group the engine can simulate and twirl exactly.
pub trait RbGroup: Sync {
    type Element: Sync;
    fn hilbert_dim(&self) -> usize;
    fn label(&self) -> String;
    /// `Λ̂_G`, the group twirl of a channel.
    fn twirled(&self, channel: &Superoperator) -> Result<Superoperator>;
    fn simulate(&self, plan: &IrrepPlan<Self::Element>, noise: &NoiseModel, config: &ExperimentConfig) -> Result<DecayDataset>;
}

impl RbGroup for FiniteGroup {
    type Element = usize;
    fn hilbert_dim(&self) -> usize {
        self.dim()
    }
    fn label(&self) -> String {
        self.name().to_string()
    }
    fn twirled(&self, channel: &Superoperator) -> Result<Superoperator> {
        Ok(self.twirl(channel))
    }
    fn simulate(&self, plan: &IrrepPlan<usize>, noise: &NoiseModel, config: &ExperimentConfig) -> Result<DecayDataset> {
        let k = FiniteKernel::new(self, plan, noise)?;
        drive(&k, plan, config, &self.label())
    }
}

impl RbGroup for MatchgateGroup {
    type Element = Vec<i8>;
    fn hilbert_dim(&self) -> usize {
        self.dim()
    }
    fn label(&self) -> String {
        self.name()
    }
    fn twirled(&self, channel: &Superoperator) -> Result<Superoperator> {
        self.twirl(channel)
    }
    fn simulate(&self, plan: &IrrepPlan<Vec<i8>>, noise: &NoiseModel, config: &ExperimentConfig) -> Result<DecayDataset> {
        let k = MatchgateKernel::new(self, plan, noise)?;
        drive(&k, plan, config, &self.label())
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// RNG stream for one sequence.
pub fn sequence_rng(seed: u64, plan_id: &str, n: usize, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(mix_seed(seed, fnv1a(plan_id)), n as u64), index as u64))
}

fn drive<K: SequenceKernel, E: Sync>(kernel: &K, plan: &IrrepPlan<E>, config: &ExperimentConfig, label: &str) -> Result<DecayDataset> {
    config.validate()?;
    let shots = config.shots_per_sequence;
    let mut points = Vec::with_capacity(config.lengths.len());
    for (&n, &count) in config.lengths.iter().zip(&config.allocation()) {
        let values = (0..count)
            .into_par_iter()
            .map(|idx| {
                let mut rng = sequence_rng(config.seed, &plan.id, n, idx);
                let (w, p) = kernel.sample(n, &mut rng);
                if !(-1e-8..=1.0 + 1e-8).contains(&p) || !p.is_finite() {
                    return Err(CharbError::Numerical(format!(
                        "survival probability {p:.3e} at N = {n} is outside [0, 1]; the noise model is not physical"
                    )));
                }
                let p = p.clamp(0.0, 1.0);
                let hits = (0..shots).filter(|_| rng.gen::<f64>() < p).count();
                Ok(w * plan.post_rotation * (hits as f64 / shots as f64))
            })
            .collect::<Result<Vec<Complex64>>>()?;
        let mut sum = CompensatedSum::default();
        for v in &values {
            sum.add(*v);
        }
        let mean = sum.value() / count as f64;
        let (mut vr, mut vi) = (0.0, 0.0);
        for v in &values {
            vr += (v.re - mean.re).powi(2);
            vi += (v.im - mean.im).powi(2);
        }
        let denom = ((count - 1) * count) as f64;
        points.push(DecayPoint { n, mean, stderr_re: (vr / denom).sqrt(), stderr_im: (vi / denom).sqrt(), count });
    }
    let mut ds = DecayDataset::new(plan.id.clone(), plan.post_rotation, points)?;
    ds.metadata = serde_json::json!({
        "group": label,
        "seed": config.seed,
        "total_sequences": config.total_sequences,
        "shots_per_sequence": config.shots_per_sequence,
    });
    Ok(ds)
}

/// Simulates one plan of the character RB protocol.
pub fn run_character_rb<G: RbGroup>(
    group: &G,
    plan: &IrrepPlan<G::Element>,
    noise: &NoiseModel,
    config: &ExperimentConfig,
) -> Result<DecayDataset> {
    config.validate()?;
    if config.gate_dependent != noise.is_gate_dependent() {
        return Err(CharbError::InvalidInput(
            "config.gate_dependent does not match the supplied noise model".into(),
        ));
    }
    if noise.dim() != group.hilbert_dim() {
        return Err(CharbError::Dimension(format!(
            "noise acts on dimension {} but {} on {}",
            noise.dim(),
            group.label(),
            group.hilbert_dim()
        )));
    }
    noise.validate()?;
    group.simulate(plan, noise, config)
}

/// Leakage RB: character RB with the trivial-character plan after checking
/// that SPAM keeps `H₁ = span{|0⟩,…,|split−1⟩}` and its complement apart.
pub fn run_leakage_rb(
    group: &FiniteGroup,
    plan: &IrrepPlan<usize>,
    noise: &NoiseModel,
    split: usize,
    config: &ExperimentConfig,
) -> Result<DecayDataset> {
    noise.check_block_diagonal_spam(split)?;
    run_character_rb(group, plan, noise, config)
}

/// `Sᵢ(N) = ⟨⟨M|Λ̂_M Λ̂ Λ̂_G^N P̂ Λ̂_P|ρ⟩⟩ / divisor` for each requested length,
/// before post-rotation.
pub fn exact_curve<G: RbGroup>(
    group: &G,
    plan: &IrrepPlan<G::Element>,
    noise: &NoiseModel,
    lengths: &[usize],
) -> Result<Vec<Complex64>> {
    let GateNoise::Independent(gate) = &noise.gate else {
        return Err(CharbError::InvalidInput("the exact oracle needs gate-independent noise".into()));
    };
    let twirl = group.twirled(gate)?;
    let settings = plan.settings();
    let mut out = vec![Complex64::new(0.0, 0.0); lengths.len()];
    for (rho, meas) in &settings {
        let effect = noise.meas.compose(gate)?.adjoint().apply(meas)?;
        let mut v = plan.projector.apply(&noise.prep.apply(rho)?)?;
        let mut n = 0;
        for (slot, &target) in out.iter_mut().zip(lengths) {
            if target < n {
                return Err(CharbError::InvalidInput("lengths must be non-decreasing".into()));
            }
            while n < target {
                v = twirl.apply(&v)?;
                n += 1;
            }
            *slot += hs_inner(&effect, &v)? / (plan.divisor * settings.len() as f64);
        }
    }
    Ok(out)
}

pub fn exact_survival<G: RbGroup>(group: &G, plan: &IrrepPlan<G::Element>, noise: &NoiseModel, n: usize) -> Result<Complex64> {
    Ok(exact_curve(group, plan, noise, &[n])?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::random_channel_with_fidelity;
    use crate::groups::{matchgate_group, MatchgateElement};

    #[test]
    fn rotation_kernel_matches_dense_superoperator() {
        let g = matchgate_group(3).unwrap();
        let plans = crate::groups::matchgate_plans(&g).unwrap();
        let noise = NoiseModel::gate_independent(Superoperator::identity(8));
        let k = MatchgateKernel::new(&g, &plans[0], &noise).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let e = g.sample(&mut rng);
            let t = g.frame().transfer_matrix(&e.superop().unwrap());
            let x: Vec<f64> = (0..64).map(|_| rng.gen::<f64>() - 0.5).collect();
            let mut dense = vec![0.0; 64];
            crate::liouville::real_matvec(&t, &x, &mut dense);
            let mut r: Vec<f64> = e.rotation.transpose().as_slice().to_vec();
            let mut y = x.clone();
            k.apply_rotation(&mut r, &mut y);
            let err = dense.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "kernel disagrees with Û by {err}");
        }
        let _ = MatchgateElement::diagonal(&[1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn identity_noise_gives_intercepts() {
        let g = crate::groups::leakage_group().unwrap();
        let plan = crate::groups::leakage_plan(&g).unwrap();
        let noise = NoiseModel::gate_independent(Superoperator::identity(4));
        let cfg = ExperimentConfig::new(vec![1, 5, 20], 300, 1).unwrap();
        let ds = run_character_rb(&g, &plan, &noise, &cfg).unwrap();
        for p in &ds.points {
            assert!((p.mean - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let g = crate::groups::leakage_group().unwrap();
        let plan = crate::groups::leakage_plan(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise = NoiseModel::gate_independent(random_channel_with_fidelity(4, 4, 0.97, &mut rng).unwrap());
        let cfg = ExperimentConfig::new(vec![1, 3, 9], 600, 77).unwrap();
        let a = run_character_rb(&g, &plan, &noise, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_character_rb(&g, &plan, &noise, &cfg).unwrap());
        assert_eq!(a, b);
    }
}
