//! Noise channels: random CPTP maps, named physical errors, and noise models
//! with SPAM and gate-dependent components.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CharbError, Result};
use crate::estimators::exact_average_fidelity;
use crate::liouville::{haar_unitary, kraus_to_channel, unitary_to_super, CMatrix, Superoperator, ONE, ZERO};

/// Kraus operators of a Stinespring-random channel: a Haar unitary on
/// `d·env_dim` applied to `ρ ⊗ |0⟩⟨0|`, environment traced out.
pub fn random_kraus<R: Rng + ?Sized>(d: usize, env_dim: usize, rng: &mut R) -> Result<Vec<CMatrix>> {
    if d == 0 || env_dim == 0 {
        return Err(CharbError::InvalidInput("random channel needs d, env_dim ≥ 1".into()));
    }
    let v = haar_unitary(d * env_dim, rng);
    Ok((0..env_dim)
        .map(|e| CMatrix::from_fn(d, d, |i, j| v[(i * env_dim + e, j * env_dim)]))
        .collect())
}

pub fn random_cptp<R: Rng + ?Sized>(d: usize, env_dim: usize, rng: &mut R) -> Result<Superoperator> {
    kraus_to_channel(&random_kraus(d, env_dim, rng)?)
}

/// `(1−w)𝟙 + wΛ̂`.
pub fn mix_with_identity(channel: &Superoperator, w: f64) -> Result<Superoperator> {
    if !(0.0..=1.0).contains(&w) {
        return Err(CharbError::InvalidInput(format!("mixing weight {w} outside [0, 1]")));
    }
    Superoperator::identity(channel.dim()).scale(1.0 - w).add(&channel.scale(w))
}

/// Bisects the identity-mixing weight until the exact average fidelity is
/// within 1e-9 of `target`. Returns the mixed channel and the weight.
pub fn with_target_fidelity(channel: &Superoperator, target: f64) -> Result<(Superoperator, f64)> {
    let f1 = exact_average_fidelity(channel);
    if !(0.0..=1.0).contains(&target) || target < f1 - 1e-12 {
        return Err(CharbError::InvalidInput(format!(
            "target fidelity {target} unreachable: channel fidelity is {f1:.6}"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = exact_average_fidelity(&mix_with_identity(channel, mid)?);
        if (f - target).abs() < 1e-12 {
            lo = mid;
            hi = mid;
            break;
        }
        if f > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = 0.5 * (lo + hi);
    Ok((mix_with_identity(channel, w)?, w))
}

pub fn random_channel_with_fidelity<R: Rng + ?Sized>(d: usize, env_dim: usize, target: f64, rng: &mut R) -> Result<Superoperator> {
    Ok(with_target_fidelity(&random_cptp(d, env_dim, rng)?, target)?.0)
}

/// A random channel whose Kraus operators are all block-diagonal for the split
/// `H₁ ⊕ H₂` with `dim H₁ = split`.
pub fn random_block_channel<R: Rng + ?Sized>(d: usize, split: usize, rng: &mut R) -> Result<Superoperator> {
    if split == 0 || split >= d {
        return Err(CharbError::InvalidInput("block split must lie strictly inside the space".into()));
    }
    let a = random_kraus(split, split, rng)?;
    let b = random_kraus(d - split, d - split, rng)?;
    let (sa, sb) = ((b.len() as f64).sqrt(), (a.len() as f64).sqrt());
    let mut kraus = Vec::new();
    for ka in &a {
        for kb in &b {
            let mut k = CMatrix::zeros(d, d);
            k.view_mut((0, 0), (split, split)).copy_from(&(ka / Complex64::new(sa, 0.0)));
            k.view_mut((split, split), (d - split, d - split)).copy_from(&(kb / Complex64::new(sb, 0.0)));
            kraus.push(k);
        }
    }
    kraus_to_channel(&kraus)
}

fn qubit_count(d: usize, need: usize) -> Result<usize> {
    if !d.is_power_of_two() || (d.trailing_zeros() as usize) < need {
        return Err(CharbError::InvalidInput(format!("channel needs at least {need} qubits, got dimension {d}")));
    }
    Ok(d.trailing_zeros() as usize)
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) || !v.is_finite() {
        return Err(CharbError::InvalidInput(format!("{name} = {v} outside [0, 1]")));
    }
    Ok(())
}

/// `exp(−iε Z⊗Z)` on qubits 1 and 2.
pub fn intensity(d: usize, epsilon: f64) -> Result<Superoperator> {
    let n = qubit_count(d, 2)?;
    let mut u = CMatrix::zeros(d, d);
    for b in 0..d {
        let z1 = (b >> (n - 1)) & 1;
        let z2 = (b >> (n - 2)) & 1;
        let sign = if z1 == z2 { 1.0 } else { -1.0 };
        u[(b, b)] = Complex64::from_polar(1.0, -epsilon * sign);
    }
    unitary_to_super(&u)
}

fn per_qubit_channel(d: usize, single: &[CMatrix]) -> Result<Superoperator> {
    let n = qubit_count(d, 1)?;
    let mut kraus = vec![CMatrix::identity(1, 1)];
    for _ in 0..n {
        kraus = kraus.iter().flat_map(|k| single.iter().map(move |s| k.kronecker(s))).collect();
    }
    kraus_to_channel(&kraus)
}

pub fn amplitude_damping(d: usize, gamma: f64) -> Result<Superoperator> {
    check_prob("gamma", gamma)?;
    let r = Complex64::new((1.0 - gamma).sqrt(), 0.0);
    let g = Complex64::new(gamma.sqrt(), 0.0);
    per_qubit_channel(
        d,
        &[CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, r]), CMatrix::from_row_slice(2, 2, &[ZERO, g, ZERO, ZERO])],
    )
}

pub fn phase_damping(d: usize, gamma: f64) -> Result<Superoperator> {
    check_prob("gamma", gamma)?;
    let r = Complex64::new((1.0 - gamma).sqrt(), 0.0);
    let g = Complex64::new(gamma.sqrt(), 0.0);
    per_qubit_channel(
        d,
        &[CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, r]), CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ZERO, g])],
    )
}

/// `ρ ↦ (1−p)ρ + p·SWAP ρ SWAP` on qubits 1 and 2.
pub fn swap_error(d: usize, p: f64) -> Result<Superoperator> {
    check_prob("p", p)?;
    let n = qubit_count(d, 2)?;
    let mut swap = CMatrix::zeros(d, d);
    for b in 0..d {
        let z1 = (b >> (n - 1)) & 1;
        let z2 = (b >> (n - 2)) & 1;
        let t = (b & !(3 << (n - 2))) | (z2 << (n - 1)) | (z1 << (n - 2));
        swap[(t, b)] = ONE;
    }
    let s = unitary_to_super(&swap)?;
    Superoperator::identity(d).scale(1.0 - p).add(&s.scale(p))
}

/// `ρ ↦ pρ + (1−p)𝟙/d`.
pub fn depolarizing(d: usize, p: f64) -> Result<Superoperator> {
    check_prob("p", p)?;
    let mut m = CMatrix::identity(d * d, d * d) * Complex64::new(p, 0.0);
    let w = Complex64::new((1.0 - p) / d as f64, 0.0);
    for i in 0..d {
        for j in 0..d {
            m[(i * d + i, j * d + j)] += w;
        }
    }
    Superoperator::from_matrix(d, m)
}

/// Serializable channel description, as accepted in CLI configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    Identity,
    Intensity { epsilon: f64 },
    AmpDamp { gamma: f64 },
    PhaseDamp { gamma: f64 },
    Swap { p: f64 },
    Depolarizing { p: f64 },
    Random {
        #[serde(default)]
        target_fidelity: Option<f64>,
        seed: u64,
        #[serde(default)]
        env_dim: Option<usize>,
    },
    /// Block-diagonal random channel mixed with the identity at `weight`.
    BlockRandom { split: usize, weight: f64, seed: u64 },
    /// Sequential composition; `parts[0]` acts first.
    Compose { parts: Vec<ChannelSpec> },
}

impl ChannelSpec {
    pub fn build(&self, d: usize) -> Result<Superoperator> {
        match self {
            ChannelSpec::Identity => Ok(Superoperator::identity(d)),
            ChannelSpec::Intensity { epsilon } => intensity(d, *epsilon),
            ChannelSpec::AmpDamp { gamma } => amplitude_damping(d, *gamma),
            ChannelSpec::PhaseDamp { gamma } => phase_damping(d, *gamma),
            ChannelSpec::Swap { p } => swap_error(d, *p),
            ChannelSpec::Depolarizing { p } => depolarizing(d, *p),
            ChannelSpec::Random { target_fidelity, seed, env_dim } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let ch = random_cptp(d, env_dim.unwrap_or(d), &mut rng)?;
                match target_fidelity {
                    Some(f) => Ok(with_target_fidelity(&ch, *f)?.0),
                    None => Ok(ch),
                }
            }
            ChannelSpec::BlockRandom { split, weight, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                mix_with_identity(&random_block_channel(d, *split, &mut rng)?, *weight)
            }
            ChannelSpec::Compose { parts } => {
                let mut acc = Superoperator::identity(d);
                for p in parts {
                    acc = p.build(d)?.compose(&acc)?;
                }
                Ok(acc)
            }
        }
    }
}

/// Gate noise shared by all elements, or one channel per group element.
#[derive(Debug, Clone)]
pub enum GateNoise {
    Independent(Superoperator),
    PerElement(Vec<Superoperator>),
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub gate: GateNoise,
    pub prep: Superoperator,
    pub meas: Superoperator,
}

impl NoiseModel {
    pub fn gate_independent(gate: Superoperator) -> Self {
        let d = gate.dim();
        Self { gate: GateNoise::Independent(gate), prep: Superoperator::identity(d), meas: Superoperator::identity(d) }
    }

    pub fn with_spam(gate: Superoperator, prep: Superoperator, meas: Superoperator) -> Result<Self> {
        let m = Self { gate: GateNoise::Independent(gate), prep, meas };
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.prep.dim()
    }

    pub fn is_gate_dependent(&self) -> bool {
        matches!(self.gate, GateNoise::PerElement(_))
    }

    /// Noise following element `k`.
    pub fn gate_for(&self, k: usize) -> &Superoperator {
        match &self.gate {
            GateNoise::Independent(s) => s,
            GateNoise::PerElement(v) => &v[k],
        }
    }

    /// Gate-independent channel, or the element average in gate-dependent mode.
    pub fn mean_gate(&self) -> Result<Superoperator> {
        match &self.gate {
            GateNoise::Independent(s) => Ok(s.clone()),
            GateNoise::PerElement(v) => {
                let d = self.dim();
                let mut acc = CMatrix::zeros(d * d, d * d);
                for s in v {
                    acc += s.matrix();
                }
                Superoperator::from_matrix(d, acc / Complex64::new(v.len() as f64, 0.0))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let mut parts: Vec<&Superoperator> = vec![&self.prep, &self.meas];
        match &self.gate {
            GateNoise::Independent(s) => parts.push(s),
            GateNoise::PerElement(v) => parts.extend(v.iter()),
        }
        for s in parts {
            if s.dim() != d {
                return Err(CharbError::Dimension("noise components have different dimensions".into()));
            }
            if !s.is_cptp(1e-8) {
                return Err(CharbError::InvalidInput("noise component is not CPTP".into()));
            }
        }
        Ok(())
    }

    /// Rejects SPAM channels that move weight between the sectors `|a⟩⟨b|`
    /// with `a, b ∈ {H₁, H₂}`.
    pub fn check_block_diagonal_spam(&self, split: usize) -> Result<()> {
        for (name, s) in [("preparation", &self.prep), ("measurement", &self.meas)] {
            let leak = cross_block_norm(s, split);
            if leak > 1e-10 {
                return Err(CharbError::InvalidInput(format!(
                    "{name} noise mixes the computational and leakage subspaces ({leak:.2e})"
                )));
            }
        }
        Ok(())
    }
}

/// Largest superoperator entry connecting different `H₁/H₂` operator sectors.
pub fn cross_block_norm(s: &Superoperator, split: usize) -> f64 {
    let d = s.dim();
    let sector = |k: usize| ((k / d) >= split, (k % d) >= split);
    let m = s.matrix();
    let mut worst: f64 = 0.0;
    for r in 0..d * d {
        for c in 0..d * d {
            if sector(r) != sector(c) {
                worst = worst.max(m[(r, c)].norm());
            }
        }
    }
    worst
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Gives every one of `elements` group elements its own noise
/// `mix(random, δ·u_k) ∘ Λ_base`, with `u_k` uniform in `[0,1]` and all
/// randomness derived from `(seed, k)`.
pub fn gate_dependent_perturbation(base: &NoiseModel, elements: usize, delta: f64, seed: u64) -> Result<NoiseModel> {
    let GateNoise::Independent(gate) = &base.gate else {
        return Err(CharbError::InvalidInput("base noise model is already gate dependent".into()));
    };
    if !(0.0..=1.0).contains(&delta) {
        return Err(CharbError::InvalidInput(format!("perturbation strength {delta} outside [0, 1]")));
    }
    let d = base.dim();
    let per = (0..elements)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, k as u64));
            let u: f64 = rng.gen();
            let extra = mix_with_identity(&random_cptp(d, d, &mut rng)?, delta * u)?;
            extra.compose(gate)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseModel { gate: GateNoise::PerElement(per), prep: base.prep.clone(), meas: base.meas.clone() })
}
