//! Per-sequence simulators. Both kernels propagate real coordinates in a
//! Hermitian operator frame, so a step costs one real matrix-vector product.

use num_complex::Complex64;
use rand::Rng;

use crate::channels::{GateNoise, NoiseModel};
use crate::error::{CharbError, Result};
use crate::groups::{FiniteGroup, IrrepPlan, MatchgateGroup};
use crate::liouville::{real_matmul, real_matvec, sample_special_orthogonal_into, HermitianFrame};
use crate::matchgate::hoffman_stream;

/// Draws one random sequence of length `n` and returns the conjugated
/// character of the initial subgroup element and the survival probability.
pub trait SequenceKernel: Sync {
    fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Complex64, f64);
}

/// Frame coordinates of the noisy state and effect of every plan setting.
fn spam_vectors<E>(frame: &HermitianFrame, plan: &IrrepPlan<E>, noise: &NoiseModel) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    plan.settings()
        .into_iter()
        .map(|(rho, meas)| {
            Ok((
                frame.coordinates(&noise.prep.apply(rho)?),
                frame.coordinates(&noise.meas.adjoint().apply(meas)?),
            ))
        })
        .collect()
}

/// Picks a setting; single-setting plans draw nothing from the stream.
fn pick<'s, R: Rng + ?Sized>(spam: &'s [(Vec<f64>, Vec<f64>)], rng: &mut R) -> &'s (Vec<f64>, Vec<f64>) {
    if spam.len() == 1 {
        &spam[0]
    } else {
        &spam[rng.gen_range(0..spam.len())]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Kernel for groups given by an explicit element list and Cayley table.
pub struct FiniteKernel<'a> {
    group: &'a FiniteGroup,
    subgroup: &'a [usize],
    weights: Vec<Complex64>,
    /// `T(Λ_g) T(g)` for every element.
    steps: Vec<Vec<f64>>,
    spam: Vec<(Vec<f64>, Vec<f64>)>,
}

impl<'a> FiniteKernel<'a> {
    pub fn new(group: &'a FiniteGroup, plan: &'a IrrepPlan<usize>, noise: &NoiseModel) -> Result<Self> {
        if noise.dim() != group.dim() {
            return Err(CharbError::Dimension("noise and group act on different spaces".into()));
        }
        if plan.subgroup.iter().any(|&k| k >= group.len()) {
            return Err(CharbError::InvalidInput(format!("plan {} does not belong to group {}", plan.id, group.name())));
        }
        if let GateNoise::PerElement(v) = &noise.gate {
            if v.len() != group.len() {
                return Err(CharbError::InvalidInput(format!(
                    "gate-dependent noise has {} channels for {} elements",
                    v.len(),
                    group.len()
                )));
            }
        }
        let frame = group.frame();
        let n2 = group.dim() * group.dim();
        let shared = match &noise.gate {
            GateNoise::Independent(s) => Some(frame.transfer_matrix(s)),
            GateNoise::PerElement(_) => None,
        };
        let steps = (0..group.len())
            .map(|k| {
                let t = match &shared {
                    Some(t) => t.clone(),
                    None => frame.transfer_matrix(noise.gate_for(k)),
                };
                real_matmul(&t, group.transfer(k), n2)
            })
            .collect();
        let spam = spam_vectors(frame, plan, noise)?;
        Ok(Self {
            group,
            subgroup: &plan.subgroup,
            weights: plan.characters.iter().map(|c| c.conj()).collect(),
            steps,
            spam,
        })
    }

    fn step(&self, g: usize, x: &mut Vec<f64>, buf: &mut Vec<f64>) {
        real_matvec(&self.steps[g], x, buf);
        std::mem::swap(x, buf);
    }
}

impl SequenceKernel for FiniteKernel<'_> {
    fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Complex64, f64) {
        let order = self.group.len();
        let j = rng.gen_range(0..self.subgroup.len());
        let (rho, meas) = pick(&self.spam, rng);
        let mut x = rho.clone();
        let mut buf = vec![0.0; x.len()];
        let first = rng.gen_range(0..order);
        self.step(self.group.product(first, self.subgroup[j]), &mut x, &mut buf);
        let mut acc = first;
        for _ in 1..n {
            let g = rng.gen_range(0..order);
            self.step(g, &mut x, &mut buf);
            acc = self.group.product(g, acc);
        }
        self.step(self.group.inverse(acc), &mut x, &mut buf);
        (self.weights[j], dot(meas, &x))
    }
}

/// Kernel for the continuous matchgate group. Elements are Haar rotations in
/// SO(2n), applied to the monomial frame through their Givens factorization.
pub struct MatchgateKernel<'a> {
    group: &'a MatchgateGroup,
    subgroup: &'a [Vec<i8>],
    weights: Vec<Complex64>,
    noise: Vec<f64>,
    spam: Vec<(Vec<f64>, Vec<f64>)>,
}

impl<'a> MatchgateKernel<'a> {
    pub fn new(group: &'a MatchgateGroup, plan: &'a IrrepPlan<Vec<i8>>, noise: &NoiseModel) -> Result<Self> {
        if noise.dim() != group.dim() {
            return Err(CharbError::Dimension("noise and group act on different spaces".into()));
        }
        let GateNoise::Independent(gate) = &noise.gate else {
            return Err(CharbError::InvalidInput("the matchgate engine supports gate-independent noise only".into()));
        };
        if plan.subgroup.iter().any(|s| s.len() != 2 * group.n()) {
            return Err(CharbError::InvalidInput(format!("plan {} does not belong to {}", plan.id, group.name())));
        }
        let spam = spam_vectors(group.frame(), plan, noise)?;
        Ok(Self {
            group,
            subgroup: &plan.subgroup,
            weights: plan.characters.iter().map(|c| c.conj()).collect(),
            noise: group.frame().transfer_matrix(gate),
            spam,
        })
    }

    /// Applies the element with row-major rotation `r` (destroyed) to frame
    /// coordinates `x`.
    pub fn apply_rotation(&self, r: &mut [f64], x: &mut [f64]) {
        let dim = 2 * self.group.n();
        hoffman_stream(dim, r, |st| {
            for &(s, t) in self.group.adjacent_pairs(st.k) {
                let (a, b) = (x[s as usize], x[t as usize]);
                x[s as usize] = st.cos * a + st.sin * b;
                x[t as usize] = -st.sin * a + st.cos * b;
            }
        });
    }

    fn gate(&self, r: &mut [f64], x: &mut Vec<f64>, buf: &mut Vec<f64>) {
        self.apply_rotation(r, x);
        real_matvec(&self.noise, x, buf);
        std::mem::swap(x, buf);
    }
}

fn matmul_into(a: &[f64], b: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[i * n + k] * b[k * n + j];
            }
            out[i * n + j] = s;
        }
    }
}

impl SequenceKernel for MatchgateKernel<'_> {
    fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Complex64, f64) {
        let dim = 2 * self.group.n();
        let j = rng.gen_range(0..self.subgroup.len());
        let signs = &self.subgroup[j];
        let (rho, meas) = pick(&self.spam, rng);
        let mut x = rho.clone();
        let mut buf = vec![0.0; x.len()];
        let mut r = vec![0.0; dim * dim];
        let mut work = vec![0.0; dim * dim];
        let mut tmp = vec![0.0; dim * dim];

        // U₁U₀ has rotation diag(σ)·R₁; the running product tracks R₁R₂⋯ only
        sample_special_orthogonal_into(dim, rng, &mut r);
        let mut acc = r.clone();
        for (row, &s) in signs.iter().enumerate() {
            for c in 0..dim {
                work[row * dim + c] = s as f64 * r[row * dim + c];
            }
        }
        self.gate(&mut work, &mut x, &mut buf);
        for _ in 1..n {
            sample_special_orthogonal_into(dim, rng, &mut r);
            matmul_into(&acc, &r, dim, &mut tmp);
            std::mem::swap(&mut acc, &mut tmp);
            self.gate(&mut r, &mut x, &mut buf);
        }
        for a in 0..dim {
            for b in 0..dim {
                work[a * dim + b] = acc[b * dim + a];
            }
        }
        self.gate(&mut work, &mut x, &mut buf);
        (self.weights[j], dot(meas, &x))
    }
}
