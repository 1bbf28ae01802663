//! Physical quantities from fitted decay rates and from exact channels.
//!
//! Fitted estimates carry first-order (delta-method) standard errors. Values
//! outside their physical range are returned unclamped with `valid = false`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channels::NoiseModel;
use crate::error::{CharbError, Result};
use crate::fitting::{FitModel, FitResult};
use crate::liouville::Superoperator;
use crate::reptheory::{commutant_spectrum, IrrepDescriptor};

/// `F = (Tr Λ̂ + d)/(d² + d)`.
pub fn exact_average_fidelity(channel: &Superoperator) -> f64 {
    let d = channel.dim() as f64;
    (channel.trace().re + d) / (d * d + d)
}

/// Mean of the per-element fidelities of a gate-dependent model.
pub fn gate_dependent_avg_fidelity(noise: &NoiseModel) -> f64 {
    match &noise.gate {
        crate::channels::GateNoise::Independent(s) => exact_average_fidelity(s),
        crate::channels::GateNoise::PerElement(v) => {
            v.iter().map(exact_average_fidelity).sum::<f64>() / v.len() as f64
        }
    }
}

/// A value with a standard error and a physical-range flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub valid: bool,
}

/// One eigenvalue entering [`fidelity_from_lambdas`]. `source` points at the
/// fitted rate it came from, so that repeated or conjugated uses of one rate
/// stay fully correlated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaRef {
    pub value: Complex64,
    pub source: Option<(usize, usize)>,
}

impl LambdaRef {
    pub fn fixed(value: Complex64) -> Self {
        Self { value, source: None }
    }
}

#[derive(Debug, Clone)]
pub struct IrrepEntry {
    pub id: String,
    pub dim: usize,
    pub multiplicity: usize,
    pub lambdas: Vec<LambdaRef>,
}

/// Per-irrep eigenvalues of a twirled channel plus the covariances of the fits
/// that produced them.
#[derive(Debug, Clone)]
pub struct IrrepSummary {
    pub d: usize,
    pub entries: Vec<IrrepEntry>,
    sources: Vec<Vec<Vec<f64>>>,
}

impl IrrepSummary {
    pub fn new(d: usize) -> Self {
        Self { d, entries: Vec::new(), sources: Vec::new() }
    }

    /// Exact eigenvalues of every commutant block.
    pub fn from_channel(channel: &Superoperator, irreps: &[IrrepDescriptor]) -> Result<Self> {
        let mut s = Self::new(channel.dim());
        for (ir, (_, ev)) in irreps.iter().zip(commutant_spectrum(channel, irreps)?) {
            s.push(&ir.id, ir.dim, ir.multiplicity, ev.into_iter().map(LambdaRef::fixed).collect())?;
        }
        Ok(s)
    }

    /// Registers a fit; returns the source index for [`Self::fitted`].
    pub fn add_fit(&mut self, fit: &FitResult) -> usize {
        let l = fit.lambdas.len();
        let cov = (0..l)
            .map(|a| (0..l).map(|b| fit.lambda_covariance[2 * a][2 * b]).collect())
            .collect();
        self.sources.push(cov);
        self.sources.len() - 1
    }

    pub fn fitted(&self, source: usize, k: usize, fit: &FitResult) -> LambdaRef {
        LambdaRef { value: fit.lambdas[k], source: Some((source, k)) }
    }

    pub fn push(&mut self, id: &str, dim: usize, multiplicity: usize, lambdas: Vec<LambdaRef>) -> Result<()> {
        if lambdas.len() != multiplicity {
            return Err(CharbError::InvalidInput(format!(
                "irrep {id} has multiplicity {multiplicity} but {} eigenvalues",
                lambdas.len()
            )));
        }
        if let Some((s, k)) = lambdas.iter().find_map(|l| l.source) {
            if s >= self.sources.len() || k >= self.sources[s].len() {
                return Err(CharbError::InvalidInput(format!("irrep {id} refers to an unknown fit")));
            }
        }
        self.entries.push(IrrepEntry { id: id.into(), dim, multiplicity, lambdas });
        Ok(())
    }

    /// Adds an irrep whose eigenvalues come from one fit. The trivial irrep
    /// gets the fixed eigenvalue 1 prepended. A fit with fewer rates than
    /// needed (a collapsed double decay) repeats its last rate.
    pub fn push_fit(&mut self, id: &str, dim: usize, multiplicity: usize, fit: &FitResult, trivial: bool) -> Result<()> {
        let src = self.add_fit(fit);
        let mut lambdas = Vec::with_capacity(multiplicity);
        if trivial {
            lambdas.push(LambdaRef::fixed(Complex64::new(1.0, 0.0)));
        }
        let mut k = 0;
        while lambdas.len() < multiplicity {
            if fit.lambdas.is_empty() {
                return Err(CharbError::InvalidInput(format!("fit for {id} has no rates")));
            }
            lambdas.push(self.fitted(src, k.min(fit.lambdas.len() - 1), fit));
            k += 1;
        }
        self.push(id, dim, multiplicity, lambdas)
    }

    /// Adds an irrep whose single eigenvalue is the conjugate of another
    /// irrep's fitted one (the `ST` partner of `TS`).
    pub fn push_conjugate_of(&mut self, id: &str, dim: usize, of: &str) -> Result<()> {
        let partner = self
            .entries
            .iter()
            .find(|e| e.id == of)
            .ok_or_else(|| CharbError::InvalidInput(format!("no irrep {of} to conjugate")))?;
        let lambdas = partner.lambdas.iter().map(|l| LambdaRef { value: l.value.conj(), source: l.source }).collect();
        let m = partner.multiplicity;
        self.push(id, dim, m, lambdas)
    }

    pub fn lambda_values(&self, id: &str) -> Option<Vec<Complex64>> {
        self.entries.iter().find(|e| e.id == id).map(|e| e.lambdas.iter().map(|l| l.value).collect())
    }
}

/// `F = (Σᵢ dim(Hᵢ) Σⱼ λᵢⱼ + d)/(d² + d)` with the variance of the real parts.
pub fn fidelity_from_lambdas(summary: &IrrepSummary) -> Result<Estimate> {
    let d = summary.d as f64;
    let coverage: usize = summary.entries.iter().map(|e| e.dim * e.multiplicity).sum();
    if coverage != summary.d * summary.d {
        return Err(CharbError::InvalidInput(format!(
            "irreps cover dimension {coverage}, expected {}",
            summary.d * summary.d
        )));
    }
    let norm = d * d + d;
    let mut total = Complex64::new(0.0, 0.0);
    let mut grads: Vec<Vec<f64>> = summary.sources.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut valid = true;
    for e in &summary.entries {
        for l in &e.lambdas {
            total += l.value * e.dim as f64;
            valid &= l.value.norm() <= 1.0 + 1e-6;
            if let Some((s, k)) = l.source {
                grads[s][k] += e.dim as f64 / norm;
            }
        }
    }
    let mut var = 0.0;
    for (g, c) in grads.iter().zip(&summary.sources) {
        for a in 0..g.len() {
            for b in 0..g.len() {
                var += g[a] * c[a][b] * g[b];
            }
        }
    }
    let value = (total.re + d) / norm;
    valid &= value <= 1.0 + 1e-9;
    Ok(Estimate { value, stderr: var.max(0.0).sqrt(), valid })
}

/// `F̃ = (16λ_{T⊥} + 2λ₀ + 7)/25`.
pub fn extended_sub_fidelity(lambda0: f64, lambda_tperp: f64) -> f64 {
    (16.0 * lambda_tperp + 2.0 * lambda0 + 7.0) / 25.0
}

/// [`extended_sub_fidelity`] from two independent fitted rates.
pub fn extended_sub_fidelity_estimate(lambda0: (f64, f64), lambda_tperp: (f64, f64)) -> Estimate {
    let value = extended_sub_fidelity(lambda0.0, lambda_tperp.0);
    let stderr = ((16.0 * lambda_tperp.1).powi(2) + (2.0 * lambda0.1).powi(2)).sqrt() / 25.0;
    Estimate { value, stderr, valid: value <= 1.0 + 1e-9 }
}

/// `L = (1−B)(1−λ)`, `S = B(1−λ)`.
pub fn leakage_seepage(b: f64, lambda: f64) -> (f64, f64) {
    ((1.0 - b) * (1.0 - lambda), b * (1.0 - lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageEstimate {
    pub leakage: Estimate,
    pub seepage: Estimate,
    /// Covariance of `(L, S)`.
    pub covariance: [[f64; 2]; 2],
}

/// Leakage and seepage from a `C λ^N + B` fit of the trivial-character decay.
pub fn leakage_seepage_from_fit(fit: &FitResult) -> Result<LeakageEstimate> {
    if fit.model != FitModel::ExpPlusConst {
        return Err(CharbError::InvalidInput(format!("leakage needs a C·λ^N + B fit, got {}", fit.model.name())));
    }
    let (lam, b) = (fit.params[1], fit.params[2]);
    let c = &fit.covariance;
    let (vll, vbb, vlb) = (c[1][1], c[2][2], c[1][2]);
    let (l, s) = leakage_seepage(b, lam);
    // ∂L/∂(λ,B) = (−(1−B), −(1−λ)),  ∂S/∂(λ,B) = (−B, 1−λ)
    let gl = [-(1.0 - b), -(1.0 - lam)];
    let gs = [-b, 1.0 - lam];
    let quad = |x: [f64; 2], y: [f64; 2]| x[0] * y[0] * vll + (x[0] * y[1] + x[1] * y[0]) * vlb + x[1] * y[1] * vbb;
    let covariance = [[quad(gl, gl), quad(gl, gs)], [quad(gs, gl), quad(gs, gs)]];
    let valid = (0.0..=1.0).contains(&b) && (0.0..=1.0).contains(&lam);
    Ok(LeakageEstimate {
        leakage: Estimate { value: l, stderr: covariance[0][0].max(0.0).sqrt(), valid: valid && (0.0..=1.0).contains(&l) },
        seepage: Estimate { value: s, stderr: covariance[1][1].max(0.0).sqrt(), valid: valid && (0.0..=1.0).contains(&s) },
        covariance,
    })
}

fn check_split(channel: &Superoperator, split: usize) -> Result<()> {
    if split == 0 || split >= channel.dim() {
        return Err(CharbError::InvalidInput(format!("split {split} must lie strictly inside dimension {}", channel.dim())));
    }
    Ok(())
}

/// `L = ⟨⟨𝟙₂|Λ̂|𝟙₁⟩⟩/d₁`, `S = ⟨⟨𝟙₁|Λ̂|𝟙₂⟩⟩/d₂`.
pub fn exact_leakage_seepage(channel: &Superoperator, split: usize) -> Result<(f64, f64)> {
    check_split(channel, split)?;
    let d = channel.dim();
    let m = channel.matrix();
    let diag = |k: usize| k * d + k;
    let block = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
        let mut acc = Complex64::new(0.0, 0.0);
        for r in rows {
            for c in cols.clone() {
                acc += m[(diag(r), diag(c))];
            }
        }
        acc.re
    };
    let l = block(split..d, 0..split) / split as f64;
    let s = block(0..split, split..d) / (d - split) as f64;
    Ok((l, s))
}

/// `F_{Λ,1} = ((d₁²−1)λ_{1⊥} + (d₁+1)(1−L))/(d₁² + d₁)`.
pub fn restricted_fidelity(lambda_perp: f64, leakage: f64, d1: usize) -> f64 {
    let d1 = d1 as f64;
    ((d1 * d1 - 1.0) * lambda_perp + (d1 + 1.0) * (1.0 - leakage)) / (d1 * d1 + d1)
}

/// [`restricted_fidelity`] with independent standard errors on its inputs.
pub fn restricted_fidelity_estimate(lambda_perp: (f64, f64), leakage: (f64, f64), d1: usize) -> Estimate {
    let value = restricted_fidelity(lambda_perp.0, leakage.0, d1);
    let f = d1 as f64;
    let norm = f * f + f;
    let stderr = (((f * f - 1.0) * lambda_perp.1).powi(2) + ((f + 1.0) * leakage.1).powi(2)).sqrt() / norm;
    Estimate { value, stderr, valid: (0.0..=1.0 + 1e-9).contains(&value) }
}

/// `F_{Λ,1} = (Tr(Λ̂P̂₁₁) + d₁(1−L))/(d₁² + d₁)`.
pub fn exact_restricted_fidelity(channel: &Superoperator, split: usize) -> Result<f64> {
    check_split(channel, split)?;
    let d = channel.dim();
    let m = channel.matrix();
    let mut tr = 0.0;
    for a in 0..split {
        for b in 0..split {
            tr += m[(a * d + b, a * d + b)].re;
        }
    }
    let (l, _) = exact_leakage_seepage(channel, split)?;
    let d1 = split as f64;
    Ok((tr + d1 * (1.0 - l)) / (d1 * d1 + d1))
}
