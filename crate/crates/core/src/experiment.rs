//! End-to-end experiments: simulate every plan of a group, fit the decays and
//! turn the rates into physical estimates next to their exact values.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channels::{GateNoise, NoiseModel};
use crate::error::{CharbError, Result};
use crate::estimators::{
    exact_average_fidelity, exact_leakage_seepage, exact_restricted_fidelity, extended_sub_fidelity,
    extended_sub_fidelity_estimate, fidelity_from_lambdas, gate_dependent_avg_fidelity, leakage_seepage_from_fit,
    restricted_fidelity_estimate, Estimate, IrrepSummary,
};
use crate::fitting::{select_model, FitResult};
use crate::groups::{
    leakage_plan, qubit_leakage_plans, subspace_plans, FiniteGroup, IrrepPlan, MatchgateGroup, LEAKAGE_SPLIT,
};
use crate::liouville::Superoperator;
use crate::rb_engine::{
    default_lengths, exact_curve, n_max_for_rate, run_character_rb, DecayDataset, ExperimentConfig, RbGroup,
};
use crate::reptheory::{commutant_spectrum, IrrepDescriptor};

/// Budget and length policy shared by all plans of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    /// Explicit lengths; when absent they are derived per plan from the exact decay.
    #[serde(default)]
    pub lengths: Option<Vec<usize>>,
    #[serde(default = "default_n_lengths")]
    pub n_lengths: usize,
    /// Upper bound on automatically chosen lengths.
    #[serde(default = "default_max_length")]
    pub max_length: usize,
    /// Sequences per plan.
    pub total_sequences: usize,
    #[serde(default = "default_shots")]
    pub shots_per_sequence: usize,
    pub seed: u64,
}

fn default_n_lengths() -> usize {
    15
}
fn default_max_length() -> usize {
    1000
}
fn default_shots() -> usize {
    1
}

impl ExperimentSettings {
    pub fn new(total_sequences: usize, seed: u64) -> Self {
        Self {
            lengths: None,
            n_lengths: default_n_lengths(),
            max_length: default_max_length(),
            total_sequences,
            shots_per_sequence: default_shots(),
            seed,
        }
    }

    fn config_for(&self, slowest_rate: Option<f64>, gate_dependent: bool) -> Result<ExperimentConfig> {
        let lengths = match (&self.lengths, slowest_rate) {
            (Some(l), _) => l.clone(),
            (None, Some(r)) => default_lengths(n_max_for_rate(r, self.max_length), self.n_lengths),
            (None, None) => default_lengths(self.max_length.min(100), self.n_lengths),
        };
        let c = ExperimentConfig {
            lengths,
            total_sequences: self.total_sequences,
            shots_per_sequence: self.shots_per_sequence,
            seed: self.seed,
            gate_dependent,
        };
        c.validate()?;
        Ok(c)
    }
}

/// One plan's data, exact curve (post-rotated) and selected fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub plan_id: String,
    pub irrep_ids: Vec<String>,
    pub dataset: DecayDataset,
    pub exact: Option<Vec<Complex64>>,
    pub fit: FitResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub kind: String,
    pub group: String,
    pub plans: Vec<PlanOutcome>,
    pub estimates: BTreeMap<String, Estimate>,
    pub exact: BTreeMap<String, f64>,
    /// Covariance of the `(leakage, seepage)` estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leakage_covariance: Option<[[f64; 2]; 2]>,
}

fn irrep<'a>(irreps: &'a [IrrepDescriptor], id: &str) -> Result<&'a IrrepDescriptor> {
    irreps.iter().find(|i| i.id == id).ok_or_else(|| CharbError::InvalidInput(format!("unknown irrep {id}")))
}

/// Modulus of the slowest non-unit eigenvalue among `ids`.
fn slowest_rate(spectrum: &[(String, Vec<Complex64>)], ids: &[String]) -> Option<f64> {
    spectrum
        .iter()
        .filter(|(id, _)| ids.contains(id))
        .flat_map(|(_, ev)| ev.iter().map(|z| z.norm()))
        .filter(|&m| m < 1.0 - 1e-9)
        .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.max(m))))
}

fn run_plans<G: RbGroup>(
    group: &G,
    plans: &[IrrepPlan<G::Element>],
    irreps: &[IrrepDescriptor],
    noise: &NoiseModel,
    settings: &ExperimentSettings,
) -> Result<Vec<PlanOutcome>> {
    let reference = noise.mean_gate()?;
    let spectrum = commutant_spectrum(&reference, irreps)?;
    let mut out = Vec::with_capacity(plans.len());
    for plan in plans {
        let cfg = settings.config_for(slowest_rate(&spectrum, &plan.irrep_ids), noise.is_gate_dependent())?;
        let dataset = run_character_rb(group, plan, noise, &cfg)?;
        let exact = match noise.gate {
            GateNoise::Independent(_) => Some(
                exact_curve(group, plan, noise, &cfg.lengths)?.into_iter().map(|z| z * plan.post_rotation).collect(),
            ),
            GateNoise::PerElement(_) => None,
        };
        let fit = select_model(&dataset, &plan.fit_candidates)?;
        out.push(PlanOutcome { plan_id: plan.id.clone(), irrep_ids: plan.irrep_ids.clone(), dataset, exact, fit });
    }
    Ok(out)
}

fn plan<'a>(plans: &'a [PlanOutcome], id: &str) -> Result<&'a PlanOutcome> {
    plans.iter().find(|p| p.plan_id == id).ok_or_else(|| CharbError::InvalidInput(format!("missing plan {id}")))
}

fn lambda_estimate(fit: &FitResult, k: usize) -> (f64, f64) {
    (fit.lambdas[k].re, fit.lambda_stderr(k).0)
}

fn exact_block_rate(spectrum: &[(String, Vec<Complex64>)], id: &str, which: usize) -> f64 {
    spectrum
        .iter()
        .find(|(k, _)| k == id)
        .map(|(_, ev)| ev.get(which).map_or(f64::NAN, |z| z.re))
        .unwrap_or(f64::NAN)
}

/// Subspace RB on the 648-element group: fidelity and extended sub-fidelity.
pub fn run_subspace_experiment(
    group: &FiniteGroup,
    noise: &NoiseModel,
    settings: &ExperimentSettings,
    include_st: bool,
) -> Result<ExperimentOutcome> {
    let plans = subspace_plans(group, include_st)?;
    let irreps = group.irreps();
    let outcomes = run_plans(group, &plans, irreps, noise, settings)?;

    let mut summary = IrrepSummary::new(group.dim());
    let trivial = plan(&outcomes, "trivial")?;
    summary.push_fit("trivial", 1, 2, &trivial.fit, true)?;
    let tperp = plan(&outcomes, "Tperp")?;
    summary.push_fit("Tperp", irrep(irreps, "Tperp")?.dim, 1, &tperp.fit, false)?;
    summary.push_fit("TS", irrep(irreps, "TS")?.dim, 1, &plan(&outcomes, "TS")?.fit, false)?;
    match outcomes.iter().find(|p| p.plan_id == "ST") {
        Some(st) => summary.push_fit("ST", irrep(irreps, "ST")?.dim, 1, &st.fit, false)?,
        None => summary.push_conjugate_of("ST", irrep(irreps, "ST")?.dim, "TS")?,
    }
    let mut estimates = BTreeMap::new();
    estimates.insert("fidelity".to_string(), fidelity_from_lambdas(&summary)?);
    estimates.insert(
        "extended_sub_fidelity".to_string(),
        extended_sub_fidelity_estimate(lambda_estimate(&trivial.fit, 0), lambda_estimate(&tperp.fit, 0)),
    );

    let mean = noise.mean_gate()?;
    let spectrum = commutant_spectrum(&mean, irreps)?;
    let mut exact = BTreeMap::new();
    exact.insert("fidelity".to_string(), exact_fidelity(noise));
    exact.insert(
        "extended_sub_fidelity".to_string(),
        extended_sub_fidelity(exact_block_rate(&spectrum, "trivial", 1), exact_block_rate(&spectrum, "Tperp", 0)),
    );
    Ok(ExperimentOutcome {
        kind: "subspace".into(),
        group: group.name().into(),
        plans: outcomes,
        estimates,
        exact,
        leakage_covariance: None,
    })
}

fn exact_fidelity(noise: &NoiseModel) -> f64 {
    match &noise.gate {
        GateNoise::Independent(s) => exact_average_fidelity(s),
        GateNoise::PerElement(_) => gate_dependent_avg_fidelity(noise),
    }
}

/// Leakage RB. On the 16-element group only `(L, S)` are estimated; on the
/// 192-element qubit group the restricted fidelity is estimated as well.
pub fn run_leakage_experiment(group: &FiniteGroup, noise: &NoiseModel, settings: &ExperimentSettings) -> Result<ExperimentOutcome> {
    noise.check_block_diagonal_spam(LEAKAGE_SPLIT)?;
    let plans = match group.dim() {
        4 => vec![leakage_plan(group)?],
        3 => qubit_leakage_plans(group)?,
        d => return Err(CharbError::InvalidInput(format!("no leakage plans for dimension {d}"))),
    };
    let outcomes = run_plans(group, &plans, group.irreps(), noise, settings)?;
    let est = leakage_seepage_from_fit(&plan(&outcomes, "leakage")?.fit)?;
    let mean = noise.mean_gate()?;
    let (l, s) = exact_leakage_seepage(&mean, LEAKAGE_SPLIT)?;
    let mut estimates = BTreeMap::new();
    let mut exact = BTreeMap::new();
    estimates.insert("leakage".to_string(), est.leakage);
    estimates.insert("seepage".to_string(), est.seepage);
    exact.insert("leakage".to_string(), l);
    exact.insert("seepage".to_string(), s);
    if let Ok(perp) = plan(&outcomes, "one_perp") {
        let f = restricted_fidelity_estimate(
            lambda_estimate(&perp.fit, 0),
            (est.leakage.value, est.leakage.stderr),
            LEAKAGE_SPLIT,
        );
        estimates.insert("restricted_fidelity".to_string(), f);
        exact.insert("restricted_fidelity".to_string(), exact_restricted_fidelity(&mean, LEAKAGE_SPLIT)?);
    }
    Ok(ExperimentOutcome {
        kind: "leakage".into(),
        group: group.name().into(),
        plans: outcomes,
        estimates,
        exact,
        leakage_covariance: Some(est.covariance),
    })
}

/// Matchgate RB: plans `i = 0, …, n` and the average fidelity.
pub fn run_matchgate_experiment(
    group: &MatchgateGroup,
    noise: &NoiseModel,
    settings: &ExperimentSettings,
) -> Result<ExperimentOutcome> {
    let n = group.n();
    let plans = crate::groups::matchgate_plans(group)?;
    let irreps = group.irreps();
    let outcomes = run_plans(group, &plans, irreps, noise, settings)?;
    let mut summary = IrrepSummary::new(group.dim());
    for (i, p) in outcomes.iter().enumerate() {
        if i < n {
            let id = format!("H{i}");
            summary.push_fit(&id, irrep(irreps, &id)?.dim, 2, &p.fit, i == 0)?;
        } else {
            let (a, b) = (format!("H{n},1"), format!("H{n},2"));
            let src = summary.add_fit(&p.fit);
            let last = p.fit.lambdas.len() - 1;
            let la = summary.fitted(src, 0, &p.fit);
            let lb = summary.fitted(src, last.min(1), &p.fit);
            summary.push(&a, irrep(irreps, &a)?.dim, 1, vec![la])?;
            summary.push(&b, irrep(irreps, &b)?.dim, 1, vec![lb])?;
        }
    }
    let mut estimates = BTreeMap::new();
    estimates.insert("fidelity".to_string(), fidelity_from_lambdas(&summary)?);
    let mut exact = BTreeMap::new();
    exact.insert("fidelity".to_string(), exact_fidelity(noise));
    Ok(ExperimentOutcome {
        kind: "matchgate".into(),
        group: group.name(),
        plans: outcomes,
        estimates,
        exact,
        leakage_covariance: None,
    })
}

/// Exact fidelity of a channel and the value reassembled from its commutant
/// eigenvalues; the two agree for any group with a complete irrep table.
pub fn theorem_chain(channel: &Superoperator, irreps: &[IrrepDescriptor]) -> Result<(f64, f64)> {
    let s = IrrepSummary::from_channel(channel, irreps)?;
    Ok((exact_average_fidelity(channel), fidelity_from_lambdas(&s)?.value))
}
