use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use charb_core::channels::{gate_dependent_perturbation, mix_seed, ChannelSpec, NoiseModel};
use charb_core::estimators::Estimate;
use charb_core::experiment::{
    run_leakage_experiment, run_matchgate_experiment, run_subspace_experiment, ExperimentOutcome,
};
use charb_core::groups::{
    leakage_group, leakage_plan, matchgate_group, matchgate_plans, qubit_leakage_group, qubit_leakage_plans,
    qutrit_clifford_group, subspace_group, subspace_plans, FiniteGroup, IrrepPlan, MatchgateGroup, LEAKAGE_SPLIT,
};
use charb_core::matchgate::compile;
use charb_core::reptheory::{
    descriptor_character, irreducibility_norm, multiplicity_of_irrep, natural_character, two_design_check,
    IrrepDescriptor,
};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{Ensemble, Resolved, SweepKind};
use crate::output::{write_experiment, OutDir, Report};
use crate::CliError;

pub enum Group {
    Finite(FiniteGroup),
    Matchgate(MatchgateGroup),
}

impl Group {
    fn dim(&self) -> usize {
        match self {
            Group::Finite(g) => g.dim(),
            Group::Matchgate(g) => g.dim(),
        }
    }

    fn irreps(&self) -> &[IrrepDescriptor] {
        match self {
            Group::Finite(g) => g.irreps(),
            Group::Matchgate(g) => g.irreps(),
        }
    }
}

/// Looks up `subspace`, `leakage`, `qubit_leakage`, `qutrit_clifford` or `matchgate:n=<n>`.
pub fn group_by_id(id: &str) -> Result<Group, CliError> {
    let g = match id {
        "subspace" => Group::Finite(subspace_group()?),
        "leakage" => Group::Finite(leakage_group()?),
        "qubit_leakage" => Group::Finite(qubit_leakage_group()?),
        "qutrit_clifford" => Group::Finite(qutrit_clifford_group()?),
        _ => {
            let n = id
                .strip_prefix("matchgate:n=")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|n| (1..=8).contains(n))
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "unknown group {id:?}; expected subspace, leakage, qubit_leakage, qutrit_clifford or matchgate:n=<1..8>"
                    ))
                })?;
            Group::Matchgate(matchgate_group(n)?)
        }
    };
    Ok(g)
}

fn noise_model(
    gate: &ChannelSpec,
    spam: Option<(&ChannelSpec, &ChannelSpec)>,
    cfg: &Resolved,
    group: &Group,
) -> Result<NoiseModel, CliError> {
    let d = group.dim();
    let gate = gate.build(d)?;
    let base = match spam {
        Some((p, m)) => NoiseModel::with_spam(gate, p.build(d)?, m.build(d)?)?,
        None => NoiseModel::gate_independent(gate),
    };
    match (&cfg.gate_dependent, group) {
        (None, _) => Ok(base),
        (Some(gd), Group::Finite(g)) => Ok(gate_dependent_perturbation(&base, g.len(), gd.delta, gd.seed)?),
        (Some(_), Group::Matchgate(_)) => {
            Err(CliError::Config("gate-dependent noise is only available for finite groups".into()))
        }
    }
}

fn run_one(
    kind: SweepKind,
    group: &Group,
    noise: &NoiseModel,
    cfg: &Resolved,
    seed: u64,
) -> Result<ExperimentOutcome, CliError> {
    let mut settings = cfg.settings.clone();
    settings.seed = seed;
    let out = match (kind, group) {
        (SweepKind::Subspace, Group::Finite(g)) => run_subspace_experiment(g, noise, &settings, cfg.include_st)?,
        (SweepKind::Leakage, Group::Finite(g)) => run_leakage_experiment(g, noise, &settings)?,
        (SweepKind::Matchgate, Group::Matchgate(g)) => run_matchgate_experiment(g, noise, &settings)?,
        _ => return Err(CliError::Config(format!("group {} does not fit this experiment", cfg.group))),
    };
    Ok(out)
}

fn check_leakage_group(id: &str) -> Result<(), CliError> {
    match id {
        "leakage" | "qubit_leakage" => Ok(()),
        _ => Err(CliError::Config(format!("leakage experiments need group leakage or qubit_leakage, not {id:?}"))),
    }
}

/// `subspace`, `leakage` and `matchgate`.
pub fn experiment(kind: SweepKind, cfg: &Resolved, out: &OutDir) -> Result<(), CliError> {
    if kind == SweepKind::Leakage {
        check_leakage_group(&cfg.group)?;
    }
    let group = group_by_id(&cfg.group)?;
    let spam = cfg.prep.as_ref().zip(cfg.meas.as_ref());
    let noise = noise_model(&cfg.noise, spam, cfg, &group)?;
    let outcome = run_one(kind, &group, &noise, cfg, cfg.seed)?;
    write_experiment(out, cfg, &outcome)?;
    for (k, est) in &outcome.estimates {
        let exact = outcome.exact.get(k).copied().unwrap_or(f64::NAN);
        eprintln!("{k}: {:.6} +/- {:.6} (exact {exact:.6})", est.value, est.stderr);
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepItem {
    index: usize,
    parameter: f64,
    noise: ChannelSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    spam: Option<(ChannelSpec, ChannelSpec)>,
    run_seed: u64,
    estimates: BTreeMap<String, Estimate>,
    exact: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct QuantitySummary {
    count: usize,
    reduced_chi2: f64,
    max_abs_z: f64,
}

#[derive(Serialize)]
struct SweepResult {
    items: Vec<SweepItem>,
    summary: BTreeMap<String, QuantitySummary>,
}

/// Scatter study over a channel ensemble: one experiment per channel.
pub fn sweep(cfg: &Resolved, out: &OutDir) -> Result<(), CliError> {
    let sw = cfg.sweep.as_ref().expect("sweep config is resolved");
    if sw.kind == SweepKind::Leakage {
        check_leakage_group(&cfg.group)?;
    }
    let group = group_by_id(&cfg.group)?;
    let params: Vec<f64> = match sw.ensemble {
        Ensemble::Random if sw.count == 1 => vec![sw.fidelity_min],
        Ensemble::Random => (0..sw.count)
            .map(|k| sw.fidelity_min + (sw.fidelity_max - sw.fidelity_min) * k as f64 / (sw.count - 1) as f64)
            .collect(),
        _ => sw.values.clone(),
    };
    let mut items = Vec::with_capacity(params.len());
    let mut scatter = String::from("index,parameter,quantity,exact,estimate,stderr,z\n");
    for (k, &param) in params.iter().enumerate() {
        let channel_seed = mix_seed(cfg.seed, 2 * k as u64);
        let run_seed = mix_seed(cfg.seed, 2 * k as u64 + 1);
        let gate = match sw.ensemble {
            Ensemble::Random => ChannelSpec::Random { target_fidelity: Some(param), seed: channel_seed, env_dim: None },
            Ensemble::Swap => ChannelSpec::Swap { p: param },
            Ensemble::Intensity => ChannelSpec::Intensity { epsilon: param },
        };
        let spam_specs = (sw.kind == SweepKind::Leakage).then(|| {
            let spec = |s| ChannelSpec::BlockRandom { split: LEAKAGE_SPLIT, weight: sw.spam_weight, seed: s };
            (spec(mix_seed(channel_seed, 1)), spec(mix_seed(channel_seed, 2)))
        });
        let spam = match &spam_specs {
            Some((p, m)) => Some((p, m)),
            None => cfg.prep.as_ref().zip(cfg.meas.as_ref()),
        };
        let noise = noise_model(&gate, spam, cfg, &group)?;
        let o = run_one(sw.kind, &group, &noise, cfg, run_seed)?;
        for (q, est) in &o.estimates {
            if let Some(&exact) = o.exact.get(q) {
                let z = (est.value - exact) / est.stderr;
                let _ = writeln!(scatter, "{k},{param},{q},{exact},{},{},{z}", est.value, est.stderr);
            }
        }
        eprintln!("sweep item {}/{} done", k + 1, params.len());
        items.push(SweepItem { index: k, parameter: param, noise: gate, spam: spam_specs, run_seed, estimates: o.estimates, exact: o.exact });
    }
    let mut summary: BTreeMap<String, QuantitySummary> = BTreeMap::new();
    for it in &items {
        for (q, est) in &it.estimates {
            let Some(&exact) = it.exact.get(q) else { continue };
            let z = (est.value - exact) / est.stderr;
            let s = summary.entry(q.clone()).or_insert(QuantitySummary { count: 0, reduced_chi2: 0.0, max_abs_z: 0.0 });
            s.count += 1;
            s.reduced_chi2 += z * z;
            s.max_abs_z = s.max_abs_z.max(z.abs());
        }
    }
    for s in summary.values_mut() {
        s.reduced_chi2 /= s.count as f64;
    }
    for (q, s) in &summary {
        eprintln!("{q}: reduced chi2 {:.3} over {} channels", s.reduced_chi2, s.count);
    }
    out.write("plotdata/scatter.csv", &scatter)?;
    out.write_json("report.json", &Report::new(cfg, SweepResult { items, summary }))
}

fn plan_rows<E>(plans: &[IrrepPlan<E>]) -> Result<Vec<serde_json::Value>, CliError> {
    plans
        .iter()
        .map(|p| {
            let c = p.intercept()?;
            Ok(json!({
                "id": p.id,
                "irreps": p.irrep_ids,
                "subgroup_order": p.subgroup.len(),
                "intercept": [c.re, c.im],
                "fit_models": p.fit_candidates.iter().map(|m| m.name()).collect::<Vec<_>>(),
            }))
        })
        .collect()
}

/// Irrep table, multiplicity and irreducibility checks, 2-design report and plans.
pub fn analyze_group(id: &str, trials: usize, seed: u64) -> Result<serde_json::Value, CliError> {
    let group = group_by_id(id)?;
    let d = group.dim();
    let covered: usize = group.irreps().iter().map(|i| i.dim * i.multiplicity).sum();
    let mut report = json!({
        "group": id,
        "hilbert_dim": d,
        "irreps_cover_liouville_space": covered == d * d,
    });
    match &group {
        Group::Finite(g) => {
            let natural = natural_character(g);
            let mut rows = Vec::new();
            for irrep in g.irreps() {
                let chi = descriptor_character(g, irrep);
                rows.push(json!({
                    "id": irrep.id,
                    "dim": irrep.dim,
                    "multiplicity": irrep.multiplicity,
                    "character_multiplicity": multiplicity_of_irrep(g, &natural, &chi)?,
                    "irreducibility_norm": irreducibility_norm(g, &chi),
                }));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let td = two_design_check(g, trials, &mut rng);
            let plans = match id {
                "subspace" => plan_rows(&subspace_plans(g, true)?)?,
                "leakage" => plan_rows(&[leakage_plan(g)?])?,
                "qubit_leakage" => plan_rows(&qubit_leakage_plans(g)?)?,
                _ => Vec::new(),
            };
            report["order"] = json!(g.len());
            report["irreps"] = json!(rows);
            report["two_design"] = json!({
                "trials": trials,
                "seed": seed,
                "max_deviation_deg1": td.max_deviation_deg1,
                "max_deviation_deg2": td.max_deviation_deg2,
                "is_unitary_2_design": td.max_deviation_deg1 <= 1e-10 && td.max_deviation_deg2 <= 1e-10,
            });
            report["plans"] = json!(plans);
        }
        Group::Matchgate(g) => {
            let rows: Vec<_> = g
                .irreps()
                .iter()
                .map(|i| json!({ "id": i.id, "dim": i.dim, "multiplicity": i.multiplicity }))
                .collect();
            report["irreps"] = json!(rows);
            report["plans"] = json!(plan_rows(&matchgate_plans(g)?)?);
        }
    }
    Ok(report)
}

/// Reads a real `2n × 2n` matrix: one row per line, whitespace or comma separated, `#` comments.
pub fn read_rotation(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), k + 1)))?;
        rows.push(row);
    }
    let dim = rows.len();
    if dim == 0 || dim % 2 != 0 || rows.iter().any(|r| r.len() != dim) {
        return Err(CliError::Config(format!(
            "{} must hold a square matrix of even dimension; found {dim} rows",
            path.display()
        )));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

/// Compiles a rotation into a nearest-neighbour circuit and checks the round trip.
pub fn compile_matchgate(input: &Path) -> Result<String, CliError> {
    let r = read_rotation(input)?;
    let circuit = compile(&r)?;
    let dev = (circuit.rotation() - &r).abs().max();
    if dev > 1e-9 {
        return Err(CliError::Numerical(format!("compiled circuit misses the target rotation by {dev:.2e}")));
    }
    let n = r.nrows() / 2;
    eprintln!("n = {n}: {} gates (bound {}), round-trip deviation {dev:.2e}", circuit.gates.len(), 4 * n * n * n);
    Ok(circuit.to_text())
}
