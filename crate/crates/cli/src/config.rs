//! Run configuration: file format, defaults, flag overrides and hashing.

use std::path::Path;

use charb_core::channels::ChannelSpec;
use charb_core::experiment::ExperimentSettings;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SUBSPACE_BUDGET: usize = 150_000;
pub const LARGE_BUDGET: usize = 300_000;

/// Per-element noise drawn around the base gate channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateDependence {
    pub delta: f64,
    pub seed: u64,
}

/// Channel family scanned by `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// Random channels with fidelities spread over `[fidelity_min, fidelity_max]`.
    Random,
    /// SWAP mixtures with weights `values`.
    Swap,
    /// Intensity over-rotations with angles `values`.
    Intensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Subspace,
    Leakage,
    Matchgate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_kind")]
    pub kind: SweepKind,
    #[serde(default = "default_ensemble")]
    pub ensemble: Ensemble,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_fmin")]
    pub fidelity_min: f64,
    #[serde(default = "default_fmax")]
    pub fidelity_max: f64,
    #[serde(default)]
    pub values: Vec<f64>,
    /// Weight of the random block-diagonal channel in leakage-sweep SPAM; the rest is identity.
    #[serde(default = "default_spam_weight")]
    pub spam_weight: f64,
}

fn default_kind() -> SweepKind {
    SweepKind::Subspace
}
fn default_ensemble() -> Ensemble {
    Ensemble::Random
}
fn default_count() -> usize {
    20
}
fn default_fmin() -> f64 {
    0.96
}
fn default_fmax() -> f64 {
    0.999
}
fn default_spam_weight() -> f64 {
    0.05
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            ensemble: default_ensemble(),
            count: default_count(),
            fidelity_min: default_fmin(),
            fidelity_max: default_fmax(),
            values: Vec::new(),
            spam_weight: default_spam_weight(),
        }
    }
}

/// Contents of a config file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub total_sequences: Option<usize>,
    pub lengths: Option<Vec<usize>>,
    pub n_lengths: Option<usize>,
    pub max_length: Option<usize>,
    pub shots_per_sequence: Option<usize>,
    pub noise: Option<ChannelSpec>,
    pub prep: Option<ChannelSpec>,
    pub meas: Option<ChannelSpec>,
    pub gate_dependent: Option<GateDependence>,
    pub include_st: Option<bool>,
    /// Leakage group: `leakage` (two qubits) or `qubit_leakage` (qubit plus one level).
    pub group: Option<String>,
    pub n: Option<usize>,
    pub sweep: Option<SweepConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| e.to_string()),
            Some("toml") => toml::from_str(&text).map_err(|e| e.to_string()),
            _ => {
                return Err(CliError::Config(format!(
                    "config {} must end in .toml or .json",
                    path.display()
                )))
            }
        };
        parsed.map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }
}

/// Flags that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub total_sequences: Option<usize>,
    pub n: Option<usize>,
}

/// Fully resolved configuration; this is what the report echoes and hashes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub command: String,
    pub seed: u64,
    pub seed_source: String,
    pub settings: ExperimentSettings,
    pub noise: ChannelSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prep: Option<ChannelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meas: Option<ChannelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate_dependent: Option<GateDependence>,
    pub include_st: bool,
    pub group: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// Seed from the flag, then the file, then `CHARB_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<(u64, &'static str), CliError> {
    if let Some(s) = flag {
        return Ok((s, "flag"));
    }
    if let Some(s) = file {
        return Ok((s, "config"));
    }
    match std::env::var("CHARB_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(|s| (s, "env"))
            .map_err(|_| CliError::Config(format!("CHARB_SEED={v:?} is not an unsigned integer"))),
        Err(_) => Ok((0, "default")),
    }
}

impl Resolved {
    pub fn new(command: &str, file: FileConfig, ov: &Overrides) -> Result<Self, CliError> {
        let (seed, source) = resolve_seed(ov.seed, file.seed)?;
        let sweep = (command == "sweep").then(|| file.sweep.clone().unwrap_or_default());
        let large = match (command, &sweep) {
            ("leakage" | "matchgate", _) => true,
            (_, Some(s)) => s.kind != SweepKind::Subspace,
            _ => false,
        };
        let budget = ov
            .total_sequences
            .or(file.total_sequences)
            .unwrap_or(if large { LARGE_BUDGET } else { SUBSPACE_BUDGET });
        let mut settings = ExperimentSettings::new(budget, seed);
        settings.lengths = file.lengths;
        if let Some(v) = file.n_lengths {
            settings.n_lengths = v;
        }
        if let Some(v) = file.max_length {
            settings.max_length = v;
        }
        if let Some(v) = file.shots_per_sequence {
            settings.shots_per_sequence = v;
        }
        let uses_n = command == "matchgate" || sweep.as_ref().is_some_and(|s| s.kind == SweepKind::Matchgate);
        let n = uses_n.then(|| ov.n.or(file.n).unwrap_or(3));
        let group = match command {
            "subspace" => "subspace".to_string(),
            "leakage" => file.group.clone().unwrap_or_else(|| "leakage".into()),
            "matchgate" => format!("matchgate:n={}", n.unwrap_or(3)),
            _ => match sweep.as_ref().map(|s| s.kind) {
                Some(SweepKind::Leakage) => file.group.clone().unwrap_or_else(|| "leakage".into()),
                Some(SweepKind::Matchgate) => format!("matchgate:n={}", n.unwrap_or(3)),
                _ => "subspace".into(),
            },
        };
        let r = Self {
            command: command.into(),
            seed,
            seed_source: source.into(),
            settings,
            noise: file
                .noise
                .unwrap_or(ChannelSpec::Random { target_fidelity: Some(0.99), seed, env_dim: None }),
            prep: file.prep,
            meas: file.meas,
            gate_dependent: file.gate_dependent,
            include_st: file.include_st.unwrap_or(true),
            group,
            n,
            sweep,
        };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<(), CliError> {
        let s = &self.settings;
        if s.total_sequences == 0 || s.shots_per_sequence == 0 || s.max_length == 0 {
            return Err(CliError::Config("total_sequences, shots_per_sequence and max_length must be positive".into()));
        }
        if s.n_lengths < 2 && s.lengths.is_none() {
            return Err(CliError::Config("n_lengths must be at least 2 to resolve a decay".into()));
        }
        if self.prep.is_some() != self.meas.is_some() {
            return Err(CliError::Config("prep and meas must be given together".into()));
        }
        if let Some(n) = self.n {
            if !(2..=8).contains(&n) {
                return Err(CliError::Config(format!("matchgate n = {n} outside the supported range 2..=8")));
            }
        }
        if self.group.starts_with("matchgate") && (self.gate_dependent.is_some() || self.prep.is_some()) {
            return Err(CliError::Config(
                "matchgate runs support gate-independent noise without SPAM channels only".into(),
            ));
        }
        if let Some(sw) = &self.sweep {
            if sw.count == 0 && sw.ensemble == Ensemble::Random {
                return Err(CliError::Config("sweep.count must be positive".into()));
            }
            if sw.ensemble != Ensemble::Random && sw.values.is_empty() {
                return Err(CliError::Config("sweep.values must list the swap weights or intensity angles".into()));
            }
            if !(0.0 < sw.fidelity_min && sw.fidelity_min <= sw.fidelity_max && sw.fidelity_max < 1.0) {
                return Err(CliError::Config("sweep fidelities must satisfy 0 < fidelity_min <= fidelity_max < 1".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON echo, ignoring where the seed came from.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.seed_source.clear();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
