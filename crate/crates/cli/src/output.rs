//! Report files. Everything except `timing.json` is a pure function of the
//! resolved config, so reruns produce byte-identical output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use charb_core::experiment::{ExperimentOutcome, PlanOutcome};
use charb_core::rb_engine::DecayDataset;
use serde::Serialize;

use crate::config::Resolved;
use crate::CliError;

/// Dense grid for fitted curves: every integer up to `n_max` when short,
/// otherwise `FIT_GRID` evenly spaced integers.
const FIT_GRID: usize = 400;

pub struct OutDir {
    root: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}

impl OutDir {
    /// Creates the directory, refusing to reuse one that holds a report unless `force`.
    pub fn prepare(root: &Path, force: bool) -> Result<Self, CliError> {
        let report = root.join("report.json");
        if report.exists() && !force {
            return Err(CliError::Config(format!(
                "{} already exists; pass --force to overwrite",
                report.display()
            )));
        }
        fs::create_dir_all(root.join("plotdata")).map_err(|e| io_err(root, e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn write(&self, rel: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(rel);
        fs::write(&path, contents).map_err(|e| io_err(&path, e))
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
        s.push('\n');
        self.write(rel, &s)
    }
}

#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    pub version: &'static str,
    pub config_hash: String,
    pub config: &'a Resolved,
    pub result: T,
}

impl<'a, T: Serialize> Report<'a, T> {
    pub fn new(config: &'a Resolved, result: T) -> Self {
        Self { version: env!("CARGO_PKG_VERSION"), config_hash: config.hash(), config, result }
    }
}

fn fit_grid(n_max: usize) -> Vec<usize> {
    if n_max < FIT_GRID {
        return (0..=n_max).collect();
    }
    let mut v: Vec<usize> = (0..=FIT_GRID).map(|k| (k * n_max + FIT_GRID / 2) / FIT_GRID).collect();
    v.dedup();
    v
}

/// `N,re,im,re_stderr,im_stderr`
pub fn measured_csv(ds: &DecayDataset) -> String {
    let mut s = String::from("N,re,im,re_stderr,im_stderr\n");
    for p in &ds.points {
        let _ = writeln!(s, "{},{},{},{},{}", p.n, p.mean.re, p.mean.im, p.stderr_re, p.stderr_im);
    }
    s
}

/// `N,re,im` on the measured lengths.
fn exact_csv(plan: &PlanOutcome) -> Option<String> {
    let exact = plan.exact.as_ref()?;
    let mut s = String::from("N,re,im\n");
    for (p, z) in plan.dataset.points.iter().zip(exact) {
        let _ = writeln!(s, "{},{},{}", p.n, z.re, z.im);
    }
    Some(s)
}

/// `N,re,im` of the selected fit on a dense grid.
fn fitted_csv(plan: &PlanOutcome) -> String {
    let n_max = plan.dataset.points.last().map_or(0, |p| p.n);
    let mut s = String::from("N,re,im\n");
    for n in fit_grid(n_max) {
        let z = plan.fit.evaluate(n);
        let _ = writeln!(s, "{n},{},{}", z.re, z.im);
    }
    s
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

/// Writes the per-plan files and `report.json` for one experiment.
pub fn write_experiment(out: &OutDir, config: &Resolved, outcome: &ExperimentOutcome) -> Result<(), CliError> {
    for plan in &outcome.plans {
        let stem = file_stem(&plan.plan_id);
        out.write(&format!("{stem}_decay.csv"), &plan.dataset.to_csv())?;
        out.write_json(&format!("{stem}_fit.json"), &plan.fit)?;
        out.write(&format!("plotdata/{stem}_measured.csv"), &measured_csv(&plan.dataset))?;
        if let Some(e) = exact_csv(plan) {
            out.write(&format!("plotdata/{stem}_exact.csv"), &e)?;
        }
        out.write(&format!("plotdata/{stem}_fitted.csv"), &fitted_csv(plan))?;
    }
    out.write_json("report.json", &Report::new(config, outcome))
}
