use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CharbError, Result};

/// Aggregated character-weighted survival estimate at one sequence length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub n: usize,
    pub mean: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub count: usize,
}

/// Per-length estimates of one plan's survival curve, post-rotation applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayDataset {
    pub plan_id: String,
    pub post_rotation: Complex64,
    pub points: Vec<DecayPoint>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl DecayDataset {
    pub fn new(plan_id: impl Into<String>, post_rotation: Complex64, points: Vec<DecayPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(CharbError::InvalidInput("dataset has no points".into()));
        }
        if points.windows(2).any(|w| w[0].n >= w[1].n) {
            return Err(CharbError::InvalidInput("dataset lengths must be strictly increasing".into()));
        }
        if points.iter().any(|p| !p.mean.re.is_finite() || !p.mean.im.is_finite()) {
            return Err(CharbError::Numerical("dataset contains non-finite means".into()));
        }
        Ok(Self { plan_id: plan_id.into(), post_rotation, points, metadata: serde_json::Value::Null })
    }

    /// Real-valued dataset with a common standard error, mainly for synthetic tests.
    pub fn from_real(plan_id: &str, ns: &[usize], values: &[f64], stderr: f64) -> Result<Self> {
        if ns.len() != values.len() {
            return Err(CharbError::Dimension("lengths and values differ in size".into()));
        }
        let pts = ns
            .iter()
            .zip(values)
            .map(|(&n, &v)| DecayPoint { n, mean: Complex64::new(v, 0.0), stderr_re: stderr, stderr_im: stderr, count: 1 })
            .collect();
        Self::new(plan_id, Complex64::new(1.0, 0.0), pts)
    }

    pub fn from_complex(plan_id: &str, ns: &[usize], values: &[Complex64], stderr: f64) -> Result<Self> {
        if ns.len() != values.len() {
            return Err(CharbError::Dimension("lengths and values differ in size".into()));
        }
        let pts = ns
            .iter()
            .zip(values)
            .map(|(&n, &v)| DecayPoint { n, mean: v, stderr_re: stderr, stderr_im: stderr, count: 1 })
            .collect();
        Self::new(plan_id, Complex64::new(1.0, 0.0), pts)
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.n).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            p.mean *= s;
            p.stderr_re *= s.abs();
            p.stderr_im *= s.abs();
        }
        out
    }

    pub fn csv_header() -> &'static str {
        "plan,N,re_mean,im_mean,re_stderr,im_stderr,count"
    }

    /// CSV rows without the header.
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                self.plan_id, p.n, p.mean.re, p.mean.im, p.stderr_re, p.stderr_im, p.count
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::csv_header(), self.csv_rows())
    }

    pub fn from_csv(text: &str) -> Result<Vec<Self>> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == Self::csv_header() => {}
            _ => return Err(CharbError::InvalidInput("missing dataset CSV header".into())),
        }
        let mut out: Vec<DecayDataset> = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || CharbError::InvalidInput(format!("bad dataset row: {line}"));
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            let point = DecayPoint {
                n: f[1].parse().map_err(|_| bad())?,
                mean: Complex64::new(num(2)?, num(3)?),
                stderr_re: num(4)?,
                stderr_im: num(5)?,
                count: f[6].parse().map_err(|_| bad())?,
            };
            match out.last_mut() {
                Some(d) if d.plan_id == f[0] => d.points.push(point),
                _ => out.push(DecayDataset {
                    plan_id: f[0].to_string(),
                    post_rotation: Complex64::new(1.0, 0.0),
                    points: vec![point],
                    metadata: serde_json::Value::Null,
                }),
            }
        }
        Ok(out)
    }
}
