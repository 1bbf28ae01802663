//! Weighted nonlinear least squares for RB decay curves.
//!
//! A projected Levenberg–Marquardt iteration with analytic Jacobians runs from
//! several deterministic starting points. Coefficients that enter linearly are
//! seeded by weighted linear least squares given each start's rates.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CharbError, Result};
use crate::rb_engine::DecayDataset;

/// Declared decay shape of a plan's survival curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FitModel {
    /// `C λ^N`.
    SingleExp { complex_coefficient: bool, complex_rate: bool },
    /// `C λ^N + B`, all real.
    ExpPlusConst,
    /// `C₁λ₁^N + C₂λ₂^N`, all real.
    DoubleExpReal,
    /// `2ρ r^N cos(Nθ + φ) (+ B)`, a complex-conjugate pair.
    DoubleExpConj { with_constant: bool },
}

impl FitModel {
    pub fn single_real() -> Self {
        FitModel::SingleExp { complex_coefficient: false, complex_rate: false }
    }

    pub fn name(&self) -> String {
        match self {
            FitModel::SingleExp { complex_coefficient, complex_rate } => format!(
                "single_exp({}coef,{}rate)",
                if *complex_coefficient { "complex " } else { "real " },
                if *complex_rate { "complex " } else { "real " }
            ),
            FitModel::ExpPlusConst => "exp_plus_const".into(),
            FitModel::DoubleExpReal => "double_exp_real".into(),
            FitModel::DoubleExpConj { with_constant: true } => "double_exp_conj+const".into(),
            FitModel::DoubleExpConj { with_constant: false } => "double_exp_conj".into(),
        }
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        match self {
            FitModel::SingleExp { complex_coefficient: false, complex_rate: false } => vec!["C", "lambda"],
            FitModel::SingleExp { complex_coefficient: true, complex_rate: false } => vec!["C_re", "C_im", "lambda"],
            FitModel::SingleExp { complex_coefficient: false, complex_rate: true } => vec!["C", "r", "theta"],
            FitModel::SingleExp { complex_coefficient: true, complex_rate: true } => vec!["C_re", "C_im", "r", "theta"],
            FitModel::ExpPlusConst => vec!["C", "lambda", "B"],
            FitModel::DoubleExpReal => vec!["C1", "lambda1", "C2", "lambda2"],
            FitModel::DoubleExpConj { with_constant: false } => vec!["rho", "r", "theta", "phi"],
            FitModel::DoubleExpConj { with_constant: true } => vec!["rho", "r", "theta", "phi", "B"],
        }
    }

    pub fn n_params(&self) -> usize {
        self.param_names().len()
    }

    /// Whether imaginary parts of the data enter the residuals.
    pub fn is_complex(&self) -> bool {
        matches!(self, FitModel::SingleExp { complex_coefficient: true, .. } | FitModel::SingleExp { complex_rate: true, .. })
    }

    pub fn is_double(&self) -> bool {
        matches!(self, FitModel::DoubleExpReal | FitModel::DoubleExpConj { .. })
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let free = (f64::NEG_INFINITY, f64::INFINITY);
        let lam = (0.0, 1.0);
        let modulus = (0.0, 1.0);
        let angle = (-2.0 * PI, 2.0 * PI);
        match self {
            FitModel::SingleExp { complex_coefficient: false, complex_rate: false } => vec![free, lam],
            FitModel::SingleExp { complex_coefficient: true, complex_rate: false } => vec![free, free, lam],
            FitModel::SingleExp { complex_coefficient: false, complex_rate: true } => vec![free, modulus, angle],
            FitModel::SingleExp { complex_coefficient: true, complex_rate: true } => vec![free, free, modulus, angle],
            FitModel::ExpPlusConst => vec![free, lam, free],
            FitModel::DoubleExpReal => vec![free, lam, free, lam],
            FitModel::DoubleExpConj { with_constant } => {
                let mut b = vec![(0.0, f64::INFINITY), modulus, (0.0, PI), angle];
                if *with_constant {
                    b.push(free);
                }
                b
            }
        }
    }

    /// Model value at `n` and, if requested, its gradient in `grad`.
    fn eval(&self, p: &[f64], n: usize, grad: Option<&mut [Complex64]>) -> Complex64 {
        let nf = n as f64;
        let re = |x: f64| Complex64::new(x, 0.0);
        let powd = |l: f64| -> (f64, f64) { (l.powi(n as i32), if n == 0 { 0.0 } else { nf * l.powi(n as i32 - 1) }) };
        let polar = |r: f64, th: f64| -> (Complex64, Complex64, Complex64) {
            // z^N, ∂z^N/∂r, ∂z^N/∂θ
            let (rn, drn) = powd(r);
            let ph = Complex64::from_polar(1.0, nf * th);
            (ph * rn, ph * drn, ph * rn * Complex64::new(0.0, nf))
        };
        match self {
            FitModel::SingleExp { complex_coefficient, complex_rate } => {
                let (coef, k) = if *complex_coefficient { (Complex64::new(p[0], p[1]), 2) } else { (re(p[0]), 1) };
                let (zn, dr, dth) = if *complex_rate {
                    polar(p[k], p[k + 1])
                } else {
                    let (v, d) = powd(p[k]);
                    (re(v), re(d), re(0.0))
                };
                if let Some(g) = grad {
                    g[0] = zn;
                    if *complex_coefficient {
                        g[1] = zn * Complex64::new(0.0, 1.0);
                    }
                    g[k] = coef * dr;
                    if *complex_rate {
                        g[k + 1] = coef * dth;
                    }
                }
                coef * zn
            }
            FitModel::ExpPlusConst => {
                let (v, d) = powd(p[1]);
                if let Some(g) = grad {
                    g[0] = re(v);
                    g[1] = re(p[0] * d);
                    g[2] = re(1.0);
                }
                re(p[0] * v + p[2])
            }
            FitModel::DoubleExpReal => {
                let (v1, d1) = powd(p[1]);
                let (v2, d2) = powd(p[3]);
                if let Some(g) = grad {
                    g[0] = re(v1);
                    g[1] = re(p[0] * d1);
                    g[2] = re(v2);
                    g[3] = re(p[2] * d2);
                }
                re(p[0] * v1 + p[2] * v2)
            }
            FitModel::DoubleExpConj { with_constant } => {
                let (rho, r, th, phi) = (p[0], p[1], p[2], p[3]);
                let (rn, drn) = powd(r);
                let arg = nf * th + phi;
                let (s, c) = arg.sin_cos();
                let b = if *with_constant { p[4] } else { 0.0 };
                if let Some(g) = grad {
                    g[0] = re(2.0 * rn * c);
                    g[1] = re(2.0 * rho * drn * c);
                    g[2] = re(-2.0 * rho * rn * nf * s);
                    g[3] = re(-2.0 * rho * rn * s);
                    if *with_constant {
                        g[4] = re(1.0);
                    }
                }
                re(2.0 * rho * rn * c + b)
            }
        }
    }

    /// Basis functions for the linearly entering parameters, given the rates in `p`.
    fn linear_basis(&self, p: &[f64], n: usize) -> Vec<Complex64> {
        let nf = n as f64;
        let re = |x: f64| Complex64::new(x, 0.0);
        match self {
            FitModel::SingleExp { complex_coefficient, complex_rate } => {
                let k = if *complex_coefficient { 2 } else { 1 };
                let zn = if *complex_rate {
                    Complex64::from_polar(p[k].powi(n as i32), nf * p[k + 1])
                } else {
                    re(p[k].powi(n as i32))
                };
                if *complex_coefficient {
                    vec![zn, zn * Complex64::new(0.0, 1.0)]
                } else {
                    vec![zn]
                }
            }
            FitModel::ExpPlusConst => vec![re(p[1].powi(n as i32)), re(1.0)],
            FitModel::DoubleExpReal => vec![re(p[1].powi(n as i32)), re(p[3].powi(n as i32))],
            FitModel::DoubleExpConj { with_constant } => {
                let rn = p[1].powi(n as i32);
                let (s, c) = (nf * p[2]).sin_cos();
                let mut v = vec![re(2.0 * rn * c), re(-2.0 * rn * s)];
                if *with_constant {
                    v.push(re(1.0));
                }
                v
            }
        }
    }

    fn set_linear(&self, p: &mut [f64], a: &[f64]) {
        match self {
            FitModel::SingleExp { complex_coefficient: true, .. } => {
                p[0] = a[0];
                p[1] = a[1];
            }
            FitModel::SingleExp { .. } => p[0] = a[0],
            FitModel::ExpPlusConst => {
                p[0] = a[0];
                p[2] = a[1];
            }
            FitModel::DoubleExpReal => {
                p[0] = a[0];
                p[2] = a[1];
            }
            FitModel::DoubleExpConj { with_constant } => {
                p[0] = a[0].hypot(a[1]);
                p[3] = a[1].atan2(a[0]);
                if *with_constant {
                    p[4] = a[2];
                }
            }
        }
    }

    /// Decay rates with the gradients of their real and imaginary parts.
    fn rates(&self, p: &[f64]) -> Vec<(Complex64, Complex64, Vec<f64>, Vec<f64>)> {
        let np = self.n_params();
        let unit = |k: usize| {
            let mut v = vec![0.0; np];
            v[k] = 1.0;
            v
        };
        let zero = vec![0.0; np];
        let real_rate = |lk: usize, ck: Complex64| (Complex64::new(p[lk], 0.0), ck, unit(lk), zero.clone());
        let polar_rate = |rk: usize, tk: usize, sign: f64, ck: Complex64| {
            let (r, th) = (p[rk], sign * p[tk]);
            let mut gre = vec![0.0; np];
            let mut gim = vec![0.0; np];
            gre[rk] = th.cos();
            gre[tk] = -r * th.sin() * sign;
            gim[rk] = th.sin();
            gim[tk] = r * th.cos() * sign;
            (Complex64::from_polar(r, th), ck, gre, gim)
        };
        match self {
            FitModel::SingleExp { complex_coefficient, complex_rate } => {
                let (coef, k) = if *complex_coefficient { (Complex64::new(p[0], p[1]), 2) } else { (Complex64::new(p[0], 0.0), 1) };
                if *complex_rate {
                    vec![polar_rate(k, k + 1, 1.0, coef)]
                } else {
                    vec![real_rate(k, coef)]
                }
            }
            FitModel::ExpPlusConst => vec![real_rate(1, Complex64::new(p[0], 0.0))],
            FitModel::DoubleExpReal => vec![
                real_rate(1, Complex64::new(p[0], 0.0)),
                real_rate(3, Complex64::new(p[2], 0.0)),
            ],
            FitModel::DoubleExpConj { .. } => vec![
                polar_rate(1, 2, 1.0, Complex64::from_polar(p[0], p[3])),
                polar_rate(1, 2, -1.0, Complex64::from_polar(p[0], -p[3])),
            ],
        }
    }

    fn constant(&self, p: &[f64]) -> Option<f64> {
        match self {
            FitModel::ExpPlusConst => Some(p[2]),
            FitModel::DoubleExpConj { with_constant: true } => Some(p[4]),
            _ => None,
        }
    }
}

/// Multi-start bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub starts: usize,
    pub converged_starts: usize,
    /// Starts whose χ² lies within 1e-6 (relative) of the best.
    pub starts_at_optimum: usize,
    /// Largest spread of the leading rate among starts within 1% of the best χ².
    pub rate_dispersion: f64,
    pub iterations: usize,
    /// The decaying term did not improve on a constant; the rate was set to 1.
    #[serde(default)]
    pub flat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub dof: usize,
    pub weighted: bool,
    /// Decay rates sorted by descending modulus.
    pub lambdas: Vec<Complex64>,
    pub coefficients: Vec<Complex64>,
    /// Covariance of `[Re λ₁, Im λ₁, Re λ₂, Im λ₂, …]` in the order of `lambdas`.
    pub lambda_covariance: Vec<Vec<f64>>,
    pub constant: Option<f64>,
    /// A double fit collapsed or a candidate was rejected as degenerate.
    pub degenerate: bool,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn evaluate(&self, n: usize) -> Complex64 {
        self.model.eval(&self.params, n, None)
    }

    pub fn lambda_stderr(&self, k: usize) -> (f64, f64) {
        (
            self.lambda_covariance[2 * k][2 * k].max(0.0).sqrt(),
            self.lambda_covariance[2 * k + 1][2 * k + 1].max(0.0).sqrt(),
        )
    }

    /// Value at `N = 0`.
    pub fn intercept(&self) -> Complex64 {
        self.evaluate(0)
    }

    fn collapsed(&self) -> bool {
        if !self.model.is_double() {
            return false;
        }
        let scale = self.intercept().norm().max(1e-300);
        if self.coefficients.iter().any(|c| c.norm() < 1e-3 * scale) {
            return true;
        }
        if !self.weighted {
            return false;
        }
        // With known error bars: an amplitude within 2σ of zero, or two real
        // rates that coincide within 2σ, means the data support one component.
        let insignificant = |k: usize| self.params[k].abs() < 2.0 * self.stderrs[k];
        match self.model {
            FitModel::DoubleExpReal => {
                let gap = (self.params[1] - self.params[3]).abs();
                let se = (self.stderrs[1].powi(2) + self.stderrs[3].powi(2)).sqrt();
                insignificant(0) || insignificant(2) || gap < 2.0 * se
            }
            FitModel::DoubleExpConj { .. } => insignificant(0),
            _ => false,
        }
    }
}

struct Prepared {
    ns: Vec<usize>,
    y: Vec<Complex64>,
    sw_re: Vec<f64>,
    sw_im: Vec<f64>,
    complex: bool,
    weighted: bool,
}

impl Prepared {
    fn new(data: &DecayDataset, complex: bool) -> Self {
        // Points with zero sample variance (every sequence agreed) borrow the
        // smallest positive error bar instead of dropping weighting altogether.
        let floor = |f: fn(&crate::rb_engine::DecayPoint) -> f64| {
            data.points.iter().map(f).filter(|s| *s > 0.0 && s.is_finite()).fold(f64::INFINITY, f64::min)
        };
        let floor_re = floor(|p| p.stderr_re);
        let floor_im = match floor(|p| p.stderr_im) {
            f if complex && f.is_finite() => f,
            _ => floor_re,
        };
        let weighted = floor_re.is_finite() && floor_im.is_finite();
        let sw = |s: f64, fl: f64| if weighted { 1.0 / s.max(fl) } else { 1.0 };
        Self {
            ns: data.points.iter().map(|p| p.n).collect(),
            y: data.points.iter().map(|p| p.mean).collect(),
            sw_re: data.points.iter().map(|p| sw(p.stderr_re, floor_re)).collect(),
            sw_im: data.points.iter().map(|p| sw(p.stderr_im, floor_im)).collect(),
            complex,
            weighted,
        }
    }

    fn n_res(&self) -> usize {
        self.ns.len() * if self.complex { 2 } else { 1 }
    }

    fn residuals(&self, model: &FitModel, p: &[f64], jac: Option<&mut DMatrix<f64>>) -> DVector<f64> {
        let np = p.len();
        let mut r = DVector::zeros(self.n_res());
        let mut g = vec![Complex64::new(0.0, 0.0); np];
        let mut jac = jac;
        for (k, &n) in self.ns.iter().enumerate() {
            let m = model.eval(p, n, jac.as_ref().map(|_| &mut g[..]));
            let row_re = if self.complex { 2 * k } else { k };
            r[row_re] = self.sw_re[k] * (self.y[k].re - m.re);
            if self.complex {
                r[row_re + 1] = self.sw_im[k] * (self.y[k].im - m.im);
            }
            if let Some(j) = jac.as_deref_mut() {
                for c in 0..np {
                    j[(row_re, c)] = -self.sw_re[k] * g[c].re;
                    if self.complex {
                        j[(row_re + 1, c)] = -self.sw_im[k] * g[c].im;
                    }
                }
            }
        }
        r
    }

    /// Weighted linear least squares for the linear parameters at fixed rates.
    fn linear_fill(&self, model: &FitModel, p: &mut [f64]) {
        let rows: Vec<Vec<Complex64>> = self.ns.iter().map(|&n| model.linear_basis(p, n)).collect();
        let k = rows[0].len();
        let mut a = DMatrix::<f64>::zeros(self.n_res(), k);
        let mut b = DVector::<f64>::zeros(self.n_res());
        for (i, basis) in rows.iter().enumerate() {
            let ri = if self.complex { 2 * i } else { i };
            for c in 0..k {
                a[(ri, c)] = self.sw_re[i] * basis[c].re;
                if self.complex {
                    a[(ri + 1, c)] = self.sw_im[i] * basis[c].im;
                }
            }
            b[ri] = self.sw_re[i] * self.y[i].re;
            if self.complex {
                b[ri + 1] = self.sw_im[i] * self.y[i].im;
            }
        }
        let ata = a.transpose() * &a;
        let ridge = 1e-12 * (0..k).map(|c| ata[(c, c)]).fold(0.0, f64::max).max(1e-300);
        let m = ata + DMatrix::identity(k, k) * ridge;
        if let Some(sol) = m.cholesky().map(|ch| ch.solve(&(a.transpose() * b))) {
            if sol.iter().all(|v| v.is_finite()) {
                model.set_linear(p, sol.as_slice());
            }
        }
    }
}

fn clamp_params(p: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, (lo, hi)) in p.iter_mut().zip(bounds) {
        *v = v.clamp(*lo, *hi);
    }
}

struct LmOutcome {
    params: Vec<f64>,
    chi2: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(model: &FitModel, prep: &Prepared, p0: &[f64]) -> LmOutcome {
    let bounds = model.bounds();
    let np = p0.len();
    let mut p = p0.to_vec();
    clamp_params(&mut p, &bounds);
    let mut jac = DMatrix::zeros(prep.n_res(), np);
    let mut r = prep.residuals(model, &p, Some(&mut jac));
    let mut chi = r.norm_squared();
    let mut mu = 1e-3;
    let mut stalls = 0;
    let max_iter = 2000;
    for it in 0..max_iter {
        if !chi.is_finite() {
            return LmOutcome { params: p, chi2: chi, iterations: it, converged: false };
        }
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let dmax = (0..np).map(|c| a[(c, c)]).fold(0.0, f64::max).max(1e-300);
        let mut accepted = None;
        while mu < 1e20 {
            let mut m = a.clone();
            for c in 0..np {
                m[(c, c)] += mu * a[(c, c)].max(1e-12 * dmax);
            }
            let Some(ch) = m.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let step = ch.solve(&(-&g));
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp_params(&mut trial, &bounds);
            let rt = prep.residuals(model, &trial, None);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct < chi {
                accepted = Some((trial, ct));
                mu = (mu / 5.0).max(1e-15);
                break;
            }
            mu *= 5.0;
        }
        let Some((trial, ct)) = accepted else {
            return LmOutcome { params: p, chi2: chi, iterations: it, converged: true };
        };
        let rel = (chi - ct) / chi.max(1e-300);
        p = trial;
        r = prep.residuals(model, &p, Some(&mut jac));
        chi = r.norm_squared();
        if rel < 1e-13 {
            stalls += 1;
            if stalls >= 3 {
                return LmOutcome { params: p, chi2: chi, iterations: it + 1, converged: true };
            }
        } else {
            stalls = 0;
        }
    }
    LmOutcome { params: p, chi2: chi, iterations: max_iter, converged: false }
}

fn log_linear_rate(prep: &Prepared, offset: f64) -> f64 {
    let pts: Vec<(f64, f64)> = prep
        .ns
        .iter()
        .zip(&prep.y)
        .filter_map(|(&n, y)| {
            let v = (y - offset).norm();
            (v > 1e-12).then(|| (n as f64, v.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return 0.9;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return 0.9;
    }
    (sxy / sxx).exp().clamp(0.01, 0.999999)
}

fn starting_points(model: &FitModel, prep: &Prepared) -> Vec<Vec<f64>> {
    let has_const = model.constant(&vec![0.0; model.n_params()]).is_some();
    let tail = *prep.y.last().expect("nonempty");
    let offset = if has_const { Complex64::new(tail.re, 0.0) } else { Complex64::new(0.0, 0.0) };
    let l0 = log_linear_rate(prep, offset.re);
    let l0_raw = log_linear_rate(prep, 0.0);
    let real_rates = [l0, l0.sqrt(), l0 * l0, l0_raw, 0.5, 0.9, 0.99, 0.999, 0.2];
    let thetas: Vec<f64> = (0..=8).map(|k| k as f64 * PI / 8.0).collect();
    let np = model.n_params();
    let mut starts = Vec::new();
    match model {
        FitModel::SingleExp { complex_coefficient, complex_rate } => {
            let k = if *complex_coefficient { 2 } else { 1 };
            if *complex_rate {
                for r in [l0, l0.sqrt()] {
                    for th in [0.0, PI / 8.0, -PI / 8.0, PI / 4.0, -PI / 4.0, PI / 2.0, -PI / 2.0, 3.0 * PI / 4.0, -3.0 * PI / 4.0, PI] {
                        let mut p = vec![0.0; np];
                        p[k] = r;
                        p[k + 1] = th;
                        starts.push(p);
                    }
                }
            } else {
                for l in real_rates {
                    let mut p = vec![0.0; np];
                    p[k] = l;
                    starts.push(p);
                }
            }
        }
        FitModel::ExpPlusConst => {
            for l in real_rates {
                starts.push(vec![0.0, l, offset.re]);
            }
        }
        FitModel::DoubleExpReal => {
            let pairs = [
                (l0, l0 * l0),
                (l0.sqrt(), l0),
                (l0, l0.powi(4)),
                (0.99, 0.9),
                (0.999, 0.95),
                (l0, 0.5),
                (l0, 0.2),
                (l0.sqrt(), l0.powi(3)),
                (l0.powf(0.9), l0.powf(1.1)),
                (l0_raw, 0.3),
            ];
            for (a, b) in pairs {
                starts.push(vec![0.0, a, 0.0, b]);
            }
        }
        FitModel::DoubleExpConj { .. } => {
            for r in [l0, l0.sqrt()] {
                for &th in &thetas {
                    let mut p = vec![0.0; np];
                    p[1] = r;
                    p[2] = th;
                    starts.push(p);
                }
            }
        }
    }
    let bounds = model.bounds();
    for p in &mut starts {
        clamp_params(p, &bounds);
        prep.linear_fill(model, p);
        clamp_params(p, &bounds);
    }
    starts
}

fn normalize_angles(model: &FitModel, p: &mut [f64]) {
    let wrap = |a: f64| {
        let mut x = a.rem_euclid(2.0 * PI);
        if x > PI {
            x -= 2.0 * PI;
        }
        x
    };
    match model {
        FitModel::SingleExp { complex_rate: true, complex_coefficient } => {
            let k = if *complex_coefficient { 3 } else { 2 };
            p[k] = wrap(p[k]);
        }
        FitModel::DoubleExpConj { .. } => p[3] = wrap(p[3]),
        _ => {}
    }
}

/// Fits one model with multi-start Levenberg–Marquardt.
pub fn fit_decay(data: &DecayDataset, model: FitModel) -> Result<FitResult> {
    let prep = Prepared::new(data, model.is_complex());
    let np = model.n_params();
    if prep.n_res() < np + 2 {
        return Err(CharbError::Fit(format!(
            "{} needs at least {} residuals, dataset provides {}",
            model.name(),
            np + 2,
            prep.n_res()
        )));
    }
    let starts = starting_points(&model, &prep);
    let outcomes: Vec<LmOutcome> = starts.par_iter().map(|s| levenberg_marquardt(&model, &prep, s)).collect();
    let converged: Vec<(usize, &LmOutcome)> =
        outcomes.iter().enumerate().filter(|(_, o)| o.converged && o.chi2.is_finite()).collect();
    // A decay toward λ = 1 leaves C and B unidentified, so starts may stall
    // there; the flat comparison therefore also looks at unconverged starts.
    if model == FitModel::ExpPlusConst && prep.weighted {
        let best_any = outcomes.iter().map(|o| o.chi2).filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min);
        let flat = flat_fit(&prep, starts.len(), converged.len());
        if flat.chi2 - best_any.min(flat.chi2) < chi2_q99(2) {
            return Ok(flat);
        }
    }
    let Some(&(_, best)) = converged
        .iter()
        .min_by(|a, b| a.1.chi2.partial_cmp(&b.1.chi2).unwrap().then(a.0.cmp(&b.0)))
    else {
        return Err(CharbError::Fit(format!("{}: no start converged", model.name())));
    };
    let mut params = best.params.clone();
    normalize_angles(&model, &mut params);

    let mut jac = DMatrix::zeros(prep.n_res(), np);
    let r = prep.residuals(&model, &params, Some(&mut jac));
    let chi2 = r.norm_squared();
    let dof = prep.n_res() - np;
    let reduced_chi2 = chi2 / dof as f64;
    let info = jac.transpose() * &jac;
    let eig = SymmetricEigen::new(info.clone());
    let emax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let emin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(emax > 0.0) || emin / emax < 1e-14 {
        return Err(CharbError::Fit(format!(
            "{}: rank-deficient Jacobian at the optimum (degenerate model)",
            model.name()
        )));
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e));
    let mut cov = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    if !prep.weighted {
        cov *= reduced_chi2.max(f64::MIN_POSITIVE);
    }

    let mut rates = model.rates(&params);
    rates.sort_by(|a, b| {
        b.0.norm()
            .partial_cmp(&a.0.norm())
            .unwrap()
            .then(b.0.re.partial_cmp(&a.0.re).unwrap())
            .then(b.0.im.partial_cmp(&a.0.im).unwrap())
    });
    let mut jl = DMatrix::zeros(2 * rates.len(), np);
    for (k, (_, _, gre, gim)) in rates.iter().enumerate() {
        for c in 0..np {
            jl[(2 * k, c)] = gre[c];
            jl[(2 * k + 1, c)] = gim[c];
        }
    }
    let lcov = &jl * &cov * jl.transpose();
    let to_rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect();

    let chi_best = best.chi2;
    let at_opt = converged.iter().filter(|(_, o)| o.chi2 <= chi_best * (1.0 + 1e-6) + 1e-300).count();
    let lead = |p: &[f64]| {
        let mut rs = model.rates(p);
        rs.sort_by(|a, b| b.0.norm().partial_cmp(&a.0.norm()).unwrap());
        rs[0].0
    };
    let lead_best = lead(&params);
    let rate_dispersion = converged
        .iter()
        .filter(|(_, o)| o.chi2 <= chi_best * 1.01 + 1e-300)
        .map(|(_, o)| (lead(&o.params) - lead_best).norm())
        .fold(0.0, f64::max);

    let mut result = FitResult {
        model,
        param_names: model.param_names().iter().map(|s| s.to_string()).collect(),
        stderrs: (0..np).map(|c| cov[(c, c)].max(0.0).sqrt()).collect(),
        covariance: to_rows(&cov),
        params,
        chi2,
        reduced_chi2,
        dof,
        weighted: prep.weighted,
        lambdas: rates.iter().map(|r| r.0).collect(),
        coefficients: rates.iter().map(|r| r.1).collect(),
        lambda_covariance: to_rows(&lcov),
        constant: None,
        degenerate: false,
        diagnostics: FitDiagnostics {
            starts: starts.len(),
            converged_starts: converged.len(),
            starts_at_optimum: at_opt,
            rate_dispersion,
            iterations: best.iterations,
            flat: false,
        },
    };
    result.constant = model.constant(&result.params);
    result.degenerate = result.collapsed();
    Ok(result)
}

/// `C·1^N + B` with `C = 0`: the weighted mean as a non-decaying curve.
fn flat_fit(prep: &Prepared, starts: usize, converged: usize) -> FitResult {
    let w2: Vec<f64> = prep.sw_re.iter().map(|w| w * w).collect();
    let sw: f64 = w2.iter().sum();
    let b = prep.y.iter().zip(&w2).map(|(y, w)| w * y.re).sum::<f64>() / sw;
    let chi2: f64 = prep.y.iter().zip(&w2).map(|(y, w)| w * (y.re - b).powi(2)).sum();
    let model = FitModel::ExpPlusConst;
    let dof = prep.ns.len() - 1;
    let mut covariance = vec![vec![0.0; 3]; 3];
    covariance[2][2] = 1.0 / sw;
    FitResult {
        model,
        param_names: model.param_names().iter().map(|s| s.to_string()).collect(),
        params: vec![0.0, 1.0, b],
        stderrs: vec![0.0, 0.0, (1.0 / sw).sqrt()],
        covariance,
        chi2,
        reduced_chi2: chi2 / dof as f64,
        dof,
        weighted: true,
        lambdas: vec![Complex64::new(1.0, 0.0)],
        coefficients: vec![Complex64::new(0.0, 0.0)],
        lambda_covariance: vec![vec![0.0; 2]; 2],
        constant: Some(b),
        degenerate: false,
        diagnostics: FitDiagnostics {
            starts,
            converged_starts: converged,
            starts_at_optimum: 0,
            rate_dispersion: 0.0,
            iterations: 0,
            flat: true,
        },
    }
}

/// 99th percentile of χ² with `k` degrees of freedom.
fn chi2_q99(k: usize) -> f64 {
    const Q: [f64; 6] = [0.0, 6.635, 9.210, 11.345, 13.277, 15.086];
    Q.get(k).copied().unwrap_or(15.086 + 1.8 * (k as f64 - 5.0))
}

/// Fits every candidate and picks one. With known standard errors the
/// simplest model is kept unless a richer one lowers the total χ² by more than
/// the 99th percentile of χ² over the added parameters (a likelihood-ratio
/// test). Without them the best reduced χ² wins, preferring fewer parameters
/// within 5%. Collapsed or failed double fits are set aside when a sound
/// alternative exists, and the result is flagged.
pub fn select_model(data: &DecayDataset, candidates: &[FitModel]) -> Result<FitResult> {
    if candidates.is_empty() {
        return Err(CharbError::InvalidInput("no candidate models".into()));
    }
    let fits: Vec<Result<FitResult>> = candidates.iter().map(|m| fit_decay(data, *m)).collect();
    let mut flagged = false;
    let mut sound = Vec::new();
    let mut collapsed = Vec::new();
    let mut last_err = None;
    for f in fits {
        match f {
            Ok(r) if r.degenerate => {
                flagged = true;
                collapsed.push(r);
            }
            Ok(r) => sound.push(r),
            Err(e) => {
                flagged = true;
                last_err = Some(e);
            }
        }
    }
    let pool = if sound.is_empty() { collapsed } else { sound };
    if pool.is_empty() {
        return Err(last_err.unwrap_or_else(|| CharbError::Fit("all candidate fits failed".into())));
    }
    let mut chosen = if pool.iter().all(|r| r.weighted) {
        let mut pool = pool;
        pool.sort_by(|a, b| {
            a.model.n_params().cmp(&b.model.n_params()).then(a.chi2.partial_cmp(&b.chi2).unwrap())
        });
        let mut it = pool.into_iter();
        let mut current = it.next().expect("pool nonempty");
        for r in it {
            let extra = r.model.n_params().saturating_sub(current.model.n_params());
            let gain = current.chi2 - r.chi2;
            if (extra == 0 && gain > 0.0) || (extra > 0 && gain > chi2_q99(extra)) {
                current = r;
            }
        }
        current
    } else {
        let best = pool.iter().map(|r| r.reduced_chi2).fold(f64::INFINITY, f64::min);
        let tol = 0.05 * best + 1e-12;
        pool.into_iter()
            .filter(|r| r.reduced_chi2 <= best + tol)
            .min_by(|a, b| {
                a.model
                    .n_params()
                    .cmp(&b.model.n_params())
                    .then(a.reduced_chi2.partial_cmp(&b.reduced_chi2).unwrap())
            })
            .expect("pool nonempty")
    };
    chosen.degenerate |= flagged;
    Ok(chosen)
}
