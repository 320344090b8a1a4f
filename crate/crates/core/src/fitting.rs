//! Unweighted least-squares fits of break-time scaling laws.
//!
//! | form            | model                 | parameters |
//! |-----------------|-----------------------|------------|
//! | `linear`        | `m x + n`             | m, n       |
//! | `power`         | `a x^c + b`           | a, b, c    |
//! | `log`           | `p ln x + q`          | p, q       |
//! | `shifted-power` | `a (x - d)^c`         | a, c, d    |
//!
//! Linear and log fits are closed form. The two power laws use
//! Levenberg-Marquardt from a fixed grid of starting points, so a fit is a
//! deterministic function of its input.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Starting exponents of the multi-start grid.
pub const START_EXPONENTS: [f64; 7] = [-3.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0];

/// Starting shifts, as fractions of the data span below the smallest `x`.
pub const START_SHIFT_OFFSETS: [f64; 5] = [0.05, 0.2, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitForm {
    Linear,
    Power,
    Log,
    ShiftedPower,
}

impl FitForm {
    pub const ALL: [FitForm; 4] = [
        FitForm::Linear,
        FitForm::Power,
        FitForm::Log,
        FitForm::ShiftedPower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FitForm::Linear => "linear",
            FitForm::Power => "power",
            FitForm::Log => "log",
            FitForm::ShiftedPower => "shifted-power",
        }
    }

    /// Number of free parameters.
    pub fn n_params(self, opts: &FitOptions) -> usize {
        match self {
            FitForm::Linear | FitForm::Log => 2,
            FitForm::Power => 3,
            FitForm::ShiftedPower => {
                if opts.fixed_shift.is_some() {
                    2
                } else {
                    3
                }
            }
        }
    }
}

impl fmt::Display for FitForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(FitForm::Linear),
            "power" => Ok(FitForm::Power),
            "log" => Ok(FitForm::Log),
            "shifted-power" | "shifted_power" => Ok(FitForm::ShiftedPower),
            other => Err(Error::input(format!(
                "unknown fit form '{other}' (expected linear, power, log or shifted-power)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Freeze the shift of the shifted power law.
    pub fixed_shift: Option<f64>,
    /// Iteration cap per Levenberg-Marquardt run.
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            fixed_shift: None,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub form: FitForm,
    pub params: BTreeMap<String, f64>,
    pub rss: f64,
    pub n_points: usize,
    pub converged: bool,
}

impl FitReport {
    pub fn param(&self, name: &str) -> f64 {
        self.params.get(name).copied().unwrap_or(f64::NAN)
    }

    /// Model value at `x`.
    pub fn evaluate(&self, x: f64) -> f64 {
        let p = |k: &str| self.param(k);
        match self.form {
            FitForm::Linear => p("m") * x + p("n"),
            FitForm::Power => p("a") * x.powf(p("c")) + p("b"),
            FitForm::Log => p("p") * x.ln() + p("q"),
            FitForm::ShiftedPower => p("a") * (x - p("d")).powf(p("c")),
        }
    }
}

fn named(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Least-squares fit of `ys` against `xs` with the given form.
pub fn fit(form: FitForm, xs: &[f64], ys: &[f64], opts: &FitOptions) -> Result<FitReport> {
    if xs.len() != ys.len() {
        return Err(Error::input(format!(
            "x and y lengths differ ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    let need = form.n_params(opts) + 1;
    if xs.len() < need {
        return Err(Error::input(format!(
            "{form} fit needs at least {need} points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::input("fit data must be finite"));
    }
    match form {
        FitForm::Power | FitForm::Log if xs.iter().any(|&x| x <= 0.0) => {
            return Err(Error::input(format!(
                "{form} fit needs strictly positive x"
            )));
        }
        FitForm::ShiftedPower => {
            if let Some(d) = opts.fixed_shift {
                if xs.iter().any(|&x| x <= d) {
                    return Err(Error::input(format!(
                        "fixed shift {d} is not below every x"
                    )));
                }
            }
        }
        _ => {}
    }
    match form {
        FitForm::Linear => {
            let (m, n, rss) = linear_ls(xs, ys)?;
            Ok(FitReport {
                form,
                params: named(&[("m", m), ("n", n)]),
                rss,
                n_points: xs.len(),
                converged: true,
            })
        }
        FitForm::Log => {
            let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
            let (p, q, rss) = linear_ls(&lx, ys)?;
            Ok(FitReport {
                form,
                params: named(&[("p", p), ("q", q)]),
                rss,
                n_points: xs.len(),
                converged: true,
            })
        }
        FitForm::Power => Ok(fit_power(xs, ys, opts)),
        FitForm::ShiftedPower => Ok(fit_shifted(xs, ys, opts)),
    }
}

/// `y = m x + n` by centred normal equations; returns `(m, n, rss)`.
fn linear_ls(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let len = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / len;
    let ym = ys.iter().sum::<f64>() / len;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    if sxx == 0.0 {
        return Err(Error::input("all x values coincide"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let m = sxy / sxx;
    let n = ym - m * xm;
    let rss = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (m * x + n - y).powi(2))
        .sum();
    Ok((m, n, rss))
}

/// A model with parameters `theta`, its Jacobian, and a feasibility check.
trait Model {
    fn n_params(&self) -> usize;
    /// `None` outside the model's domain.
    fn value(&self, theta: &[f64], x: f64) -> Option<f64>;
    fn gradient(&self, theta: &[f64], x: f64, out: &mut [f64]);
}

/// `a x^c + b`, `theta = [a, b, c]`.
struct PowerModel;

impl Model for PowerModel {
    fn n_params(&self) -> usize {
        3
    }

    fn value(&self, t: &[f64], x: f64) -> Option<f64> {
        let v = t[0] * x.powf(t[2]) + t[1];
        v.is_finite().then_some(v)
    }

    fn gradient(&self, t: &[f64], x: f64, out: &mut [f64]) {
        let xc = x.powf(t[2]);
        out[0] = xc;
        out[1] = 1.0;
        out[2] = t[0] * xc * x.ln();
    }
}

/// `a (x - d)^c`, `theta = [a, c, d]`, or `[a, c]` with `d` frozen.
struct ShiftedModel {
    fixed_shift: Option<f64>,
}

impl ShiftedModel {
    fn shift(&self, t: &[f64]) -> f64 {
        self.fixed_shift.unwrap_or_else(|| t[2])
    }
}

impl Model for ShiftedModel {
    fn n_params(&self) -> usize {
        if self.fixed_shift.is_some() {
            2
        } else {
            3
        }
    }

    fn value(&self, t: &[f64], x: f64) -> Option<f64> {
        let u = x - self.shift(t);
        if u <= 0.0 {
            return None;
        }
        let v = t[0] * u.powf(t[1]);
        v.is_finite().then_some(v)
    }

    fn gradient(&self, t: &[f64], x: f64, out: &mut [f64]) {
        let u = x - self.shift(t);
        let uc = u.powf(t[1]);
        out[0] = uc;
        out[1] = t[0] * uc * u.ln();
        if self.fixed_shift.is_none() {
            out[2] = -t[0] * t[1] * uc / u;
        }
    }
}

fn rss_of(model: &dyn Model, theta: &[f64], xs: &[f64], ys: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        match model.value(theta, x) {
            Some(v) => s += (v - y) * (v - y),
            None => return f64::INFINITY,
        }
    }
    s
}

struct LmOutcome {
    theta: Vec<f64>,
    rss: f64,
    converged: bool,
}

/// Levenberg-Marquardt with Marquardt scaling. Each step solves the
/// augmented least-squares system `[J; sqrt(mu) D] delta = [-r; 0]` by SVD.
fn levenberg_marquardt(
    model: &dyn Model,
    theta0: &[f64],
    xs: &[f64],
    ys: &[f64],
    max_iter: usize,
) -> LmOutcome {
    let p = model.n_params();
    let n = xs.len();
    let mut theta = theta0.to_vec();
    let mut rss = rss_of(model, &theta, xs, ys);
    if !rss.is_finite() {
        return LmOutcome {
            theta,
            rss,
            converged: false,
        };
    }
    let scale = ys.iter().map(|y| y * y).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut mu = 1e-3;
    let mut grad = vec![0.0; p];
    let mut jac = DMatrix::<f64>::zeros(n + p, p);
    let mut rhs = DVector::<f64>::zeros(n + p);
    for _ in 0..max_iter {
        if rss <= 1e-30 * scale {
            return LmOutcome {
                theta,
                rss,
                converged: true,
            };
        }
        let mut diag = vec![0.0; p];
        for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
            model.gradient(&theta, x, &mut grad);
            let r = model.value(&theta, x).unwrap_or(f64::NAN) - y;
            for j in 0..p {
                jac[(i, j)] = grad[j];
                diag[j] += grad[j] * grad[j];
            }
            rhs[i] = -r;
        }
        if jac.rows(0, n).iter().any(|v| !v.is_finite()) {
            return LmOutcome {
                theta,
                rss,
                converged: false,
            };
        }
        let mut accepted = false;
        while mu < 1e16 {
            for j in 0..p {
                for k in 0..p {
                    jac[(n + j, k)] = 0.0;
                }
                jac[(n + j, j)] = (mu * diag[j].max(1e-30)).sqrt();
                rhs[n + j] = 0.0;
            }
            let svd = jac.clone().svd(true, true);
            let delta = match svd.solve(&rhs, 1e-14) {
                Ok(d) => d,
                Err(_) => break,
            };
            let trial: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t + d).collect();
            let trial_rss = rss_of(model, &trial, xs, ys);
            if trial_rss < rss {
                let small_step = delta
                    .iter()
                    .zip(&theta)
                    .all(|(d, t)| d.abs() <= 1e-13 * (t.abs() + 1e-13));
                let small_gain = rss - trial_rss <= 1e-14 * rss;
                theta = trial;
                rss = trial_rss;
                mu = (mu / 3.0).max(1e-12);
                if small_step || small_gain {
                    return LmOutcome {
                        theta,
                        rss,
                        converged: true,
                    };
                }
                accepted = true;
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            // no descent direction left: a stationary point at working precision
            return LmOutcome {
                theta,
                rss,
                converged: true,
            };
        }
    }
    LmOutcome {
        theta,
        rss,
        converged: false,
    }
}

/// Linear coefficients `(a, b)` of `a u + b` for fixed basis values `u`.
fn affine_coeffs(us: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    linear_ls(us, ys).ok().map(|(a, b, _)| (a, b))
}

fn fit_power(xs: &[f64], ys: &[f64], opts: &FitOptions) -> FitReport {
    let model = PowerModel;
    let mut best: Option<LmOutcome> = None;
    for &c in &START_EXPONENTS {
        let us: Vec<f64> = xs.iter().map(|x| x.powf(c)).collect();
        let Some((a, b)) = affine_coeffs(&us, ys) else {
            continue;
        };
        let out = levenberg_marquardt(&model, &[a, b, c], xs, ys, opts.max_iter);
        best = pick(best, out);
    }
    let out = best.unwrap_or(LmOutcome {
        theta: vec![f64::NAN; 3],
        rss: f64::INFINITY,
        converged: false,
    });
    FitReport {
        form: FitForm::Power,
        params: named(&[
            ("a", out.theta[0]),
            ("b", out.theta[1]),
            ("c", out.theta[2]),
        ]),
        rss: out.rss,
        n_points: xs.len(),
        converged: out.converged && out.theta.iter().all(|v| v.is_finite()),
    }
}

fn fit_shifted(xs: &[f64], ys: &[f64], opts: &FitOptions) -> FitReport {
    let model = ShiftedModel {
        fixed_shift: opts.fixed_shift,
    };
    let xmin = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let xmax = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (xmax - xmin).max(f64::EPSILON * xmax.abs().max(1.0));
    let shifts: Vec<f64> = match opts.fixed_shift {
        Some(d) => vec![d],
        None => START_SHIFT_OFFSETS
            .iter()
            .map(|f| xmin - f * span)
            .collect(),
    };
    let mut best: Option<LmOutcome> = None;
    for &d in &shifts {
        for &c in &START_EXPONENTS {
            let us: Vec<f64> = xs.iter().map(|x| (x - d).powf(c)).collect();
            let uu: f64 = us.iter().map(|u| u * u).sum();
            if !(uu > 0.0 && uu.is_finite()) {
                continue;
            }
            let a = us.iter().zip(ys).map(|(u, y)| u * y).sum::<f64>() / uu;
            let start: Vec<f64> = if opts.fixed_shift.is_some() {
                vec![a, c]
            } else {
                vec![a, c, d]
            };
            let out = levenberg_marquardt(&model, &start, xs, ys, opts.max_iter);
            best = pick(best, out);
        }
    }
    let out = best.unwrap_or(LmOutcome {
        theta: vec![f64::NAN; 3],
        rss: f64::INFINITY,
        converged: false,
    });
    let d = opts.fixed_shift.unwrap_or_else(|| out.theta[2]);
    FitReport {
        form: FitForm::ShiftedPower,
        params: named(&[("a", out.theta[0]), ("c", out.theta[1]), ("d", d)]),
        rss: out.rss,
        n_points: xs.len(),
        converged: out.converged && out.theta.iter().all(|v| v.is_finite()),
    }
}

/// Keep the lower residual; converged runs beat unconverged ones, ties keep the earlier start.
fn pick(best: Option<LmOutcome>, cand: LmOutcome) -> Option<LmOutcome> {
    if !cand.rss.is_finite() || cand.theta.iter().any(|v| !v.is_finite()) {
        return best;
    }
    match best {
        None => Some(cand),
        Some(b) => {
            let better = match (cand.converged, b.converged) {
                (true, false) => true,
                (false, true) => false,
                _ => cand.rss < b.rss,
            };
            Some(if better { cand } else { b })
        }
    }
}

/// One series of a sweep: break-times `ys` at sweep values `xs` for coupling `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub lambda: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentPoint {
    pub lambda: f64,
    pub c: Option<f64>,
    pub rss: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

/// Power-law exponent `c(lambda)`, one fit per series; failures are recorded, not fatal.
pub fn fit_exponent_sweep(series: &[Series], opts: &FitOptions) -> Vec<ExponentPoint> {
    series
        .iter()
        .map(|s| match fit(FitForm::Power, &s.xs, &s.ys, opts) {
            Ok(r) => ExponentPoint {
                lambda: s.lambda,
                c: Some(r.param("c")),
                rss: Some(r.rss),
                converged: r.converged,
                error: None,
            },
            Err(e) => ExponentPoint {
                lambda: s.lambda,
                c: None,
                rss: None,
                converged: false,
                error: Some(e.to_string()),
            },
        })
        .collect()
}
