//! Closed-form and semi-analytic estimates: Bogoliubov coefficients,
//! condensate depletion, decay rates, break-time heuristics and bounds on the
//! inter-species coupling.
//!
//! Everything here is a pure scalar function of the parameters.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{ModelKind, ModelParams};

/// `|lambda - 1|` below which a point counts as critical.
pub const CRITICAL_WINDOW: f64 = 1e-12;

/// Factor of the band around the few/many species boundary reported as ambiguous.
pub const BOUNDARY_BAND: f64 = 2.0;

const ROOT_EPS: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;

/// Bogoliubov-de Gennes frequency `sqrt(k^2 (k^2 - lambda))` of ring mode `k`.
///
/// Imaginary above `lambda = k^2`.
pub fn dispersion_ppm(k: i32, lambda: f64) -> Complex64 {
    assert!(k != 0, "the condensate mode has no Bogoliubov frequency");
    let k2 = (k as f64) * (k as f64);
    let arg = k2 * (k2 - lambda);
    if arg >= 0.0 {
        Complex64::new(arg.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-arg).sqrt())
    }
}

/// Mode whose Bogoliubov transformation is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BogoliubovMode {
    /// Ring mode with momentum `k != 0`.
    Ppm(i32),
    /// A single species mode of the species model.
    SingleMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BogoliubovCoeffs {
    pub u2: f64,
    pub v2: f64,
}

/// `u^2, v^2 = ((k^2 - lambda/2) / eps_k +- 1) / 2`, single-mode form with `k = 1`.
pub fn bogoliubov_coeffs(lambda: f64, mode: BogoliubovMode) -> Result<BogoliubovCoeffs> {
    let k2 = match mode {
        BogoliubovMode::Ppm(0) => {
            return Err(Error::domain("ring mode k = 0 has no Bogoliubov partner"))
        }
        BogoliubovMode::Ppm(k) => (k as f64) * (k as f64),
        BogoliubovMode::SingleMode => 1.0,
    };
    if !(lambda < k2) {
        return Err(Error::domain(format!(
            "Bogoliubov transformation only exists in the undercritical case (lambda = {lambda} >= {k2})"
        )));
    }
    let r = (k2 - lambda / 2.0) / (k2 * (k2 - lambda)).sqrt();
    Ok(BogoliubovCoeffs {
        u2: 0.5 * (r + 1.0),
        v2: 0.5 * (r - 1.0),
    })
}

/// Depletion `g(x) = (1 - x/2) / sqrt(1 - x) - 1` of a pair of modes at effective coupling `x`.
fn pair_depletion(x: f64) -> f64 {
    (1.0 - x / 2.0) / (1.0 - x).sqrt() - 1.0
}

/// Partial ground-state depletion sum of the ring gas over `1 <= |k| <= kmax`.
pub fn depletion_ppm_sum(lambda: f64, kmax: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::domain(format!(
            "depletion sum needs 0 <= lambda < 1, got {lambda}"
        )));
    }
    if kmax == 0 {
        return Err(Error::domain("kmax must be at least 1"));
    }
    // both signs of k contribute equally; sum small terms first
    Ok((1..=kmax)
        .rev()
        .map(|k| {
            let k2 = (k as f64) * (k as f64);
            pair_depletion(lambda / k2)
        })
        .sum())
}

/// Prefactor of the backreaction equation: 1 for the ring truncation (two
/// modes at `|k| = 1`), `Q / 2` for the species model.
fn backreaction_prefactor(model: ModelKind, q: u32) -> f64 {
    match model {
        ModelKind::Ppm3 => 1.0,
        ModelKind::Npm => q as f64 / 2.0,
    }
}

/// `N_d - c * g(lambda (1 - N_d / N))`; increasing in `N_d` where defined.
pub fn backreaction_residual(nd: f64, lambda: f64, n: u32, q: u32, model: ModelKind) -> f64 {
    let x = lambda * (1.0 - nd / n as f64);
    nd - backreaction_prefactor(model, q) * pair_depletion(x)
}

/// Depleted particle number with backreaction: root of
/// `N_d = c * g(lambda (1 - N_d / N))` in `[0, N)`.
pub fn depletion_backreaction(lambda: f64, n: u32, q: u32, model: ModelKind) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if n == 0 || q == 0 {
        return Err(Error::domain("N and Q must be at least 1"));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    // g is only defined where the effective coupling is below 1
    let mut lo = if lambda >= 1.0 {
        nf * (1.0 - 1.0 / lambda)
    } else {
        0.0
    };
    let mut hi = nf * (1.0 - ROOT_EPS);
    let f = |nd: f64| backreaction_residual(nd, lambda, n, q, model);
    if lo >= hi || f(hi) <= 0.0 {
        return Err(Error::domain(format!(
            "no depletion root in [0, N) for lambda = {lambda}, N = {n}, Q = {q} ({})",
            regime_name(lambda)
        )));
    }
    if lambda < 1.0 && f(lo) >= 0.0 {
        return Ok(lo);
    }
    for _ in 0..ROOT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        // NaN at the singular end counts as below the root
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (flo, fhi) = (f(lo), f(hi));
    if flo.is_finite() && flo.abs() <= fhi.abs() {
        Ok(lo)
    } else {
        Ok(hi)
    }
}

fn regime_name(lambda: f64) -> &'static str {
    if (lambda - 1.0).abs() <= CRITICAL_WINDOW {
        "critical"
    } else if lambda < 1.0 {
        "undercritical"
    } else {
        "overcritical"
    }
}

/// Which critical-depletion scaling to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalForm {
    /// Ring truncation: `N^(1/3) / 2^(2/3)`.
    Ppm,
    /// Species model: `Q^(2/3) N^(1/3) / 2^(4/3)`.
    Species(u32),
}

/// Leading-order depletion at `lambda = 1`; relative corrections are `O(N^(-2/9))`.
pub fn depletion_critical(n: u32, form: CriticalForm) -> f64 {
    let n13 = (n as f64).cbrt();
    match form {
        CriticalForm::Ppm => n13 / 2f64.powf(2.0 / 3.0),
        CriticalForm::Species(q) => (q as f64).powf(2.0 / 3.0) * n13 / 2f64.powf(4.0 / 3.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Undercritical,
    Critical,
    OvercriticalFew,
    OvercriticalMany,
    Unknown,
}

/// Heuristic classification and break-time estimate of one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub t_q_estimate: Option<f64>,
    pub formula_used: String,
    /// Initial two-particle scattering rate `Q lambda^2`.
    pub rate: f64,
    /// `16 N (lambda - 1)^2 / lambda^3`, overcritical points only.
    pub species_boundary: Option<f64>,
    /// `Q` within a factor 2 of the boundary.
    pub near_boundary: bool,
    /// The estimate assumes a depletion the truncated system cannot reach.
    pub fictitious: bool,
}

/// Decay rate and break-time heuristic for the species model.
pub fn rate_and_heuristic_breaktime(params: &ModelParams) -> RegimeReport {
    let lambda = params.lambda();
    let n = params.n as f64;
    let q = params.q as f64;
    let rate = q * lambda * lambda;
    let mut report = RegimeReport {
        regime: Regime::Unknown,
        t_q_estimate: None,
        formula_used: String::new(),
        rate,
        species_boundary: None,
        near_boundary: false,
        fictitious: false,
    };
    if (lambda - 1.0).abs() <= CRITICAL_WINDOW {
        report.regime = Regime::Critical;
        report.t_q_estimate = Some(n.sqrt());
        report.formula_used = "sqrt(N), prefactor unknown".into();
    } else if lambda < 1.0 {
        report.regime = Regime::Undercritical;
        if lambda > 0.0 {
            report.t_q_estimate = Some(n / rate);
            report.formula_used = "N/(Q lambda^2)".into();
        } else {
            report.formula_used = "free theory, no breaking".into();
        }
        let capacity = q * params.effective_capacity() as f64;
        let nd = depletion_backreaction(lambda, params.n, params.q, ModelKind::Npm).unwrap_or(0.0);
        report.fictitious = capacity < n || nd < n / 2.0;
    } else {
        let boundary = 16.0 * n * (lambda - 1.0).powi(2) / lambda.powi(3);
        report.species_boundary = Some(boundary);
        if q * BOUNDARY_BAND <= boundary {
            report.regime = Regime::OvercriticalFew;
            report.t_q_estimate = Some(n.ln() / (q * (lambda - 1.0).sqrt()));
            report.formula_used = "ln N/(Q sqrt(lambda-1))".into();
        } else if q >= BOUNDARY_BAND * boundary {
            report.regime = Regime::OvercriticalMany;
            report.formula_used = "unknown".into();
        } else {
            report.near_boundary = true;
            report.formula_used = "near species boundary, no estimate".into();
        }
    }
    report
}

/// Depletion reached by the instability and by perturbative scattering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstabilityExtent {
    /// `N (lambda - 1) / lambda`, independent of `Q`.
    pub delta_n_inst: f64,
    /// `sqrt(Q N lambda) / 4`.
    pub delta_n_pert: f64,
}

pub fn instability_extent(lambda: f64, n: u32, q: u32) -> Result<InstabilityExtent> {
    if !(lambda > 1.0) {
        return Err(Error::domain(format!(
            "instability extent needs lambda > 1, got {lambda}"
        )));
    }
    let nf = n as f64;
    Ok(InstabilityExtent {
        delta_n_inst: nf * (lambda - 1.0) / lambda,
        delta_n_pert: (q as f64 * nf * lambda).sqrt() / 4.0,
    })
}

/// Complete elliptic integrals `(K(m), E(m))` by the arithmetic-geometric mean.
pub fn elliptic_ke(m: f64) -> (f64, f64) {
    assert!(
        (0.0..1.0).contains(&m),
        "parameter m must lie in [0, 1), got {m}"
    );
    let mut a = 1.0f64;
    let mut b = (1.0 - m).sqrt();
    let mut c2 = m;
    let mut sum = 0.5 * c2;
    let mut pow = 0.5;
    for _ in 0..64 {
        if (a - b).abs() <= 4.0 * f64::EPSILON * a {
            break;
        }
        let an = 0.5 * (a + b);
        let c = 0.5 * (a - b);
        b = (a * b).sqrt();
        a = an;
        pow *= 2.0;
        c2 = c * c;
        sum += pow * c2;
    }
    let k = PI / (2.0 * a);
    (k, k * (1.0 - sum))
}

/// Parameter `m` of the soliton branch: `K(m) E(m) = (pi/2)^2 lambda`.
pub fn elliptic_m(lambda: f64) -> Result<f64> {
    if !(lambda >= 1.0) {
        return Err(Error::domain(format!(
            "the soliton branch only exists for lambda >= 1, got {lambda}"
        )));
    }
    let target = (PI / 2.0).powi(2) * lambda;
    let g = |m: f64| {
        let (k, e) = elliptic_ke(m);
        k * e - target
    };
    if g(0.0) >= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0 - f64::EPSILON;
    if g(hi) < 0.0 {
        return Err(Error::domain(format!(
            "lambda = {lambda} needs m closer to 1 than double precision resolves"
        )));
    }
    for _ in 0..ROOT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(if g(lo).abs() <= g(hi).abs() { lo } else { hi })
}

/// One inter-species coupling bound. All are order-of-magnitude estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmBound {
    pub tag: String,
    pub value: f64,
    pub order_of_magnitude: bool,
}

fn bound(tag: &str, value: f64) -> CmBound {
    CmBound {
        tag: tag.to_string(),
        value,
        order_of_magnitude: true,
    }
}

/// Bounds on `|C_m|` that keep the species coupling subleading.
///
/// The expectation bound applies for every `lambda` (as `|1 - lambda| / 2`).
/// The gapless bound at depletion `delta_n` needs `delta_n` and `n`; it and
/// the final piecewise bound need `0 < lambda < 1` and `alpha`.
pub fn cm_bounds(
    lambda: f64,
    alpha: Option<f64>,
    delta_n: Option<u64>,
    n: Option<u32>,
) -> Result<Vec<CmBound>> {
    let mut out = vec![bound("expectation", (1.0 - lambda).abs() / 2.0)];
    let wants_gapless = alpha.is_some() || delta_n.is_some();
    if wants_gapless && !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::domain(format!(
            "gapless bounds need 0 < lambda < 1, got {lambda}"
        )));
    }
    if let Some(dn) = delta_n {
        let n = n.ok_or_else(|| Error::domain("gapless bound needs N together with delta N"))?;
        if dn == 0 {
            return Err(Error::domain("delta N must be at least 1"));
        }
        let dn = dn as f64;
        let v = (1.0 - lambda * (1.0 - dn / n as f64)) / dn.sqrt();
        out.push(bound("gapless", v));
    }
    if let Some(alpha) = alpha {
        if !(alpha > 0.0) {
            return Err(Error::domain(format!("alpha must be > 0, got {alpha}")));
        }
        let v = if lambda <= 2.0 / 3.0 {
            (3.0 * alpha).sqrt() * (1.0 - lambda / 2.0)
        } else {
            2.0 * (alpha * (1.0 - lambda)).sqrt()
        };
        out.push(bound("final", v));
    }
    Ok(out)
}

/// Everything the `analytic` subcommand reports for one point.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyticSummary {
    pub params: ModelParams,
    pub lambda: f64,
    pub report: RegimeReport,
    pub single_mode: Option<BogoliubovCoeffs>,
    pub dispersion_k1: [f64; 2],
    pub depletion_backreaction: Option<f64>,
    pub depletion_critical: f64,
    pub instability: Option<InstabilityExtent>,
    pub elliptic_m: Option<f64>,
    pub cm_bounds: Vec<CmBound>,
}

pub fn summarize(params: &ModelParams) -> AnalyticSummary {
    let lambda = params.lambda();
    let w = dispersion_ppm(1, lambda);
    let undercritical = lambda > 0.0 && lambda < 1.0;
    let cm = if undercritical {
        let dn = ((params.n as f64) * (0.5f64).min(1.0 / lambda - 1.0))
            .round()
            .max(1.0) as u64;
        cm_bounds(lambda, Some(params.alpha), Some(dn), Some(params.n))
    } else {
        cm_bounds(lambda, None, None, None)
    };
    AnalyticSummary {
        params: *params,
        lambda,
        report: rate_and_heuristic_breaktime(params),
        single_mode: bogoliubov_coeffs(lambda, BogoliubovMode::SingleMode).ok(),
        dispersion_k1: [w.re, w.im],
        depletion_backreaction: depletion_backreaction(lambda, params.n, params.q, ModelKind::Npm)
            .ok(),
        depletion_critical: depletion_critical(params.n, CriticalForm::Species(params.q)),
        instability: instability_extent(lambda, params.n, params.q).ok(),
        elliptic_m: elliptic_m(lambda).ok(),
        cm_bounds: cm.unwrap_or_default(),
    }
}
