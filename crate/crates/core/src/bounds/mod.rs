//! Explicit bounds: the deviation helper `delta_tilde`, concentration kernels,
//! SEP/SINR sensitivity constants, the tail cascades and their compositions,
//! Ky Fan rates and the Gaussian boundary-measure bound.

pub mod cascade;
pub mod concentration;

pub use cascade::{
    evaluate_tg, evaluate_ts, kf_constant_tg, kf_constant_ts, tail_tg, tail_ts, CascadeEval,
    CascadeParams,
};
pub use concentration::{concentration, Kernel};

use crate::error::{invalid, QprecError, Result};
use crate::models::{ScalarModel, SystemConfig};
use crate::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// One evaluated bound, optionally compared with an empirical frequency or deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub inputs: BTreeMap<String, f64>,
    pub value: f64,
    pub empirical: Option<f64>,
    pub holds: bool,
}

impl BoundReport {
    pub fn new<I, S>(name: &str, inputs: I, value: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        if value.is_nan() || value < 0.0 {
            return invalid(format!("bound `{name}` must be nonnegative, got {value}"));
        }
        Ok(Self {
            name: name.to_string(),
            inputs: inputs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            value,
            empirical: None,
            holds: true,
        })
    }

    /// Attaches an empirical value and sets `holds = empirical <= value`.
    pub fn with_empirical(mut self, empirical: f64) -> Self {
        self.empirical = Some(empirical);
        self.holds = empirical <= self.value;
        self
    }

    /// Single-line JSON record.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("bound reports serialize")
    }
}

/// `delta_tilde(X, Y, eps) = 1/4 (sqrt((|X| + |Y|)^2 + 4 eps) - |X| - |Y|)`.
///
/// The unique positive `d` with `2d (|X| + |Y| + 2d) = eps`.
pub fn tilde_delta(xbar: f64, ybar: f64, eps: f64) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return invalid(format!("tilde_delta: eps must be finite and > 0, got {eps}"));
    }
    if !(xbar.is_finite() && ybar.is_finite()) {
        return invalid("tilde_delta: means must be finite");
    }
    Ok(tilde_delta_raw(xbar, ybar, eps))
}

/// Unchecked `delta_tilde`, evaluated in the cancellation-free form
/// `eps / (sqrt(s^2 + 4 eps) + s)` with `s = |X| + |Y|`.
pub(crate) fn tilde_delta_raw(xbar: f64, ybar: f64, eps: f64) -> f64 {
    let s = xbar.abs() + ybar.abs();
    eps / ((s * s + 4.0 * eps).sqrt() + s)
}

/// `L_m = (sqrt(pi) / (|beta eta T_g|^2 + |beta|^2 sigma^2) + 1) max{|beta| eta |s_m| + 1, |beta| eta + 1}`
/// for every constellation symbol.
pub fn sep_sensitivity_lm(
    config: &SystemConfig,
    model: &ScalarModel,
    beta: Complex64,
) -> Result<Vec<f64>> {
    let b = beta.norm();
    if !(b.is_finite() && b > 0.0) {
        return invalid("sep_sensitivity_lm: |beta| must be > 0");
    }
    let denom = (b * model.eta * model.tg_bar).powi(2) + b * b * model.sigma2_noise;
    if !(denom > 0.0) {
        return Err(QprecError::Hypothesis(
            "sep_sensitivity_lm: |beta eta T_g|^2 + |beta|^2 sigma^2 > 0".into(),
        ));
    }
    let head = PI.sqrt() / denom + 1.0;
    Ok(config
        .constellation()
        .points()
        .iter()
        .map(|s| head * (b * model.eta * s.norm() + 1.0).max(b * model.eta + 1.0))
        .collect())
}

/// `e^{-a} I_n(a)` for `n in {0, 1}` by quadrature of
/// `(1/pi) int_0^pi e^{a (cos t - 1)} cos(n t) dt`.
fn scaled_bessel_i(n: u32, a: f64) -> f64 {
    let out = quadrature::integrate(
        |t: f64| (a * (t.cos() - 1.0)).exp() * (n as f64 * t).cos(),
        0.0,
        PI,
        1e-13,
    );
    out.integral / PI
}

/// `E|mu + W|` for `W ~ CN(0, v)` (Rice mean):
/// `sqrt(pi v)/2 [(1 + 2a) e^{-a} I_0(a) + 2a e^{-a} I_1(a)]`, `a = |mu|^2 / (2v)`.
pub fn rice_abs_mean(mu_abs: f64, v: f64) -> f64 {
    if v == 0.0 {
        return mu_abs;
    }
    let a = mu_abs * mu_abs / (2.0 * v);
    (PI * v).sqrt() / 2.0
        * ((1.0 + 2.0 * a) * scaled_bessel_i(0, a) + 2.0 * a * scaled_bessel_i(1, a))
}

/// `(E|y_bar|, E|y_bar|^2)` of the scalar model, averaging the complex-Gaussian
/// mixture over the constellation.
pub fn output_abs_moments(config: &SystemConfig, model: &ScalarModel) -> (f64, f64) {
    let v = model.eta * model.eta * model.tg_bar.powi(2) + model.sigma2_noise;
    let pts = config.constellation().points();
    let m1 = pts
        .iter()
        .map(|s| rice_abs_mean((model.eta * model.ts_bar * s).norm(), v))
        .sum::<f64>()
        / pts.len() as f64;
    (m1, model.output_power())
}

fn lk_parts(config: &SystemConfig, model: &ScalarModel) -> Result<(f64, f64)> {
    let s2 = model.sigma2_sym;
    let ss = s2.sqrt();
    let (e1, e2) = output_abs_moments(config, model);
    let d = s2 * model.eta * model.eta * model.tg_bar.powi(2) + s2 * model.sigma2_noise;
    if !(d > 0.0) {
        return Err(QprecError::Hypothesis(
            "sinr_sensitivity_lk: sigma_s^2 eta^2 T_g^2 + sigma_s^2 sigma^2 > 0".into(),
        ));
    }
    let num = 2.0 * ss.powi(3) * e2 * (ss * e2.sqrt() + 1.0) + s2 * s2 * e2 * (2.0 * e1 + 1.0);
    Ok((num, d * d))
}

/// SINR sensitivity constant
/// `L_k = 2 [2 sigma_s^3 E|y|^2 (sigma_s sqrt(E|y|^2) + 1) + sigma_s^4 E|y|^2 (2 E|y| + 1)] / (sigma_s^2 eta^2 T_g^2 + sigma_s^2 sigma^2)^2`.
pub fn sinr_sensitivity_lk(config: &SystemConfig, model: &ScalarModel) -> Result<f64> {
    let (num, den) = lk_parts(config, model)?;
    Ok(2.0 * num / den)
}

/// The same constant without the leading factor 2, as it appears in the
/// functional form of the SINR error bound.
pub fn functional_lk(config: &SystemConfig, model: &ScalarModel) -> Result<f64> {
    let (num, den) = lk_parts(config, model)?;
    Ok(num / den)
}

/// `(sqrt(pi)/sigma + 1) eps` for `Y ~ CN(mu, sigma)` with density
/// `exp(-|x - mu|^2 / sigma^2) / (pi sigma^2)`, i.e. `sigma = sqrt(variance)`.
///
/// Valid for small `eps`: it bounds the mass of an `eps`-shell around a
/// closed convex set through the boundary integral of the density.
pub fn gaussian_boundary_bound(variance: f64, eps: f64) -> Result<f64> {
    if !(variance.is_finite() && variance > 0.0) {
        return invalid("gaussian_boundary_bound: variance must be > 0");
    }
    if !(eps.is_finite() && eps > 0.0) {
        return invalid("gaussian_boundary_bound: eps must be > 0");
    }
    Ok((PI.sqrt() / variance.sqrt() + 1.0) * eps)
}

/// Ky Fan rate `C (ln K)^{1/3} / K^{1/3}`.
pub fn kf_rate(k: f64, c: f64) -> Result<f64> {
    if !(k.is_finite() && k >= 3.0) {
        return invalid(format!("kf_rate: K must be >= 3, got {k}"));
    }
    if !(c.is_finite() && c > 0.0) {
        return invalid("kf_rate: C must be > 0");
    }
    Ok(c * (k.ln() / k).cbrt())
}

/// SEP rate `(1/M) sum_m L_m C_check (ln K)^{1/3} / K^{1/3}`.
pub fn sep_rate(k: f64, lm: &[f64], c_check: f64) -> Result<f64> {
    if lm.is_empty() {
        return invalid("sep_rate: L_m list is empty");
    }
    let mean = lm.iter().sum::<f64>() / lm.len() as f64;
    Ok(mean * kf_rate(k, c_check)?)
}

/// `C_check = 2 max{C, C'}` from the two Ky Fan constants at dimension `K`.
pub fn sep_rate_constant(p: &CascadeParams, k: f64) -> Result<f64> {
    Ok(2.0 * kf_constant_tg(p, k)?.max(kf_constant_ts(p, k)?))
}

/// SEP gap bound `(1/M) sum_m L_m (d_KF(T_s) + d_KF(T_g g_2))`.
pub fn sep_gap_bound(lm: &[f64], kf_ts: f64, kf_tg: f64) -> Result<f64> {
    if lm.is_empty() {
        return invalid("sep_gap_bound: L_m list is empty");
    }
    if !(kf_ts >= 0.0 && kf_tg >= 0.0) {
        return invalid("sep_gap_bound: Ky Fan distances must be >= 0");
    }
    Ok(lm.iter().sum::<f64>() / lm.len() as f64 * (kf_ts + kf_tg))
}

/// Composition bounding `P(|y_hat - y_bar| >= eps)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YhatTail {
    pub bound: f64,
    /// `R(sqrt(eps / (2 eta)), K)`
    pub r_tg: f64,
    /// `R_tilde(eps / (2 eta S), K)`
    pub r_ts: f64,
    /// `exp(-eps / (2 eta))`
    pub exp_term: f64,
    /// Larger of the two cascade thresholds.
    pub k_hat: f64,
}

/// Evaluates the `y_hat` tail composition without checking thresholds.
pub fn evaluate_tail_yhat(
    eps: f64,
    k: f64,
    p: &CascadeParams,
    eta: f64,
    s_sup: f64,
) -> Result<YhatTail> {
    if !(eta.is_finite() && eta > 0.0) {
        return invalid("tail_yhat: eta must be > 0");
    }
    if !(s_sup.is_finite() && s_sup > 0.0) {
        return invalid("tail_yhat: sup |s| must be > 0");
    }
    if !(eps.is_finite() && eps > 0.0) {
        return invalid("tail_yhat: eps must be > 0");
    }
    let g = evaluate_tg((eps / (2.0 * eta)).sqrt(), k, p)?;
    let s = evaluate_ts(eps / (2.0 * eta * s_sup), k, p)?;
    let exp_term = (-eps / (2.0 * eta)).exp();
    Ok(YhatTail {
        bound: g.bound + s.bound + exp_term,
        r_tg: g.bound,
        r_ts: s.bound,
        exp_term,
        k_hat: g.k_hat.max(s.k_hat),
    })
}

/// `R(sqrt(eps/2eta), K) + R_tilde(eps/(2 eta S), K) + exp(-eps/(2 eta))`,
/// asserted only above both thresholds.
pub fn tail_yhat(eps: f64, k: f64, p: &CascadeParams, eta: f64, s_sup: f64) -> Result<YhatTail> {
    let t = evaluate_tail_yhat(eps, k, p, eta, s_sup)?;
    if k > t.k_hat {
        Ok(t)
    } else {
        Err(QprecError::BelowThreshold { k, k_hat: t.k_hat })
    }
}

/// Tail of `|alpha^2 - alpha_bar^2|`:
/// `8 exp(-K min{d^2/C1', d/C2'}) + 8 M1^2 / (K d^2)` with
/// `d = min{gamma eps/(2L), 1/2}`, `C1' = max{c_max^2/2, 32, 32 M1^2}`, `C2' = max{8, 8 M1}`.
pub fn alpha_square_tail(eps: f64, k: f64, p: &CascadeParams) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return invalid("alpha_square_tail: eps must be > 0");
    }
    if !(k.is_finite() && k >= 1.0) {
        return invalid("alpha_square_tail: K must be >= 1");
    }
    p.validate()?;
    let s2 = p.sigma2_sym;
    let l = 4.0 * (1.0 + s2) * (p.e_f2 + 1.0) + 2.0 * s2 * (1.0 + p.e_f2);
    let d = (p.gamma * eps / (2.0 * l)).min(0.5);
    let c1 = (p.c_max * p.c_max / 2.0).max(32.0).max(32.0 * p.m1 * p.m1);
    let c2 = 8.0f64.max(8.0 * p.m1);
    Ok(8.0 * (-k * (d * d / c1).min(d / c2)).exp() + 8.0 * p.m1 * p.m1 / (k * d * d))
}
