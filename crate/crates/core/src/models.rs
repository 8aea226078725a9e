//! System configuration, precoder shaping functions, and the three received-signal
//! models: original `y = eta H q(P s) + n`, statistically equivalent `y_hat`,
//! and asymptotic `y_bar`.

use crate::error::{invalid, QprecError, Result};
use crate::quantizer::QuantizerSpec;
use crate::spectral::{mp_moment, sample_channel, sample_singular_values, MpLaw};
use crate::stochastic::{
    complex_normal, dot_h, fill_complex_gaussian, norm, norm_sqr, Constellation, Householder,
    RngStream,
};
use crate::{Complex64, ComplexVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

/// Number of attempts for a draw whose norms vanish before an error is raised.
pub const MAX_DRAW_ATTEMPTS: usize = 4;

/// Dimensions, noise and symbol statistics, and power budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    n: usize,
    k: usize,
    sigma2_noise: f64,
    constellation: Constellation,
    power_limit: f64,
}

impl SystemConfig {
    /// Validates `N > K >= 3` (so `gamma = N/K > 1`), `sigma^2 >= 0`, `P_T > 0`.
    pub fn new(
        n: usize,
        k: usize,
        sigma2_noise: f64,
        constellation: Constellation,
        power_limit: f64,
    ) -> Result<Self> {
        let cfg = |field: &str, reason: String| QprecError::Config {
            field: field.into(),
            reason,
        };
        if k < 3 {
            return Err(cfg("K", format!("must be >= 3, got {k}")));
        }
        if n <= k {
            return Err(cfg(
                "N",
                format!("must exceed K so that gamma = N/K > 1, got N = {n}, K = {k}"),
            ));
        }
        if !(sigma2_noise.is_finite() && sigma2_noise >= 0.0) {
            return Err(cfg("sigma2", format!("must be finite and >= 0, got {sigma2_noise}")));
        }
        if !(power_limit.is_finite() && power_limit > 0.0) {
            return Err(cfg("power", format!("must be finite and > 0, got {power_limit}")));
        }
        Ok(Self {
            n,
            k,
            sigma2_noise,
            constellation,
            power_limit,
        })
    }

    /// Same settings at a different `K`, keeping `gamma` by setting `N = round(gamma K)`.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        let n = (self.gamma() * k as f64).round() as usize;
        Self::new(n, k, self.sigma2_noise, self.constellation.clone(), self.power_limit)
    }

    /// Same settings with a different noise variance.
    pub fn with_noise(&self, sigma2_noise: f64) -> Result<Self> {
        Self::new(self.n, self.k, sigma2_noise, self.constellation.clone(), self.power_limit)
    }

    /// Same settings with a different power budget.
    pub fn with_power(&self, power_limit: f64) -> Result<Self> {
        Self::new(self.n, self.k, self.sigma2_noise, self.constellation.clone(), power_limit)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn gamma(&self) -> f64 {
        self.n as f64 / self.k as f64
    }

    pub fn sigma2_noise(&self) -> f64 {
        self.sigma2_noise
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    /// `sigma_s^2 = E|s|^2`.
    pub fn sigma2_sym(&self) -> f64 {
        self.constellation.sigma2()
    }

    pub fn power_limit(&self) -> f64 {
        self.power_limit
    }

    pub fn mp_law(&self) -> MpLaw {
        MpLaw::new(self.gamma()).expect("gamma > 1 by construction")
    }
}

/// Parametric precoder family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ShapingFamily {
    /// Matched filter, `f(d) = d`.
    Mf,
    /// Zero forcing, `f(d) = 1/d`.
    Zf,
    /// Regularized zero forcing, `f(d) = d / (d^2 + rho)`.
    Rzf { rho: f64 },
}

/// Shaping function `f = scale * f_family`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapingFunction {
    pub family: ShapingFamily,
    pub scale: f64,
}

impl ShapingFunction {
    pub fn mf() -> Self {
        Self {
            family: ShapingFamily::Mf,
            scale: 1.0,
        }
    }

    pub fn zf() -> Self {
        Self {
            family: ShapingFamily::Zf,
            scale: 1.0,
        }
    }

    pub fn rzf(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return invalid(format!("rzf: rho must be finite and > 0, got {rho}"));
        }
        Ok(Self {
            family: ShapingFamily::Rzf { rho },
            scale: 1.0,
        })
    }

    /// `c f`
    pub fn scaled(self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return invalid("shaping scale must be finite and > 0");
        }
        Ok(Self {
            scale: self.scale * c,
            ..self
        })
    }

    /// Regularization parameter, if any (MF is the `rho -> inf` limit up to
    /// scale, ZF the `rho -> 0` limit).
    pub fn rho(&self) -> Option<f64> {
        match self.family {
            ShapingFamily::Rzf { rho } => Some(rho),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        self.scale
            * match self.family {
                ShapingFamily::Mf => d,
                ShapingFamily::Zf => 1.0 / d,
                ShapingFamily::Rzf { rho } => d / (d * d + rho),
            }
    }

    /// Absolute derivative `|f'(d)|`.
    fn abs_derivative(&self, d: f64) -> f64 {
        self.scale
            * match self.family {
                ShapingFamily::Mf => 1.0,
                ShapingFamily::Zf => 1.0 / (d * d),
                ShapingFamily::Rzf { rho } => (rho - d * d).abs() / (d * d + rho).powi(2),
            }
    }

    /// Points of `[lo, hi]` where the extrema of `f`, `|f'|` and the
    /// Assumption-5 envelope can occur (endpoints and interior critical points).
    fn critical_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = vec![lo, hi];
        if let ShapingFamily::Rzf { rho } = self.family {
            for c in [rho.sqrt(), (3.0 * rho).sqrt()] {
                if c > lo && c < hi {
                    pts.push(c);
                }
            }
        }
        pts
    }

    /// `sup |f|` on `[lo, hi]`.
    pub fn sup_on(&self, lo: f64, hi: f64) -> f64 {
        self.critical_points(lo, hi)
            .into_iter()
            .map(|d| self.eval(d).abs())
            .fold(0.0, f64::max)
    }

    /// Lipschitz constant of `f` on `[lo, hi]` (sup of `|f'|`).
    pub fn lipschitz_on(&self, lo: f64, hi: f64) -> f64 {
        self.critical_points(lo, hi)
            .into_iter()
            .map(|d| self.abs_derivative(d))
            .fold(0.0, f64::max)
    }

    /// `M_1 = sup_{x in [lo, hi]} max{x, f, f^2, x f, x^2, x^2 f^2}`.
    pub fn m1_on(&self, lo: f64, hi: f64) -> f64 {
        let sigma = |x: f64| {
            let f = self.eval(x);
            [x, f, f * f, x * f, x * x, x * x * f * f]
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        // Each candidate is monotone or unimodal on the interval; a fine grid
        // plus the critical points pins the supremum.
        let grid = 2048;
        let mut best = self
            .critical_points(lo, hi)
            .into_iter()
            .map(sigma)
            .fold(f64::NEG_INFINITY, f64::max);
        for i in 0..=grid {
            let x = lo + (hi - lo) * i as f64 / grid as f64;
            best = best.max(sigma(x));
        }
        best
    }

    /// Human-readable label (`mf`, `zf`, `rzf(0.25)`).
    pub fn label(&self) -> String {
        let base = match self.family {
            ShapingFamily::Mf => "mf".to_string(),
            ShapingFamily::Zf => "zf".to_string(),
            ShapingFamily::Rzf { rho } => format!("rzf({rho})"),
        };
        if self.scale == 1.0 {
            base
        } else {
            format!("{}*{base}", self.scale)
        }
    }
}

/// MP moments of a shaping function used by the asymptotic model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapingMoments {
    /// `E[f^2(d)]`
    pub e_f2: f64,
    /// `E[d f(d)]`
    pub e_df: f64,
    /// `var[d f(d)]`
    pub var_df: f64,
}

pub fn shaping_moments(f: &ShapingFunction, law: &MpLaw) -> Result<ShapingMoments> {
    let e_f2 = mp_moment(|d| f.eval(d).powi(2), law)?;
    let e_df = mp_moment(|d| d * f.eval(d), law)?;
    let e_df2 = mp_moment(|d| (d * f.eval(d)).powi(2), law)?;
    Ok(ShapingMoments {
        e_f2,
        e_df,
        var_df: (e_df2 - e_df * e_df).max(0.0),
    })
}

/// Parameters of the asymptotic scalar model `y_bar = eta T_s s + eta T_g g + n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarModel {
    pub alpha_bar: f64,
    pub eta: f64,
    pub c1_bar: Complex64,
    pub c2_bar: f64,
    pub ts_bar: Complex64,
    pub tg_bar: f64,
    /// `E[Z^H q(alpha_bar Z)]`
    pub ezq: Complex64,
    /// `E|q(alpha_bar Z)|^2`
    pub eq2: f64,
    pub moments: ShapingMoments,
    pub sigma2_sym: f64,
    pub sigma2_noise: f64,
}

impl ScalarModel {
    /// `phi(alpha, eta) = (E|q|^2 - |E Z^H q|^2 + sigma^2/eta^2) / |E Z^H q|^2`.
    pub fn phi(&self) -> f64 {
        (self.eq2 - self.ezq.norm_sqr() + self.sigma2_noise / (self.eta * self.eta))
            / self.ezq.norm_sqr()
    }

    /// Same model with `eta` replaced.
    pub fn with_eta(&self, eta: f64) -> Self {
        Self { eta, ..*self }
    }

    /// `E|y_bar|^2 = sigma_s^2 eta^2 |T_s|^2 + eta^2 T_g^2 + sigma^2`.
    pub fn output_power(&self) -> f64 {
        let e2 = self.eta * self.eta;
        self.sigma2_sym * e2 * self.ts_bar.norm_sqr() + e2 * self.tg_bar.powi(2) + self.sigma2_noise
    }
}

/// Asymptotic model from the MP moments of `f` and the Gaussian moments of `q`,
/// with `eta = sqrt(P_T / E|q(alpha_bar Z)|^2)`.
pub fn asymptotic_model(
    config: &SystemConfig,
    f: &ShapingFunction,
    q: &QuantizerSpec,
) -> Result<ScalarModel> {
    let moments = shaping_moments(f, &config.mp_law())?;
    scalar_from_moments(config, moments, q, None)
}

/// Asymptotic model with `eta` fixed instead of set by the power equality.
pub fn asymptotic_model_with_eta(
    config: &SystemConfig,
    f: &ShapingFunction,
    q: &QuantizerSpec,
    eta: f64,
) -> Result<ScalarModel> {
    if !(eta.is_finite() && eta > 0.0) {
        return invalid("eta must be finite and > 0");
    }
    let moments = shaping_moments(f, &config.mp_law())?;
    scalar_from_moments(config, moments, q, Some(eta))
}

pub(crate) fn scalar_from_moments(
    config: &SystemConfig,
    moments: ShapingMoments,
    q: &QuantizerSpec,
    eta: Option<f64>,
) -> Result<ScalarModel> {
    let alpha_bar = (config.sigma2_sym() * moments.e_f2 / config.gamma()).sqrt();
    if !(alpha_bar > 0.0 && alpha_bar.is_finite()) {
        return invalid("asymptotic model: alpha_bar must be finite and positive");
    }
    scalar_model_at(config, moments, q, alpha_bar, eta)
}

/// Scalar model with the quantizer input scale `alpha` given explicitly
/// instead of pinned by `E[f^2(d)] = gamma alpha^2 / sigma_s^2`.
pub fn scalar_model_at(
    config: &SystemConfig,
    moments: ShapingMoments,
    q: &QuantizerSpec,
    alpha_bar: f64,
    eta: Option<f64>,
) -> Result<ScalarModel> {
    let s2 = config.sigma2_sym();
    let gm = q.gaussian_moments(alpha_bar)?;
    if gm.eq2 <= 0.0 {
        return Err(QprecError::DegenerateQuantizer);
    }
    let ts_bar = gm.c1_bar * moments.e_df;
    let tg_bar = (s2 * gm.c1_bar.norm_sqr() * moments.var_df + gm.c2_bar * gm.c2_bar).sqrt();
    Ok(ScalarModel {
        alpha_bar,
        eta: eta.unwrap_or_else(|| (config.power_limit() / gm.eq2).sqrt()),
        c1_bar: gm.c1_bar,
        c2_bar: gm.c2_bar,
        ts_bar,
        tg_bar,
        ezq: gm.ezq,
        eq2: gm.eq2,
        moments,
        sigma2_sym: s2,
        sigma2_noise: config.sigma2_noise(),
    })
}

/// i.i.d. draws `(y_bar_k, s_k)` of the scalar model.
pub fn sample_scalar_outputs<R: Rng + ?Sized>(
    model: &ScalarModel,
    config: &SystemConfig,
    rng: &mut R,
    trials: usize,
) -> Result<Vec<(Complex64, Complex64)>> {
    if trials == 0 {
        return invalid("sample_scalar_outputs: trials must be >= 1");
    }
    let cons = config.constellation();
    Ok((0..trials)
        .map(|_| {
            let s = cons.draw(rng);
            let g = complex_normal(rng, 1.0);
            let n = complex_normal(rng, config.sigma2_noise());
            (scalar_output(model, s, g, n), s)
        })
        .collect())
}

/// `eta T_s s + eta T_g g + n` for given `(s, g, n)`.
#[inline]
pub fn scalar_output(model: &ScalarModel, s: Complex64, g: Complex64, n: Complex64) -> Complex64 {
    model.eta * model.ts_bar * s + model.eta * model.tg_bar * g + n
}

/// One realization of the original model.
#[derive(Clone, Debug)]
pub struct OriginalSample {
    pub y: ComplexVector,
    pub s: ComplexVector,
    /// Per-draw `eta = sqrt(N P_T) / ||q(P s)||`.
    pub eta: f64,
    /// `eta^2 ||q(P s)||^2 / N`
    pub transmit_power: f64,
}

/// `y = eta H q(P s) + n` with `P = V f(D)^T U^H`, trial `t` on stream `(seed, t)`.
pub fn simulate_original(
    config: &SystemConfig,
    f: &ShapingFunction,
    q: &QuantizerSpec,
    seed: u64,
    trials: usize,
) -> Result<Vec<OriginalSample>> {
    if trials == 0 {
        return invalid("simulate_original: trials must be >= 1");
    }
    (0..trials)
        .map(|t| original_trial(config, f, q, &mut RngStream::new(seed, t as u64)))
        .collect()
}

/// One trial of the original model.
pub fn original_trial<R: Rng + ?Sized>(
    config: &SystemConfig,
    f: &ShapingFunction,
    q: &QuantizerSpec,
    rng: &mut R,
) -> Result<OriginalSample> {
    let (n, k) = (config.n(), config.k());
    for _ in 0..MAX_DRAW_ATTEMPTS {
        let ch = sample_channel(config, rng)?;
        let s: Vec<Complex64> = (0..k).map(|_| config.constellation().draw(rng)).collect();
        let mut noise = vec![Complex64::new(0.0, 0.0); k];
        fill_complex_gaussian(&mut noise, config.sigma2_noise(), rng);
        // P s = V f(D)^T U^H s
        let sv = ComplexVector::from_vec(s.clone());
        let mut t = ch.u.adjoint() * &sv;
        for (ti, &di) in t.iter_mut().zip(&ch.d) {
            *ti *= f.eval(di);
        }
        let ps = &ch.v * t;
        let x: Vec<Complex64> = ps.iter().map(|&z| q.quantize(z)).collect();
        let xn = norm(&x);
        if xn == 0.0 {
            continue;
        }
        let eta = (n as f64 * config.power_limit()).sqrt() / xn;
        let hx = &ch.h * ComplexVector::from_vec(x);
        let y = hx * Complex64::new(eta, 0.0) + ComplexVector::from_vec(noise);
        return Ok(OriginalSample {
            y,
            s: sv,
            eta,
            transmit_power: eta * eta * xn * xn / n as f64,
        });
    }
    Err(QprecError::DegenerateDraw {
        what: "||q(P s)|| = 0".into(),
        attempts: MAX_DRAW_ATTEMPTS,
    })
}

/// One realization of the statistically equivalent model.
///
/// `g2` and `noise` are kept so that the asymptotic output `y_bar` can be
/// formed on the same randomness.
#[derive(Clone, Debug)]
pub struct EquivalentDraw {
    pub ts: Complex64,
    pub tg: f64,
    pub c1: Complex64,
    pub c2: f64,
    pub alpha_nk: f64,
    /// Per-draw `eta = sqrt(N P_T) / ||q(alpha z_1)||` (or the override).
    pub eta: f64,
    /// `||q(alpha z_1)||^2`
    pub x_norm2: f64,
    pub y_hat: ComplexVector,
    pub s: ComplexVector,
    pub g2: ComplexVector,
    pub noise: ComplexVector,
}

impl EquivalentDraw {
    /// `eta^2 ||q(alpha z_1)||^2 / N`
    pub fn transmit_power(&self, n: usize) -> f64 {
        self.eta * self.eta * self.x_norm2 / n as f64
    }

    /// `y_bar = eta_bar T_s_bar s + eta_bar T_g_bar g_2 + n` on this draw's `(s, g_2, n)`.
    pub fn coupled_scalar(&self, model: &ScalarModel) -> Vec<Complex64> {
        self.s
            .iter()
            .zip(self.g2.iter())
            .zip(self.noise.iter())
            .map(|((&s, &g), &n)| scalar_output(model, s, g, n))
            .collect()
    }

    /// `(y_hat_k, y_bar_k)` pairs.
    pub fn coupled_pairs(&self, model: &ScalarModel) -> Vec<(Complex64, Complex64)> {
        self.y_hat
            .iter()
            .copied()
            .zip(self.coupled_scalar(model))
            .collect()
    }
}

/// Source of the singular values `D` in the equivalent model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSource {
    /// `O(K^2)` bidiagonal chi model (same law as the dense SVD).
    #[default]
    Bidiagonal,
    /// Dense channel draw followed by an SVD.
    DenseSvd,
}

/// Monte-Carlo controls for the equivalent model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalentOptions {
    /// Number of consecutive trials sharing one draw of `D`. Every trial
    /// keeps the exact marginal law; larger blocks trade independence
    /// across trials for speed.
    pub channel_reuse: usize,
    pub spectrum: SpectrumSource,
    /// Fixed `eta` instead of the per-draw power equality.
    pub eta_override: Option<f64>,
}

impl Default for EquivalentOptions {
    fn default() -> Self {
        Self {
            channel_reuse: 1,
            spectrum: SpectrumSource::Bidiagonal,
            eta_override: None,
        }
    }
}

/// Statistically equivalent model for a fixed `(config, f, q)`.
#[derive(Clone, Debug)]
pub struct EquivalentModel<'a> {
    pub config: &'a SystemConfig,
    pub f: &'a ShapingFunction,
    pub q: &'a QuantizerSpec,
}

/// Buffers reused across trials.
#[derive(Default)]
struct Scratch {
    z1: Vec<Complex64>,
    x: Vec<Complex64>,
}

impl<'a> EquivalentModel<'a> {
    pub fn new(config: &'a SystemConfig, f: &'a ShapingFunction, q: &'a QuantizerSpec) -> Self {
        Self { config, f, q }
    }

    /// Singular values for channel block `b` on the auxiliary stream `(seed, b)`.
    pub fn spectrum(&self, seed: u64, block: u64, source: SpectrumSource) -> Result<Vec<f64>> {
        let mut rng = RngStream::auxiliary(seed, block);
        match source {
            SpectrumSource::Bidiagonal => {
                sample_singular_values(self.config.n(), self.config.k(), &mut rng)
            }
            SpectrumSource::DenseSvd => Ok(sample_channel(self.config, &mut rng)?.d),
        }
    }

    /// One trial of the equivalent model given the singular values `d`.
    pub fn trial<R: Rng + ?Sized>(
        &self,
        d: &[f64],
        rng: &mut R,
        eta_override: Option<f64>,
    ) -> Result<EquivalentDraw> {
        let mut scratch = Scratch::default();
        self.trial_with(d, rng, eta_override, &mut scratch)
    }

    fn trial_with<R: Rng + ?Sized>(
        &self,
        d: &[f64],
        rng: &mut R,
        eta_override: Option<f64>,
        sc: &mut Scratch,
    ) -> Result<EquivalentDraw> {
        let (n, k) = (self.config.n(), self.config.k());
        if d.len() != k {
            return invalid(format!("equivalent trial: expected {k} singular values, got {}", d.len()));
        }
        let cons = self.config.constellation();
        let cn = |len: usize, var: f64, rng: &mut R| {
            let mut v = vec![Complex64::new(0.0, 0.0); len];
            fill_complex_gaussian(&mut v, var, rng);
            v
        };
        let tail_gamma = if n > k {
            Some(Gamma::new((n - k) as f64, 1.0).expect("positive shape"))
        } else {
            None
        };
        for _ in 0..MAX_DRAW_ATTEMPTS {
            let s: Vec<Complex64> = (0..k).map(|_| cons.draw(rng)).collect();
            let g1 = cn(k, 1.0, rng);
            let g2 = cn(k, 1.0, rng);
            sc.z1.resize(n, Complex64::new(0.0, 0.0));
            fill_complex_gaussian(&mut sc.z1, 1.0, rng);
            // z_2[2:N]: only its first K - 1 entries meet the support of s_hat_1;
            // the squared norm of the remaining N - K entries is Gamma(N - K, 1).
            let z2_head = cn(k - 1, 1.0, rng);
            let z2_tail2 = tail_gamma.map_or(0.0, |g| g.sample(rng));
            let noise = cn(k, self.config.sigma2_noise(), rng);

            let s_norm = norm(&s);
            let g1_norm = norm(&g1);
            let z1_norm = norm(&sc.z1);
            if s_norm == 0.0 || g1_norm == 0.0 || z1_norm == 0.0 {
                continue;
            }
            // s_hat_1 = (||s|| / ||g_1||) f(D)^T g_1, supported on the first K coordinates.
            let ratio = s_norm / g1_norm;
            let shat: Vec<Complex64> = g1
                .iter()
                .zip(d)
                .map(|(&g, &di)| g * (ratio * self.f.eval(di)))
                .collect();
            let shat_norm = norm(&shat);
            if shat_norm == 0.0 {
                continue;
            }
            let alpha = shat_norm / z1_norm;
            self.q.quantize_scaled(alpha, &sc.z1, &mut sc.x);
            let x_norm2 = norm_sqr(&sc.x);
            if x_norm2 == 0.0 {
                continue;
            }
            let c1 = dot_h(&sc.z1, &sc.x) / (shat_norm * z1_norm);
            let z2_norm = (norm_sqr(&z2_head) + z2_tail2).sqrt();
            let c2 = Householder::new(&sc.z1)?.complement_norm(&sc.x) / z2_norm;
            // First K coordinates of B(s_hat_1) z_2[2:N].
            let bz = Householder::new(&shat)?.apply_complement(&z2_head);
            let w: Vec<Complex64> = (0..k).map(|i| (c1 * shat[i] + bz[i] * c2) * d[i]).collect();
            let g1w = dot_h(&g1, &w);
            let bg1w = Householder::new(&g1)?.complement_norm(&w);
            let r = Householder::new(&s)?.apply_adjoint(&g2);
            let r_rest = norm(&r[1..]);
            if r_rest == 0.0 {
                continue;
            }
            let tg = bg1w / r_rest;
            let ts = g1w / (g1_norm * s_norm) - r[0] * (tg / s_norm);
            let eta = eta_override.unwrap_or_else(|| {
                (n as f64 * self.config.power_limit()).sqrt() / x_norm2.sqrt()
            });
            let y_hat: Vec<Complex64> = (0..k)
                .map(|i| s[i] * (ts * eta) + g2[i] * (tg * eta) + noise[i])
                .collect();
            return Ok(EquivalentDraw {
                ts,
                tg,
                c1,
                c2,
                alpha_nk: alpha,
                eta,
                x_norm2,
                y_hat: ComplexVector::from_vec(y_hat),
                s: ComplexVector::from_vec(s),
                g2: ComplexVector::from_vec(g2),
                noise: ComplexVector::from_vec(noise),
            });
        }
        Err(QprecError::DegenerateDraw {
            what: "vanishing norm in equivalent model".into(),
            attempts: MAX_DRAW_ATTEMPTS,
        })
    }

    /// Stream trials `start..end`, handing each draw to `visit`.
    ///
    /// Trial `t` uses stream `(seed, t)`; trials in block `t / channel_reuse`
    /// share the singular values drawn on auxiliary stream `(seed, block)`.
    pub fn for_each<F>(
        &self,
        seed: u64,
        range: std::ops::Range<usize>,
        opts: &EquivalentOptions,
        mut visit: F,
    ) -> Result<()>
    where
        F: FnMut(usize, &EquivalentDraw) -> Result<()>,
    {
        let reuse = opts.channel_reuse.max(1);
        let mut block: Option<(usize, Vec<f64>)> = None;
        let mut scratch = Scratch::default();
        for t in range {
            let b = t / reuse;
            if block.as_ref().map(|(bb, _)| *bb) != Some(b) {
                block = Some((b, self.spectrum(seed, b as u64, opts.spectrum)?));
            }
            let d = &block.as_ref().expect("set above").1;
            let mut rng = RngStream::new(seed, t as u64);
            let draw = self.trial_with(d, &mut rng, opts.eta_override, &mut scratch)?;
            visit(t, &draw)?;
        }
        Ok(())
    }
}

/// `trials` draws of the equivalent model with independent channels per trial.
pub fn simulate_equivalent(
    config: &SystemConfig,
    f: &ShapingFunction,
    q: &QuantizerSpec,
    seed: u64,
    trials: usize,
) -> Result<Vec<EquivalentDraw>> {
    simulate_equivalent_with(config, f, q, seed, trials, &EquivalentOptions::default())
}

pub fn simulate_equivalent_with(
    config: &SystemConfig,
    f: &ShapingFunction,
    q: &QuantizerSpec,
    seed: u64,
    trials: usize,
    opts: &EquivalentOptions,
) -> Result<Vec<EquivalentDraw>> {
    if trials == 0 {
        return invalid("simulate_equivalent: trials must be >= 1");
    }
    let model = EquivalentModel::new(config, f, q);
    let mut out = Vec::with_capacity(trials);
    model.for_each(seed, 0..trials, opts, |_, d| {
        out.push(d.clone());
        Ok(())
    })?;
    Ok(out)
}

/// `alpha_tilde_{N,K}(f) = (||s|| / ||g_1||) ||f(D)^T g_1|| / ||z_1||`.
pub fn alpha_tilde_finite(
    f: &ShapingFunction,
    s: &[Complex64],
    g1: &[Complex64],
    z1: &[Complex64],
    d: &[f64],
) -> Result<f64> {
    if g1.len() != d.len() {
        return invalid("alpha_tilde_finite: g_1 and D must have equal length");
    }
    let (sn, gn, zn) = (norm(s), norm(g1), norm(z1));
    if sn == 0.0 || gn == 0.0 || zn == 0.0 {
        return invalid("alpha_tilde_finite: zero norm");
    }
    let fg = g1
        .iter()
        .zip(d)
        .map(|(g, &di)| g.norm_sqr() * f.eval(di).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(sn / gn * fg / zn)
}

/// Paired finite and asymptotic outputs with `(f, eta)` as explicit inputs.
///
/// Without an override, `y_hat` uses the per-draw `eta_{N,K}(f)` and `y_bar`
/// the asymptotic `eta(f)`; with an override both use it. Both outputs are
/// formed from the same `(s, g_2, n)`.
#[derive(Clone, Debug)]
pub struct FunctionalModels<'a> {
    pub equivalent: EquivalentModel<'a>,
    pub scalar: ScalarModel,
    pub eta_override: Option<f64>,
}

pub fn functional_models<'a>(
    config: &'a SystemConfig,
    f: &'a ShapingFunction,
    q: &'a QuantizerSpec,
    eta_override: Option<f64>,
) -> Result<FunctionalModels<'a>> {
    if let Some(e) = eta_override {
        if !(e.is_finite() && e > 0.0) {
            return invalid("functional_models: eta_override must be finite and > 0");
        }
    }
    let mut scalar = asymptotic_model(config, f, q)?;
    if let Some(e) = eta_override {
        scalar = scalar.with_eta(e);
    }
    Ok(FunctionalModels {
        equivalent: EquivalentModel::new(config, f, q),
        scalar,
        eta_override,
    })
}

impl FunctionalModels<'_> {
    /// Stream coupled `(draw, y_bar)` pairs.
    pub fn for_each_pair<F>(
        &self,
        seed: u64,
        range: std::ops::Range<usize>,
        opts: &EquivalentOptions,
        mut visit: F,
    ) -> Result<()>
    where
        F: FnMut(usize, &EquivalentDraw, &[Complex64]) -> Result<()>,
    {
        let opts = EquivalentOptions {
            eta_override: self.eta_override,
            ..*opts
        };
        self.equivalent.for_each(seed, range, &opts, |t, draw| {
            let yb = draw.coupled_scalar(&self.scalar);
            visit(t, draw, &yb)
        })
    }
}
