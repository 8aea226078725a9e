//! SINR and SEP estimation (finite and asymptotic), nearest-point decisions,
//! the empirical Ky Fan distance and L2 deviations.

use crate::error::{invalid, QprecError, Result};
use crate::models::{asymptotic_model, scalar_output, EquivalentDraw, ScalarModel, ShapingFunction, SystemConfig};
use crate::quantizer::QuantizerSpec;
use crate::stochastic::{complex_normal, Constellation, RngStream};
use crate::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl Estimate {
    /// Wilson score interval at normal quantile `z`, treating `value` as a proportion.
    pub fn wilson_interval(&self, z: f64) -> (f64, f64) {
        let n = self.trials as f64;
        let p = self.value;
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        ((center - half).max(0.0), (center + half).min(1.0))
    }
}

/// Sum in a canonical order so the result does not depend on input order.
fn canonical_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v.into_iter().sum()
}

/// Nearest-point detector applied to `beta * r`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionRule {
    points: Vec<Complex64>,
    beta: Complex64,
    qpsk: bool,
}

impl DecisionRule {
    pub fn new(constellation: &Constellation, beta: Complex64) -> Result<Self> {
        if !(beta.re.is_finite() && beta.im.is_finite()) || beta.norm_sqr() == 0.0 {
            return invalid("decision rule: beta must be finite and nonzero");
        }
        Ok(Self {
            points: constellation.points().to_vec(),
            beta,
            qpsk: constellation == &Constellation::qpsk(),
        })
    }

    /// `beta = T_s^H / (eta |T_s|^2)`, which makes `beta eta T_s = 1`.
    pub fn matched(constellation: &Constellation, ts: Complex64, eta: f64) -> Result<Self> {
        if ts.norm_sqr() == 0.0 || !(eta > 0.0) {
            return invalid("decision rule: T_s and eta must be nonzero");
        }
        Self::new(constellation, ts.conj() / (eta * ts.norm_sqr()))
    }

    pub fn beta(&self) -> Complex64 {
        self.beta
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Index of the point nearest to `r` (unscaled), ties to the lowest index.
    pub fn nearest_index_brute(&self, r: Complex64) -> usize {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (r - p).norm_sqr();
            if d < bd {
                bd = d;
                best = i;
            }
        }
        best
    }

    /// Index of the point nearest to `r` (unscaled), using the quadrant map for QPSK.
    pub fn nearest_index(&self, r: Complex64) -> usize {
        if self.qpsk && r.re != 0.0 && r.im != 0.0 {
            // points ordered (+,+), (-,+), (-,-), (+,-)
            match (r.re > 0.0, r.im > 0.0) {
                (true, true) => 0,
                (false, true) => 1,
                (false, false) => 2,
                (true, false) => 3,
            }
        } else {
            self.nearest_index_brute(r)
        }
    }

    /// `dec(beta r)`
    pub fn decide_index(&self, r: Complex64) -> usize {
        self.nearest_index(self.beta * r)
    }

    /// Constellation point `dec(beta r)`.
    pub fn decide(&self, r: Complex64) -> Complex64 {
        self.points[self.decide_index(r)]
    }

    /// Index of `s` in the constellation, if present.
    pub fn index_of(&self, s: Complex64) -> Option<usize> {
        self.points.iter().position(|p| *p == s)
    }
}

/// `dec(beta r)` for a rule.
pub fn decide(rule: &DecisionRule, r: Complex64) -> Complex64 {
    rule.decide(r)
}

/// Sufficient statistics of the plug-in SINR: sums of `s^H y`, `|y|^2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SinrMoments {
    pub sum_sy: Complex64,
    pub sum_y2: f64,
    pub count: u64,
}

impl SinrMoments {
    #[inline]
    pub fn push(&mut self, s: Complex64, y: Complex64) {
        self.sum_sy += s.conj() * y;
        self.sum_y2 += y.norm_sqr();
        self.count += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        self.sum_sy += other.sum_sy;
        self.sum_y2 += other.sum_y2;
        self.count += other.count;
    }

    /// `|rho|^2 sigma_s^2 / (E|y|^2 - |rho|^2 sigma_s^2)` with `rho = E[s^H y] / sigma_s^2`.
    pub fn sinr(&self, sigma2_sym: f64) -> Result<f64> {
        let n = self.count as f64;
        let m = self.sum_sy / n;
        plugin_sinr(m, self.sum_y2 / n, sigma2_sym)
    }
}

fn plugin_sinr(mean_sy: Complex64, power: f64, sigma2_sym: f64) -> Result<f64> {
    let signal = mean_sy.norm_sqr() / sigma2_sym;
    let denom = power - signal;
    if !(denom > 1e-12 * power) {
        return Err(QprecError::UnstableEstimate { signal, power });
    }
    Ok(signal / denom)
}

/// Batch-means SINR estimator for correlated streams (pooled users, shared channels).
#[derive(Clone, Debug)]
pub struct BatchedSinr {
    sigma2_sym: f64,
    batches: Vec<SinrMoments>,
}

impl BatchedSinr {
    pub fn new(sigma2_sym: f64, n_batches: usize) -> Self {
        Self {
            sigma2_sym,
            batches: vec![SinrMoments::default(); n_batches.max(1)],
        }
    }

    #[inline]
    pub fn push(&mut self, batch: usize, s: Complex64, y: Complex64) {
        let b = batch.min(self.batches.len() - 1);
        self.batches[b].push(s, y);
    }

    pub fn total(&self) -> SinrMoments {
        let mut t = SinrMoments::default();
        for b in &self.batches {
            t.merge(b);
        }
        t
    }

    pub fn estimate(&self) -> Result<Estimate> {
        let total = self.total();
        let value = total.sinr(self.sigma2_sym)?;
        let per: Vec<f64> = self
            .batches
            .iter()
            .filter(|b| b.count > 0)
            .filter_map(|b| b.sinr(self.sigma2_sym).ok())
            .collect();
        Ok(Estimate {
            value,
            std_error: batch_std_error(&per),
            trials: total.count,
        })
    }
}

fn batch_std_error(per: &[f64]) -> f64 {
    let b = per.len();
    if b < 2 {
        return f64::NAN;
    }
    let mean = per.iter().sum::<f64>() / b as f64;
    let var = per.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Plug-in `SINR_hat_k` for user `k` from independent draws; delta-method standard error.
/// The value is invariant under permutations of `draws`.
pub fn sinr_hat(draws: &[EquivalentDraw], k: usize, sigma2_sym: f64) -> Result<Estimate> {
    let pairs: Vec<(Complex64, Complex64)> = draws
        .iter()
        .map(|d| {
            if k >= d.s.len() {
                Err(QprecError::InvalidInput(format!("user index {k} out of range")))
            } else {
                Ok((d.s[k], d.y_hat[k]))
            }
        })
        .collect::<Result<_>>()?;
    sinr_from_pairs(&pairs, sigma2_sym)
}

/// Plug-in SINR from `(s, y)` pairs with a delta-method standard error.
pub fn sinr_from_pairs(pairs: &[(Complex64, Complex64)], sigma2_sym: f64) -> Result<Estimate> {
    if pairs.is_empty() {
        return invalid("sinr estimate: no samples");
    }
    if !(sigma2_sym > 0.0) {
        return invalid("sinr estimate: sigma_s^2 must be positive");
    }
    let n = pairs.len() as f64;
    let u: Vec<Complex64> = pairs.iter().map(|(s, y)| s.conj() * y).collect();
    let v: Vec<f64> = pairs.iter().map(|(_, y)| y.norm_sqr()).collect();
    let mu = Complex64::new(
        canonical_sum(u.iter().map(|z| z.re).collect()) / n,
        canonical_sum(u.iter().map(|z| z.im).collect()) / n,
    );
    let p = canonical_sum(v.clone()) / n;
    let value = plugin_sinr(mu, p, sigma2_sym)?;
    let s = mu.norm_sqr() / sigma2_sym;
    let den2 = (p - s).powi(2);
    let g = [
        p / den2 * 2.0 * mu.re / sigma2_sym,
        p / den2 * 2.0 * mu.im / sigma2_sym,
        -s / den2,
    ];
    let cols: [Vec<f64>; 3] = [
        u.iter().map(|z| z.re - mu.re).collect(),
        u.iter().map(|z| z.im - mu.im).collect(),
        v.iter().map(|x| x - p).collect(),
    ];
    let mut var = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            let cov = canonical_sum(cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).collect())
                / (n - 1.0).max(1.0);
            var += g[a] * g[b] * cov;
        }
    }
    Ok(Estimate {
        value,
        std_error: (var.max(0.0) / n).sqrt(),
        trials: pairs.len() as u64,
    })
}

/// Both algebraic forms of the asymptotic SINR.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinrBar {
    /// `sigma_s^2 eta^2 |T_s|^2 / (eta^2 T_g^2 + sigma^2)`
    pub direct: f64,
    /// `E^2[df] / (var[df] + phi E[f^2] / gamma)`
    pub phi_form: f64,
}

impl SinrBar {
    pub fn value(&self) -> f64 {
        self.direct
    }
}

/// Asymptotic SINR in both forms; errors if they disagree beyond `1e-8` relative.
pub fn sinr_bar(config: &SystemConfig, f: &ShapingFunction, q: &QuantizerSpec) -> Result<SinrBar> {
    let m = asymptotic_model(config, f, q)?;
    sinr_bar_from_model(&m, config.gamma())
}

pub fn sinr_bar_from_model(m: &ScalarModel, gamma: f64) -> Result<SinrBar> {
    let e2 = m.eta * m.eta;
    let direct = m.sigma2_sym * e2 * m.ts_bar.norm_sqr() / (e2 * m.tg_bar.powi(2) + m.sigma2_noise);
    let mo = &m.moments;
    let phi_form = mo.e_df.powi(2) / (mo.var_df + m.phi() * mo.e_f2 / gamma);
    let rel = (direct - phi_form).abs() / direct.abs().max(1e-300);
    if !(rel <= 1e-8) {
        return Err(QprecError::Numerical(format!(
            "sinr_bar forms disagree: {direct} vs {phi_form}"
        )));
    }
    Ok(SinrBar { direct, phi_form })
}

/// Symbol-error counts, optionally per transmitted symbol.
#[derive(Clone, Debug)]
pub struct SepCounter {
    errors: Vec<u64>,
    totals: Vec<u64>,
    batch_errors: Vec<u64>,
    batch_totals: Vec<u64>,
}

impl SepCounter {
    pub fn new(m: usize, n_batches: usize) -> Self {
        Self {
            errors: vec![0; m],
            totals: vec![0; m],
            batch_errors: vec![0; n_batches.max(1)],
            batch_totals: vec![0; n_batches.max(1)],
        }
    }

    /// Record one detection of symbol index `sent` as `decided`.
    #[inline]
    pub fn push(&mut self, batch: usize, sent: usize, decided: usize) {
        let e = (sent != decided) as u64;
        self.errors[sent] += e;
        self.totals[sent] += 1;
        let b = batch.min(self.batch_errors.len() - 1);
        self.batch_errors[b] += e;
        self.batch_totals[b] += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.errors.iter_mut().zip(&other.errors) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            *a += b;
        }
        for (a, b) in self.batch_errors.iter_mut().zip(&other.batch_errors) {
            *a += b;
        }
        for (a, b) in self.batch_totals.iter_mut().zip(&other.batch_totals) {
            *a += b;
        }
    }

    /// Overall error frequency; the standard error is binomial, or the batch-means
    /// value when it is larger (correlated samples).
    pub fn estimate(&self) -> Estimate {
        let n: u64 = self.totals.iter().sum();
        let e: u64 = self.errors.iter().sum();
        let p = if n == 0 { 0.0 } else { e as f64 / n as f64 };
        let binom = (p * (1.0 - p) / n.max(1) as f64).sqrt();
        let per: Vec<f64> = self
            .batch_totals
            .iter()
            .zip(&self.batch_errors)
            .filter(|(t, _)| **t > 0)
            .map(|(t, e)| *e as f64 / *t as f64)
            .collect();
        let bm = batch_std_error(&per);
        Estimate {
            value: p,
            std_error: if bm.is_finite() { binom.max(bm) } else { binom },
            trials: n,
        }
    }

    /// Error frequency conditioned on each transmitted symbol.
    pub fn per_symbol(&self) -> Vec<Estimate> {
        self.errors
            .iter()
            .zip(&self.totals)
            .map(|(&e, &n)| {
                let p = if n == 0 { 0.0 } else { e as f64 / n as f64 };
                Estimate {
                    value: p,
                    std_error: (p * (1.0 - p) / n.max(1) as f64).sqrt(),
                    trials: n,
                }
            })
            .collect()
    }
}

/// `SEP_hat_k(beta) = P(dec(beta y_hat_k) != s_k)` from independent draws.
pub fn sep_hat(draws: &[EquivalentDraw], rule: &DecisionRule, k: usize) -> Result<Estimate> {
    let pairs: Vec<(Complex64, Complex64)> = draws
        .iter()
        .map(|d| {
            if k >= d.s.len() {
                Err(QprecError::InvalidInput(format!("user index {k} out of range")))
            } else {
                Ok((d.s[k], d.y_hat[k]))
            }
        })
        .collect::<Result<_>>()?;
    sep_from_pairs(&pairs, rule)
}

/// Error frequency of `dec(beta y) != s` over `(s, y)` pairs.
pub fn sep_from_pairs(pairs: &[(Complex64, Complex64)], rule: &DecisionRule) -> Result<Estimate> {
    if pairs.is_empty() {
        return invalid("sep estimate: no samples");
    }
    let mut c = SepCounter::new(rule.points().len(), 1);
    for &(s, y) in pairs {
        let sent = rule
            .index_of(s)
            .ok_or_else(|| QprecError::InvalidInput("symbol not in constellation".into()))?;
        c.push(0, sent, rule.decide_index(y));
    }
    Ok(c.estimate())
}

/// Monte-Carlo `SEP_bar(beta)` over `trials` scalar-model draws on stream `(seed, 0)`.
pub fn sep_bar(
    model: &ScalarModel,
    rule: &DecisionRule,
    config: &SystemConfig,
    seed: u64,
    trials: usize,
) -> Result<Estimate> {
    if trials == 0 {
        return invalid("sep_bar: trials must be >= 1");
    }
    let mut rng = RngStream::new(seed, 0);
    let cons = config.constellation();
    let m = cons.len();
    let mut c = SepCounter::new(m, 1);
    for _ in 0..trials {
        let idx = rand::Rng::random_range(&mut rng, 0..m);
        let s = cons.points()[idx];
        let g = complex_normal(&mut rng, 1.0);
        let n = complex_normal(&mut rng, config.sigma2_noise());
        c.push(0, idx, rule.decide_index(scalar_output(model, s, g, n)));
    }
    Ok(c.estimate())
}

/// Exact `SEP_bar` for QPSK with any `beta`: the noise `beta (eta T_g g + n)` is
/// circular Gaussian, so the correct-decision probability factors into two
/// one-dimensional Gaussian orthant probabilities per symbol.
pub fn sep_bar_qpsk_exact(model: &ScalarModel, beta: Complex64) -> Result<f64> {
    let var = beta.norm_sqr() * (model.eta * model.eta * model.tg_bar.powi(2) + model.sigma2_noise);
    let q = Constellation::qpsk();
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let mut correct = 0.0;
    for &s in q.points() {
        let mu = beta * model.eta * model.ts_bar * s;
        let p = if var == 0.0 {
            let ok = mu.re * s.re > 0.0 && mu.im * s.im > 0.0;
            ok as u8 as f64
        } else {
            let sd = (0.5 * var).sqrt();
            std.cdf(mu.re * s.re.signum() / sd) * std.cdf(mu.im * s.im.signum() / sd)
        };
        correct += p;
    }
    Ok(1.0 - correct / q.len() as f64)
}

/// Empirical Ky Fan distance `inf{delta : P_n(|x - y| > delta) < delta}`.
///
/// With `e_(1) >= ... >= e_(n)` the sorted deviations and `e_(n+1) = 0`, the
/// infimum is `min_{0<=i<=n} max(e_(i+1), i/n)`; this is exact for the
/// empirical law, so no interpolation is needed.
pub fn ky_fan_empirical(pairs: &[(Complex64, Complex64)]) -> Result<f64> {
    let e: Vec<f64> = pairs.iter().map(|(x, y)| (x - y).norm()).collect();
    ky_fan_from_deviations(e)
}

/// Empirical Ky Fan distance from real-valued deviations `|x - y|`.
pub fn ky_fan_from_deviations(mut e: Vec<f64>) -> Result<f64> {
    if e.is_empty() {
        return invalid("ky_fan_empirical: no samples");
    }
    if e.iter().any(|x| !x.is_finite()) {
        return invalid("ky_fan_empirical: nonfinite deviation");
    }
    e.sort_by(|a, b| b.total_cmp(a));
    let n = e.len();
    let mut best = f64::INFINITY;
    for i in 0..=n {
        let next = if i < n { e[i] } else { 0.0 };
        best = best.min(next.max(i as f64 / n as f64));
    }
    Ok(best)
}

/// `sqrt(mean |x - y|^2)` with a delta-method standard error.
pub fn l2_deviation(pairs: &[(Complex64, Complex64)]) -> Result<Estimate> {
    if pairs.is_empty() {
        return invalid("l2_deviation: no samples");
    }
    let e2: Vec<f64> = pairs.iter().map(|(x, y)| (x - y).norm_sqr()).collect();
    let mut acc = L2Accumulator::default();
    for v in &e2 {
        acc.push_sq(*v);
    }
    Ok(acc.estimate())
}

/// Streaming accumulator for `sqrt(E|x - y|^2)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct L2Accumulator {
    sum: f64,
    sum_sq: f64,
    count: u64,
}

impl L2Accumulator {
    #[inline]
    pub fn push(&mut self, x: Complex64, y: Complex64) {
        self.push_sq((x - y).norm_sqr());
    }

    #[inline]
    pub fn push_sq(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
        self.count += 1;
    }

    pub fn merge(&mut self, o: &Self) {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.count += o.count;
    }

    /// Mean of `|x - y|^2`.
    pub fn mean_sq(&self) -> f64 {
        self.sum / self.count.max(1) as f64
    }

    pub fn estimate(&self) -> Estimate {
        let n = self.count.max(1) as f64;
        let m = self.sum / n;
        let var = if self.count > 1 {
            ((self.sum_sq - n * m * m) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let se_m = (var / n).sqrt();
        Estimate {
            value: m.sqrt(),
            std_error: if m > 0.0 { se_m / (2.0 * m.sqrt()) } else { 0.0 },
            trials: self.count,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn qpsk_decision() {
        let r = DecisionRule::new(&Constellation::qpsk(), c(1.0, 0.0)).unwrap();
        assert_eq!(r.decide(c(0.9, 0.8)), c(FRAC_1_SQRT_2, FRAC_1_SQRT_2));
        // equidistant between index 0 and 1
        assert_eq!(r.decide_index(c(0.0, 0.5)), 0);
        assert!(DecisionRule::new(&Constellation::qpsk(), c(0.0, 0.0)).is_err());
    }

    #[test]
    fn ky_fan_constant_deviation() {
        let pairs = |e: f64| vec![(c(e, 0.0), c(0.0, 0.0)); 1000];
        assert!((ky_fan_empirical(&pairs(0.3)).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(ky_fan_empirical(&pairs(2.0)).unwrap(), 1.0);
        assert_eq!(ky_fan_empirical(&pairs(0.0)).unwrap(), 0.0);
        assert!(ky_fan_empirical(&[]).is_err());
    }

    #[test]
    fn ky_fan_half_mass() {
        // half the deviations at 10, half at 0: P(|d| > delta) = 1/2 for delta < 10
        let mut e = vec![10.0; 500];
        e.extend(vec![0.0; 500]);
        assert!((ky_fan_from_deviations(e).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn l2_shift() {
        let pairs: Vec<_> = (0..100).map(|i| (c(i as f64 + 0.3, -0.4), c(i as f64, 0.0))).collect();
        let e = l2_deviation(&pairs).unwrap();
        assert!((e.value - 0.5).abs() < 1e-10);
    }

    #[test]
    fn noiseless_sinr_is_unstable() {
        let q = Constellation::qpsk();
        let pairs: Vec<_> = (0..1000).map(|i| {
            let s = q.points()[i % 4];
            (s, s * 2.0)
        }).collect();
        assert!(matches!(
            sinr_from_pairs(&pairs, 1.0),
            Err(QprecError::UnstableEstimate { .. })
        ));
    }

    #[test]
    fn wilson_contains_point() {
        let e = Estimate { value: 0.1, std_error: 0.0, trials: 1000 };
        let (lo, hi) = e.wilson_interval(1.96);
        assert!(lo < 0.1 && hi > 0.1);
    }
}
