//! Concentration kernels: the right-hand sides of the tail inequalities used
//! throughout the cascades.

use crate::error::{QprecError, Result};
use serde::{Deserialize, Serialize};

/// Bernstein constant `c` used for sub-exponential sums.
pub const BERNSTEIN_C: f64 = 0.5;

/// A tail inequality together with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum Kernel {
    /// `P(|sum X_i| >= t) <= 2 exp(-c min{t^2 / sum psi_i^2, t / max psi_i})`
    /// for independent centred sub-exponential `X_i` with norms `psi_i`.
    Bernstein { psi_norms: Vec<f64>, t: f64 },
    /// `P(|S - E S| >= t) <= 2 exp(-2 t^2 / sum (b_i - a_i)^2)`.
    Hoeffding { ranges: Vec<(f64, f64)>, t: f64 },
    /// Mean of `n` i.i.d. Exp(1): `2 exp(-1/2 min{n a^2/16, n a/4})`.
    ExpMean { n: usize, a: f64 },
    /// `L`-Lipschitz function of a standard complex Gaussian vector:
    /// `2 exp(-t^2 / (2 L^2))`.
    GaussianLipschitz { lipschitz: f64, t: f64 },
    /// `(1/K) g^H sigma(D) g` around `E sigma(d)`:
    /// `2 exp(-1/2 K min{eps^2/(16 M1^2), eps/(4 M1)}) + 8 M1^2/(K eps^2)`.
    QuadForm { k: usize, m1: f64, eps: f64 },
    /// `(1/K) g1^H sigma(D) g2`: `4 exp(-K eps^2 / (2 M1^2))`.
    CrossForm { k: usize, m1: f64, eps: f64 },
    /// Chebyshev bound on a linear spectral statistic: `2 M1^2 / (K eps^2)`.
    /// With `eps = None` the variance bound `2 M1^2 / K` is returned.
    LssChebyshev { k: usize, m1: f64, eps: Option<f64> },
}

impl Kernel {
    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Bernstein { .. } => "bernstein",
            Kernel::Hoeffding { .. } => "hoeffding",
            Kernel::ExpMean { .. } => "exp_mean",
            Kernel::GaussianLipschitz { .. } => "gaussian_lipschitz",
            Kernel::QuadForm { .. } => "quad_form",
            Kernel::CrossForm { .. } => "cross_form",
            Kernel::LssChebyshev { .. } => "lss_chebyshev",
        }
    }
}

fn require(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(QprecError::Hypothesis(what.to_string()))
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// Evaluates the right-hand side of `kernel`.
pub fn concentration(kernel: &Kernel) -> Result<f64> {
    match kernel {
        Kernel::Bernstein { psi_norms, t } => {
            require(!psi_norms.is_empty(), "bernstein: at least one summand")?;
            require(psi_norms.iter().all(|&p| positive(p)), "bernstein: psi norms > 0")?;
            require(t.is_finite() && *t >= 0.0, "bernstein: t >= 0")?;
            let s2: f64 = psi_norms.iter().map(|p| p * p).sum();
            let mx = psi_norms.iter().cloned().fold(0.0, f64::max);
            Ok(2.0 * (-BERNSTEIN_C * (t * t / s2).min(t / mx)).exp())
        }
        Kernel::Hoeffding { ranges, t } => {
            require(!ranges.is_empty(), "hoeffding: at least one summand")?;
            require(
                ranges.iter().all(|(a, b)| a.is_finite() && b.is_finite() && b >= a),
                "hoeffding: each range satisfies a <= b",
            )?;
            require(positive(*t), "hoeffding: t > 0")?;
            let w: f64 = ranges.iter().map(|(a, b)| (b - a).powi(2)).sum();
            if w == 0.0 {
                return Ok(0.0);
            }
            Ok(2.0 * (-2.0 * t * t / w).exp())
        }
        Kernel::ExpMean { n, a } => {
            require(*n >= 1, "exp_mean: n >= 1")?;
            require(a.is_finite() || *a == f64::INFINITY, "exp_mean: a not NaN")?;
            require(*a > 0.0, "exp_mean: a > 0")?;
            Ok(exp_mean(*n as f64, *a))
        }
        Kernel::GaussianLipschitz { lipschitz, t } => {
            require(positive(*lipschitz), "gaussian_lipschitz: L > 0")?;
            require(positive(*t), "gaussian_lipschitz: t > 0")?;
            Ok(2.0 * (-t * t / (2.0 * lipschitz * lipschitz)).exp())
        }
        Kernel::QuadForm { k, m1, eps } => {
            require(*k >= 1, "quad_form: K >= 1")?;
            require(positive(*m1), "quad_form: M1 > 0")?;
            require(positive(*eps), "quad_form: eps > 0")?;
            Ok(quad_form(*k as f64, *m1, *eps))
        }
        Kernel::CrossForm { k, m1, eps } => {
            require(*k >= 1, "cross_form: K >= 1")?;
            require(positive(*m1), "cross_form: M1 > 0")?;
            require(positive(*eps), "cross_form: eps > 0")?;
            Ok(cross_form(*k as f64, *m1, *eps))
        }
        Kernel::LssChebyshev { k, m1, eps } => {
            require(*k >= 1, "lss_chebyshev: K >= 1")?;
            require(positive(*m1), "lss_chebyshev: M1 > 0")?;
            let var = 2.0 * m1 * m1 / *k as f64;
            match eps {
                None => Ok(var),
                Some(e) => {
                    require(positive(*e), "lss_chebyshev: eps > 0")?;
                    Ok(var / (e * e))
                }
            }
        }
    }
}

pub(crate) fn exp_mean(n: f64, a: f64) -> f64 {
    2.0 * (-0.5 * (n * a * a / 16.0).min(n * a / 4.0)).exp()
}

pub(crate) fn quad_form(k: f64, m1: f64, eps: f64) -> f64 {
    2.0 * (-0.5 * k * (eps * eps / (16.0 * m1 * m1)).min(eps / (4.0 * m1))).exp()
        + 8.0 * m1 * m1 / (k * eps * eps)
}

pub(crate) fn cross_form(k: f64, m1: f64, eps: f64) -> f64 {
    4.0 * (-k * eps * eps / (2.0 * m1 * m1)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hoeffding_single_unit_range() {
        let b = concentration(&Kernel::Hoeffding { ranges: vec![(0.0, 1.0)], t: 1.0 }).unwrap();
        assert!((b - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn exp_mean_vanishes_for_large_deviation() {
        let b = concentration(&Kernel::ExpMean { n: 10, a: 1e6 }).unwrap();
        assert!(b < 1e-300);
        let inf = concentration(&Kernel::ExpMean { n: 10, a: f64::INFINITY }).unwrap();
        assert_eq!(inf, 0.0);
    }

    #[test]
    fn violations_name_the_hypothesis() {
        let err = concentration(&Kernel::QuadForm { k: 10, m1: 1.0, eps: -1.0 }).unwrap_err();
        match err {
            QprecError::Hypothesis(msg) => assert!(msg.contains("eps > 0")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bernstein_reduces_to_exp_mean_shape() {
        let n = 50usize;
        let a = 0.3;
        let b = concentration(&Kernel::Bernstein { psi_norms: vec![4.0; n], t: n as f64 * a })
            .unwrap();
        assert!((b - exp_mean(n as f64, a)).abs() < 1e-14);
    }
}
