//! Marchenko–Pastur law, channel sampling with SVD, and linear spectral statistics.

use crate::error::{invalid, QprecError, Result};
use crate::models::SystemConfig;
use crate::stochastic::fill_complex_gaussian;
use crate::{Complex64, ComplexMatrix};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use std::f64::consts::PI;

/// Absolute tolerance handed to the double-exponential integrator.
const QUAD_TOL: f64 = 1e-13;

/// Marchenko–Pastur law of the eigenvalues of `H H^H` for a `K x N` channel
/// with i.i.d. `CN(0, 1/N)` entries and `gamma = N/K > 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpLaw {
    gamma: f64,
    c: f64,
    a: f64,
    b: f64,
}

impl MpLaw {
    pub fn new(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma <= 1.0 {
            return Err(QprecError::Config {
                field: "gamma".into(),
                reason: format!("must be finite and > 1, got {gamma}"),
            });
        }
        let c = 1.0 / gamma;
        let sc = c.sqrt();
        Ok(Self {
            gamma,
            c,
            a: (1.0 - sc).powi(2),
            b: (1.0 + sc).powi(2),
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `c = 1/gamma`
    pub fn ratio(&self) -> f64 {
        self.c
    }

    /// Support `(a, b)` of the eigenvalue density.
    pub fn lambda_edges(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Support `(sqrt a, sqrt b)` of the singular-value law.
    pub fn d_edges(&self) -> (f64, f64) {
        (self.a.sqrt(), self.b.sqrt())
    }

    /// Interval `Theta = [1/2 - 1/(2 sqrt gamma), 3/2 + 1/(2 sqrt gamma)]` that
    /// contains every singular value for large K.
    pub fn theta(&self) -> (f64, f64) {
        let h = 0.5 / self.gamma.sqrt();
        (0.5 - h, 1.5 + h)
    }

    pub fn density_lambda(&self, x: f64) -> f64 {
        if x <= self.a || x >= self.b {
            return 0.0;
        }
        ((x - self.a) * (self.b - x)).sqrt() / (2.0 * PI * self.c * x)
    }

    /// Center and half-width of the eigenvalue support.
    fn center_radius(&self) -> (f64, f64) {
        (0.5 * (self.a + self.b), 0.5 * (self.b - self.a))
    }

    /// Integrand of `E[h(lambda)]` after `lambda = m - r cos(theta)`, which
    /// removes the square-root edge behavior of the density.
    fn angular_weight(&self, theta: f64) -> (f64, f64) {
        let (m, r) = self.center_radius();
        let x = m - r * theta.cos();
        let s = theta.sin();
        (x, r * r * s * s / (2.0 * PI * self.c * x))
    }

    /// `P(lambda <= x)`.
    pub fn cdf_lambda(&self, x: f64) -> f64 {
        if x <= self.a {
            return 0.0;
        }
        if x >= self.b {
            return 1.0;
        }
        let (m, r) = self.center_radius();
        let t = ((m - x) / r).clamp(-1.0, 1.0).acos();
        let out = quadrature::integrate(|th| self.angular_weight(th).1, 0.0, t, QUAD_TOL);
        out.integral.clamp(0.0, 1.0)
    }

    /// `P(d <= x)` for `d = sqrt(lambda)`.
    pub fn cdf_d(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            self.cdf_lambda(x * x)
        }
    }
}

/// Marchenko–Pastur eigenvalue density `p_lambda(x)`.
pub fn mp_density_lambda(x: f64, law: &MpLaw) -> f64 {
    law.density_lambda(x)
}

/// `E[g(d)]` with `d = sqrt(lambda)`, `lambda ~ MP(gamma)`.
///
/// The change of variable `lambda = m - r cos(theta)` turns the edge
/// square-root singularities into a smooth `sin^2` weight, which the
/// double-exponential rule integrates to near machine precision.
pub fn mp_moment<G: Fn(f64) -> f64>(g: G, law: &MpLaw) -> Result<f64> {
    let bad = std::cell::Cell::new(None);
    let out = quadrature::integrate(
        |th| {
            let (x, w) = law.angular_weight(th);
            let v = g(x.sqrt());
            if !v.is_finite() && bad.get().is_none() {
                bad.set(Some(x.sqrt()));
            }
            v * w
        },
        0.0,
        PI,
        QUAD_TOL,
    );
    if let Some(d) = bad.get() {
        return Err(QprecError::Numerical(format!(
            "mp_moment: integrand is not finite at d = {d}"
        )));
    }
    if !out.integral.is_finite() {
        return Err(QprecError::Numerical("mp_moment: nonfinite integral".into()));
    }
    Ok(out.integral)
}

/// One channel realization with its SVD `H = U diag(d) V^H`.
///
/// `v` holds the `K` right singular vectors (thin form, `N x K`); the
/// remaining `N - K` columns of a full `V` multiply zero rows of `D` and play no role.
#[derive(Clone, Debug)]
pub struct ChannelDraw {
    pub h: ComplexMatrix,
    pub u: ComplexMatrix,
    pub d: Vec<f64>,
    pub v: ComplexMatrix,
}

impl ChannelDraw {
    /// `||H - U D V^H|| / ||H||` (Frobenius).
    pub fn reconstruction_error(&self) -> f64 {
        let k = self.d.len();
        let mut ud = self.u.clone();
        for j in 0..k {
            let dj = self.d[j];
            ud.column_mut(j).iter_mut().for_each(|z| *z *= dj);
        }
        let rec = ud * self.v.adjoint();
        (&self.h - rec).norm() / self.h.norm()
    }
}

/// Draw `H` (K x N) with i.i.d. `CN(0, 1/N)` entries and its SVD, singular values descending.
pub fn sample_channel<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<ChannelDraw> {
    let (n, k) = (config.n(), config.k());
    if k > n {
        return invalid(format!("sample_channel: K = {k} exceeds N = {n}"));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n * k];
    fill_complex_gaussian(&mut buf, 1.0 / n as f64, rng);
    let h = ComplexMatrix::from_vec(k, n, buf);
    let svd = h.clone().svd(true, true);
    let u0 = svd.u.ok_or_else(|| QprecError::Numerical("svd: U not computed".into()))?;
    let vt0 = svd
        .v_t
        .ok_or_else(|| QprecError::Numerical("svd: V^H not computed".into()))?;
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let mut u = ComplexMatrix::zeros(k, k);
    let mut v = ComplexMatrix::zeros(n, k);
    let mut d = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &u0.column(src));
        v.set_column(dst, &vt0.row(src).adjoint());
        d.push(sv[src]);
    }
    Ok(ChannelDraw { h, u, d, v })
}

/// Singular values (descending) of a dense draw of `H`, without singular vectors.
pub fn sample_channel_singular_values<R: Rng + ?Sized>(
    config: &SystemConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (n, k) = (config.n(), config.k());
    let mut buf = vec![Complex64::new(0.0, 0.0); n * k];
    fill_complex_gaussian(&mut buf, 1.0 / n as f64, rng);
    let h = ComplexMatrix::from_vec(k, n, buf);
    let mut d: Vec<f64> = h.singular_values().iter().copied().collect();
    d.sort_by(|a, b| b.total_cmp(a));
    Ok(d)
}

/// Singular values (descending) of a `K x N` matrix with i.i.d. `CN(0, 1/N)`
/// entries, drawn in `O(K^2)` from the complex bidiagonal chi model.
///
/// The law is identical to that of `sample_channel(..).d`: the diagonal of
/// the bidiagonal factor has squared entries `Gamma(N - i, 1)` and the
/// subdiagonal `Gamma(K - 1 - i, 1)`, all scaled by `1/N`.
pub fn sample_singular_values<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    if k == 0 || k > n {
        return invalid(format!("sample_singular_values: need 1 <= K <= N, got K = {k}, N = {n}"));
    }
    let scale = 1.0 / n as f64;
    let gamma_sq = |shape: usize, rng: &mut R| -> f64 {
        Gamma::new(shape as f64, 1.0)
            .expect("positive shape")
            .sample(rng)
            * scale
    };
    let diag2: Vec<f64> = (0..k).map(|i| gamma_sq(n - i, rng)).collect();
    let sub2: Vec<f64> = (0..k.saturating_sub(1)).map(|i| gamma_sq(k - 1 - i, rng)).collect();
    // B lower bidiagonal; B^T B is tridiagonal with
    // (i,i) = diag_i^2 + sub_i^2 and (i,i+1) = sub_i * diag_{i+1}.
    let mut t_diag = vec![0.0; k];
    let mut t_off = vec![0.0; k];
    for i in 0..k {
        let s2 = if i + 1 < k { sub2[i] } else { 0.0 };
        t_diag[i] = diag2[i] + s2;
        if i + 1 < k {
            t_off[i] = (sub2[i] * diag2[i + 1]).sqrt();
        }
    }
    tridiagonal_eigenvalues(&mut t_diag, &mut t_off)?;
    let mut d: Vec<f64> = t_diag.into_iter().map(|l| l.max(0.0).sqrt()).collect();
    d.sort_by(|a, b| b.total_cmp(a));
    Ok(d)
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e` (`e[i]` couples `i` and `i + 1`; `e[n-1]` is ignored),
/// by the implicit QL algorithm with Wilkinson shifts. Results overwrite `d`.
pub fn tridiagonal_eigenvalues(d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    if e.len() != n {
        return invalid("tridiagonal_eigenvalues: e must have the same length as d");
    }
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(QprecError::Numerical(
                    "tridiagonal QL did not converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Linear spectral statistic `Z_K = (1/K) sum_i sigma_fn(d_i)`.
pub fn lss_statistic<F: Fn(f64) -> f64>(d: &[f64], sigma_fn: F) -> Result<f64> {
    if d.is_empty() {
        return invalid("lss_statistic: empty spectrum");
    }
    let mut acc = 0.0;
    for &x in d {
        if !x.is_finite() || x < 0.0 {
            return invalid(format!("lss_statistic: invalid singular value {x}"));
        }
        let v = sigma_fn(x);
        if !v.is_finite() {
            return Err(QprecError::Numerical(format!(
                "lss_statistic: sigma_fn({x}) is not finite"
            )));
        }
        acc += v;
    }
    Ok(acc / d.len() as f64)
}

/// Kolmogorov distance between the empirical law of `d^2` and the MP law.
pub fn esd_kolmogorov_distance(d: &[f64], law: &MpLaw) -> f64 {
    let mut lam: Vec<f64> = d.iter().map(|x| x * x).collect();
    lam.sort_by(|a, b| a.total_cmp(b));
    let n = lam.len() as f64;
    lam.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = law.cdf_lambda(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}
