//! Seedable complex-Gaussian and constellation sampling, plus the unitary
//! Householder utilities `R(v)` and `B(v)` used by the equivalent model.

use crate::error::{invalid, Result};
use crate::{Complex64, ComplexMatrix, ComplexVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Stream ids with this bit set are reserved for auxiliary draws (e.g. shared
/// channel spectra); per-trial streams use ids below it.
pub const AUX_STREAM_BIT: u64 = 1 << 63;

/// Counter-based random stream: one `(seed, stream_id)` pair per Monte-Carlo trial.
///
/// Identical pairs reproduce identical draws. Distinct stream ids select
/// disjoint ChaCha keystreams.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    /// Auxiliary stream `index`, disjoint from every trial stream of the same seed.
    pub fn auxiliary(seed: u64, index: u64) -> Self {
        Self::new(seed, AUX_STREAM_BIT | index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// One CN(0, variance) draw.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Fill `buf` with i.i.d. CN(0, variance) entries.
pub fn fill_complex_gaussian<R: Rng + ?Sized>(buf: &mut [Complex64], variance: f64, rng: &mut R) {
    let s = (0.5 * variance).sqrt();
    for z in buf.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *z = Complex64::new(s * re, s * im);
    }
}

/// `n` i.i.d. CN(0, variance) entries: real and imaginary parts each N(0, variance/2).
pub fn sample_complex_gaussian<R: Rng + ?Sized>(
    n: usize,
    variance: f64,
    rng: &mut R,
) -> Result<ComplexVector> {
    if n == 0 {
        return invalid("sample_complex_gaussian: n must be >= 1");
    }
    if !variance.is_finite() || variance < 0.0 {
        return invalid(format!(
            "sample_complex_gaussian: variance must be finite and >= 0, got {variance}"
        ));
    }
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    fill_complex_gaussian(&mut v, variance, rng);
    Ok(ComplexVector::from_vec(v))
}

pub(crate) fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

pub(crate) fn norm(x: &[Complex64]) -> f64 {
    norm_sqr(x).sqrt()
}

/// `x^H y`
pub(crate) fn dot_h(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// Unitary `R(v)` with `R v = ||v|| e_1`, kept in factored form.
///
/// `R = Phi H` where `H = I - beta u u^H` is the reflection along
/// `u = v + e^{i theta} ||v|| e_1` (`theta = arg v_1`, no cancellation) and
/// `Phi = diag(-e^{-i theta}, 1, ..., 1)` fixes the phase of the first row.
/// `B(v)` is the trailing `n - 1` columns of `R(v)^H`, which equal the
/// trailing columns of `H`.
#[derive(Clone, Debug)]
pub struct Householder {
    u: Vec<Complex64>,
    beta: f64,
    phase: Complex64,
    norm: f64,
    support: usize,
}

impl Householder {
    pub fn new(v: &[Complex64]) -> Result<Self> {
        if v.is_empty() {
            return invalid("householder: empty vector");
        }
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("householder: nonfinite entry");
        }
        let nv = norm(v);
        if nv == 0.0 {
            return invalid("householder: zero vector has no reflector");
        }
        let theta = if v[0] == Complex64::new(0.0, 0.0) {
            0.0
        } else {
            v[0].arg()
        };
        let e = Complex64::from_polar(1.0, theta);
        let mut u = v.to_vec();
        u[0] += e * nv;
        let support = u
            .iter()
            .rposition(|z| z.re != 0.0 || z.im != 0.0)
            .map_or(1, |i| i + 1);
        let beta = 2.0 / norm_sqr(&u[..support]);
        Ok(Self {
            u,
            beta,
            phase: -e.conj(),
            norm: nv,
            support,
        })
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// `||v||` of the generating vector.
    pub fn source_norm(&self) -> f64 {
        self.norm
    }

    /// In place `x <- H x`.
    fn reflect(&self, x: &mut [Complex64]) {
        let m = self.support;
        let c = dot_h(&self.u[..m], &x[..m]) * self.beta;
        for (xi, ui) in x[..m].iter_mut().zip(&self.u[..m]) {
            *xi -= ui * c;
        }
    }

    /// `R x`
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim());
        let mut y = x.to_vec();
        self.reflect(&mut y);
        y[0] *= self.phase;
        y
    }

    /// `R^H x` (equal to `R^{-1} x`)
    pub fn apply_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim());
        let mut y = x.to_vec();
        y[0] *= self.phase.conj();
        self.reflect(&mut y);
        y
    }

    /// `B(v) y` for `y` of length `n - 1`.
    pub fn apply_complement(&self, y: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(y.len() + 1, self.dim());
        let mut x = Vec::with_capacity(self.dim());
        x.push(Complex64::new(0.0, 0.0));
        x.extend_from_slice(y);
        self.reflect(&mut x);
        x
    }

    /// `B(v)^H x`, of length `n - 1`.
    pub fn complement_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim());
        let mut y = x.to_vec();
        self.reflect(&mut y);
        y.remove(0);
        y
    }

    /// `||B(v)^H x||`
    pub fn complement_norm(&self, x: &[Complex64]) -> f64 {
        let mut y = x.to_vec();
        self.reflect(&mut y);
        norm(&y[1..])
    }

    /// Dense `R(v)`.
    pub fn matrix(&self) -> ComplexMatrix {
        let n = self.dim();
        let mut m = ComplexMatrix::identity(n, n);
        for j in 0..n {
            let col: Vec<Complex64> = m.column(j).iter().copied().collect();
            let r = self.apply(&col);
            m.set_column(j, &ComplexVector::from_vec(r));
        }
        m
    }

    /// Dense `B(v)` (n x (n-1)).
    pub fn complement_matrix(&self) -> ComplexMatrix {
        let n = self.dim();
        let mut m = ComplexMatrix::zeros(n, n - 1);
        let mut e = vec![Complex64::new(0.0, 0.0); n - 1];
        for j in 0..n - 1 {
            e[j] = Complex64::new(1.0, 0.0);
            m.set_column(j, &ComplexVector::from_vec(self.apply_complement(&e)));
            e[j] = Complex64::new(0.0, 0.0);
        }
        m
    }
}

/// Dense unitary `R(v)` with `R v = ||v|| e_1`.
pub fn householder_reflector(v: &ComplexVector) -> Result<ComplexMatrix> {
    Ok(Householder::new(v.as_slice())?.matrix())
}

/// Orthonormal basis `B(v)` of the complement of `v`: columns 2..n of `R(v)^H`.
pub fn complement_basis(v: &ComplexVector) -> Result<ComplexMatrix> {
    if v.len() < 2 {
        return invalid("complement_basis: n = 1 has no orthogonal complement");
    }
    Ok(Householder::new(v.as_slice())?.complement_matrix())
}

/// Finite symbol alphabet `S_M` (nonempty, zero excluded).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn new(points: Vec<Complex64>) -> Result<Self> {
        if points.is_empty() {
            return invalid("constellation must be nonempty");
        }
        if points
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return invalid("constellation points must be finite");
        }
        if points.iter().any(|z| z.norm_sqr() == 0.0) {
            return invalid("constellation must not contain 0");
        }
        Ok(Self { points })
    }

    /// Unit-energy QPSK `{(+-1 +- i)/sqrt 2}`.
    pub fn qpsk() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            points: vec![
                Complex64::new(a, a),
                Complex64::new(-a, a),
                Complex64::new(-a, -a),
                Complex64::new(a, -a),
            ],
        }
    }

    /// Unit-energy M-PSK with phases `2 pi m / M`.
    pub fn psk(m: usize) -> Result<Self> {
        if m == 0 {
            return invalid("psk: M must be >= 1");
        }
        let pts = (0..m)
            .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / m as f64))
            .collect();
        Self::new(pts)
    }

    /// Square 16-QAM scaled to unit average energy.
    pub fn qam16() -> Self {
        let s = 1.0 / 10f64.sqrt();
        let lv = [-3.0, -1.0, 1.0, 3.0];
        let mut pts = Vec::with_capacity(16);
        for &re in &lv {
            for &im in &lv {
                pts.push(Complex64::new(re * s, im * s));
            }
        }
        Self { points: pts }
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Symbol energy `sigma_s^2 = E|s|^2` under the uniform law.
    pub fn sigma2(&self) -> f64 {
        self.points.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// `max |s|^2 - min |s|^2`.
    pub fn c_max(&self) -> f64 {
        let (lo, hi) = self
            .points
            .iter()
            .map(|z| z.norm_sqr())
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(e), hi.max(e)));
        hi - lo
    }

    /// `sup |s|`.
    pub fn max_abs(&self) -> f64 {
        self.points.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        self.points[rng.random_range(0..self.points.len())]
    }
}

/// `n` i.i.d. uniform symbols from `s`.
pub fn sample_constellation<R: Rng + ?Sized>(
    s: &Constellation,
    n: usize,
    rng: &mut R,
) -> Result<ComplexVector> {
    if n == 0 {
        return invalid("sample_constellation: n must be >= 1");
    }
    Ok(ComplexVector::from_iterator(n, (0..n).map(|_| s.draw(rng))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = RngStream::new(seed, 0);
        sample_complex_gaussian(n, 1.0, &mut rng).unwrap().as_slice().to_vec()
    }

    #[test]
    fn same_stream_reproduces() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let x = sample_complex_gaussian(16, 2.0, &mut a).unwrap();
        let y = sample_complex_gaussian(16, 2.0, &mut b).unwrap();
        assert_eq!(x, y);
        let mut c = RngStream::new(7, 4);
        assert_ne!(x, sample_complex_gaussian(16, 2.0, &mut c).unwrap());
    }

    #[test]
    fn zero_variance_gives_zero_vector() {
        let mut rng = RngStream::new(1, 0);
        let z = sample_complex_gaussian(4, 0.0, &mut rng).unwrap();
        assert!(z.iter().all(|c| c.norm() == 0.0));
        assert!(sample_complex_gaussian(4, f64::NAN, &mut rng).is_err());
        assert!(sample_complex_gaussian(0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn reflector_maps_to_e1() {
        for (n, seed) in [(2, 1), (5, 2), (64, 3)] {
            let v = random_vec(n, seed);
            let h = Householder::new(&v).unwrap();
            let r = h.apply(&v);
            assert!((r[0] - Complex64::new(norm(&v), 0.0)).norm() < 1e-10);
            assert!(norm(&r[1..]) < 1e-10);
            let back = h.apply_adjoint(&r);
            let diff: Vec<_> = back.iter().zip(&v).map(|(a, b)| a - b).collect();
            assert!(norm(&diff) < 1e-10);
        }
    }

    #[test]
    fn aligned_vector_gives_identity() {
        let mut e1 = ComplexVector::zeros(4);
        e1[0] = Complex64::new(2.5, 0.0);
        let r = householder_reflector(&e1).unwrap();
        assert!((r - ComplexMatrix::identity(4, 4)).norm() < 1e-14);
    }

    #[test]
    fn complement_of_e1_spans_trailing_axes() {
        let mut e1 = ComplexVector::zeros(3);
        e1[0] = Complex64::new(1.0, 0.0);
        let b = complement_basis(&e1).unwrap();
        assert_eq!(b.shape(), (3, 2));
        assert!(b.row(0).iter().all(|z| z.norm() < 1e-14));
        assert!((b[(1, 0)].norm() - 1.0).abs() < 1e-14);
        assert!((b[(2, 1)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn complement_rejects_scalar() {
        let v = ComplexVector::from_element(1, Complex64::new(1.0, 0.0));
        assert!(complement_basis(&v).is_err());
        assert!(householder_reflector(&ComplexVector::zeros(3)).is_err());
    }

    #[test]
    fn constellation_validation() {
        assert!(Constellation::new(vec![]).is_err());
        assert!(Constellation::new(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]).is_err());
        let q = Constellation::qpsk();
        assert!((q.sigma2() - 1.0).abs() < 1e-15);
        assert_eq!(q.c_max(), 0.0);
        assert!((Constellation::qam16().sigma2() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_constellation_is_constant() {
        let s = Constellation::new(vec![Complex64::new(1.0, 0.0)]).unwrap();
        let mut rng = RngStream::new(3, 0);
        let x = sample_constellation(&s, 50, &mut rng).unwrap();
        assert!(x.iter().all(|z| *z == Complex64::new(1.0, 0.0)));
    }
}
