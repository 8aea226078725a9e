use approx::assert_abs_diff_eq;
use qprec::stochastic::{
    complement_basis, householder_reflector, sample_complex_gaussian, sample_constellation,
    Constellation, RngStream,
};
use qprec::{Complex64, ComplexMatrix, ComplexVector};

fn random_vector(n: usize, seed: u64) -> ComplexVector {
    sample_complex_gaussian(n, 1.0, &mut RngStream::new(seed, 0)).unwrap()
}

#[test]
fn gaussian_second_moment_and_mean() {
    let z = sample_complex_gaussian(100_000, 1.0, &mut RngStream::new(11, 0)).unwrap();
    let n = z.len() as f64;
    let m2 = z.iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
    let mean = z.iter().sum::<Complex64>() / n;
    assert!((m2 - 1.0).abs() < 0.015, "E|z|^2 = {m2}");
    assert!(mean.norm() < 0.02, "|mean| = {}", mean.norm());
}

#[test]
fn gaussian_covariance_is_isotropic() {
    let z = sample_complex_gaussian(200_000, 1.0, &mut RngStream::new(12, 0)).unwrap();
    let n = z.len() as f64;
    let re2 = z.iter().map(|v| v.re * v.re).sum::<f64>() / n;
    let im2 = z.iter().map(|v| v.im * v.im).sum::<f64>() / n;
    let reim = z.iter().map(|v| v.re * v.im).sum::<f64>() / n;
    assert!((re2 - 0.5).abs() < 0.01 && (im2 - 0.5).abs() < 0.01);
    assert!(reim.abs() < 0.01);
}

#[test]
fn gaussian_rejects_bad_variance() {
    let mut rng = RngStream::new(1, 0);
    assert!(sample_complex_gaussian(3, f64::NAN, &mut rng).is_err());
    assert!(sample_complex_gaussian(3, -1.0, &mut rng).is_err());
    assert!(sample_complex_gaussian(0, 1.0, &mut rng).is_err());
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let a = random_vector(64, 5);
    let b = random_vector(64, 5);
    assert_eq!(a, b);
    let c = sample_complex_gaussian(64, 1.0, &mut RngStream::new(5, 1)).unwrap();
    assert_ne!(a, c);
    let aux = sample_complex_gaussian(64, 1.0, &mut RngStream::auxiliary(5, 0)).unwrap();
    assert_ne!(a, aux);
}

#[test]
fn reflector_residual_and_unitarity() {
    for (seed, n) in [(1u64, 2usize), (2, 5), (3, 40), (4, 129)] {
        let v = random_vector(n, seed);
        let r = householder_reflector(&v).unwrap();
        let mut e1 = ComplexVector::zeros(n);
        e1[0] = Complex64::new(v.norm(), 0.0);
        assert!((&r * &v - e1).norm() < 1e-10);
        let eye = ComplexMatrix::identity(n, n);
        assert!((&r * r.adjoint() - eye).norm() < 1e-10);
    }
}

#[test]
fn reflector_near_e1_is_stable() {
    let mut v = ComplexVector::zeros(6);
    v[0] = Complex64::new(1.0, 0.0);
    v[3] = Complex64::new(1e-14, -1e-14);
    let r = householder_reflector(&v).unwrap();
    let mut e1 = ComplexVector::zeros(6);
    e1[0] = Complex64::new(v.norm(), 0.0);
    assert!((&r * &v - e1).norm() < 1e-14);
}

#[test]
fn reflector_rejects_zero() {
    assert!(householder_reflector(&ComplexVector::zeros(4)).is_err());
}

#[test]
fn complement_is_orthonormal_and_orthogonal() {
    for (seed, n) in [(7u64, 2usize), (8, 9), (9, 64)] {
        let v = random_vector(n, seed);
        let b = complement_basis(&v).unwrap();
        assert_eq!(b.shape(), (n, n - 1));
        assert!((b.adjoint() * &v).norm() < 1e-10);
        assert!((b.adjoint() * &b - ComplexMatrix::identity(n - 1, n - 1)).norm() < 1e-10);
        let r = householder_reflector(&v).unwrap();
        let tail = r.adjoint().columns(1, n - 1).into_owned();
        assert!((tail - b).norm() < 1e-12);
    }
}

#[test]
fn qpsk_frequencies_and_energy() {
    let q = Constellation::qpsk();
    let s = sample_constellation(&q, 100_000, &mut RngStream::new(3, 0)).unwrap();
    for p in q.points() {
        let freq = s.iter().filter(|x| *x == p).count() as f64 / s.len() as f64;
        assert!((freq - 0.25).abs() < 0.01, "freq {freq}");
    }
    let e = s.iter().map(|x| x.norm_sqr()).sum::<f64>() / s.len() as f64;
    assert_abs_diff_eq!(q.sigma2(), 1.0, epsilon = 1e-15);
    assert!((e - q.sigma2()).abs() < 0.01 * q.sigma2());
}

#[test]
fn qam16_energy_matches_alphabet() {
    let q = Constellation::qam16();
    let exact = q.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
    assert_abs_diff_eq!(q.sigma2(), exact, epsilon = 1e-12);
    let s = sample_constellation(&q, 100_000, &mut RngStream::new(4, 0)).unwrap();
    let e = s.iter().map(|x| x.norm_sqr()).sum::<f64>() / s.len() as f64;
    assert!((e - exact).abs() < 0.01 * exact);
}

#[test]
fn constellation_rejects_zero_and_empty() {
    assert!(Constellation::new(vec![]).is_err());
    assert!(Constellation::new(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]).is_err());
}
