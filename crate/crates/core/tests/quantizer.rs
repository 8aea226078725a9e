use approx::assert_abs_diff_eq;
use qprec::quantizer::{
    envelope, envelope_gap_expectation, smoothed_cross_gap, Component, CrossTerm, QuantizerSpec,
};
use qprec::stochastic::{fill_complex_gaussian, RngStream};
use qprec::Complex64;
use rand::Rng;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn family() -> Vec<QuantizerSpec> {
    vec![
        QuantizerSpec::one_bit_unit(),
        QuantizerSpec::uniform_iq(4, 0.5, 1.0).unwrap(),
        QuantizerSpec::uniform_iq(3, 0.4, 0.6).unwrap(),
        QuantizerSpec::phase_ce(4, 1.0).unwrap(),
        QuantizerSpec::phase_ce(8, 1.0).unwrap(),
    ]
}

fn mc_ezq(q: &QuantizerSpec, alpha: f64, n: usize, seed: u64) -> Complex64 {
    let mut z = vec![c(0.0, 0.0); n];
    fill_complex_gaussian(&mut z, 1.0, &mut RngStream::new(seed, 0));
    z.iter().map(|&v| v.conj() * q.quantize(v * alpha)).sum::<Complex64>() / n as f64
}

#[test]
fn reference_outputs() {
    let one = QuantizerSpec::one_bit_unit();
    assert_eq!(one.quantize(c(0.3, -0.2)), c(FRAC_1_SQRT_2, -FRAC_1_SQRT_2));
    let u = QuantizerSpec::uniform_iq(4, 0.5, 1.0).unwrap();
    assert_eq!(u.quantize(c(10.0, 10.0)), c(0.75, 0.75));
    assert_eq!(u.quantize(c(-0.1, 0.3)), c(-0.25, 0.25));
    let p = QuantizerSpec::phase_ce(4, 1.0).unwrap();
    let out = p.quantize(Complex64::from_polar(1.0, 0.1));
    assert!((out - c(1.0, 0.0)).norm() < 1e-15);
}

#[test]
fn ties_go_to_the_smaller_center() {
    let one = QuantizerSpec::one_bit_unit();
    assert_eq!(one.quantize(c(0.0, 0.0)), c(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2));
    let u = QuantizerSpec::uniform_iq(4, 0.5, 1.0).unwrap();
    assert_eq!(u.quantize(c(0.5, -0.5)), c(0.25, -0.75));
}

#[test]
fn quantization_is_idempotent_and_bounded() {
    for q in family() {
        let outputs = q.output_set();
        for i in -30..=30 {
            for j in -30..=30 {
                let z = c(i as f64 * 0.1, j as f64 * 0.1);
                let y = q.quantize(z);
                assert!(y.norm() <= q.m0() + 1e-12);
                assert!(outputs.iter().any(|o| (o - y).norm() < 1e-12));
                let yy = q.quantize(y);
                assert!((yy - y).norm() < 1e-12, "{:?}: {y} -> {yy}", q.kind());
            }
        }
    }
}

#[test]
fn output_set_sizes() {
    assert_eq!(QuantizerSpec::one_bit_unit().output_set().len(), 4);
    assert_eq!(QuantizerSpec::uniform_iq(4, 0.5, 1.0).unwrap().output_set().len(), 16);
    assert_eq!(QuantizerSpec::phase_ce(8, 1.0).unwrap().output_set().len(), 8);
}

#[test]
fn one_bit_ezq_is_scale_free() {
    let q = QuantizerSpec::one_bit_unit();
    for alpha in [0.05, 0.5, 1.0, 3.0, 40.0] {
        let m = q.gaussian_moments(alpha).unwrap();
        assert!((m.ezq - (2.0 / PI).sqrt()).norm() < 1e-6, "alpha {alpha}");
        assert_abs_diff_eq!(m.eq2, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.c1_bar.re * alpha, (2.0 / PI).sqrt(), epsilon = 1e-6);
    }
    let mc = mc_ezq(&q, 1.0, 1_000_000, 3);
    assert!((mc - (2.0 / PI).sqrt()).norm() < 3e-3);
}

#[test]
fn phase_quantizer_moments_match_monte_carlo() {
    let q = QuantizerSpec::phase_ce(4, 1.0).unwrap();
    let m = q.gaussian_moments(1.0).unwrap();
    let mc = mc_ezq(&q, 1.0, 1_000_000, 4);
    assert!((m.ezq - mc).norm() < 3e-3, "quadrature {} vs MC {}", m.ezq, mc);
}

#[test]
fn uniform_moments_match_monte_carlo() {
    let q = QuantizerSpec::uniform_iq(4, 0.5, 1.0).unwrap();
    for alpha in [0.3, 1.0, 2.0] {
        let m = q.gaussian_moments(alpha).unwrap();
        let mc = mc_ezq(&q, alpha, 400_000, 5);
        assert!((m.ezq - mc).norm() < 5e-3);
    }
}

#[test]
fn fine_uniform_quantizer_is_nearly_identity() {
    let q = QuantizerSpec::uniform_iq(16_000, 0.001, 8.0).unwrap();
    let m = q.gaussian_moments(1.0).unwrap();
    assert!((m.c1_bar - c(1.0, 0.0)).norm() < 1e-3);
    assert!(m.c2_bar < 1e-3);
}

#[test]
fn cauchy_schwarz_on_moments() {
    for q in family() {
        for alpha in [0.1, 0.7, 1.0, 2.5, 10.0] {
            let m = q.gaussian_moments(alpha).unwrap();
            assert!(m.eq2 - m.ezq.norm_sqr() >= -1e-12);
            assert!(m.c2_bar >= 0.0);
        }
    }
}

#[test]
fn envelopes_agree_far_from_jumps() {
    let q = QuantizerSpec::one_bit_unit();
    let tau = 0.1;
    let env = envelope(&q, Component::Re, tau).unwrap();
    let far = tau * 2.0 * q.m0() + 1e-9;
    for x in [c(far + 0.01, 0.3), c(-far - 0.2, -2.0), c(1.5, 0.0)] {
        let (l, u) = env.pair(x);
        assert_eq!(l, env.value(x));
        assert_eq!(u, env.value(x));
    }
}

#[test]
fn envelopes_sandwich_on_grid() {
    for q in family() {
        for comp in [Component::Re, Component::Im] {
            for tau in [0.5, 0.1, 0.02] {
                let env = envelope(&q, comp, tau).unwrap();
                for i in 0..101 {
                    for j in 0..101 {
                        let x = c(-2.5 + 0.05 * i as f64, -2.5 + 0.05 * j as f64);
                        let (l, u) = env.pair(x);
                        let g = env.value(x);
                        assert!(l <= g + 1e-12 && g <= u + 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn envelopes_are_lipschitz() {
    let mut rng = RngStream::new(17, 0);
    for q in family() {
        for comp in [Component::Re, Component::Im] {
            let tau = 0.07;
            let env = envelope(&q, comp, tau).unwrap();
            for _ in 0..2000 {
                let x = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let y = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let d = (x - y).norm() / tau + 1e-12;
                assert!((env.lower(x) - env.lower(y)).abs() <= d);
                assert!((env.upper(x) - env.upper(y)).abs() <= d);
            }
        }
    }
}

#[test]
fn envelope_gap_below_bound() {
    let q = QuantizerSpec::one_bit_unit();
    let r = envelope_gap_expectation(&q, Component::Re, 0.1, 1.0).unwrap();
    assert!(r.value <= r.bound, "{} > {}", r.value, r.bound);
    let half = envelope_gap_expectation(&q, Component::Re, 0.05, 1.0).unwrap();
    assert!(half.bound <= 0.5 * r.bound + 1e-15);
    assert!(envelope_gap_expectation(&q, Component::Re, 1.5, 1.0).is_err());
    for q in family() {
        for comp in [Component::Re, Component::Im] {
            let r = envelope_gap_expectation(&q, comp, 0.05, 0.8).unwrap();
            assert!(r.value <= r.bound, "{:?}", q.kind());
        }
    }
}

#[test]
fn smoothed_cross_terms_below_bound() {
    for q in family() {
        for term in [CrossTerm::One, CrossTerm::Two, CrossTerm::Three, CrossTerm::Four] {
            for tau in [0.1, 0.01] {
                let r = smoothed_cross_gap(&q, term, tau, 1.0).unwrap();
                assert!(r.value <= r.bound, "{:?} {term:?} tau {tau}", q.kind());
            }
        }
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(QuantizerSpec::uniform_iq(4, 0.5, 2.0).is_err());
    assert!(QuantizerSpec::uniform_iq(1, 0.5, 0.25).is_err());
    assert!(QuantizerSpec::one_bit(0.0).is_err());
    assert!(QuantizerSpec::phase_ce(0, 1.0).is_err());
    assert!(QuantizerSpec::one_bit_unit().gaussian_moments(0.0).is_err());
    assert!(envelope(&QuantizerSpec::one_bit_unit(), Component::Re, 0.0).is_err());
}
