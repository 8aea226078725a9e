use approx::assert_abs_diff_eq;
use qprec::experiments::ky_fan_pair;
use qprec::metrics::{
    ky_fan_empirical, ky_fan_from_deviations, l2_deviation, sep_bar, sep_bar_qpsk_exact,
    sep_from_pairs, sinr_bar, sinr_from_pairs, sinr_hat, DecisionRule, L2Accumulator,
    SepCounter,
};
use qprec::models::{
    asymptotic_model, functional_models, sample_scalar_outputs, simulate_equivalent,
    EquivalentOptions, ShapingFunction, SystemConfig,
};
use qprec::quantizer::QuantizerSpec;
use qprec::stochastic::{complex_normal, Constellation, RngStream};
use qprec::Complex64;
use rand::Rng;
use std::f64::consts::FRAC_1_SQRT_2;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cfg(n: usize, k: usize, sigma2: f64) -> SystemConfig {
    SystemConfig::new(n, k, sigma2, Constellation::qpsk(), 1.0).unwrap()
}

fn rzf() -> ShapingFunction {
    ShapingFunction::rzf(0.25).unwrap()
}

#[test]
fn nearest_point_and_ties() {
    let q = Constellation::qpsk();
    let rule = DecisionRule::new(&q, c(1.0, 0.0)).unwrap();
    assert_eq!(rule.decide(c(0.9, 0.8)), c(FRAC_1_SQRT_2, FRAC_1_SQRT_2));
    assert_eq!(rule.decide_index(c(0.0, 0.5)), 0);
    assert_eq!(rule.decide_index(c(0.0, 0.0)), 0);
    let bpsk = Constellation::new(vec![c(1.0, 0.0), c(-1.0, 0.0)]).unwrap();
    let r = DecisionRule::new(&bpsk, c(1.0, 0.0)).unwrap();
    assert_eq!(r.decide_index(c(0.0, 3.0)), 0);
}

#[test]
fn fast_nearest_matches_exhaustive_search() {
    let mut rng = RngStream::new(1, 0);
    for cons in [Constellation::qpsk(), Constellation::qam16(), Constellation::psk(8).unwrap()] {
        let rule = DecisionRule::new(&cons, c(1.0, 0.0)).unwrap();
        for _ in 0..10_000 {
            let r = c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            assert_eq!(rule.nearest_index(r), rule.nearest_index_brute(r));
        }
    }
}

#[test]
fn plug_in_sinr_matches_closed_form() {
    let k = 100;
    let conf = cfg(4 * k, k, 0.1);
    let m = asymptotic_model(&conf, &rzf(), &QuantizerSpec::one_bit_unit()).unwrap();
    let draws = sample_scalar_outputs(&m, &conf, &mut RngStream::new(2, 0), 200_000).unwrap();
    let pairs: Vec<(Complex64, Complex64)> = draws.iter().map(|(y, s)| (*s, *y)).collect();
    let est = sinr_from_pairs(&pairs, conf.sigma2_sym()).unwrap();
    let e2 = m.eta * m.eta;
    let exact = conf.sigma2_sym() * e2 * m.ts_bar.norm_sqr() / (e2 * m.tg_bar.powi(2) + m.sigma2_noise);
    assert!((est.value - exact).abs() < 3.0 * est.std_error, "{} vs {exact} (se {})", est.value, est.std_error);
    let mut rev = pairs.clone();
    rev.reverse();
    assert_eq!(sinr_from_pairs(&rev, conf.sigma2_sym()).unwrap(), est);
}

#[test]
fn noiseless_draws_give_unstable_sinr() {
    let pairs: Vec<(Complex64, Complex64)> = Constellation::qpsk()
        .points()
        .iter()
        .cycle()
        .take(1000)
        .map(|s| (*s, *s * 2.0))
        .collect();
    assert!(sinr_from_pairs(&pairs, 1.0).is_err());
}

#[test]
fn sinr_hat_over_equivalent_draws_is_positive() {
    let conf = cfg(64, 16, 0.1);
    let draws = simulate_equivalent(&conf, &rzf(), &QuantizerSpec::one_bit_unit(), 1, 1000).unwrap();
    let e = sinr_hat(&draws, 3, conf.sigma2_sym()).unwrap();
    assert!(e.value > 0.0 && e.std_error > 0.0);
    assert!(sinr_hat(&draws, 16, conf.sigma2_sym()).is_err());
}

#[test]
fn sinr_bar_forms_agree() {
    let q1 = QuantizerSpec::one_bit_unit();
    let q2 = QuantizerSpec::uniform_iq(4, 0.5, 1.0).unwrap();
    let q3 = QuantizerSpec::phase_ce(8, 1.0).unwrap();
    let cases = [
        (4.0, ShapingFunction::mf(), &q1),
        (2.0, rzf(), &q1),
        (8.0, ShapingFunction::zf(), &q2),
        (3.0, ShapingFunction::rzf(1.0).unwrap(), &q3),
        (4.0, ShapingFunction::rzf(0.02).unwrap(), &q2),
    ];
    for (gamma, f, q) in cases {
        let k = 50;
        let conf = cfg((gamma * k as f64) as usize, k, 0.1);
        let b = sinr_bar(&conf, &f, q).unwrap();
        assert!((b.direct - b.phi_form).abs() <= 1e-8 * b.direct);
    }
}

#[test]
fn matched_filter_sinr_bar_in_terms_of_phi() {
    let conf = cfg(400, 100, 0.1);
    let m = asymptotic_model(&conf, &ShapingFunction::mf(), &QuantizerSpec::one_bit_unit()).unwrap();
    let b = sinr_bar(&conf, &ShapingFunction::mf(), &QuantizerSpec::one_bit_unit()).unwrap();
    assert!((b.value() - 1.0 / (0.25 + 0.25 * m.phi())).abs() < 1e-6);
}

#[test]
fn sinr_bar_grows_with_power() {
    let base = cfg(400, 100, 0.1);
    let q = QuantizerSpec::one_bit_unit();
    let mut last = 0.0;
    for p in [0.01, 0.1, 0.5, 1.0, 2.0, 10.0, 100.0] {
        let v = sinr_bar(&base.with_power(p).unwrap(), &rzf(), &q).unwrap().value();
        assert!(v >= last);
        last = v;
    }
}

#[test]
fn sep_extremes() {
    let q = Constellation::qpsk();
    let rule = DecisionRule::new(&q, c(1.0, 0.0)).unwrap();
    let mut rng = RngStream::new(5, 0);
    let perfect: Vec<(Complex64, Complex64)> = (0..1000).map(|_| { let s = q.draw(&mut rng); (s, s) }).collect();
    assert_eq!(sep_from_pairs(&perfect, &rule).unwrap().value, 0.0);
    let noise: Vec<(Complex64, Complex64)> = (0..20_000).map(|_| (q.draw(&mut rng), complex_normal(&mut rng, 1.0))).collect();
    let e = sep_from_pairs(&noise, &rule).unwrap();
    let (lo, hi) = e.wilson_interval(3.0);
    assert!(lo <= 0.75 && 0.75 <= hi, "{} [{lo}, {hi}]", e.value);
}

#[test]
fn sep_nonincreasing_in_eta_with_common_numbers() {
    let conf = cfg(400, 100, 0.5);
    let m = asymptotic_model(&conf, &rzf(), &QuantizerSpec::one_bit_unit()).unwrap();
    let rule = DecisionRule::matched(conf.constellation(), m.ts_bar, m.eta).unwrap();
    let mut rng = RngStream::new(6, 0);
    let base: Vec<(Complex64, Complex64, Complex64)> = (0..100_000)
        .map(|_| (conf.constellation().draw(&mut rng), complex_normal(&mut rng, 1.0), complex_normal(&mut rng, 0.5)))
        .collect();
    let mut last = 1.0;
    for eta in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let pairs: Vec<(Complex64, Complex64)> = base
            .iter()
            .map(|&(s, g, n)| (s, eta * m.ts_bar * s + eta * m.tg_bar * g + n))
            .collect();
        let v = sep_from_pairs(&pairs, &rule).unwrap().value;
        assert!(v <= last, "eta {eta}: {v} > {last}");
        last = v;
    }
}

#[test]
fn qpsk_sep_bar_matches_orthant_formula() {
    let conf = cfg(400, 100, 1.0);
    let m = asymptotic_model(&conf, &rzf(), &QuantizerSpec::one_bit_unit()).unwrap();
    let rule = DecisionRule::matched(conf.constellation(), m.ts_bar, m.eta).unwrap();
    let exact = sep_bar_qpsk_exact(&m, rule.beta()).unwrap();
    let mc = sep_bar(&m, &rule, &conf, 3, 1_000_000).unwrap();
    assert!(exact > 0.01, "{exact}");
    assert!((mc.value - exact).abs() < 2e-3, "{} vs {exact}", mc.value);
}

#[test]
fn qpsk_sep_bar_is_symmetric_and_vanishes_without_noise() {
    let conf = cfg(400, 100, 1.0);
    let m = asymptotic_model(&conf, &rzf(), &QuantizerSpec::one_bit_unit()).unwrap();
    let rule = DecisionRule::matched(conf.constellation(), m.ts_bar, m.eta).unwrap();
    let mut rng = RngStream::new(4, 0);
    let mut counter = SepCounter::new(4, 1);
    for (y, s) in sample_scalar_outputs(&m, &conf, &mut rng, 200_000).unwrap() {
        counter.push(0, rule.index_of(s).unwrap(), rule.decide_index(y));
    }
    let per = counter.per_symbol();
    let mean = per.iter().map(|e| e.value).sum::<f64>() / 4.0;
    for e in &per {
        assert!((e.value - mean).abs() < 4.0 * e.std_error.max(1e-4));
    }
    let quiet = m.with_eta(m.eta);
    let quiet = qprec::models::ScalarModel { tg_bar: 1e-9, sigma2_noise: 1e-18, ..quiet };
    assert!(sep_bar_qpsk_exact(&quiet, rule.beta()).unwrap() < 1e-12);
}

#[test]
fn sep_invariant_under_joint_rotation() {
    let theta = 0.37;
    let rot = Complex64::from_polar(1.0, theta);
    let q = Constellation::qpsk();
    let qr = Constellation::new(q.points().iter().map(|p| p * rot).collect()).unwrap();
    let beta = c(0.8, -0.3);
    let rule = DecisionRule::new(&q, beta).unwrap();
    let rule_r = DecisionRule::new(&qr, beta).unwrap();
    let mut rng = RngStream::new(8, 0);
    let mut pairs = Vec::new();
    let mut pairs_r = Vec::new();
    for _ in 0..20_000 {
        let i = rng.random_range(0..4);
        let y = q.points()[i] * c(0.9, 0.4) + complex_normal(&mut rng, 0.6);
        pairs.push((q.points()[i], y));
        pairs_r.push((qr.points()[i], y * rot));
    }
    let a = sep_from_pairs(&pairs, &rule).unwrap().value;
    let b = sep_from_pairs(&pairs_r, &rule_r).unwrap().value;
    assert_abs_diff_eq!(a, b, epsilon = 1e-4);
}

#[test]
fn ky_fan_reference_values() {
    let same: Vec<(Complex64, Complex64)> = (0..1000).map(|i| (c(i as f64, 0.0), c(i as f64, 0.0))).collect();
    assert_eq!(ky_fan_empirical(&same).unwrap(), 0.0);
    for cst in [0.3, 0.9, 1.7] {
        let v = ky_fan_from_deviations(vec![cst; 1000]).unwrap();
        assert_abs_diff_eq!(v, f64::min(cst, 1.0), epsilon = 1e-12);
    }
    assert!(ky_fan_from_deviations(vec![]).is_err());
}

#[test]
fn ky_fan_is_monotone_under_domination() {
    let mut rng = RngStream::new(9, 0);
    let e: Vec<f64> = (0..2000).map(|_| rng.random::<f64>() * 0.5).collect();
    let bigger: Vec<f64> = e.iter().map(|x| x * 1.5 + 0.01).collect();
    let a = ky_fan_from_deviations(e.clone()).unwrap();
    let b = ky_fan_from_deviations(bigger).unwrap();
    assert!(a <= b);
    let max = e.iter().cloned().fold(0.0, f64::max);
    assert!((0.0..=1.0 + max).contains(&a));
}

#[test]
fn ky_fan_of_ts_shrinks_with_k() {
    let q = QuantizerSpec::one_bit_unit();
    let opts = EquivalentOptions { channel_reuse: 4, ..Default::default() };
    let (a, _) = ky_fan_pair(&cfg(256, 64, 0.1), &rzf(), &q, 3, 1000, &opts).unwrap();
    let (b, _) = ky_fan_pair(&cfg(4096, 1024, 0.1), &rzf(), &q, 3, 1000, &opts).unwrap();
    assert!(b < a, "{a} -> {b}");
}

#[test]
fn l2_reference_values() {
    let base: Vec<Complex64> = (0..1000).map(|i| c((i as f64).sin(), (i as f64).cos())).collect();
    let same: Vec<(Complex64, Complex64)> = base.iter().map(|x| (*x, *x)).collect();
    assert_eq!(l2_deviation(&same).unwrap().value, 0.0);
    let shift = c(0.3, -0.4);
    let moved: Vec<(Complex64, Complex64)> = base.iter().map(|x| (*x + shift, *x)).collect();
    assert_abs_diff_eq!(l2_deviation(&moved).unwrap().value, 0.5, epsilon = 1e-10);
}

#[test]
fn coupled_l2_shrinks_along_ladder() {
    let q = QuantizerSpec::one_bit_unit();
    let f = rzf();
    let mut last = f64::INFINITY;
    for k in [64usize, 256, 1024] {
        let conf = cfg(4 * k, k, 0.1);
        let fm = functional_models(&conf, &f, &q, None).unwrap();
        let mut acc = L2Accumulator::default();
        let opts = EquivalentOptions { channel_reuse: 8, ..Default::default() };
        fm.for_each_pair(2, 0..400, &opts, |_, d, yb| {
            for (a, b) in d.y_hat.iter().zip(yb) {
                acc.push(*a, *b);
            }
            Ok(())
        })
        .unwrap();
        let v = acc.estimate().value;
        assert!(v < last, "K = {k}: {v} >= {last}");
        last = v;
    }
}
