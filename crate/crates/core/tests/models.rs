use approx::assert_abs_diff_eq;
use qprec::metrics::L2Accumulator;
use qprec::models::{
    alpha_tilde_finite, asymptotic_model, functional_models, original_trial,
    sample_scalar_outputs, simulate_equivalent, simulate_original, EquivalentModel,
    EquivalentOptions, ScalarModel, ShapingFunction, SystemConfig,
};
use qprec::quantizer::QuantizerSpec;
use qprec::spectral::sample_singular_values;
use qprec::stochastic::{Constellation, RngStream};
use qprec::Complex64;
use std::f64::consts::PI;

fn cfg(n: usize, k: usize) -> SystemConfig {
    SystemConfig::new(n, k, 0.1, Constellation::qpsk(), 1.0).unwrap()
}

fn rzf() -> ShapingFunction {
    ShapingFunction::rzf(0.25).unwrap()
}

fn one_bit() -> QuantizerSpec {
    QuantizerSpec::one_bit_unit()
}

fn pairs() -> Vec<(ShapingFunction, QuantizerSpec)> {
    vec![
        (ShapingFunction::mf(), one_bit()),
        (ShapingFunction::zf(), one_bit()),
        (rzf(), QuantizerSpec::uniform_iq(4, 0.5, 1.0).unwrap()),
        (ShapingFunction::rzf(1.0).unwrap(), QuantizerSpec::phase_ce(8, 1.0).unwrap()),
        (ShapingFunction::rzf(0.05).unwrap().scaled(2.0).unwrap(), QuantizerSpec::uniform_iq(2, 1.0, 1.0).unwrap()),
    ]
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[test]
fn config_invariants() {
    assert!(SystemConfig::new(8, 8, 0.1, Constellation::qpsk(), 1.0).is_err());
    assert!(SystemConfig::new(8, 2, 0.1, Constellation::qpsk(), 1.0).is_err());
    assert!(SystemConfig::new(8, 4, -0.1, Constellation::qpsk(), 1.0).is_err());
    assert!(SystemConfig::new(8, 4, 0.1, Constellation::qpsk(), 0.0).is_err());
    let c = cfg(32, 8);
    assert_eq!(c.gamma(), 4.0);
    assert_abs_diff_eq!(c.sigma2_sym(), 1.0, epsilon = 1e-15);
}

#[test]
fn noiseless_zero_forcing_inverts_the_channel() {
    let c = SystemConfig::new(64, 16, 0.0, Constellation::qpsk(), 1.0).unwrap();
    let fine = QuantizerSpec::uniform_iq(8000, 0.001, 4.0).unwrap();
    let zf = ShapingFunction::zf();
    for t in 0..3 {
        let o = original_trial(&c, &zf, &fine, &mut RngStream::new(40, t)).unwrap();
        let r: Vec<Complex64> = o.y.iter().map(|y| y / o.eta).collect();
        let num: f64 = r.iter().zip(o.s.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = o.s.iter().map(|b| b.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-2);
    }
}

#[test]
fn original_power_equality() {
    let c = cfg(32, 8);
    for o in simulate_original(&c, &rzf(), &one_bit(), 3, 50).unwrap() {
        assert_abs_diff_eq!(o.transmit_power, 1.0, epsilon = 1e-10);
    }
}

#[test]
fn equivalent_draw_invariants() {
    let c = cfg(48, 12);
    for (f, q) in pairs() {
        let draws = simulate_equivalent(&c, &f, &q, 9, 2000).unwrap();
        for d in &draws {
            assert!(d.tg >= 0.0 && d.c2 >= 0.0 && d.alpha_nk > 0.0);
            assert_abs_diff_eq!(d.transmit_power(c.n()), 1.0, epsilon = 1e-10);
            for i in 0..c.k() {
                let y = d.eta * d.ts * d.s[i] + d.eta * d.tg * d.g2[i] + d.noise[i];
                assert!((y - d.y_hat[i]).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn equivalent_model_is_reproducible() {
    let c = cfg(32, 8);
    let a = simulate_equivalent(&c, &rzf(), &one_bit(), 77, 20).unwrap();
    let b = simulate_equivalent(&c, &rzf(), &one_bit(), 77, 20).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.y_hat, y.y_hat);
        assert_eq!(x.ts, y.ts);
    }
}

#[test]
fn ts_mean_near_asymptote_at_k256() {
    let c = cfg(1024, 256);
    let f = rzf();
    let m = asymptotic_model(&c, &f, &one_bit()).unwrap();
    let draws = simulate_equivalent(&c, &f, &one_bit(), 5, 1000).unwrap();
    let re: Vec<f64> = draws.iter().map(|d| d.ts.re).collect();
    let im: Vec<f64> = draws.iter().map(|d| d.ts.im).collect();
    let (mr, sr) = mean_sd(&re);
    let (mi, si) = mean_sd(&im);
    let n = (draws.len() as f64).sqrt();
    assert!((mr - m.ts_bar.re).abs() < 3.0 * sr / n, "{mr} vs {}", m.ts_bar.re);
    assert!((mi - m.ts_bar.im).abs() < 3.0 * si / n + 1e-12);
}

#[test]
fn alpha_concentrates_with_k() {
    let sd = |k: usize| {
        let c = cfg(4 * k, k);
        let draws = simulate_equivalent(&c, &rzf(), &one_bit(), 6, 1000).unwrap();
        let a: Vec<f64> = draws.iter().map(|d| d.alpha_nk).collect();
        mean_sd(&a).1
    };
    assert!(sd(256) < sd(64));
}

#[test]
fn t_statistics_approach_asymptotes() {
    let q = one_bit();
    let f = rzf();
    let mut gaps = Vec::new();
    for k in [16usize, 64, 256] {
        let c = cfg(4 * k, k);
        let m = asymptotic_model(&c, &f, &q).unwrap();
        let opts = EquivalentOptions { channel_reuse: 8, ..Default::default() };
        let (mut ts, mut tg, mut n) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
        EquivalentModel::new(&c, &f, &q)
            .for_each(2, 0..4000, &opts, |_, d| {
                ts += d.ts;
                tg += d.tg;
                n += 1.0;
                Ok(())
            })
            .unwrap();
        gaps.push(((ts / n - m.ts_bar).norm(), (tg / n - m.tg_bar).abs()));
    }
    assert!(gaps[1].1 < gaps[0].1 && gaps[2].1 < gaps[1].1, "{gaps:?}");
    assert!(gaps[2].0 < gaps[0].0, "{gaps:?}");
}

#[test]
fn matched_filter_moments() {
    let c = cfg(400, 100);
    let m = asymptotic_model(&c, &ShapingFunction::mf(), &one_bit()).unwrap();
    assert_abs_diff_eq!(m.moments.e_df, 1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(m.moments.var_df, 0.25, epsilon = 1e-6);
    assert_abs_diff_eq!(m.alpha_bar, 0.5, epsilon = 1e-6);
}

#[test]
fn scalar_model_identities() {
    let c = cfg(400, 100);
    for (f, q) in pairs() {
        let m = asymptotic_model(&c, &f, &q).unwrap();
        let tg2 = c.sigma2_sym() * m.c1_bar.norm_sqr() * m.moments.var_df + m.c2_bar.powi(2);
        assert!((m.tg_bar.powi(2) - tg2).abs() < 1e-10);
        let ab = (c.sigma2_sym() * m.moments.e_f2 / c.gamma()).sqrt();
        assert!((m.alpha_bar - ab).abs() < 1e-12);
        assert!((m.eta * m.eta * m.eq2 - 1.0).abs() < 1e-10);
    }
}

#[test]
fn one_bit_c1_times_alpha_is_universal() {
    let c = cfg(400, 100);
    for f in [ShapingFunction::mf(), ShapingFunction::zf(), rzf(), ShapingFunction::rzf(3.0).unwrap()] {
        let m = asymptotic_model(&c, &f, &one_bit()).unwrap();
        assert_abs_diff_eq!(m.c1_bar.norm() * m.alpha_bar, (2.0 / PI).sqrt(), epsilon = 1e-6);
    }
}

#[test]
fn scalar_outputs_moments() {
    let c = cfg(400, 100);
    let m = asymptotic_model(&c, &rzf(), &one_bit()).unwrap();
    let draws = sample_scalar_outputs(&m, &c, &mut RngStream::new(8, 0), 1_000_000).unwrap();
    let n = draws.len() as f64;
    let p = draws.iter().map(|(y, _)| y.norm_sqr()).sum::<f64>() / n;
    let cross = draws.iter().map(|(y, s)| s.conj() * y).sum::<Complex64>() / n;
    assert!((p / m.output_power() - 1.0).abs() < 0.01);
    let want = m.eta * m.ts_bar * c.sigma2_sym();
    assert!((cross - want).norm() / want.norm() < 0.01);
}

#[test]
fn noiseless_scalar_model_recovers_symbols() {
    let c = SystemConfig::new(40, 10, 0.0, Constellation::qpsk(), 1.0).unwrap();
    let m = asymptotic_model(&c, &rzf(), &one_bit()).unwrap();
    let m = ScalarModel { tg_bar: 0.0, ..m };
    for (y, s) in sample_scalar_outputs(&m, &c, &mut RngStream::new(1, 0), 100).unwrap() {
        assert!((y / (m.eta * m.ts_bar) - s).norm() < 1e-12);
    }
}

#[test]
fn alpha_tilde_follows_its_definition() {
    let c = cfg(64, 16);
    let d = sample_singular_values(64, 16, &mut RngStream::new(3, 0)).unwrap();
    let mut rng = RngStream::new(3, 1);
    let s: Vec<Complex64> = (0..16).map(|_| c.constellation().draw(&mut rng)).collect();
    let g1 = qprec::stochastic::sample_complex_gaussian(16, 1.0, &mut rng).unwrap();
    let z1 = qprec::stochastic::sample_complex_gaussian(64, 1.0, &mut rng).unwrap();
    let nrm = |v: &[Complex64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    for f in [ShapingFunction::mf(), rzf(), ShapingFunction::zf()] {
        let fg: Vec<Complex64> = g1.iter().zip(&d).map(|(g, &di)| g * f.eval(di)).collect();
        let want = nrm(&s) / nrm(g1.as_slice()) * nrm(&fg) / nrm(z1.as_slice());
        let got = alpha_tilde_finite(&f, &s, g1.as_slice(), z1.as_slice(), &d).unwrap();
        assert!((got - want).abs() < 1e-10 * want);
    }
}

#[test]
fn coupled_deviation_shrinks_with_k() {
    let q = one_bit();
    let f = rzf();
    let l2 = |k: usize| {
        let c = cfg(4 * k, k);
        let fm = functional_models(&c, &f, &q, None).unwrap();
        let mut acc = L2Accumulator::default();
        let opts = EquivalentOptions { channel_reuse: 8, ..Default::default() };
        fm.for_each_pair(4, 0..800, &opts, |_, d, yb| {
            for (a, b) in d.y_hat.iter().zip(yb) {
                acc.push(*a, *b);
            }
            Ok(())
        })
        .unwrap();
        acc.mean_sq().sqrt()
    };
    let (a, b) = (l2(64), l2(256));
    assert!(b < a, "{a} -> {b}");
}

#[test]
fn eta_override_is_applied_to_both_models() {
    let c = cfg(64, 16);
    let f = rzf();
    let q = one_bit();
    let fm = functional_models(&c, &f, &q, Some(0.7)).unwrap();
    assert_eq!(fm.scalar.eta, 0.7);
    fm.for_each_pair(1, 0..10, &EquivalentOptions::default(), |_, d, _| {
        assert_eq!(d.eta, 0.7);
        Ok(())
    })
    .unwrap();
    assert!(functional_models(&c, &f, &q, Some(0.0)).is_err());
}
