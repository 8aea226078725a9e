//! Named experiment suites. Each suite runs over a `(seed, K)` grid of
//! independent cells, emits flat [`Record`]s and evaluates its pass/fail
//! [`Check`]s on them. The command-line runner and the acceptance tests
//! both drive this module.

use crate::bounds::{
    concentration, evaluate_tg, evaluate_ts, kf_constant_tg, kf_constant_ts,
    kf_rate, sep_gap_bound, sep_sensitivity_lm, sinr_sensitivity_lk, CascadeParams, Kernel,
};
use crate::error::{invalid, QprecError, Result};
use crate::metrics::{
    ky_fan_from_deviations, sep_bar, sep_bar_qpsk_exact, sinr_bar_from_model, BatchedSinr,
    DecisionRule, L2Accumulator, SepCounter,
};
use crate::models::{
    asymptotic_model, functional_models, simulate_original, EquivalentModel, EquivalentOptions,
    ShapingFunction, SystemConfig,
};
use crate::optimizer::{
    feasibility_deviation, growth_psi, inequality_constrained_best, optimal_gap_report,
    point_distance, FamilyGrid, FiniteOptions, MIN_FINITE_TRIALS,
};
use crate::quantizer::{envelope, Component, QuantizerSpec};
use crate::spectral::{
    esd_kolmogorov_distance, lss_statistic, mp_moment, sample_channel_singular_values,
    sample_singular_values,
};
use crate::stats::{ks_two_sample, loglog_fit, sample_variance, strictly_decreasing};
use crate::stochastic::{fill_complex_gaussian, Constellation, RngStream};
use crate::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

/// Batches used for batch-means standard errors.
const BATCHES: usize = 20;

/// Offset separating the equivalent-model streams from the original-model
/// streams in the equivalence suite.
const EQUIVALENT_SEED_OFFSET: u64 = 0x5DEE_CE66_D1CE_4E5B;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    MpCheck,
    Equivalence,
    ConvergeSinr,
    ConvergeSep,
    KyfanRate,
    BoundsAudit,
    Optimize,
    TailAudit,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::MpCheck,
        Suite::Equivalence,
        Suite::ConvergeSinr,
        Suite::ConvergeSep,
        Suite::KyfanRate,
        Suite::BoundsAudit,
        Suite::Optimize,
        Suite::TailAudit,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::MpCheck => "mp-check",
            Suite::Equivalence => "equivalence",
            Suite::ConvergeSinr => "converge-sinr",
            Suite::ConvergeSep => "converge-sep",
            Suite::KyfanRate => "kyfan-rate",
            Suite::BoundsAudit => "bounds-audit",
            Suite::Optimize => "optimize",
            Suite::TailAudit => "tail-audit",
        }
    }

    pub fn parse(name: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn description(&self) -> &'static str {
        match self {
            Suite::MpCheck => "singular-value support containment, ESD distance and LSS variance",
            Suite::Equivalence => "KS distance between y_1 (original) and y_hat_1 (equivalent)",
            Suite::ConvergeSinr => "|SINR_hat - SINR_bar| along the K ladder",
            Suite::ConvergeSep => "|SEP_hat - SEP_bar| along the K ladder",
            Suite::KyfanRate => "empirical Ky Fan distances of T_s and T_g g_2 and their log-log slope",
            Suite::BoundsAudit => "SEP and SINR gap bounds, quantizer moments and envelopes",
            Suite::Optimize => "finite vs asymptotic SINR maximization, feasibility deviation, growth",
            Suite::TailAudit => "tail cascades R, R_tilde and quadratic-form tail inequalities",
        }
    }
}

/// Everything a suite needs. Fields irrelevant to a suite are ignored.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub suite: Suite,
    pub gamma: f64,
    pub sigma2: f64,
    pub power: f64,
    pub constellation: Constellation,
    pub quantizer: QuantizerSpec,
    pub shaping: ShapingFunction,
    pub grid: FamilyGrid,
    /// Strictly increasing user counts.
    pub k_ladder: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Monte-Carlo trials per cell.
    pub trials: usize,
    /// Consecutive trials sharing one draw of `D`.
    pub channel_reuse: usize,
    /// Repetitions for spectral statistics and quadratic forms.
    pub reps: usize,
    /// Deviation thresholds for tail checks.
    pub eps: Vec<f64>,
    /// User counts at which the tail cascades are evaluated.
    pub cascade_ladder: Vec<f64>,
    /// Slack around the MP edges in the support check.
    pub edge_slack: f64,
    /// KS tolerance of the equivalence check.
    pub ks_tolerance: f64,
    /// Relative tolerance of the SINR and optimal-value gaps at the largest K.
    pub rel_tolerance: f64,
    /// Absolute tolerance of the SEP gap at the largest K.
    pub abs_tolerance: f64,
    /// Upper limit on the fitted log-log slope of the Ky Fan distance.
    pub max_slope: f64,
}

impl SuiteConfig {
    /// Defaults: one-bit quantizer, QPSK, RZF(0.25), `gamma = 4`, `sigma^2 = 0.1`.
    pub fn new(suite: Suite) -> Self {
        let mut c = Self {
            suite,
            gamma: 4.0,
            sigma2: 0.1,
            power: 1.0,
            constellation: Constellation::qpsk(),
            quantizer: QuantizerSpec::one_bit_unit(),
            shaping: ShapingFunction::rzf(0.25).expect("valid rho"),
            grid: FamilyGrid::log_spaced(1e-3, 10.0, 13).expect("valid grid"),
            k_ladder: vec![16, 64, 256],
            seeds: vec![1, 2, 3],
            trials: 4000,
            channel_reuse: 32,
            reps: 200,
            eps: vec![0.2, 0.4],
            cascade_ladder: vec![1e3, 1e4, 1e5, 1e6],
            edge_slack: 0.05,
            ks_tolerance: 0.03,
            rel_tolerance: 0.05,
            abs_tolerance: 0.01,
            max_slope: -0.2,
        };
        match suite {
            Suite::MpCheck => {
                c.k_ladder = vec![256];
                c.seeds = (0..20).collect();
            }
            Suite::Equivalence => {
                c.k_ladder = vec![8];
                c.seeds = vec![1];
                c.trials = 10_000;
                c.channel_reuse = 1;
            }
            Suite::ConvergeSep => {
                c.trials = 100_000;
            }
            Suite::KyfanRate => {
                c.k_ladder = vec![64, 256, 1024];
                c.trials = 2000;
                c.channel_reuse = 4;
            }
            Suite::BoundsAudit => {
                c.k_ladder = vec![256];
                c.seeds = (0..10).collect();
                c.trials = 2000;
            }
            Suite::Optimize => {
                c.k_ladder = vec![64, 256];
                c.seeds = (0..10).collect();
                c.trials = MIN_FINITE_TRIALS;
                c.rel_tolerance = 0.10;
            }
            Suite::TailAudit => {
                c.k_ladder = vec![256];
                c.seeds = vec![1];
                c.trials = 500;
                c.reps = 500;
            }
            Suite::ConvergeSinr => {}
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let field = |f: &str, r: &str| Err(QprecError::Config { field: f.into(), reason: r.into() });
        if self.k_ladder.is_empty() {
            return field("k_ladder", "must not be empty");
        }
        if self.k_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return field("k_ladder", "must be strictly increasing");
        }
        if self.seeds.is_empty() {
            return field("seeds", "must not be empty");
        }
        if self.trials == 0 {
            return field("trials", "must be >= 1");
        }
        if self.cascade_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return field("cascade_ladder", "must be strictly increasing");
        }
        if self.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return field("eps", "values must be finite and > 0");
        }
        if self.suite == Suite::Optimize && self.trials < MIN_FINITE_TRIALS {
            return field("trials", "optimize needs at least 1000 trials per grid point");
        }
        self.grid.validate()?;
        for &k in &self.k_ladder {
            self.system(k)?;
        }
        Ok(())
    }

    /// System with `K = k` and `N = round(gamma K)`.
    pub fn system(&self, k: usize) -> Result<SystemConfig> {
        let n = (self.gamma * k as f64).round() as usize;
        SystemConfig::new(n, k, self.sigma2, self.constellation.clone(), self.power)
    }
}

/// One output row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub experiment: String,
    pub seed: u64,
    pub k: u64,
    pub metric: String,
    pub value: f64,
    pub std_error: Option<f64>,
    pub bound: Option<f64>,
    pub holds: Option<bool>,
    pub note: Option<String>,
    /// Seconds spent in the cell that produced the record.
    pub wall_time: f64,
}

impl Record {
    fn new(metric: impl Into<String>, value: f64) -> Self {
        Self {
            experiment: String::new(),
            seed: 0,
            k: 0,
            metric: metric.into(),
            value,
            std_error: None,
            bound: None,
            holds: None,
            note: None,
            wall_time: 0.0,
        }
    }

    fn se(mut self, se: f64) -> Self {
        self.std_error = Some(se);
        self
    }

    /// Attaches an upper bound and sets `holds = value <= bound`.
    fn bounded(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self.holds = Some(self.value <= bound);
        self
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Outcome of one acceptance check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuiteOutput {
    pub suite: Suite,
    pub records: Vec<Record>,
    pub checks: Vec<Check>,
}

impl SuiteOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Records with the given metric, in output order.
    pub fn metric(&self, name: &str) -> Vec<&Record> {
        self.records.iter().filter(|r| r.metric == name).collect()
    }
}

/// Runs every `(seed, K)` cell (in parallel on the current rayon pool),
/// then the suite-wide evaluations, then the checks. Output order is
/// seeds-major, ladder-minor, independent of scheduling. A cell that fails
/// numerically yields a single `error` record and the run continues.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteOutput> {
    cfg.validate()?;
    let cells: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.k_ladder.iter().map(move |&k| (s, k)))
        .collect();
    let per_cell: Vec<Vec<Record>> = cells
        .par_iter()
        .map(|&(seed, k)| {
            let t0 = Instant::now();
            let recs = run_cell(cfg, seed, k).unwrap_or_else(|e| {
                vec![Record::new("error", f64::NAN).note(e.to_string())]
            });
            let wall = t0.elapsed().as_secs_f64();
            recs.into_iter()
                .map(|mut r| {
                    r.experiment = cfg.suite.name().into();
                    r.seed = seed;
                    r.k = k as u64;
                    r.wall_time = wall;
                    r
                })
                .collect()
        })
        .collect();
    let mut records: Vec<Record> = per_cell.into_iter().flatten().collect();
    let t0 = Instant::now();
    let global = suite_wide(cfg)?;
    let wall = t0.elapsed().as_secs_f64();
    records.extend(global.into_iter().map(|mut r| {
        r.experiment = cfg.suite.name().into();
        r.seed = cfg.seeds[0];
        r.wall_time = wall;
        r
    }));
    let checks = checks(cfg, &records);
    Ok(SuiteOutput { suite: cfg.suite, records, checks })
}

fn run_cell(cfg: &SuiteConfig, seed: u64, k: usize) -> Result<Vec<Record>> {
    let sys = cfg.system(k)?;
    match cfg.suite {
        Suite::MpCheck => mp_check_cell(cfg, &sys, seed),
        Suite::Equivalence => equivalence_cell(cfg, &sys, seed),
        Suite::ConvergeSinr => converge_sinr_cell(cfg, &sys, seed),
        Suite::ConvergeSep => converge_sep_cell(cfg, &sys, seed),
        Suite::KyfanRate => kyfan_cell(cfg, &sys, seed),
        Suite::BoundsAudit => bounds_audit_cell(cfg, &sys, seed),
        Suite::Optimize => optimize_cell(cfg, &sys, seed),
        Suite::TailAudit => tail_audit_cell(cfg, &sys, seed),
    }
}

fn suite_wide(cfg: &SuiteConfig) -> Result<Vec<Record>> {
    match cfg.suite {
        Suite::BoundsAudit => quantizer_audit(&cfg.quantizer),
        Suite::TailAudit => cascade_ladder(cfg),
        _ => Ok(Vec::new()),
    }
}

fn eq_opts(cfg: &SuiteConfig) -> EquivalentOptions {
    EquivalentOptions { channel_reuse: cfg.channel_reuse.max(1), ..Default::default() }
}

fn batch_of(t: usize, trials: usize) -> usize {
    t * BATCHES / trials
}

// ---------------------------------------------------------------- mp-check

fn mp_check_cell(cfg: &SuiteConfig, sys: &SystemConfig, seed: u64) -> Result<Vec<Record>> {
    let law = sys.mp_law();
    let (lo, hi) = law.d_edges();
    let d = sample_channel_singular_values(sys, &mut RngStream::new(seed, 0))?;
    let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = d.iter().cloned().fold(0.0, f64::max);
    let violation = ((lo - cfg.edge_slack) - dmin).max(dmax - (hi + cfg.edge_slack)).max(0.0);
    let mut out = vec![
        Record::new("d_min", dmin),
        Record::new("d_max", dmax),
        Record::new("support_violation", violation).bounded(0.0),
        Record::new("esd_kolmogorov", esd_kolmogorov_distance(&d, &law)),
    ];
    // Z_K = (1/K) sum d_i^2 over independent spectra; M_1 = sup d^2 on the support.
    let reps = cfg.reps.max(2);
    let z: Vec<f64> = (0..reps)
        .map(|r| {
            let d = sample_singular_values(sys.n(), sys.k(), &mut RngStream::auxiliary(seed, r as u64))?;
            lss_statistic(&d, |x| x * x)
        })
        .collect::<Result<_>>()?;
    let m1 = hi * hi;
    let var_bound = concentration(&Kernel::LssChebyshev { k: sys.k(), m1, eps: None })?;
    out.push(Record::new("lss_variance", sample_variance(&z)?).bounded(var_bound));
    let mean = z.iter().sum::<f64>() / reps as f64;
    let eps = 0.1;
    let freq = z.iter().filter(|v| (*v - mean).abs() > eps).count() as f64 / reps as f64;
    let cheb = concentration(&Kernel::LssChebyshev { k: sys.k(), m1, eps: Some(eps) })?;
    out.push(Record::new("lss_chebyshev_freq", freq).bounded(cheb));
    Ok(out)
}

// ------------------------------------------------------------- equivalence

fn equivalence_cell(cfg: &SuiteConfig, sys: &SystemConfig, seed: u64) -> Result<Vec<Record>> {
    let f = &cfg.shaping;
    let q = &cfg.quantizer;
    let orig = simulate_original(sys, f, q, seed, cfg.trials)?;
    let (y_re, y_im): (Vec<f64>, Vec<f64>) = orig.iter().map(|o| (o.y[0].re, o.y[0].im)).unzip();
    let mut yh_re = Vec::with_capacity(cfg.trials);
    let mut yh_im = Vec::with_capacity(cfg.trials);
    let opts = EquivalentOptions { channel_reuse: 1, ..Default::default() };
    EquivalentModel::new(sys, f, q).for_each(
        seed ^ EQUIVALENT_SEED_OFFSET,
        0..cfg.trials,
        &opts,
        |_, d| {
            yh_re.push(d.y_hat[0].re);
            yh_im.push(d.y_hat[0].im);
            Ok(())
        },
    )?;
    Ok(vec![
        Record::new("ks_re_y1", ks_two_sample(&y_re, &yh_re)?).bounded(cfg.ks_tolerance),
        Record::new("ks_im_y1", ks_two_sample(&y_im, &yh_im)?).bounded(cfg.ks_tolerance),
    ])
}

// ----------------------------------------------------------- converge-sinr

fn converge_sinr_cell(cfg: &SuiteConfig, sys: &SystemConfig, seed: u64) -> Result<Vec<Record>> {
    let (f, q) = (&cfg.shaping, &cfg.quantizer);
    let model = asymptotic_model(sys, f, q)?;
    let bar = sinr_bar_from_model(&model, sys.gamma())?.value();
    let mut acc = BatchedSinr::new(sys.sigma2_sym(), BATCHES);
    EquivalentModel::new(sys, f, q).for_each(seed, 0..cfg.trials, &eq_opts(cfg), |t, d| {
        let b = batch_of(t, cfg.trials);
        for i in 0..d.s.len() {
            acc.push(b, d.s[i], d.y_hat[i]);
        }
        Ok(())
    })?;
    let hat = acc.estimate()?;
    let gap = (hat.value - bar).abs();
    Ok(vec![
        Record::new("sinr_hat", hat.value).se(hat.std_error),
        Record::new("sinr_bar", bar),
        Record::new("sinr_gap", gap).se(hat.std_error),
        Record::new("sinr_rel_gap", gap / bar).bounded(cfg.rel_tolerance),
    ])
}

// ------------------------------------------------------------ converge-sep

fn sep_bar_value(sys: &SystemConfig, model: &crate::models::ScalarModel, rule: &DecisionRule, seed: u64) -> Result<f64> {
    if *sys.constellation() == Constellation::qpsk() {
        sep_bar_qpsk_exact(model, rule.beta())
    } else {
        Ok(sep_bar(model, rule, sys, seed, 1_000_000)?.value)
    }
}

fn converge_sep_cell(cfg: &SuiteConfig, sys: &SystemConfig, seed: u64) -> Result<Vec<Record>> {
    let (f, q) = (&cfg.shaping, &cfg.quantizer);
    let model = asymptotic_model(sys, f, q)?;
    let rule = DecisionRule::matched(sys.constellation(), model.ts_bar, model.eta)?;
    let bar = sep_bar_value(sys, &model, &rule, seed)?;
    let mut counter = SepCounter::new(sys.constellation().len(), BATCHES);
    EquivalentModel::new(sys, f, q).for_each(seed, 0..cfg.trials, &eq_opts(cfg), |t, d| {
        let b = batch_of(t, cfg.trials);
        for i in 0..d.s.len() {
            let sent = rule.index_of(d.s[i]).expect("symbol from the constellation");
            counter.push(b, sent, rule.decide_index(d.y_hat[i]));
        }
        Ok(())
    })?;
    let hat = counter.estimate();
    Ok(vec![
        Record::new("sep_hat", hat.value).se(hat.std_error),
        Record::new("sep_bar", bar),
        Record::new("sep_gap", (hat.value - bar).abs())
            .se(hat.std_error)
            .bounded(cfg.abs_tolerance),
    ])
}

// -------------------------------------------------------------- kyfan-rate

/// Empirical Ky Fan distances `d_KF(T_s, T_s_bar)` and `d_KF(T_g g_2, T_g_bar g_2)`.
pub fn ky_fan_pair(
    sys: &SystemConfig,
    f: &ShapingFunction,
    q: &QuantizerSpec,
    seed: u64,
    trials: usize,
    opts: &EquivalentOptions,
) -> Result<(f64, f64)> {
    let model = asymptotic_model(sys, f, q)?;
    let mut ts = Vec::with_capacity(trials);
    let mut tg = Vec::with_capacity(trials * sys.k());
    EquivalentModel::new(sys, f, q).for_each(seed, 0..trials, opts, |_, d| {
        ts.push((d.ts - model.ts_bar).norm());
        let dg = d.tg - model.tg_bar;
        tg.extend(d.g2.iter().map(|g| (g * dg).norm()));
        Ok(())
    })?;
    Ok((ky_fan_from_deviations(ts)?, ky_fan_from_deviations(tg)?))
}

fn kyfan_cell(cfg: &SuiteConfig, sys: &SystemConfig, seed: u64) -> Result<Vec<Record>> {
    let (f, q) = (&cfg.shaping, &cfg.quantizer);
    let (kf_ts, kf_tg) = ky_fan_pair(sys, f, q, seed, cfg.trials, &eq_opts(cfg))?;
    let p = CascadeParams::from_model(sys, f, q)?;
    let k = sys.k() as f64;
    Ok(vec![
        Record::new("kf_ts", kf_ts).bounded(kf_rate(k, kf_constant_ts(&p, k)?)?),
        Record::new("kf_tg", kf_tg).bounded(kf_rate(k, kf_constant_tg(&p, k)?)?),
    ])
}

// ------------------------------------------------------------ bounds-audit

fn bounds_audit_cell(cfg: &SuiteConfig, sys: &SystemConfig, seed: u64) -> Result<Vec<Record>> {
    let (f, q) = (&cfg.shaping, &cfg.quantizer);
    let opts = eq_opts(cfg);
    let model = asymptotic_model(sys, f, q)?;

    // SEP gap with eta fixed to its asymptotic value in both models.
    let rule = DecisionRule::matched(sys.constellation(), model.ts_bar, model.eta)?;
    let fixed = functional_models(sys, f, q, Some(model.eta))?;
    let mut counter = SepCounter::new(sys.constellation().len(), BATCHES);
    let mut ts_dev = Vec::with_capacity(cfg.trials);
    let mut tg_dev = Vec::with_capacity(cfg.trials * sys.k());
    fixed.for_each_pair(seed, 0..cfg.trials, &opts, |t, d, _| {
        let b = batch_of(t, cfg.trials);
        for i in 0..d.s.len() {
            let sent = rule.index_of(d.s[i]).expect("symbol from the constellation");
            counter.push(b, sent, rule.decide_index(d.y_hat[i]));
        }
        ts_dev.push((d.ts - model.ts_bar).norm());
        let dg = d.tg - model.tg_bar;
        tg_dev.extend(d.g2.iter().map(|g| (g * dg).norm()));
        Ok(())
    })?;
    let sep_hat = counter.estimate();
    let sep_bar = sep_bar_value(sys, &model, &rule, seed)?;
    let kf_ts = ky_fan_from_deviations(ts_dev)?;
    let kf_tg = ky_fan_from_deviations(tg_dev)?;
    let lm = sep_sensitivity_lm(sys, &model, rule.beta())?;
    let sep_bound = sep_gap_bound(&lm, kf_ts, kf_tg)?;

    // SINR gap with the per-draw eta in y_hat and the asymptotic one in y_bar.
    let free = functional_models(sys, f, q, None)?;
    let mut sinr = BatchedSinr::new(sys.sigma2_sym(), BATCHES);
    let mut l2 = L2Accumulator::default();
    free.for_each_pair(seed, 0..cfg.trials, &opts, |t, d, yb| {
        let b = batch_of(t, cfg.trials);
        for i in 0..d.s.len() {
            sinr.push(b, d.s[i], d.y_hat[i]);
            l2.push(d.y_hat[i], yb[i]);
        }
        Ok(())
    })?;
    let sinr_hat = sinr.estimate()?;
    let sinr_bar = sinr_bar_from_model(&model, sys.gamma())?.value();
    let lk = sinr_sensitivity_lk(sys, &model)?;
    let l2v = l2.mean_sq().sqrt();

    Ok(vec![
        Record::new("sep_hat", sep_hat.value).se(sep_hat.std_error),
        Record::new("sep_bar", sep_bar),
        Record::new("kf_ts", kf_ts),
        Record::new("kf_tg", kf_tg),
        Record::new("l_m_mean", lm.iter().sum::<f64>() / lm.len() as f64),
        Record::new("sep_gap", (sep_hat.value - sep_bar).abs()).bounded(sep_bound),
        Record::new("sinr_hat", sinr_hat.value).se(sinr_hat.std_error),
        Record::new("sinr_bar", sinr_bar),
        Record::new("l2_deviation", l2v),
        Record::new("l_k", lk),
        Record::new("sinr_gap", (sinr_hat.value - sinr_bar).abs()).bounded(lk * l2v),
    ])
}

/// Quantizer moment and envelope checks (seed- and K-independent).
pub fn quantizer_audit(q: &QuantizerSpec) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    let alpha = 1.0;
    let gm = q.gaussian_moments(alpha)?;
    if matches!(q.kind(), crate::quantizer::QuantizerKind::OneBit { .. }) {
        // E[Z^H q(alpha Z)] = sqrt(2/pi) for unit output modulus; scales with M_0.
        let exact = (2.0 / std::f64::consts::PI).sqrt() * q.m0();
        out.push(Record::new("ezq_closed_form_error", (gm.ezq - exact).norm()).bounded(1e-6));
    }
    let n = 1_000_000;
    let mut rng = RngStream::auxiliary(0x0E2A, 0);
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    fill_complex_gaussian(&mut z, 1.0, &mut rng);
    let mc = z.iter().map(|&v| v.conj() * q.quantize(v * alpha)).sum::<Complex64>() / n as f64;
    out.push(Record::new("ezq_mc_error", (mc - gm.ezq).norm()).bounded(3e-3));

    let side = 121;
    let grid: Vec<Complex64> = (0..side)
        .flat_map(|i| {
            (0..side).map(move |j| {
                let x = -3.0 + 6.0 * i as f64 / (side - 1) as f64;
                let y = -3.0 + 6.0 * j as f64 / (side - 1) as f64;
                Complex64::new(x, y)
            })
        })
        .collect();
    for tau in [0.5, 0.1, 0.02] {
        let mut violations = 0usize;
        let mut excess: f64 = 0.0;
        for comp in [Component::Re, Component::Im] {
            let env = envelope(q, comp, tau)?;
            let vals: Vec<(f64, f64, f64)> = grid
                .iter()
                .map(|&x| {
                    let (l, u) = env.pair(x);
                    (l, env.value(x), u)
                })
                .collect();
            violations += vals.iter().filter(|(l, g, u)| l > &(g + 1e-12) || g > &(u + 1e-12)).count();
            for i in 0..side {
                for j in 0..side {
                    let a = i * side + j;
                    for b in [(i + 1 < side).then(|| a + side), (j + 1 < side).then(|| a + 1)]
                        .into_iter()
                        .flatten()
                    {
                        let dist = (grid[a] - grid[b]).norm();
                        let sl = (vals[a].0 - vals[b].0).abs() / dist;
                        let su = (vals[a].2 - vals[b].2).abs() / dist;
                        excess = excess.max(sl.max(su) - 1.0 / tau);
                    }
                }
            }
        }
        out.push(
            Record::new("envelope_sandwich_violations", violations as f64)
                .bounded(0.0)
                .note(format!("tau = {tau}")),
        );
        out.push(
            Record::new("envelope_lipschitz_excess", excess.max(0.0))
                .bounded(1e-9)
                .note(format!("tau = {tau}")),
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------- optimize

fn optimize_cell(cfg: &SuiteConfig, sys: &SystemConfig, seed: u64) -> Result<Vec<Record>> {
    let q = &cfg.quantizer;
    let opts = FiniteOptions { channel_reuse: cfg.channel_reuse.max(1), batches: BATCHES };
    let gap = optimal_gap_report(sys, q, &cfg.grid, seed, cfg.trials, &opts)?;
    let feas = feasibility_deviation(sys, q, &cfg.grid, seed, cfg.reps.max(2))?;

    let asym = &gap.asymptotic;
    let fin = &gap.finite;
    let star = (&asym.best.f, &asym.best.sigma);
    let diameter = asym
        .profile
        .iter()
        .map(|p| point_distance(sys, (&p.f, &p.sigma), star))
        .fold(0.0, f64::max);
    let taus: Vec<f64> = (0..=200).map(|i| diameter * i as f64 / 200.0).collect();
    let growth = growth_psi(sys, asym, &taus)?;
    let sol_dist = point_distance(sys, (&fin.best.f, &fin.best.sigma_mean), star);
    let psi_bound = growth.big_psi(feas.deviation.value + gap.l_rho * gap.sup_deviation);
    let ineq = inequality_constrained_best(sys, q, &cfg.grid, &[0.25, 0.5, 0.75, 0.9, 1.0])?;

    let log_param = |p: f64| if p == 0.0 { f64::NEG_INFINITY } else { p.ln() };
    let arg_dist = (log_param(fin.best.param) - log_param(asym.best.param)).abs();
    let mut out = vec![
        Record::new("v_finite", fin.value()).se(fin.best.sinr.std_error),
        Record::new("v_asymptotic", asym.value()),
        Record::new("value_gap", gap.gap).bounded(gap.report.value),
        Record::new("rel_value_gap", gap.relative_gap()).bounded(cfg.rel_tolerance),
        Record::new("l_rho", gap.l_rho),
        Record::new("sup_deviation", gap.sup_deviation),
        Record::new("argmax_finite", fin.best.param),
        Record::new("argmax_asymptotic", asym.best.param),
        Record::new("argmax_log_distance", if arg_dist.is_nan() { 0.0 } else { arg_dist })
            .bounded(cfg.grid.log_cell_width()),
        Record::new("feasibility_deviation", feas.deviation.value).se(feas.deviation.std_error),
        Record::new("hausdorff_surrogate", feas.hausdorff).bounded(feas.deviation.value + 1e-12),
        Record::new("solution_distance", sol_dist)
            .bounded(psi_bound)
            .note("family-restricted growth surrogate"),
        Record::new("inequality_excess", (ineq - asym.value()).max(0.0)).bounded(1e-9),
    ];
    if !fin.skipped.is_empty() {
        let msg: Vec<String> = fin.skipped.iter().map(|s| format!("{}: {}", s.param, s.reason)).collect();
        out.push(Record::new("skipped_points", fin.skipped.len() as f64).note(msg.join("; ")));
    }
    Ok(out)
}

// -------------------------------------------------------------- tail-audit

fn tail_audit_cell(cfg: &SuiteConfig, sys: &SystemConfig, seed: u64) -> Result<Vec<Record>> {
    let (n, k) = (sys.n(), sys.k());
    let law = sys.mp_law();
    let (_, hi) = law.d_edges();
    let sigma_fn = |d: f64| d * d;
    let m1 = hi * hi;
    let mean = mp_moment(sigma_fn, &law)?;
    let reps = cfg.reps.max(1);
    let stats: Vec<(f64, f64)> = (0..reps)
        .map(|r| {
            let d = sample_singular_values(n, k, &mut RngStream::auxiliary(seed, r as u64))?;
            let mut rng = RngStream::new(seed, r as u64);
            let mut g1 = vec![Complex64::new(0.0, 0.0); k];
            let mut g2 = vec![Complex64::new(0.0, 0.0); k];
            fill_complex_gaussian(&mut g1, 1.0, &mut rng);
            fill_complex_gaussian(&mut g2, 1.0, &mut rng);
            let quad: f64 = d.iter().zip(&g1).map(|(&di, g)| sigma_fn(di) * g.norm_sqr()).sum::<f64>() / k as f64;
            let cross: Complex64 = d
                .iter()
                .zip(g1.iter().zip(&g2))
                .map(|(&di, (a, b))| a.conj() * b * sigma_fn(di))
                .sum::<Complex64>()
                / k as f64;
            Ok(((quad - mean).abs(), cross.norm()))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for &eps in &cfg.eps {
        let fq = stats.iter().filter(|s| s.0 >= eps).count() as f64 / reps as f64;
        let fc = stats.iter().filter(|s| s.1 >= eps).count() as f64 / reps as f64;
        let bq = concentration(&Kernel::QuadForm { k, m1, eps })?;
        let bc = concentration(&Kernel::CrossForm { k, m1, eps })?;
        out.push(Record::new("quad_form_tail", fq).bounded(bq).note(format!("eps = {eps}")));
        out.push(Record::new("cross_form_tail", fc).bounded(bc).note(format!("eps = {eps}")));
    }

    // Empirical tails of T_g and T_s against the cascades at this K.
    let (f, q) = (&cfg.shaping, &cfg.quantizer);
    let model = asymptotic_model(sys, f, q)?;
    let p = CascadeParams::from_model(sys, f, q)?;
    let mut tg = Vec::with_capacity(cfg.trials);
    let mut ts = Vec::with_capacity(cfg.trials);
    EquivalentModel::new(sys, f, q).for_each(seed, 0..cfg.trials, &eq_opts(cfg), |_, d| {
        tg.push((d.tg - model.tg_bar).abs());
        ts.push((d.ts - model.ts_bar).norm());
        Ok(())
    })?;
    for &eps in &cfg.eps {
        for (name, dev, eval) in [
            ("tg_tail", &tg, evaluate_tg(eps, k as f64, &p)?),
            ("ts_tail", &ts, evaluate_ts(eps, k as f64, &p)?),
        ] {
            let freq = dev.iter().filter(|v| **v >= eps).count() as f64 / dev.len() as f64;
            let regime = if eval.above_threshold() {
                "above threshold".to_string()
            } else {
                format!("below threshold K_hat = {:.3e}; bound not asserted", eval.k_hat)
            };
            out.push(
                Record::new(name, freq)
                    .bounded(eval.bound)
                    .note(format!("eps = {eps}; {regime}")),
            );
        }
    }
    Ok(out)
}

/// `R(eps, K)` and `R_tilde(eps, K)` along the cascade ladder.
fn cascade_ladder(cfg: &SuiteConfig) -> Result<Vec<Record>> {
    let sys = cfg.system(cfg.k_ladder[0])?;
    let p = CascadeParams::from_model(&sys, &cfg.shaping, &cfg.quantizer)?;
    let mut out = Vec::new();
    for &eps in &cfg.eps {
        for &k in &cfg.cascade_ladder {
            let g = evaluate_tg(eps, k, &p)?;
            let s = evaluate_ts(eps, k, &p)?;
            let mut rg = Record::new("cascade_r", g.bound).note(format!("eps = {eps}; K_hat = {:.3e}", g.k_hat));
            rg.k = k as u64;
            let mut rs = Record::new("cascade_r_tilde", s.bound).note(format!("eps = {eps}; K_hat = {:.3e}", s.k_hat));
            rs.k = k as u64;
            out.push(rg);
            out.push(rs);
        }
    }
    Ok(out)
}

/// `R(eps, K)` and `R_tilde(eps, K)` at the given (possibly astronomically large) `K`.
pub fn cascade_values(cfg: &SuiteConfig, eps: f64, ks: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let sys = cfg.system(cfg.k_ladder[0])?;
    let p = CascadeParams::from_model(&sys, &cfg.shaping, &cfg.quantizer)?;
    ks.iter()
        .map(|&k| Ok((k, evaluate_tg(eps, k, &p)?.bound, evaluate_ts(eps, k, &p)?.bound)))
        .collect()
}

// ------------------------------------------------------------------ checks

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// `metric -> seed -> [(K, value)]` in ladder order.
fn series(records: &[Record], metric: &str) -> BTreeMap<u64, Vec<(u64, f64)>> {
    let mut m: BTreeMap<u64, Vec<(u64, f64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.metric == metric) {
        m.entry(r.seed).or_default().push((r.k, r.value));
    }
    for v in m.values_mut() {
        v.sort_by_key(|p| p.0);
    }
    m
}

fn all_hold(records: &[Record], metric: &str, k: Option<u64>) -> (bool, usize, usize) {
    let sel: Vec<&Record> = records
        .iter()
        .filter(|r| r.metric == metric && k.is_none_or(|k| r.k == k))
        .collect();
    let ok = sel.iter().filter(|r| r.holds == Some(true)).count();
    (!sel.is_empty() && ok == sel.len(), ok, sel.len())
}

fn hold_check(name: &str, records: &[Record], metric: &str, k: Option<u64>) -> Check {
    let (pass, ok, n) = all_hold(records, metric, k);
    let worst = records
        .iter()
        .filter(|r| r.metric == metric && k.is_none_or(|k| r.k == k))
        .filter_map(|r| r.bound.map(|b| (r.value, b)))
        .max_by(|a, b| (a.0 - a.1).total_cmp(&(b.0 - b.1)));
    let detail = match worst {
        Some((v, b)) => format!("{ok}/{n} hold; tightest value {v:.4e} vs bound {b:.4e}"),
        None => format!("{ok}/{n} hold"),
    };
    Check::new(name, pass, detail)
}

fn decreasing_check(name: &str, records: &[Record], metric: &str) -> Check {
    let s = series(records, metric);
    let mut bad = Vec::new();
    for (seed, v) in &s {
        let vals: Vec<f64> = v.iter().map(|p| p.1).collect();
        if vals.len() < 2 || !strictly_decreasing(&vals) {
            bad.push(format!("seed {seed}: {vals:.4?}"));
        }
    }
    let pass = !s.is_empty() && bad.is_empty();
    let detail = if pass {
        format!("strictly decreasing for {} seeds", s.len())
    } else if s.is_empty() {
        format!("no `{metric}` records")
    } else {
        bad.join("; ")
    };
    Check::new(name, pass, detail)
}

fn no_errors(records: &[Record]) -> Check {
    let errs: Vec<String> = records
        .iter()
        .filter(|r| r.metric == "error")
        .map(|r| format!("seed {} K {}: {}", r.seed, r.k, r.note.clone().unwrap_or_default()))
        .collect();
    Check::new("no-cell-errors", errs.is_empty(), if errs.is_empty() { "all cells ran".into() } else { errs.join("; ") })
}

fn checks(cfg: &SuiteConfig, records: &[Record]) -> Vec<Check> {
    let kmax = *cfg.k_ladder.last().expect("validated") as u64;
    let mut out = vec![no_errors(records)];
    match cfg.suite {
        Suite::MpCheck => {
            out.push(hold_check("support-containment", records, "support_violation", None));
            out.push(hold_check("lss-variance", records, "lss_variance", None));
            out.push(hold_check("lss-chebyshev", records, "lss_chebyshev_freq", None));
        }
        Suite::Equivalence => {
            out.push(hold_check("ks-real-part", records, "ks_re_y1", None));
        }
        Suite::ConvergeSinr => {
            out.push(decreasing_check("sinr-gap-decreasing", records, "sinr_gap"));
            out.push(hold_check("sinr-rel-gap-at-max-k", records, "sinr_rel_gap", Some(kmax)));
        }
        Suite::ConvergeSep => {
            out.push(hold_check("sep-gap-at-max-k", records, "sep_gap", Some(kmax)));
        }
        Suite::KyfanRate => {
            out.push(decreasing_check("kf-ts-decreasing", records, "kf_ts"));
            let s = series(records, "kf_ts");
            let mut slopes = Vec::new();
            let mut pass = !s.is_empty();
            for (seed, v) in &s {
                let x: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
                let y: Vec<f64> = v.iter().map(|p| p.1).collect();
                match loglog_fit(&x, &y) {
                    Ok(fit) => {
                        pass &= fit.slope <= cfg.max_slope;
                        slopes.push(format!("seed {seed}: {:.3}", fit.slope));
                    }
                    Err(e) => {
                        pass = false;
                        slopes.push(format!("seed {seed}: {e}"));
                    }
                }
            }
            out.push(Check::new(
                "kf-ts-loglog-slope",
                pass,
                format!("slopes {} (limit {})", slopes.join(", "), cfg.max_slope),
            ));
        }
        Suite::BoundsAudit => {
            out.push(hold_check("sep-gap-bound", records, "sep_gap", None));
            out.push(hold_check("sinr-gap-bound", records, "sinr_gap", None));
            for m in [
                "ezq_closed_form_error",
                "ezq_mc_error",
                "envelope_sandwich_violations",
                "envelope_lipschitz_excess",
            ] {
                if records.iter().any(|r| r.metric == m) {
                    out.push(hold_check(&m.replace('_', "-"), records, m, None));
                }
            }
        }
        Suite::Optimize => {
            out.push(hold_check("rel-value-gap-at-max-k", records, "rel_value_gap", Some(kmax)));
            out.push(decreasing_check("value-gap-decreasing", records, "value_gap"));
            out.push(hold_check("value-gap-bound", records, "value_gap", None));
            out.push(decreasing_check("feasibility-deviation-decreasing", records, "feasibility_deviation"));
        }
        Suite::TailAudit => {
            out.push(hold_check("quad-form-tail", records, "quad_form_tail", None));
            out.push(hold_check("cross-form-tail", records, "cross_form_tail", None));
            for (metric, name) in [("cascade_r", "cascade-r"), ("cascade_r_tilde", "cascade-r-tilde")] {
                let mut per_eps: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
                for r in records.iter().filter(|r| r.metric == metric) {
                    let key = r.note.clone().unwrap_or_default();
                    let key = key.split(';').next().unwrap_or("").to_string();
                    per_eps.entry(key).or_default().push((r.k, r.value));
                }
                let mut pass = !per_eps.is_empty();
                let mut detail = Vec::new();
                for (eps, mut v) in per_eps {
                    v.sort_by_key(|p| p.0);
                    let vals: Vec<f64> = v.iter().map(|p| p.1).collect();
                    let ok = vals.iter().all(|x| x.is_finite() && *x > 0.0) && strictly_decreasing(&vals);
                    pass &= ok;
                    detail.push(format!("{eps}: {}", sci(&vals)));
                }
                out.push(Check::new(&format!("{name}-finite-positive-decreasing"), pass, detail.join("; ")));
            }
            let limits = cascade_values(cfg, cfg.eps[0], &[1e100, 1e150, 1e200]);
            let (pass, detail) = match limits {
                Ok(v) => {
                    let rg: Vec<f64> = v.iter().map(|t| t.1).collect();
                    let rs: Vec<f64> = v.iter().map(|t| t.2).collect();
                    let ok = rg.last().is_some_and(|x| *x < 1e-6) && rs.last().is_some_and(|x| *x < 1e-6);
                    (ok, format!("K = 1e100, 1e150, 1e200: R {}, R_tilde {}", sci(&rg), sci(&rs)))
                }
                Err(e) => (false, e.to_string()),
            };
            out.push(Check::new("cascades-vanish", pass, detail));
            out.push(hold_check("tg-empirical-tail", records, "tg_tail", None));
            out.push(hold_check("ts-empirical-tail", records, "ts_tail", None));
        }
    }
    out
}

/// Re-exported so that callers can build default-sized configs without
/// depending on the suite enum layout.
pub fn default_config(name: &str) -> Result<SuiteConfig> {
    match Suite::parse(name) {
        Some(s) => Ok(SuiteConfig::new(s)),
        None => invalid(format!("unknown suite `{name}`")),
    }
}
