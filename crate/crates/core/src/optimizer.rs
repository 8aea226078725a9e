//! SINR maximization over the RZF family (with the MF and ZF endpoints),
//! asymptotically and at finite `(N, K)`, together with the stability
//! diagnostics that compare the two problems.

use crate::bounds::{functional_lk, BoundReport};
use crate::error::{invalid, QprecError, Result};
use crate::metrics::{sinr_bar_from_model, BatchedSinr, Estimate, L2Accumulator};
use crate::models::{
    alpha_tilde_finite, asymptotic_model, asymptotic_model_with_eta, scalar_model_at,
    scalar_output, EquivalentModel, EquivalentOptions, ShapingFunction, SystemConfig,
};
use crate::quantizer::QuantizerSpec;
use crate::spectral::sample_singular_values;
use crate::stochastic::{fill_complex_gaussian, RngStream};
use crate::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Minimum number of Monte-Carlo trials per grid point in the finite solve.
pub const MIN_FINITE_TRIALS: usize = 1000;

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Number of points used to evaluate sup-norm distances on the MP support.
const SUP_GRID: usize = 1024;

/// Candidate set for the shaping function: RZF on log-spaced `rho`,
/// optionally with the MF (`rho -> inf`) and ZF (`rho -> 0`) endpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyGrid {
    /// Strictly increasing regularization parameters.
    pub rhos: Vec<f64>,
    pub include_endpoints: bool,
    /// Rounds of golden-section refinement on the best bracket.
    pub refinement_depth: usize,
    /// Golden-section iterations per round.
    pub golden_iterations: usize,
}

/// One candidate precoder. `param` is `rho` for RZF, `+inf` for MF and `0` for ZF.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMember {
    pub param: f64,
    pub f: ShapingFunction,
}

/// Family-wide bounds on the MP support `Theta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyCertificate {
    /// `max_f sup_Theta |f|`
    pub sup_norm: f64,
    /// `max_f Lip(f)` on `Theta`
    pub lipschitz: f64,
    /// `max_f M_1(f)`
    pub m1: f64,
}

impl FamilyGrid {
    /// `points` log-spaced values of `rho` in `[lo, hi]`, endpoints included,
    /// two refinement rounds.
    pub fn log_spaced(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
            return invalid(format!("family grid: need 0 < lo < hi, got [{lo}, {hi}]"));
        }
        if points < 2 {
            return invalid("family grid: at least two points");
        }
        let (a, b) = (lo.ln(), hi.ln());
        let rhos = (0..points)
            .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
            .collect();
        Ok(Self {
            rhos,
            include_endpoints: true,
            refinement_depth: 2,
            golden_iterations: 12,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.rhos.is_empty() && !self.include_endpoints {
            return invalid("family grid is empty");
        }
        if self.rhos.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return invalid("family grid: every rho must be finite and > 0");
        }
        if self.rhos.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("family grid: rho values must be strictly increasing");
        }
        Ok(())
    }

    /// Grid with a midpoint (in `log rho`) inserted between neighbours.
    pub fn densified(&self) -> Self {
        let mut rhos = Vec::with_capacity(2 * self.rhos.len());
        for w in self.rhos.windows(2) {
            rhos.push(w[0]);
            rhos.push((w[0] * w[1]).sqrt());
        }
        rhos.extend(self.rhos.last());
        Self { rhos, ..self.clone() }
    }

    /// Largest spacing of neighbouring grid points in `log rho`.
    pub fn log_cell_width(&self) -> f64 {
        self.rhos
            .windows(2)
            .map(|w| (w[1] / w[0]).ln())
            .fold(0.0, f64::max)
    }

    /// ZF (if included), the RZF points in increasing `rho`, then MF.
    pub fn members(&self) -> Vec<GridMember> {
        let mut out = Vec::with_capacity(self.rhos.len() + 2);
        if self.include_endpoints {
            out.push(GridMember { param: 0.0, f: ShapingFunction::zf() });
        }
        for &rho in &self.rhos {
            out.push(GridMember {
                param: rho,
                f: ShapingFunction::rzf(rho).expect("validated rho"),
            });
        }
        if self.include_endpoints {
            out.push(GridMember { param: f64::INFINITY, f: ShapingFunction::mf() });
        }
        out
    }

    /// Bounds `sup |f|`, `Lip(f)` and `M_1(f)` over every member on the MP
    /// support of `config`; fails if any of them is not finite.
    pub fn certify(&self, config: &SystemConfig) -> Result<FamilyCertificate> {
        self.validate()?;
        let (lo, hi) = config.mp_law().d_edges();
        let mut c = FamilyCertificate { sup_norm: 0.0, lipschitz: 0.0, m1: 0.0 };
        for m in self.members() {
            c.sup_norm = c.sup_norm.max(m.f.sup_on(lo, hi));
            c.lipschitz = c.lipschitz.max(m.f.lipschitz_on(lo, hi));
            c.m1 = c.m1.max(m.f.m1_on(lo, hi));
        }
        if !(c.sup_norm.is_finite() && c.lipschitz.is_finite() && c.m1.is_finite()) {
            return Err(QprecError::Hypothesis(
                "family grid: members are not bounded and Lipschitz on the MP support".into(),
            ));
        }
        Ok(c)
    }
}

/// `(eta, alpha)` pinned by the power and scaling equalities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaPair {
    pub eta: f64,
    pub alpha: f64,
}

impl SigmaPair {
    pub fn new(eta: f64, alpha: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0 && alpha.is_finite() && alpha > 0.0) {
            return invalid(format!("sigma pair must be positive, got ({eta}, {alpha})"));
        }
        Ok(Self { eta, alpha })
    }

    /// `|eta - eta'| + |alpha - alpha'|`, the product norm used on `(f, eta, alpha)`.
    pub fn distance(&self, other: &SigmaPair) -> f64 {
        (self.eta - other.eta).abs() + (self.alpha - other.alpha).abs()
    }
}

/// `alpha(f) = sqrt(sigma_s^2 E[f^2(d)] / gamma)` and `eta(f) = sqrt(P_T / E|q(alpha Z)|^2)`.
pub fn sigma_asymptotic(
    f: &ShapingFunction,
    config: &SystemConfig,
    q: &QuantizerSpec,
) -> Result<SigmaPair> {
    let m = asymptotic_model(config, f, q)?;
    SigmaPair::new(m.eta, m.alpha_bar)
}

/// The randomness `(s, g_1, z_1, D)` entering the finite-dimensional constraints.
#[derive(Clone, Debug)]
pub struct ConstraintDraw {
    pub s: Vec<Complex64>,
    pub g1: Vec<Complex64>,
    pub z1: Vec<Complex64>,
    pub d: Vec<f64>,
}

impl ConstraintDraw {
    /// Draw `t`: `D` from auxiliary stream `(seed, t)`, then `s`, `g_1`, `z_1`
    /// from stream `(seed, t)`.
    pub fn sample(config: &SystemConfig, seed: u64, t: u64) -> Result<Self> {
        let (n, k) = (config.n(), config.k());
        let d = sample_singular_values(n, k, &mut RngStream::auxiliary(seed, t))?;
        let mut rng = RngStream::new(seed, t);
        let cons = config.constellation();
        let s = (0..k).map(|_| cons.draw(&mut rng)).collect();
        let mut g1 = vec![Complex64::new(0.0, 0.0); k];
        fill_complex_gaussian(&mut g1, 1.0, &mut rng);
        let mut z1 = vec![Complex64::new(0.0, 0.0); n];
        fill_complex_gaussian(&mut z1, 1.0, &mut rng);
        Ok(Self { s, g1, z1, d })
    }
}

/// `alpha_{N,K}(f) = (||s|| / ||g_1||) ||f(D)^T g_1|| / ||z_1||` and
/// `eta_{N,K}(f) = sqrt(N P_T) / ||q(alpha_{N,K}(f) z_1)||` for one draw.
pub fn sigma_finite(
    f: &ShapingFunction,
    draw: &ConstraintDraw,
    config: &SystemConfig,
    q: &QuantizerSpec,
) -> Result<SigmaPair> {
    let alpha = alpha_tilde_finite(f, &draw.s, &draw.g1, &draw.z1, &draw.d)?;
    let mut x = Vec::new();
    q.quantize_scaled(alpha, &draw.z1, &mut x);
    let xn = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if xn == 0.0 {
        return Err(QprecError::DegenerateQuantizer);
    }
    SigmaPair::new((config.n() as f64 * config.power_limit()).sqrt() / xn, alpha)
}

/// One evaluated point of the asymptotic profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub param: f64,
    pub f: ShapingFunction,
    pub sigma: SigmaPair,
    pub value: f64,
}

/// A grid point whose evaluation failed and was left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub param: f64,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticSolution {
    pub best: ProfilePoint,
    /// Grid members followed by the refinement evaluations.
    pub profile: Vec<ProfilePoint>,
    pub skipped: Vec<SkippedPoint>,
}

impl AsymptoticSolution {
    pub fn value(&self) -> f64 {
        self.best.value
    }

    /// Grid members only, in grid order.
    pub fn grid_profile(&self, grid: &FamilyGrid) -> Vec<ProfilePoint> {
        let n = grid.members().len() - self.skipped.len();
        self.profile[..n].to_vec()
    }
}

fn asymptotic_point(config: &SystemConfig, q: &QuantizerSpec, m: GridMember) -> Result<ProfilePoint> {
    let model = asymptotic_model(config, &m.f, q)?;
    let value = sinr_bar_from_model(&model, config.gamma())?.value();
    if !value.is_finite() {
        return Err(QprecError::Numerical(format!("SINR_bar not finite at {}", m.f.label())));
    }
    Ok(ProfilePoint {
        param: m.param,
        f: m.f,
        sigma: SigmaPair::new(model.eta, model.alpha_bar)?,
        value,
    })
}

fn rzf_member(log_rho: f64) -> GridMember {
    let rho = log_rho.exp();
    GridMember { param: rho, f: ShapingFunction::rzf(rho).expect("finite rho") }
}

/// Golden-section maximization of `eval` over `log rho` in `[lo, hi]`,
/// repeated `rounds` times on the bracket left by the previous round
/// recentred on the best point so far. Every evaluation is recorded.
fn refine<P, E>(
    lo: f64,
    hi: f64,
    rounds: usize,
    iterations: usize,
    start: (f64, f64),
    mut eval: E,
    value_of: impl Fn(&P) -> f64,
    record: &mut Vec<P>,
) -> (f64, f64)
where
    E: FnMut(f64) -> Option<P>,
{
    let mut best = start;
    let (mut a, mut b) = (lo, hi);
    let mut f = |t: f64, best: &mut (f64, f64), record: &mut Vec<P>| -> f64 {
        match eval(t) {
            Some(p) => {
                let v = value_of(&p);
                record.push(p);
                if v > best.1 {
                    *best = (t, v);
                }
                v
            }
            None => f64::NEG_INFINITY,
        }
    };
    for _ in 0..rounds {
        if !(b > a) {
            break;
        }
        let mut x1 = b - GOLDEN * (b - a);
        let mut x2 = a + GOLDEN * (b - a);
        let mut f1 = f(x1, &mut best, record);
        let mut f2 = f(x2, &mut best, record);
        for _ in 0..iterations {
            if f1 >= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - GOLDEN * (b - a);
                f1 = f(x1, &mut best, record);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + GOLDEN * (b - a);
                f2 = f(x2, &mut best, record);
            }
        }
        let half = 0.5 * (b - a);
        a = (best.0 - half).max(lo);
        b = (best.0 + half).min(hi);
    }
    best
}

/// Bracket in `log rho` around the RZF member at position `i` of `rhos`.
fn bracket(rhos: &[f64], i: usize) -> (f64, f64) {
    let lo = rhos[i.saturating_sub(1)].ln();
    let hi = rhos[(i + 1).min(rhos.len() - 1)].ln();
    (lo, hi)
}

/// Maximizes `SINR_bar(f, sigma(f))` over the grid, then refines the best
/// RZF bracket by golden-section search in `log rho`.
pub fn solve_asymptotic(
    config: &SystemConfig,
    q: &QuantizerSpec,
    grid: &FamilyGrid,
) -> Result<AsymptoticSolution> {
    grid.validate()?;
    let mut profile = Vec::new();
    let mut skipped = Vec::new();
    for m in grid.members() {
        match asymptotic_point(config, q, m) {
            Ok(p) => profile.push(p),
            Err(e) => skipped.push(SkippedPoint { param: m.param, reason: e.to_string() }),
        }
    }
    let best = *profile
        .iter()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or(QprecError::NoFeasiblePoint)?;
    let mut best_point = best;
    if let Some(i) = grid.rhos.iter().position(|&r| r == best.param) {
        let (lo, hi) = bracket(&grid.rhos, i);
        let mut extra = Vec::new();
        refine(
            lo,
            hi,
            grid.refinement_depth,
            grid.golden_iterations,
            (best.param.ln(), best.value),
            |t| asymptotic_point(config, q, rzf_member(t)).ok(),
            |p: &ProfilePoint| p.value,
            &mut extra,
        );
        if let Some(p) = extra.iter().max_by(|a, b| a.value.total_cmp(&b.value)) {
            if p.value > best_point.value {
                best_point = *p;
            }
        }
        profile.extend(extra);
    }
    Ok(AsymptoticSolution { best: best_point, profile, skipped })
}

/// Monte-Carlo controls of the finite-dimensional solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteOptions {
    pub channel_reuse: usize,
    /// Batches for the batch-means standard errors.
    pub batches: usize,
}

impl Default for FiniteOptions {
    fn default() -> Self {
        Self { channel_reuse: 32, batches: 20 }
    }
}

/// Coupled statistics of one shaping function over a common set of draws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSweep {
    pub param: f64,
    pub f: ShapingFunction,
    /// `SINR_hat` pooled over users and trials with `sigma_{N,K}(f)` per draw.
    pub sinr: Estimate,
    /// `E^{1/2}|y_hat(f, sigma_{N,K}(f)) - y_bar(f, sigma(f))|^2`
    pub d_hat: f64,
    /// `E^{1/2}|y_bar(f, sigma_{N,K}(f)) - y_bar(f, sigma(f))|^2`
    pub d_bar: f64,
    /// Mean of `sigma_{N,K}(f)` over draws.
    pub sigma_mean: SigmaPair,
    /// Mean of `||sigma_{N,K}(f) - sigma(f)||`.
    pub sigma_deviation: f64,
}

impl PointSweep {
    /// `D(Y_{N,K}(f), Y_bar(f)) = d_hat + d_bar`.
    pub fn deviation(&self) -> f64 {
        self.d_hat + self.d_bar
    }
}

/// Runs trials `0..trials` of the equivalent model for `f` on stream `seed`.
/// Trials depend on `f` only through `f(D)`, so the same seed gives common
/// random numbers across shaping functions.
pub fn sweep_point(
    config: &SystemConfig,
    q: &QuantizerSpec,
    member: GridMember,
    seed: u64,
    trials: usize,
    opts: &FiniteOptions,
) -> Result<PointSweep> {
    if trials == 0 {
        return invalid("sweep: trials must be >= 1");
    }
    let f = member.f;
    let model = asymptotic_model(config, &f, q)?;
    let sigma = SigmaPair::new(model.eta, model.alpha_bar)?;
    let eo = EquivalentOptions { channel_reuse: opts.channel_reuse, ..Default::default() };
    let batches = opts.batches.max(2);
    let mut sinr = BatchedSinr::new(config.sigma2_sym(), batches);
    let mut d_hat = L2Accumulator::default();
    let mut d_bar = L2Accumulator::default();
    let (mut eta_sum, mut alpha_sum, mut dev_sum) = (0.0, 0.0, 0.0);
    EquivalentModel::new(config, &f, q).for_each(seed, 0..trials, &eo, |t, draw| {
        let b = t * batches / trials;
        let nk = scalar_model_at(config, model.moments, q, draw.alpha_nk, Some(draw.eta))?;
        for i in 0..draw.s.len() {
            let (s, g, n) = (draw.s[i], draw.g2[i], draw.noise[i]);
            let yb = scalar_output(&model, s, g, n);
            sinr.push(b, s, draw.y_hat[i]);
            d_hat.push(draw.y_hat[i], yb);
            d_bar.push(scalar_output(&nk, s, g, n), yb);
        }
        eta_sum += draw.eta;
        alpha_sum += draw.alpha_nk;
        dev_sum += SigmaPair { eta: draw.eta, alpha: draw.alpha_nk }.distance(&sigma);
        Ok(())
    })?;
    let n = trials as f64;
    Ok(PointSweep {
        param: member.param,
        f,
        sinr: sinr.estimate()?,
        d_hat: d_hat.mean_sq().sqrt(),
        d_bar: d_bar.mean_sq().sqrt(),
        sigma_mean: SigmaPair::new(eta_sum / n, alpha_sum / n)?,
        sigma_deviation: dev_sum / n,
    })
}

fn skippable(e: &QprecError) -> bool {
    matches!(
        e,
        QprecError::UnstableEstimate { .. }
            | QprecError::DegenerateDraw { .. }
            | QprecError::DegenerateQuantizer
            | QprecError::Numerical(_)
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiniteSolution {
    pub best: PointSweep,
    /// Grid members (minus skipped points) followed by refinement evaluations.
    pub profile: Vec<PointSweep>,
    pub skipped: Vec<SkippedPoint>,
    pub seed: u64,
    pub trials: usize,
}

impl FiniteSolution {
    pub fn value(&self) -> f64 {
        self.best.sinr.value
    }
}

/// Maximizes `SINR_hat(f, sigma_{N,K}(f))` over the grid with common random
/// numbers, then refines the best RZF bracket as in [`solve_asymptotic`].
/// Points whose estimate is unstable or degenerate are skipped and listed.
pub fn solve_finite(
    config: &SystemConfig,
    q: &QuantizerSpec,
    grid: &FamilyGrid,
    seed: u64,
    trials: usize,
    opts: &FiniteOptions,
) -> Result<FiniteSolution> {
    grid.validate()?;
    if trials < MIN_FINITE_TRIALS {
        return invalid(format!(
            "solve_finite: need at least {MIN_FINITE_TRIALS} trials per grid point, got {trials}"
        ));
    }
    let results: Vec<(GridMember, Result<PointSweep>)> = grid
        .members()
        .into_par_iter()
        .map(|m| (m, sweep_point(config, q, m, seed, trials, opts)))
        .collect();
    let mut profile = Vec::new();
    let mut skipped = Vec::new();
    for (m, r) in results {
        match r {
            Ok(p) => profile.push(p),
            Err(e) if skippable(&e) => {
                skipped.push(SkippedPoint { param: m.param, reason: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    }
    let best = *profile
        .iter()
        .max_by(|a, b| a.sinr.value.total_cmp(&b.sinr.value))
        .ok_or(QprecError::NoFeasiblePoint)?;
    let mut best_point = best;
    if let Some(i) = grid.rhos.iter().position(|&r| r == best.param) {
        let (lo, hi) = bracket(&grid.rhos, i);
        let mut extra = Vec::new();
        refine(
            lo,
            hi,
            grid.refinement_depth,
            grid.golden_iterations,
            (best.param.ln(), best.sinr.value),
            |t| sweep_point(config, q, rzf_member(t), seed, trials, opts).ok(),
            |p: &PointSweep| p.sinr.value,
            &mut extra,
        );
        if let Some(p) = extra.iter().max_by(|a, b| a.sinr.value.total_cmp(&b.sinr.value)) {
            if p.sinr.value > best_point.sinr.value {
                best_point = *p;
            }
        }
        profile.extend(extra);
    }
    Ok(FiniteSolution { best: best_point, profile, skipped, seed, trials })
}

/// Monte-Carlo estimate of the feasible-set deviation and its
/// family-restricted Hausdorff surrogate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityDeviation {
    /// `E max_f ||sigma_{N,K}(f) - sigma(f)||` over the grid.
    pub deviation: Estimate,
    /// Mean over draws of the Hausdorff distance between the graphs
    /// `{(f, sigma_{N,K}(f))}` and `{(f, sigma(f))}` restricted to the grid.
    pub hausdorff: f64,
}

/// `sup_Theta |f - g|` on a uniform grid of the MP support.
pub fn sup_distance(f: &ShapingFunction, g: &ShapingFunction, lo: f64, hi: f64) -> f64 {
    (0..=SUP_GRID)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / SUP_GRID as f64;
            (f.eval(x) - g.eval(x)).abs()
        })
        .fold(0.0, f64::max)
}

fn pairwise_sup(members: &[GridMember], config: &SystemConfig) -> Vec<Vec<f64>> {
    let (lo, hi) = config.mp_law().d_edges();
    members
        .iter()
        .map(|a| members.iter().map(|b| sup_distance(&a.f, &b.f, lo, hi)).collect())
        .collect()
}

/// Hausdorff distance between `{(f_i, a_i)}` and `{(f_j, b_j)}` under
/// `||f - f'||_inf + ||sigma - sigma'||`.
fn graph_hausdorff(fdist: &[Vec<f64>], a: &[SigmaPair], b: &[SigmaPair]) -> f64 {
    let one_sided = |x: &[SigmaPair], y: &[SigmaPair]| {
        (0..x.len())
            .map(|i| {
                (0..y.len())
                    .map(|j| fdist[i][j] + x[i].distance(&y[j]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

/// Estimates `E max_f ||sigma_{N,K}(f) - sigma(f)||` over `trials` draws
/// (independent channels) and the grid-restricted Hausdorff surrogate.
pub fn feasibility_deviation(
    config: &SystemConfig,
    q: &QuantizerSpec,
    grid: &FamilyGrid,
    seed: u64,
    trials: usize,
) -> Result<FeasibilityDeviation> {
    grid.certify(config)?;
    if trials < 2 {
        return invalid("feasibility_deviation: need at least 2 trials");
    }
    let members = grid.members();
    let asym: Vec<SigmaPair> = members
        .iter()
        .map(|m| sigma_asymptotic(&m.f, config, q))
        .collect::<Result<_>>()?;
    let fdist = pairwise_sup(&members, config);
    let per_draw: Vec<(f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let draw = ConstraintDraw::sample(config, seed, t)?;
            let fin: Vec<SigmaPair> = members
                .iter()
                .map(|m| sigma_finite(&m.f, &draw, config, q))
                .collect::<Result<_>>()?;
            let dev = fin
                .iter()
                .zip(&asym)
                .map(|(a, b)| a.distance(b))
                .fold(0.0, f64::max);
            Ok((dev, graph_hausdorff(&fdist, &fin, &asym)))
        })
        .collect::<Result<_>>()?;
    let n = trials as f64;
    let mean = per_draw.iter().map(|p| p.0).sum::<f64>() / n;
    let var = per_draw.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(FeasibilityDeviation {
        deviation: Estimate { value: mean, std_error: (var / n).sqrt(), trials: trials as u64 },
        hausdorff: per_draw.iter().map(|p| p.1).sum::<f64>() / n,
    })
}

/// Finite-versus-asymptotic optimal-value comparison.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimalGap {
    pub asymptotic: AsymptoticSolution,
    pub finite: FiniteSolution,
    /// `|V_{N,K} - V|`
    pub gap: f64,
    /// `max_f L(f, sigma(f))` over the grid.
    pub l_rho: f64,
    /// `max_f D(Y_{N,K}(f), Y_bar(f))` over the evaluated points.
    pub sup_deviation: f64,
    pub report: BoundReport,
}

impl OptimalGap {
    pub fn relative_gap(&self) -> f64 {
        self.gap / self.asymptotic.value().abs()
    }
}

/// Solves both problems and checks `|V_{N,K} - V| <= L_rho sup_f D(Y_{N,K}(f), Y_bar(f))`
/// with `D` estimated on the coupled draws of the finite solve.
pub fn optimal_gap_report(
    config: &SystemConfig,
    q: &QuantizerSpec,
    grid: &FamilyGrid,
    seed: u64,
    trials: usize,
    opts: &FiniteOptions,
) -> Result<OptimalGap> {
    grid.certify(config)?;
    let asymptotic = solve_asymptotic(config, q, grid)?;
    let finite = solve_finite(config, q, grid, seed, trials, opts)?;
    let mut l_rho: f64 = 0.0;
    for m in grid.members() {
        let model = asymptotic_model(config, &m.f, q)?;
        l_rho = l_rho.max(functional_lk(config, &model)?);
    }
    let sup_deviation = finite
        .profile
        .iter()
        .map(PointSweep::deviation)
        .fold(0.0, f64::max);
    let gap = (finite.value() - asymptotic.value()).abs();
    let report = BoundReport::new(
        "optimal_value_gap",
        [
            ("k", config.k() as f64),
            ("seed", seed as f64),
            ("l_rho", l_rho),
            ("sup_deviation", sup_deviation),
            ("v_finite", finite.value()),
            ("v_asymptotic", asymptotic.value()),
        ],
        l_rho * sup_deviation,
    )?
    .with_empirical(gap);
    Ok(OptimalGap { asymptotic, finite, gap, l_rho, sup_deviation, report })
}

/// Grid-restricted growth function of the asymptotic problem around its
/// maximizer. A surrogate for the growth function over the full ball.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthFunction {
    /// Strictly increasing, starting at 0.
    pub taus: Vec<f64>,
    /// `psi(tau) = min {V - SINR_bar(x) : dist(x, x*) >= tau}` (`+inf` if empty).
    pub psi: Vec<f64>,
}

impl GrowthFunction {
    /// `psi^{-1}(t) = sup {tau : psi(tau) <= t}` on the tabulated grid.
    pub fn psi_inverse(&self, t: f64) -> f64 {
        self.taus
            .iter()
            .zip(&self.psi)
            .filter(|(_, &p)| p <= t)
            .map(|(&tau, _)| tau)
            .fold(0.0, f64::max)
    }

    /// `Psi(t) = t + psi^{-1}(2t)`.
    pub fn big_psi(&self, t: f64) -> f64 {
        t + self.psi_inverse(2.0 * t)
    }
}

/// Distance in the product norm `||f - f'||_inf + |eta - eta'| + |alpha - alpha'|`.
pub fn point_distance(
    config: &SystemConfig,
    a: (&ShapingFunction, &SigmaPair),
    b: (&ShapingFunction, &SigmaPair),
) -> f64 {
    let (lo, hi) = config.mp_law().d_edges();
    sup_distance(a.0, b.0, lo, hi) + a.1.distance(b.1)
}

/// Tabulates `psi` on `taus` from the evaluated asymptotic profile.
pub fn growth_psi(
    config: &SystemConfig,
    solution: &AsymptoticSolution,
    taus: &[f64],
) -> Result<GrowthFunction> {
    if taus.first() != Some(&0.0) {
        return invalid("growth_psi: tau grid must start at 0");
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) || taus.iter().any(|t| !t.is_finite()) {
        return invalid("growth_psi: tau grid must be finite and strictly increasing");
    }
    let star = &solution.best;
    let pts: Vec<(f64, f64)> = solution
        .profile
        .iter()
        .map(|p| {
            (
                point_distance(config, (&p.f, &p.sigma), (&star.f, &star.sigma)),
                (star.value - p.value).max(0.0),
            )
        })
        .collect();
    let psi = taus
        .iter()
        .map(|&tau| {
            pts.iter()
                .filter(|(d, _)| *d >= tau)
                .map(|(_, g)| *g)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(GrowthFunction { taus: taus.to_vec(), psi })
}

/// Best `SINR_bar(f, s eta(f), alpha(f))` over the grid and the power
/// slacks `s` in `(0, 1]`, i.e. over feasible points of the
/// inequality-constrained problem restricted to the grid.
pub fn inequality_constrained_best(
    config: &SystemConfig,
    q: &QuantizerSpec,
    grid: &FamilyGrid,
    slacks: &[f64],
) -> Result<f64> {
    if slacks.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
        return invalid("power slack must lie in (0, 1]");
    }
    let mut best = f64::NEG_INFINITY;
    for m in grid.members() {
        let base = asymptotic_model(config, &m.f, q)?;
        for &s in slacks {
            let model = asymptotic_model_with_eta(config, &m.f, q, s * base.eta)?;
            if let Ok(v) = sinr_bar_from_model(&model, config.gamma()) {
                best = best.max(v.value());
            }
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(QprecError::NoFeasiblePoint);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::Constellation;

    fn cfg(k: usize) -> SystemConfig {
        SystemConfig::new(4 * k, k, 0.1, Constellation::qpsk(), 1.0).unwrap()
    }

    #[test]
    fn mf_sigma_matches_closed_form() {
        let s = sigma_asymptotic(&ShapingFunction::mf(), &cfg(64), &QuantizerSpec::one_bit_unit())
            .unwrap();
        assert!((s.alpha - 0.5).abs() < 1e-10);
    }

    #[test]
    fn grid_members_and_densify() {
        let g = FamilyGrid::log_spaced(1e-2, 1.0, 3).unwrap();
        let m = g.members();
        assert_eq!(m.len(), 5);
        assert_eq!(m[0].param, 0.0);
        assert!(m[4].param.is_infinite());
        let d = g.densified();
        assert_eq!(d.rhos.len(), 5);
        assert!((d.rhos[1] - 1e-3f64.sqrt()).abs() < 1e-12);
        assert!((d.rhos[2] - 0.1).abs() < 1e-12);
        assert!((d.log_cell_width() - 0.5 * g.log_cell_width()).abs() < 1e-12);
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let mut rec = Vec::new();
        let (t, v) = refine(
            -1.0,
            2.0,
            2,
            30,
            (-1.0, -100.0),
            |t| Some((t, -(t - 0.3f64).powi(2))),
            |p: &(f64, f64)| p.1,
            &mut rec,
        );
        assert!((t - 0.3).abs() < 1e-5);
        assert!(v <= 0.0 && v > -1e-9);
    }

    #[test]
    fn growth_function_definition() {
        let c = cfg(64);
        let q = QuantizerSpec::one_bit_unit();
        let g = FamilyGrid::log_spaced(1e-2, 10.0, 7).unwrap();
        let sol = solve_asymptotic(&c, &q, &g).unwrap();
        let taus: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let gf = growth_psi(&c, &sol, &taus).unwrap();
        assert_eq!(gf.psi[0], 0.0);
        assert!(gf.psi.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(gf.big_psi(0.0), 0.0);
    }
}
