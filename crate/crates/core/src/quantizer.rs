//! Piecewise-constant complex quantizers, their Gaussian moments and the
//! Lipschitz envelope machinery used to handle their discontinuities.

use crate::error::{invalid, Result};
use crate::Complex64;
use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Relative tolerance for the `levels == 2 clip / step` consistency rule.
const GRID_TOL: f64 = 1e-9;

/// Quantizer family and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantizerKind {
    /// Mid-rise uniform quantizer applied to real and imaginary parts.
    UniformIq { levels: usize, step: f64, clip: f64 },
    /// `amplitude * (sgn Re z + i sgn Im z)`.
    OneBit { amplitude: f64 },
    /// Constant-envelope phase quantizer onto `radius * exp(2 pi i m / phases)`.
    PhaseCe { phases: usize, radius: f64 },
}

/// Real or imaginary component of the quantizer output (`g` and `h`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    Re,
    Im,
}

/// Validated quantizer with its output set and discontinuity geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    kind: QuantizerKind,
    /// Per-dimension cell centers (separable kinds) in increasing order.
    centers: Vec<f64>,
    /// Per-dimension interior thresholds (separable kinds) in increasing order.
    thresholds: Vec<f64>,
    /// Output points of the phase quantizer, indexed by `m`.
    phase_points: Vec<Complex64>,
    m0: f64,
}

impl QuantizerSpec {
    pub fn new(kind: QuantizerKind) -> Result<Self> {
        match kind {
            QuantizerKind::UniformIq { levels, step, clip } => Self::uniform_iq(levels, step, clip),
            QuantizerKind::OneBit { amplitude } => Self::one_bit(amplitude),
            QuantizerKind::PhaseCe { phases, radius } => Self::phase_ce(phases, radius),
        }
    }

    /// Uniform mid-rise quantizer with `levels` cells of width `step` covering `[-clip, clip]`.
    ///
    /// Cell `k` has center `-clip + step (k + 1/2)`; inputs beyond the clip
    /// level saturate at `+-(clip - step/2)`.
    pub fn uniform_iq(levels: usize, step: f64, clip: f64) -> Result<Self> {
        if levels < 2 {
            return invalid("uniform_iq: levels must be >= 2");
        }
        if !(step.is_finite() && step > 0.0 && clip.is_finite() && clip > 0.0) {
            return invalid("uniform_iq: step and clip must be finite and positive");
        }
        let implied = 2.0 * clip / step;
        if (implied - levels as f64).abs() > GRID_TOL * implied.max(1.0) {
            return invalid(format!(
                "uniform_iq: levels = {levels} inconsistent with 2 clip / step = {implied}"
            ));
        }
        let centers: Vec<f64> = (0..levels)
            .map(|k| -clip + step * (k as f64 + 0.5))
            .collect();
        let thresholds: Vec<f64> = (1..levels).map(|j| -clip + step * j as f64).collect();
        let cmax = clip - 0.5 * step;
        Ok(Self {
            kind: QuantizerKind::UniformIq { levels, step, clip },
            centers,
            thresholds,
            phase_points: Vec::new(),
            m0: std::f64::consts::SQRT_2 * cmax,
        })
    }

    pub fn one_bit(amplitude: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return invalid("one_bit: amplitude must be finite and positive");
        }
        Ok(Self {
            kind: QuantizerKind::OneBit { amplitude },
            centers: vec![-amplitude, amplitude],
            thresholds: vec![0.0],
            phase_points: Vec::new(),
            m0: std::f64::consts::SQRT_2 * amplitude,
        })
    }

    /// One-bit quantizer with unit output modulus.
    pub fn one_bit_unit() -> Self {
        Self::one_bit(FRAC_1_SQRT_2).expect("valid amplitude")
    }

    pub fn phase_ce(phases: usize, radius: f64) -> Result<Self> {
        if phases == 0 {
            return invalid("phase_ce: phases must be >= 1");
        }
        if !(radius.is_finite() && radius > 0.0) {
            return invalid("phase_ce: radius must be finite and positive");
        }
        let pts = (0..phases)
            .map(|m| Complex64::from_polar(radius, 2.0 * PI * m as f64 / phases as f64))
            .collect();
        Ok(Self {
            kind: QuantizerKind::PhaseCe { phases, radius },
            centers: Vec::new(),
            thresholds: Vec::new(),
            phase_points: pts,
            m0: radius,
        })
    }

    pub fn kind(&self) -> &QuantizerKind {
        &self.kind
    }

    /// `M_0 = sup |q(z)|`.
    pub fn m0(&self) -> f64 {
        self.m0
    }

    fn is_separable(&self) -> bool {
        !matches!(self.kind, QuantizerKind::PhaseCe { .. })
    }

    /// Finite output set.
    pub fn output_set(&self) -> Vec<Complex64> {
        if self.is_separable() {
            let mut out = Vec::with_capacity(self.centers.len().pow(2));
            for &re in &self.centers {
                for &im in &self.centers {
                    out.push(Complex64::new(re, im));
                }
            }
            out
        } else {
            self.phase_points.clone()
        }
    }

    /// Index of the per-dimension cell containing `t`; thresholds belong to the lower cell.
    fn cell_index(&self, t: f64) -> usize {
        self.thresholds.partition_point(|&th| th < t)
    }

    fn quantize_1d(&self, t: f64) -> f64 {
        self.centers[self.cell_index(t)]
    }

    fn phase_index(&self, z: Complex64) -> usize {
        let m = self.phase_points.len();
        if m == 1 {
            return 0;
        }
        if z.re == 0.0 && z.im == 0.0 {
            return self.lexicographic_min(0..m);
        }
        let sector = 2.0 * PI / m as f64;
        let phi = z.im.atan2(z.re).rem_euclid(2.0 * PI);
        let lo = ((phi / sector).floor() as usize) % m;
        let hi = (lo + 1) % m;
        let score = |i: usize| (z * self.phase_points[i].conj()).re;
        let (sl, sh) = (score(lo), score(hi));
        if sl > sh {
            lo
        } else if sh > sl {
            hi
        } else {
            self.lexicographic_min([lo, hi].into_iter())
        }
    }

    fn lexicographic_min(&self, idx: impl Iterator<Item = usize>) -> usize {
        idx.min_by(|&a, &b| {
            let (p, q) = (self.phase_points[a], self.phase_points[b]);
            p.re.total_cmp(&q.re).then(p.im.total_cmp(&q.im))
        })
        .expect("nonempty")
    }

    /// `q(z)`. Inputs on a decision boundary map to the cell whose center is
    /// lexicographically smaller in `(Re, Im)`.
    pub fn quantize(&self, z: Complex64) -> Complex64 {
        if self.is_separable() {
            Complex64::new(self.quantize_1d(z.re), self.quantize_1d(z.im))
        } else {
            self.phase_points[self.phase_index(z)]
        }
    }

    /// Component-wise `q` applied to `alpha * z`.
    pub fn quantize_scaled(&self, alpha: f64, z: &[Complex64], out: &mut Vec<Complex64>) {
        out.clear();
        out.extend(z.iter().map(|&zi| self.quantize(zi * alpha)));
    }

    /// Values of component `c` on each cell, in cell order.
    fn component_values(&self, c: Component) -> Vec<f64> {
        if self.is_separable() {
            self.centers.clone()
        } else {
            self.phase_points
                .iter()
                .map(|p| match c {
                    Component::Re => p.re,
                    Component::Im => p.im,
                })
                .collect()
        }
    }

    /// Boundary rays (angles) of the phase sectors across which component `c` jumps.
    fn phase_jump_angles(&self, c: Component) -> Vec<f64> {
        let m = self.phase_points.len();
        if m < 2 {
            return Vec::new();
        }
        let vals = self.component_values(c);
        let tol = 1e-12 * self.m0;
        (0..m)
            .filter(|&i| (vals[i] - vals[(i + 1) % m]).abs() > tol)
            .map(|i| 2.0 * PI * (i as f64 + 0.5) / m as f64)
            .collect()
    }

    /// Number of lines `N_l` and rays `N_r` in the discontinuity set of component `c`.
    pub fn discontinuity_counts(&self, c: Component) -> (usize, usize) {
        if self.is_separable() {
            (self.thresholds.len(), 0)
        } else {
            (0, self.phase_jump_angles(c).len())
        }
    }

    /// Total line and ray counts of the discontinuity set of `q`.
    pub fn n_lines_rays(&self) -> (usize, usize) {
        if self.is_separable() {
            (2 * self.thresholds.len(), 0)
        } else {
            let m = self.phase_points.len();
            (0, if m < 2 { 0 } else { m })
        }
    }

    /// `K_g = (2/sqrt pi) N_l + (1 + 1/sqrt pi) N_r` for component `c`.
    pub fn k_component(&self, c: Component) -> f64 {
        let (nl, nr) = self.discontinuity_counts(c);
        geometry_constant(nl as f64, nr as f64)
    }

    /// `K_k = (2/sqrt pi)(N_l^g + N_l^h) + (1 + 1/sqrt pi)(N_r^g + N_r^h)`.
    pub fn k_total(&self) -> f64 {
        let (lg, rg) = self.discontinuity_counts(Component::Re);
        let (lh, rh) = self.discontinuity_counts(Component::Im);
        geometry_constant((lg + lh) as f64, (rg + rh) as f64)
    }

    /// `E[Z^H q(alpha Z)]` and `E|q(alpha Z)|^2` for `Z ~ CN(0, 1)`.
    pub fn gaussian_moments(&self, alpha: f64) -> Result<GaussianMoments> {
        gaussian_moments(self, alpha)
    }
}

fn geometry_constant(nl: f64, nr: f64) -> f64 {
    let sp = PI.sqrt();
    2.0 / sp * nl + (1.0 + 1.0 / sp) * nr
}

/// Bussgang-type moments of `q(alpha Z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub alpha: f64,
    /// `E[Z^H q(alpha Z)]`
    pub ezq: Complex64,
    /// `E|q(alpha Z)|^2`
    pub eq2: f64,
    /// `ezq / alpha`
    pub c1_bar: Complex64,
    /// `sqrt(eq2 - |ezq|^2)`
    pub c2_bar: f64,
}

/// Gaussian moments of `q(alpha Z)`, `Z ~ CN(0, 1)`.
///
/// Separable quantizers use closed-form error-function pieces per
/// dimension; the phase quantizer uses polar quadrature (the radial factor
/// `E|Z| = sqrt(pi)/2` is exact, the angular integral is done sector by sector).
pub fn gaussian_moments(q: &QuantizerSpec, alpha: f64) -> Result<GaussianMoments> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return invalid(format!("gaussian_moments: alpha must be positive, got {alpha}"));
    }
    let (ezq, eq2) = if q.is_separable() {
        // Each dimension X ~ N(0, 1/2): P(X in (u,v)) = (erf v - erf u)/2 and
        // E[X 1{X in (u,v)}] = (exp(-u^2) - exp(-v^2)) / (2 sqrt pi).
        let mut ex = 0.0;
        let mut e2 = 0.0;
        let n = q.centers.len();
        for (k, &c) in q.centers.iter().enumerate() {
            let u = if k == 0 { f64::NEG_INFINITY } else { q.thresholds[k - 1] / alpha };
            let v = if k + 1 == n { f64::INFINITY } else { q.thresholds[k] / alpha };
            let p = 0.5 * (erf_ext(v) - erf_ext(u));
            let m1 = (gauss_exp(u) - gauss_exp(v)) / (2.0 * PI.sqrt());
            ex += c * m1;
            e2 += c * c * p;
        }
        (Complex64::new(2.0 * ex, 0.0), 2.0 * e2)
    } else {
        let m = q.phase_points.len();
        let sector = 2.0 * PI / m as f64;
        let gl = GaussLegendre::new(16).expect("valid degree");
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &p) in q.phase_points.iter().enumerate() {
            let c = i as f64 * sector;
            let lo = c - 0.5 * sector;
            let panels = 8;
            let h = sector / panels as f64;
            for j in 0..panels {
                let a = lo + j as f64 * h;
                acc += p * gl_complex(&gl, a, a + h, |th| Complex64::from_polar(1.0, -th));
            }
        }
        let ezq = acc / (2.0 * PI) * (0.5 * PI.sqrt());
        let r = q.m0;
        (ezq, r * r)
    };
    let c2sq = eq2 - ezq.norm_sqr();
    Ok(GaussianMoments {
        alpha,
        ezq,
        eq2,
        c1_bar: ezq / alpha,
        c2_bar: c2sq.max(0.0).sqrt(),
    })
}

fn erf_ext(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        -1.0
    } else {
        erf(x)
    }
}

fn gauss_exp(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-x * x).exp()
    }
}

fn gl_complex<F: Fn(f64) -> Complex64>(gl: &GaussLegendre, a: f64, b: f64, f: F) -> Complex64 {
    let re = gl.integrate(a, b, |x| f(x).re);
    let im = gl.integrate(a, b, |x| f(x).im);
    Complex64::new(re, im)
}

/// Lower and upper `1/tau`-Lipschitz envelopes of one component of `q`:
/// `l(x) = inf_y {g(y) + |x - y|/tau}`, `u(x) = sup_y {g(y) - |x - y|/tau}`.
///
/// For a piecewise-constant component both reduce to a minimum (maximum)
/// over cells of `value + dist(x, cell)/tau`.
#[derive(Clone, Debug)]
pub struct Envelope<'a> {
    q: &'a QuantizerSpec,
    component: Component,
    tau: f64,
    values: Vec<f64>,
}

/// Build the envelope pair `(l_tau, u_tau)` of component `c` of `q`.
pub fn envelope(q: &QuantizerSpec, component: Component, tau: f64) -> Result<Envelope<'_>> {
    if !(tau.is_finite() && tau > 0.0) {
        return invalid(format!("envelope: tau must be positive, got {tau}"));
    }
    Ok(Envelope {
        q,
        component,
        tau,
        values: q.component_values(component),
    })
}

impl Envelope<'_> {
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// The component itself, `g(x)` or `h(x)`.
    pub fn value(&self, x: Complex64) -> f64 {
        let y = self.q.quantize(x);
        match self.component {
            Component::Re => y.re,
            Component::Im => y.im,
        }
    }

    /// Distances from `x` to every cell of the component's partition.
    fn cell_distances(&self, x: Complex64, out: &mut Vec<f64>) {
        out.clear();
        if self.q.is_separable() {
            let t = match self.component {
                Component::Re => x.re,
                Component::Im => x.im,
            };
            let th = &self.q.thresholds;
            let n = self.q.centers.len();
            for k in 0..n {
                let lo = if k == 0 { f64::NEG_INFINITY } else { th[k - 1] };
                let hi = if k + 1 == n { f64::INFINITY } else { th[k] };
                out.push((lo - t).max(t - hi).max(0.0));
            }
        } else {
            let m = self.q.phase_points.len();
            if m == 1 {
                out.push(0.0);
                return;
            }
            let half = PI / m as f64;
            let r = x.norm();
            let phi = x.im.atan2(x.re);
            for i in 0..m {
                let c = 2.0 * PI * i as f64 / m as f64;
                let diff = (phi - c + PI).rem_euclid(2.0 * PI) - PI;
                let delta = (diff.abs() - half).max(0.0);
                out.push(if delta == 0.0 {
                    0.0
                } else if delta <= 0.5 * PI {
                    r * delta.sin()
                } else {
                    r
                });
            }
        }
    }

    /// `l_tau(x)`
    pub fn lower(&self, x: Complex64) -> f64 {
        let mut d = Vec::with_capacity(self.values.len());
        self.cell_distances(x, &mut d);
        self.values
            .iter()
            .zip(&d)
            .map(|(v, di)| v + di / self.tau)
            .fold(f64::INFINITY, f64::min)
    }

    /// `u_tau(x)`
    pub fn upper(&self, x: Complex64) -> f64 {
        let mut d = Vec::with_capacity(self.values.len());
        self.cell_distances(x, &mut d);
        self.values
            .iter()
            .zip(&d)
            .map(|(v, di)| v - di / self.tau)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(l_tau(x), u_tau(x))`
    pub fn pair(&self, x: Complex64) -> (f64, f64) {
        let mut d = Vec::with_capacity(self.values.len());
        self.cell_distances(x, &mut d);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (v, di) in self.values.iter().zip(&d) {
            lo = lo.min(v + di / self.tau);
            hi = hi.max(v - di / self.tau);
        }
        (lo, hi)
    }
}

/// Expectation of `f(Z)` for `Z ~ CN(0, 1)` by composite Gauss–Legendre.
///
/// Separable layouts integrate on a Cartesian grid over `[-R, R]^2` with
/// the given breakpoints; the polar layout integrates radius on `[0, R]`
/// and angle with the given angular breakpoints (discontinuity rays).
pub(crate) fn cn_expectation<F: Fn(Complex64) -> f64>(
    f: F,
    layout: &Layout,
    panels_per_piece: usize,
) -> f64 {
    const R: f64 = 6.5;
    let gl = GaussLegendre::new(10).expect("valid degree");
    let nodes: Vec<(f64, f64)> = gl.iter().map(|(x, w)| (*x, *w)).collect();
    match layout {
        Layout::Cartesian { x_breaks, y_breaks } => {
            let xs = panel_nodes(&nodes, &pieces(-R, R, x_breaks), panels_per_piece);
            let ys = panel_nodes(&nodes, &pieces(-R, R, y_breaks), panels_per_piece);
            let mut acc = 0.0;
            for &(y, wy) in &ys {
                let py = wy * (-y * y).exp();
                for &(x, wx) in &xs {
                    acc += wx * py * (-x * x).exp() * f(Complex64::new(x, y));
                }
            }
            acc / PI
        }
        Layout::Polar { angle_breaks, radial_breaks } => {
            let mut ab: Vec<f64> = angle_breaks
                .iter()
                .map(|a| a.rem_euclid(2.0 * PI))
                .collect();
            ab.sort_by(|a, b| a.total_cmp(b));
            let ts = panel_nodes(&nodes, &pieces(0.0, 2.0 * PI, &ab), panels_per_piece);
            let rs = panel_nodes(&nodes, &pieces(0.0, R, radial_breaks), panels_per_piece);
            let mut acc = 0.0;
            for &(r, wr) in &rs {
                let pr = wr * r * (-r * r).exp();
                for &(t, wt) in &ts {
                    acc += wt * pr * f(Complex64::from_polar(r, t));
                }
            }
            acc / PI
        }
    }
}

/// Integration layout for `cn_expectation`.
pub(crate) enum Layout {
    Cartesian { x_breaks: Vec<f64>, y_breaks: Vec<f64> },
    Polar { angle_breaks: Vec<f64>, radial_breaks: Vec<f64> },
}

fn pieces(lo: f64, hi: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut pts: Vec<f64> = std::iter::once(lo)
        .chain(breaks.iter().copied().filter(|b| *b > lo && *b < hi))
        .chain(std::iter::once(hi))
        .collect();
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    pts.windows(2).map(|w| (w[0], w[1])).collect()
}

fn panel_nodes(nodes: &[(f64, f64)], pieces: &[(f64, f64)], panels: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(pieces.len() * panels * nodes.len());
    for &(a, b) in pieces {
        let h = (b - a) / panels as f64;
        for j in 0..panels {
            let lo = a + j as f64 * h;
            let half = 0.5 * h;
            let mid = lo + half;
            for &(x, w) in nodes {
                out.push((mid + half * x, w * half));
            }
        }
    }
    out
}

/// Layout aligned with the discontinuities of component `c` after scaling by `alpha`,
/// with extra breakpoints where the envelopes of width `tau` start and stop.
pub(crate) fn layout_for(q: &QuantizerSpec, c: Component, alpha: f64, tau: f64) -> Layout {
    let spread = 2.0 * q.m0 * tau;
    if q.is_separable() {
        let mut br = Vec::new();
        for &t in &q.thresholds {
            br.extend([(t - spread) / alpha, t / alpha, (t + spread) / alpha]);
        }
        match c {
            Component::Re => Layout::Cartesian { x_breaks: br, y_breaks: vec![0.0] },
            Component::Im => Layout::Cartesian { x_breaks: vec![0.0], y_breaks: br },
        }
    } else {
        let m = q.phase_points.len();
        let mut ab: Vec<f64> = (0..m)
            .map(|i| 2.0 * PI * (i as f64 + 0.5) / m as f64)
            .collect();
        ab.push(0.0);
        Layout::Polar {
            angle_breaks: ab,
            radial_breaks: vec![spread / alpha, 2.0 * spread / alpha, 1.0],
        }
    }
}

/// Quadrature value of `E|u_tau(alpha Z) - l_tau(alpha Z)|` with the closed-form bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub value: f64,
    pub bound: f64,
    /// `C_g = (2 M_0 / alpha) K_g`
    pub constant: f64,
}

/// `E|u_tau - l_tau|` at `alpha_bar Z` and the bound `C_g tau`.
pub fn envelope_gap_expectation(
    q: &QuantizerSpec,
    component: Component,
    tau: f64,
    alpha_bar: f64,
) -> Result<GapReport> {
    if !(alpha_bar.is_finite() && alpha_bar > 0.0) {
        return invalid("envelope_gap_expectation: alpha_bar must be positive");
    }
    if !(tau > 0.0 && tau <= alpha_bar) {
        return invalid(format!(
            "envelope_gap_expectation: need 0 < tau <= alpha_bar, got tau = {tau}, alpha_bar = {alpha_bar}"
        ));
    }
    let env = envelope(q, component, tau)?;
    let layout = layout_for(q, component, alpha_bar, tau);
    let value = cn_expectation(
        |z| {
            let (l, u) = env.pair(z * alpha_bar);
            (u - l).abs()
        },
        &layout,
        24,
    );
    let constant = 2.0 * q.m0 / alpha_bar * q.k_component(component);
    Ok(GapReport {
        value,
        bound: constant * tau,
        constant,
    })
}

/// Which of the four smoothed cross terms `L^i_tau` of the envelope construction to evaluate.
///
/// `G^1 = Re(x) g(alpha x)`, `G^2 = Im(x) h(alpha x)`, `G^3 = Re(x) h(alpha x)`,
/// `G^4 = Im(x) g(alpha x)`; `L^i` replaces the component by its lower
/// envelope where the multiplier is positive and by the upper one elsewhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossTerm {
    One,
    Two,
    Three,
    Four,
}

/// `|E L^i_tau(Z, alpha) - E G^i(Z, alpha)|` by quadrature, with the bound `C_i tau^{1/2}`,
/// `C_1 = C_4 = sqrt(2) M_0 sqrt(K_g / alpha)` and `C_2 = C_3 = sqrt(2) M_0 sqrt(K_h / alpha)`.
pub fn smoothed_cross_gap(
    q: &QuantizerSpec,
    term: CrossTerm,
    tau: f64,
    alpha_bar: f64,
) -> Result<GapReport> {
    if !(alpha_bar.is_finite() && alpha_bar > 0.0) {
        return invalid("smoothed_cross_gap: alpha_bar must be positive");
    }
    if !(tau > 0.0 && tau <= alpha_bar) {
        return invalid("smoothed_cross_gap: need 0 < tau <= alpha_bar");
    }
    let (comp, mult): (Component, fn(Complex64) -> f64) = match term {
        CrossTerm::One => (Component::Re, |z| z.re),
        CrossTerm::Two => (Component::Im, |z| z.im),
        CrossTerm::Three => (Component::Im, |z| z.re),
        CrossTerm::Four => (Component::Re, |z| z.im),
    };
    let env = envelope(q, comp, tau)?;
    let layout = layout_for(q, comp, alpha_bar, tau);
    let diff = cn_expectation(
        |z| {
            let x = z * alpha_bar;
            let (l, u) = env.pair(x);
            let g = env.value(x);
            let m = mult(z);
            m.max(0.0) * (l - g) + m.min(0.0) * (u - g)
        },
        &layout,
        24,
    );
    let constant = std::f64::consts::SQRT_2 * q.m0 * (q.k_component(comp) / alpha_bar).sqrt();
    Ok(GapReport {
        value: diff.abs(),
        bound: constant * tau.sqrt(),
        constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn one_bit_quadrant_map() {
        let q = QuantizerSpec::one_bit_unit();
        let y = q.quantize(c(0.3, -0.2));
        assert!((y - c(FRAC_1_SQRT_2, -FRAC_1_SQRT_2)).norm() < 1e-15);
        assert_eq!(q.quantize(c(0.0, 0.0)), c(-FRAC_1_SQRT_2, -FRAC_1_SQRT_2));
    }

    #[test]
    fn uniform_saturates_at_outer_center() {
        let q = QuantizerSpec::uniform_iq(4, 0.5, 1.0).unwrap();
        assert_eq!(q.quantize(c(10.0, 10.0)), c(0.75, 0.75));
        assert_eq!(q.quantize(c(-10.0, 0.1)), c(-0.75, 0.25));
        // threshold 0.5 belongs to the lower cell
        assert_eq!(q.quantize(c(0.5, -0.5)), c(0.25, -0.75));
        assert!(QuantizerSpec::uniform_iq(5, 0.5, 1.0).is_err());
    }

    #[test]
    fn phase_nearest_and_ties() {
        let q = QuantizerSpec::phase_ce(4, 1.0).unwrap();
        let y = q.quantize(Complex64::from_polar(1.0, 0.1));
        assert!((y - c(1.0, 0.0)).norm() < 1e-15);
        let z = q.quantize(c(0.0, 0.0));
        assert!((z - c(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn counts_by_family() {
        let q = QuantizerSpec::one_bit_unit();
        assert_eq!(q.discontinuity_counts(Component::Re), (1, 0));
        assert_eq!(q.n_lines_rays(), (2, 0));
        let p = QuantizerSpec::phase_ce(4, 1.0).unwrap();
        assert_eq!(p.discontinuity_counts(Component::Re), (0, 4));
        let p2 = QuantizerSpec::phase_ce(2, 1.0).unwrap();
        assert_eq!(p2.discontinuity_counts(Component::Im), (0, 0));
        assert_eq!(p2.discontinuity_counts(Component::Re), (0, 2));
    }

    #[test]
    fn moments_reject_nonpositive_alpha() {
        let q = QuantizerSpec::one_bit_unit();
        assert!(gaussian_moments(&q, 0.0).is_err());
        assert!(gaussian_moments(&q, -1.0).is_err());
    }

    #[test]
    fn one_bit_ezq_closed_form() {
        let q = QuantizerSpec::one_bit_unit();
        for alpha in [0.1, 0.5, 1.0, 7.0] {
            let m = gaussian_moments(&q, alpha).unwrap();
            assert!((m.ezq.re - (2.0 / PI).sqrt()).abs() < 1e-12);
            assert!((m.eq2 - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn phase_ezq_closed_form() {
        for m in [1usize, 2, 3, 4, 8] {
            let q = QuantizerSpec::phase_ce(m, 1.3).unwrap();
            let g = gaussian_moments(&q, 0.7).unwrap();
            let exact = 1.3 * 0.5 * PI.sqrt() * (m as f64 / PI) * (PI / m as f64).sin();
            assert!((g.ezq.re - exact).abs() < 1e-12, "M={m}");
            assert!(g.ezq.im.abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_rejects_bad_tau() {
        let q = QuantizerSpec::one_bit_unit();
        assert!(envelope(&q, Component::Re, 0.0).is_err());
        assert!(envelope_gap_expectation(&q, Component::Re, 2.0, 1.0).is_err());
    }

    #[test]
    fn one_bit_gap_matches_hand_value() {
        // gap(t) = (2a - |t|/tau)_+ on each side of 0, Re(Z) ~ N(0, 1/2):
        // E = 4 a^2 tau / sqrt(pi) to first order in tau
        let q = QuantizerSpec::one_bit_unit();
        let tau = 0.01;
        let r = envelope_gap_expectation(&q, Component::Re, tau, 1.0).unwrap();
        let approx = 4.0 * 0.5 * tau / PI.sqrt();
        assert!((r.value - approx).abs() < 1e-3 * approx * 10.0);
        assert!(r.value <= r.bound);
    }
}
