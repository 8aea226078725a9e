//! Tail cascades `R(eps, K)` for `|T_g - T_g_bar|` and `R_tilde(eps, K)` for
//! `|T_s - T_s_bar|`.
//!
//! Every named constant of the nested eps/delta/eta tables is a node with an
//! explicit list of dependencies. Nodes are evaluated in topological order and
//! a node may only read the values it declares, so each formula can be
//! audited line by line against the tables. Nodes that do not feed the final
//! bound or threshold are reported as unreachable.

use super::tilde_delta_raw as td;
use crate::error::{invalid, QprecError, Result};
use crate::models::{asymptotic_model, ShapingFunction, SystemConfig};
use crate::quantizer::{Component, QuantizerSpec};
use crate::spectral::mp_moment;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

/// Model constants entering the cascades.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeParams {
    /// `sup |q|`
    pub m0: f64,
    /// Uniform bound on the spectral functions (`|sigma| <= M_1`).
    pub m1: f64,
    pub sigma2_sym: f64,
    pub sigma2_noise: f64,
    pub gamma: f64,
    /// `max |s|^2 - min |s|^2` over the constellation.
    pub c_max: f64,
    /// Lines and rays in the discontinuity set of `Re q`.
    pub lines_re: usize,
    pub rays_re: usize,
    /// Lines and rays in the discontinuity set of `Im q`.
    pub lines_im: usize,
    pub rays_im: usize,
    pub alpha_bar: f64,
    /// `|C1_bar|`
    pub c1_bar: f64,
    pub c2_bar: f64,
    pub tg_bar: f64,
    /// `|E[Z^H q(alpha_bar Z)]|`
    pub ezq: f64,
    pub e_f2: f64,
    pub e_df: f64,
    pub var_df: f64,
    /// `E[d^2 f(d)^2]`
    pub e_d2f2: f64,
    /// `E[d^2]`
    pub e_d2: f64,
    /// Dimension beyond which the spectrum stays in the `M_1` window.
    pub k_bar: f64,
}

impl CascadeParams {
    /// Constants of the asymptotic model for `(config, f, q)`, with `M_1`
    /// taken over the Marchenko-Pastur support of `d`.
    pub fn from_model(config: &SystemConfig, f: &ShapingFunction, q: &QuantizerSpec) -> Result<Self> {
        let law = config.mp_law();
        let m = asymptotic_model(config, f, q)?;
        let (lo, hi) = law.d_edges();
        let e_d2f2 = mp_moment(|d| (d * f.eval(d)).powi(2), &law)?;
        let e_d2 = mp_moment(|d| d * d, &law)?;
        let (lines_re, rays_re) = q.discontinuity_counts(Component::Re);
        let (lines_im, rays_im) = q.discontinuity_counts(Component::Im);
        let p = Self {
            m0: q.m0(),
            m1: f.m1_on(lo, hi),
            sigma2_sym: config.sigma2_sym(),
            sigma2_noise: config.sigma2_noise(),
            gamma: config.gamma(),
            c_max: config.constellation().c_max(),
            lines_re,
            rays_re,
            lines_im,
            rays_im,
            alpha_bar: m.alpha_bar,
            c1_bar: m.c1_bar.norm(),
            c2_bar: m.c2_bar,
            tg_bar: m.tg_bar,
            ezq: m.ezq.norm(),
            e_f2: m.moments.e_f2,
            e_df: m.moments.e_df,
            var_df: m.moments.var_df,
            e_d2f2,
            e_d2,
            k_bar: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("M0", self.m0),
            ("M1", self.m1),
            ("sigma_s^2", self.sigma2_sym),
            ("alpha_bar", self.alpha_bar),
            ("C1_bar", self.c1_bar),
            ("C2_bar", self.c2_bar),
            ("T_g_bar", self.tg_bar),
            ("E[Z^H q]", self.ezq),
            ("E[f^2]", self.e_f2),
            ("E[df]", self.e_df),
            ("E[d^2 f^2]", self.e_d2f2),
            ("E[d^2]", self.e_d2),
        ];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("cascade parameter {name} must be finite and > 0, got {v}"));
            }
        }
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return invalid(format!("cascade parameter gamma must exceed 1, got {}", self.gamma));
        }
        for (name, v) in [
            ("sigma^2", self.sigma2_noise),
            ("c_max", self.c_max),
            ("var[df]", self.var_df),
            ("K_bar", self.k_bar),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return invalid(format!("cascade parameter {name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }

    fn geometry(lines: usize, rays: usize) -> f64 {
        let sp = PI.sqrt();
        2.0 / sp * lines as f64 + (1.0 + 1.0 / sp) * rays as f64
    }

    /// `K_g` for the real part of `q`.
    pub fn k_g(&self) -> f64 {
        Self::geometry(self.lines_re, self.rays_re)
    }

    /// `K_h` for the imaginary part of `q`.
    pub fn k_h(&self) -> f64 {
        Self::geometry(self.lines_im, self.rays_im)
    }

    /// `K_k` for the pair.
    pub fn k_k(&self) -> f64 {
        Self::geometry(self.lines_re + self.lines_im, self.rays_re + self.rays_im)
    }

    fn inputs(&self, eps: f64, k: f64) -> Vec<(&'static str, f64)> {
        vec![
            ("eps", eps),
            ("K", k),
            ("M0", self.m0),
            ("M1", self.m1),
            ("s2", self.sigma2_sym),
            ("ss", self.sigma2_sym.sqrt()),
            ("gamma", self.gamma),
            ("cmax", self.c_max),
            ("abar", self.alpha_bar),
            ("c1", self.c1_bar),
            ("c2", self.c2_bar),
            ("tg", self.tg_bar),
            ("ezq", self.ezq),
            ("ef2", self.e_f2),
            ("edf", self.e_df),
            ("ed2f2", self.e_d2f2),
            ("ed2", self.e_d2),
            ("Kg", self.k_g()),
            ("Kh", self.k_h()),
            ("Kk", self.k_k()),
            ("Kbar", self.k_bar),
        ]
    }
}

/// Read access to the declared dependencies of the node being evaluated.
struct Vals<'a> {
    node: &'static str,
    deps: &'static [&'static str],
    values: &'a HashMap<&'static str, f64>,
}

impl Vals<'_> {
    fn g(&self, name: &str) -> f64 {
        assert!(
            self.deps.contains(&name),
            "cascade node `{}` reads undeclared input `{name}`",
            self.node
        );
        self.values[name]
    }

    /// `delta_hat(alpha_bar x) = min{gamma alpha_bar x / (2L), 1/2}`.
    fn dhat(&self, x: &str) -> f64 {
        (self.g("gamma") * self.g("abar") * self.g(x) / (2.0 * self.g("L"))).min(0.5)
    }

    /// Hoeffding exponent `2 x^2 / c_max^2` (infinite for constant-modulus sets).
    fn hoeff(&self, x: f64) -> f64 {
        let c = self.g("cmax");
        if c == 0.0 {
            f64::INFINITY
        } else {
            2.0 * x * x / (c * c)
        }
    }
}

struct Node {
    name: &'static str,
    deps: &'static [&'static str],
    eval: fn(&Vals) -> f64,
}

macro_rules! node {
    ($name:literal, [$($dep:literal),* $(,)?], $f:expr) => {
        Node { name: $name, deps: &[$($dep),*], eval: $f }
    };
}

fn min_of(xs: &[f64]) -> f64 {
    xs.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn ratio(x: f64) -> f64 {
    x / (1.0 + x)
}

/// `min{x^2/16, x/4}`
fn exp_pair(x: f64) -> f64 {
    (x * x / 16.0).min(x / 4.0)
}

/// `min{sqrt(x/2), x / (2 |E Z^H q|)}`
fn root_pair(x: f64, ezq: f64) -> f64 {
    (x / 2.0).sqrt().min(x / (2.0 * ezq))
}

fn shared_nodes() -> Vec<Node> {
    vec![
        node!("tau", ["K"], |v| v.g("K").powf(-0.25)),
        node!("L", ["s2", "ef2"], |v| {
            let (s2, ef2) = (v.g("s2"), v.g("ef2"));
            4.0 * (1.0 + s2) * (ef2 + 1.0) + 2.0 * s2 * (1.0 + ef2)
        }),
        node!("C1p", ["cmax", "gamma", "M1"], |v| {
            max_of(&[
                v.g("cmax").powi(2) / 2.0,
                2.0,
                2.0 / v.g("gamma"),
                32.0 * v.g("M1").powi(2),
            ])
        }),
        node!("C2p", ["gamma", "M1"], |v| max_of(&[2.0, 2.0 / v.g("gamma"), 8.0 * v.g("M1")])),
        node!("A8", ["M0", "abar", "Kg", "Kh"], |v| {
            12.0 * (2.0 * v.g("M0").powi(2) / v.g("abar") * v.g("Kg").max(v.g("Kh"))).sqrt()
        }),
        node!("A4", ["M0", "abar", "Kk"], |v| 12.0 * v.g("M0").powi(2) / v.g("abar") * v.g("Kk")),
    ]
}

fn tg_nodes() -> Vec<Node> {
    let mut n = shared_nodes();
    n.extend(vec![
        // eps chain
        node!("e1", ["eps"], |v| td(0.0, 1.0, v.g("eps") / 2.0)),
        node!("e2", ["eps", "tg"], |v| {
            let tg = v.g("tg");
            td(1.0, tg * tg, v.g("eps") * tg / 2.0)
        }),
        node!("e3", ["c1", "ed2f2", "e2"], |v| td(v.g("c1").powi(2), v.g("ed2f2"), v.g("e2") / 6.0)),
        node!("e4", ["c1", "s2", "e3"], |v| td(v.g("c1").powi(2), v.g("s2"), v.g("e3"))),
        node!("e5", ["s2", "e4"], |v| td(1.0, v.g("s2"), v.g("e4"))),
        node!("e6", ["e5"], |v| ratio(v.g("e5"))),
        node!("e7", ["c2", "ed2", "e2"], |v| td(v.g("c2").powi(2), v.g("ed2"), v.g("e2") / 6.0)),
        node!("e8", ["e2"], |v| td(0.0, 2.0, v.g("e2") / 6.0)),
        node!("e9", ["ss", "e8"], |v| td(1.0, v.g("ss"), v.g("e8") / 2.0)),
        node!("e10", ["e9"], |v| ratio(v.g("e9"))),
        node!("e11", ["c1", "c2", "e8"], |v| td(0.0, v.g("c1") * v.g("c2"), v.g("e8") / 4.0)),
        node!("e12", ["c1", "c2", "e11"], |v| td(v.g("c1"), v.g("c2"), v.g("e11") / 4.0)),
        node!("e13", ["c1", "s2", "edf", "e2"], |v| {
            td(v.g("c1").powi(2), v.g("s2") * v.g("edf").powi(2), v.g("e2") / 6.0)
        }),
        node!("e14", ["ss", "edf", "e13"], |v| td(v.g("ss"), v.g("edf"), v.g("e13"))),
        node!("e15", ["s2", "e14"], |v| td(1.0, v.g("s2"), v.g("e14"))),
        node!("e16", ["e15"], |v| ratio(v.g("e15"))),
        node!("e17", ["c2", "e2"], |v| td(0.0, v.g("c2"), v.g("e2") / 6.0)),
        node!("e18", ["e17"], |v| td(1.0, 0.0, v.g("e17"))),
        node!("e19", ["e18"], |v| ratio(v.g("e18"))),
        node!("e20", ["e2"], |v| (v.g("e2") / 6.0).sqrt()),
        node!("e21", ["ss", "e20"], |v| td(v.g("ss"), 0.0, v.g("e20"))),
        node!("e22", ["e21"], |v| td(1.0, 0.0, v.g("e21"))),
        node!("e23", ["e22"], |v| ratio(v.g("e22"))),
        node!("e24", ["c1", "c2", "e20"], |v| td(v.g("c1") * v.g("c2"), 0.0, v.g("e20"))),
        node!("e25", ["c1", "c2", "e24"], |v| td(v.g("c1"), v.g("c2"), v.g("e24"))),
        node!("e26", ["edf", "e25"], |v| td(v.g("edf"), 0.0, v.g("e25"))),
        node!("e27", ["e14", "e26"], |v| {
            let e14 = v.g("e14");
            min_of(&[(e14 / 2.0).sqrt(), e14 / 4.0, v.g("e26")])
        }),
        node!("e28", ["e26", "e18"], |v| v.g("e26").min(v.g("e18"))),
        node!("e29", ["e13", "e25"], |v| {
            let e13 = v.g("e13");
            min_of(&[(e13 / 2.0).sqrt(), e13 / 4.0, v.g("e25")])
        }),
        node!("e30", ["e16", "e19", "e23"], |v| {
            let (e16, e23) = (v.g("e16"), v.g("e23"));
            min_of(&[
                (e16 / 2.0).sqrt(),
                e16 / 4.0,
                v.g("e19"),
                (e23 / 3.0).sqrt(),
                e23 / 3.0,
                e23 / 9.0,
            ])
        }),
        node!("e31", ["e15", "ss", "e21"], |v| v.g("e15").min(v.g("ss") * v.g("e21"))),
        node!("e32", ["e17", "ss", "e19", "e25"], |v| {
            let e17 = v.g("e17");
            min_of(&[(e17 / 2.0).sqrt(), v.g("ss") * v.g("e19"), e17 / 4.0, v.g("e25")])
        }),
        node!("e33", ["e1", "e2"], |v| ratio(v.g("e1").min(v.g("e2")))),
        node!("e34", ["e33"], |v| td(1.0, 1.0, v.g("e33"))),
        node!("e35", ["c2", "e1"], |v| td(v.g("c2"), 0.0, v.g("e1"))),
        // delta chain
        node!("d1", ["ezq", "abar", "eta2"], |v| {
            td(v.g("ezq"), 1.0 / v.g("abar").powi(2), v.g("eta2"))
        }),
        node!("d2", ["abar", "d1"], |v| td(1.0, 1.0 / v.g("abar").powi(2), v.g("d1"))),
        node!("d3", ["d2", "abar"], |v| ratio(v.g("d2") * v.g("abar"))),
        node!("d4", ["d2"], |v| ratio(v.g("d2"))),
        node!("d5_arg", ["c2", "e12", "e7"], |v| (v.g("c2") * v.g("e12")).min(v.g("e7"))),
        node!("d5", ["c2", "d5_arg"], |v| td(1.0, v.g("c2").powi(2), v.g("d5_arg"))),
        node!("d6", ["ezq", "d5"], |v| td(1.0, v.g("ezq").powi(2), v.g("d5"))),
        node!("d7", ["d6"], |v| ratio(v.g("d6"))),
        node!("d8", ["d6", "ezq"], |v| root_pair(v.g("d6"), v.g("ezq"))),
        node!("d9", ["d5"], |v| 0.5 * ((1.0 + v.g("d5")).sqrt() - 1.0)),
        node!("d10", ["d5", "d8"], |v| (v.g("d5").powi(2) / 2.0).min(2.0 * v.g("d8").powi(2))),
        node!("d11", ["d5", "d8"], |v| v.g("d5").min(v.g("d8"))),
        node!("d12", ["ezq", "abar", "e29"], |v| {
            td(v.g("ezq"), 1.0 / v.g("abar").powi(2), v.g("e29"))
        }),
        node!("d13", ["abar", "d12"], |v| td(1.0, 1.0 / v.g("abar").powi(2), v.g("d12"))),
        node!("d14", ["d13", "abar"], |v| ratio(v.g("d13") * v.g("abar"))),
        node!("d15", ["d13"], |v| ratio(v.g("d13"))),
        node!("d16", ["c2", "e32"], |v| td(1.0, v.g("c2").powi(2), v.g("e32"))),
        node!("d17", ["ezq", "d16"], |v| td(1.0, v.g("ezq").powi(2), v.g("d16"))),
        node!("d18", ["d17"], |v| ratio(v.g("d17"))),
        node!("d19", ["d17", "ezq"], |v| root_pair(v.g("d17"), v.g("ezq"))),
        node!("d20", ["d16"], |v| 0.5 * ((1.0 + v.g("d16")).sqrt() - 1.0)),
        node!("d21", ["d16", "d19"], |v| (v.g("d16").powi(2) / 2.0).min(2.0 * v.g("d19").powi(2))),
        node!("d22", ["d16", "d19"], |v| v.g("d16").min(v.g("d19"))),
        node!("d23", ["c2", "e35"], |v| td(1.0, v.g("c2").powi(2), v.g("c2") * v.g("e35"))),
        node!("d24", ["ezq", "d23"], |v| td(1.0, v.g("ezq").powi(2), v.g("d23"))),
        node!("d25", ["d24"], |v| ratio(v.g("d24"))),
        node!("d26", ["d24", "ezq"], |v| root_pair(v.g("d24"), v.g("ezq"))),
        node!("d27", ["d23"], |v| 0.5 * ((1.0 + v.g("d23")).sqrt() - 1.0)),
        node!("d28", ["d23", "d26"], |v| (v.g("d23").powi(2) / 2.0).min(2.0 * v.g("d26").powi(2))),
        node!("d29", ["d23", "d26"], |v| v.g("d23").min(v.g("d26"))),
        // eta chain
        node!("eta1", ["d1", "tau"], |v| v.g("d1") * v.g("tau") / 96.0),
        node!("eta2", ["e12", "e4"], |v| {
            let e4 = v.g("e4");
            min_of(&[v.g("e12"), (e4 / 2.0).sqrt(), e4 / 4.0])
        }),
        node!("eta3", ["d5", "tau"], |v| v.g("d5") * v.g("tau") / 192.0),
        node!("eta4", ["d8", "tau"], |v| v.g("d8") * v.g("tau") / 96.0),
        node!("eta5", ["eta3", "eta4"], |v| v.g("eta3").min(v.g("eta4"))),
        node!("eta6", ["d12", "tau"], |v| v.g("d12") * v.g("tau") / 96.0),
        node!("eta7", ["d16", "tau"], |v| v.g("d16") * v.g("tau") / 192.0),
        node!("eta8", ["d19", "tau"], |v| v.g("d19") * v.g("tau") / 96.0),
        node!("eta9", ["eta7", "eta8"], |v| v.g("eta7").min(v.g("eta8"))),
        node!("eta10", ["d23", "tau"], |v| v.g("d23") * v.g("tau") / 192.0),
        node!("eta11", ["d26", "tau"], |v| v.g("d26") * v.g("tau") / 96.0),
        node!("eta12", ["eta10", "eta11"], |v| v.g("eta10").min(v.g("eta11"))),
        // delta_hat evaluations
        node!("dh_eta1", ["gamma", "abar", "L", "eta1"], |v| v.dhat("eta1")),
        node!("dh_d3", ["gamma", "abar", "L", "d3"], |v| v.dhat("d3")),
        node!("dh_eta5", ["gamma", "abar", "L", "eta5"], |v| v.dhat("eta5")),
        node!("dh_eta6", ["gamma", "abar", "L", "eta6"], |v| v.dhat("eta6")),
        node!("dh_d14", ["gamma", "abar", "L", "d14"], |v| v.dhat("d14")),
        node!("dh_eta9", ["gamma", "abar", "L", "eta9"], |v| v.dhat("eta9")),
        node!("dh_eta12", ["gamma", "abar", "L", "eta12"], |v| v.dhat("eta12")),
        // aggregated rates
        node!(
            "te1",
            [
                "M1", "gamma", "cmax", "ss", "C1p", "C2p", "e2", "e3", "e5", "e6", "e7", "e9",
                "e10", "e11", "e27", "e28", "e30", "e31", "e34", "e35", "d4", "dh_eta1", "dh_d3",
                "dh_eta5", "dh_eta6", "dh_d14", "dh_eta9", "dh_eta12"
            ],
            |v| {
                let m1 = v.g("M1");
                let g = v.g("gamma");
                let (c1p, c2p) = (v.g("C1p"), v.g("C2p"));
                let dh = |n: &str| {
                    let x = v.g(n);
                    [x * x / c1p, x / c2p]
                };
                let mut xs = vec![
                    v.g("e2").powi(2) / (128.0 * m1 * m1),
                    v.g("e3") / (16.0 * m1),
                    v.g("e7").powi(2) / (128.0 * m1 * m1),
                    v.g("e7") / (16.0 * m1),
                    v.g("e11").powi(2) / (2.0 * m1 * m1),
                    g / 2.0,
                    g * v.g("d4").powi(2) / 2.0,
                    g * v.g("d4") / 2.0,
                    v.hoeff(v.g("ss") * v.g("e9")),
                    v.hoeff(v.g("e5")),
                    v.g("e6") / 2.0,
                    v.g("e6").powi(2) / 2.0,
                    v.g("e10") / 2.0,
                    v.g("e10").powi(2) / 2.0,
                    v.g("e27").powi(2) / (128.0 * m1 * m1),
                    v.g("e27") / (16.0 * m1),
                    v.g("e28").powi(2) / (2.0 * m1 * m1),
                    v.g("e30").powi(2) / 2.0,
                    v.g("e30") / 2.0,
                    v.hoeff(v.g("e31")),
                    v.g("e34").powi(2) / 2.0,
                    v.g("e34") / 2.0,
                    v.g("e35").powi(2),
                ];
                for n in ["dh_eta1", "dh_d3", "dh_eta5", "dh_eta6", "dh_d14", "dh_eta9", "dh_eta12"] {
                    xs.extend(dh(n));
                }
                min_of(&xs)
            }
        ),
        node!("te2", ["gamma", "d1", "d12", "d10", "d21", "d28"], |v| {
            let g = v.g("gamma");
            min_of(&[
                g * v.g("d1").powi(2) / 1152.0,
                g * v.g("d12").powi(2) / 1152.0,
                g * v.g("d10") / 2304.0,
                g * v.g("d21") / 2304.0,
                g * v.g("d28") / 2304.0,
            ])
        }),
        node!(
            "te3",
            [
                "M0", "M1", "gamma", "e3", "e7", "e27", "d1", "d11", "d12", "d22", "d29", "dh_eta1",
                "dh_d3", "dh_eta5", "dh_eta6", "dh_d14", "dh_eta9", "dh_eta12"
            ],
            |v| {
                let m1s = v.g("M1").powi(2);
                let m0s = v.g("M0").powi(2);
                let g = v.g("gamma");
                max_of(&[
                    16.0 * m1s / v.g("e3").powi(2).min(v.g("e7").powi(2)),
                    192.0 * m1s / v.g("dh_eta1").powi(2),
                    55296.0 * m1s / (g * v.g("d1").powi(2)),
                    24.0 * m1s / v.g("dh_d3").powi(2),
                    144.0 * m1s / v.g("dh_eta5").powi(2),
                    37440.0 * m0s / (g * v.g("d11")),
                    24.0 * m1s / v.g("e27").powi(2),
                    192.0 * m1s / v.g("dh_eta6").powi(2),
                    55296.0 * m0s / (g * v.g("d12").powi(2)),
                    24.0 * m1s / v.g("dh_d14").powi(2),
                    288.0 * m1s / v.g("dh_eta9").powi(2),
                    74880.0 * m0s / (g * v.g("d22").powi(2)),
                    144.0 * m1s / v.g("dh_eta12").powi(2),
                    37440.0 * m0s / (g * v.g("d29").powi(2)),
                ])
            }
        ),
        node!("delta", ["d4", "d7", "d8", "d15", "d18", "d19", "d25", "d26"], |v| {
            min_of(
                &["d4", "d7", "d8", "d15", "d18", "d19", "d25", "d26"]
                    .map(|n| exp_pair(v.g(n))),
            )
        }),
        // the four terms of R
        node!("term_exp_K", ["K", "te1"], |v| 1594.0 * (-v.g("K") * v.g("te1")).exp()),
        node!("term_exp_sqrtK", ["K", "te2"], |v| 224.0 * (-v.g("K").sqrt() * v.g("te2")).exp()),
        node!("term_poly", ["K", "te3"], |v| 17.0 * v.g("te3") / v.g("K")),
        node!("term_exp_gamma", ["K", "gamma", "delta"], |v| {
            20.0 * (-0.5 * (v.g("gamma") * v.g("K") - 1.0) * v.g("delta")).exp()
        }),
        node!("bound", ["term_exp_K", "term_exp_sqrtK", "term_poly", "term_exp_gamma"], |v| {
            v.g("term_exp_K") + v.g("term_exp_sqrtK") + v.g("term_poly") + v.g("term_exp_gamma")
        }),
        // threshold
        node!(
            "k_hat",
            ["A8", "A4", "Kbar", "gamma", "d1", "d4", "d5", "d6", "d8", "d16", "d19", "d23", "d26"],
            |v| {
                let a8 = v.g("A8");
                let a4 = v.g("A4");
                let g = v.g("gamma");
                max_of(&[
                    (a8 / v.g("d1")).powi(8),
                    (a4 / v.g("d5")).powi(4),
                    (a8 / v.g("d8")).powi(8),
                    (a8 / v.g("d6")).powi(8),
                    (a4 / v.g("d16")).powi(4),
                    (a8 / v.g("d19")).powi(8),
                    (a4 / v.g("d23")).powi(4),
                    (a8 / v.g("d26")).powi(8),
                    v.g("Kbar"),
                    1.0 / (g * v.g("d4")),
                    1.0 / (g * v.g("d8")),
                    1.0 / (g * v.g("d19")),
                ])
            }
        ),
    ]);
    n
}

fn ts_nodes() -> Vec<Node> {
    let mut n = shared_nodes();
    n.extend(vec![
        node!("e36", ["edf", "c1", "eps"], |v| td(v.g("edf"), v.g("c1"), v.g("eps") / 3.0)),
        node!("e37", ["c2", "eps"], |v| td(v.g("c2"), 0.0, v.g("eps") / 3.0)),
        node!("e38", ["tg", "eps"], |v| td(v.g("tg"), 0.0, v.g("eps") / 3.0)),
        node!("e39", ["edf", "e36"], |v| td(v.g("edf"), 1.0, v.g("e36"))),
        node!("e40", ["e39"], |v| ratio(v.g("e39"))),
        node!("e41", ["ss", "e37"], |v| td(0.0, 1.0 / v.g("ss"), v.g("e37") / 2.0)),
        node!("e42", ["ss", "e41"], |v| td(1.0, 1.0 / v.g("ss"), v.g("e41"))),
        node!("e43", ["ss", "e37"], |v| td(0.0, 1.0 / v.g("ss"), v.g("e37") / 2.0)),
        node!("e44", ["e42"], |v| ratio(v.g("e42"))),
        node!("e45", ["e41", "e42", "e43"], |v| min_of(&[v.g("e41"), v.g("e42"), v.g("e43")])),
        node!("e46", ["e45", "ss"], |v| ratio(v.g("e45") * v.g("ss"))),
        node!("e47", ["e40"], |v| v.g("e40")),
        node!("d30", ["ezq", "abar", "e36"], |v| {
            td(v.g("ezq"), 1.0 / v.g("abar").powi(2), v.g("e36"))
        }),
        node!("d31", ["abar", "d30"], |v| td(1.0, 1.0 / v.g("abar").powi(2), v.g("d30"))),
        node!("d32", ["d31", "abar"], |v| ratio(v.g("d31") * v.g("abar"))),
        node!("d33", ["d31"], |v| ratio(v.g("d31"))),
        node!("d34_arg", ["c2", "e37"], |v| v.g("c2") * v.g("e37")),
        node!("d34", ["c2", "d34_arg"], |v| td(1.0, v.g("c2").powi(2), v.g("d34_arg"))),
        node!("d35", ["ezq", "d34"], |v| td(1.0, v.g("ezq").powi(2), v.g("d34"))),
        node!("d36", ["d35"], |v| ratio(v.g("d35"))),
        node!("d37", ["d35", "ezq"], |v| root_pair(v.g("d35"), v.g("ezq"))),
        node!("d38", ["d34"], |v| 0.5 * ((1.0 + v.g("d34")).sqrt() - 1.0)),
        node!("d39", ["d34", "d37"], |v| (v.g("d34").powi(2) / 2.0).min(2.0 * v.g("d37").powi(2))),
        node!("d40", ["d34", "d37"], |v| v.g("d34").min(v.g("d37"))),
        node!("eta13", ["d30", "tau"], |v| v.g("d30") * v.g("tau") / 96.0),
        node!("eta14", ["tg.d5", "tg.e4", "tau"], |v| {
            v.g("tg.d5") * v.g("tau") / 192.0 * v.g("tg.e4") / 4.0
        }),
        node!("eta15", ["d37", "tau"], |v| v.g("d37") * v.g("tau") / 96.0),
        node!("eta16", ["eta14", "eta15"], |v| v.g("eta14").min(v.g("eta15"))),
        node!("dh_eta13", ["gamma", "abar", "L", "eta13"], |v| v.dhat("eta13")),
        node!("dh_d32", ["gamma", "abar", "L", "d32"], |v| v.dhat("d32")),
        node!("dh_eta16", ["gamma", "abar", "L", "eta16"], |v| v.dhat("eta16")),
        node!("dh_tg.d16", ["gamma", "abar", "L", "tg.d16"], |v| v.dhat("tg.d16")),
        node!(
            "te4",
            [
                "M1", "gamma", "cmax", "ss", "C1p", "C2p", "e39", "e41", "e44", "e46", "e47",
                "d33", "dh_eta13", "dh_d32", "dh_eta16", "dh_tg.d16"
            ],
            |v| {
                let m1 = v.g("M1");
                let g = v.g("gamma");
                let (c1p, c2p) = (v.g("C1p"), v.g("C2p"));
                min_of(&[
                    v.g("e39").powi(2) / (32.0 * m1 * m1),
                    v.g("e39") / (8.0 * m1),
                    v.g("e41").powi(2) / (2.0 * m1 * m1),
                    v.g("e47") / 2.0,
                    v.g("e47").powi(2) / 2.0,
                    v.hoeff(v.g("ss") * v.g("e46")),
                    v.g("dh_eta13").powi(2) / c1p,
                    v.g("dh_eta13") / c2p,
                    v.g("dh_d32").powi(2) / c1p,
                    v.g("dh_d32") / c2p,
                    g * v.g("d33").powi(2) / 2.0,
                    g * v.g("d33") / 2.0,
                    v.g("dh_eta16") / c2p,
                    v.g("dh_tg.d16").powi(2) / c1p,
                    v.g("e41").powi(2),
                    v.g("e44").powi(2) * g / 2.0,
                ])
            }
        ),
        node!("te5", ["gamma", "d30", "d39"], |v| {
            let g = v.g("gamma");
            (g * v.g("d30").powi(2) / 2304.0).min(g * v.g("d39") / 2304.0)
        }),
        node!(
            "te6",
            ["M0", "M1", "gamma", "e39", "d30", "d40", "dh_eta13", "dh_d32", "dh_eta16"],
            |v| {
                let m1s = v.g("M1").powi(2);
                let m0s = v.g("M0").powi(2);
                let g = v.g("gamma");
                max_of(&[
                    8.0 * m1s / v.g("e39").powi(2),
                    64.0 * m1s / v.g("dh_eta13").powi(2),
                    18432.0 * m0s / (g * v.g("d30").powi(2)),
                    8.0 * m1s / v.g("dh_d32").powi(2),
                    144.0 * m1s / v.g("dh_eta16").powi(2),
                    37440.0 * m0s / (g * v.g("d40").powi(2)),
                ])
            }
        ),
        node!("delta_prime", ["d33", "d36", "d37"], |v| {
            min_of(&["d33", "d36", "d37"].map(|n| exp_pair(v.g(n))))
        }),
        node!("term_tg", ["tg.bound", "tg.eps", "e38"], |v| {
            debug_assert_eq!(v.g("tg.eps"), v.g("e38"));
            v.g("tg.bound")
        }),
        node!("term_exp_K", ["K", "te4"], |v| 255.0 * (-v.g("K") * v.g("te4")).exp()),
        node!("term_exp_sqrtK", ["K", "te5"], |v| 26.0 * (-v.g("K").sqrt() * v.g("te5")).exp()),
        node!("term_poly", ["K", "te6"], |v| 6.0 * v.g("te6") / v.g("K")),
        node!("term_exp_gamma", ["K", "gamma", "delta_prime"], |v| {
            6.0 * (-0.5 * (v.g("gamma") * v.g("K") - 1.0) * v.g("delta_prime")).exp()
        }),
        node!(
            "bound",
            ["term_tg", "term_exp_K", "term_exp_sqrtK", "term_poly", "term_exp_gamma"],
            |v| {
                v.g("term_tg")
                    + v.g("term_exp_K")
                    + v.g("term_exp_sqrtK")
                    + v.g("term_poly")
                    + v.g("term_exp_gamma")
            }
        ),
        node!("k_hat", ["tg.k_hat", "A8", "A4", "gamma", "d30", "d34", "d37"], |v| {
            let a8 = v.g("A8");
            max_of(&[
                v.g("tg.k_hat"),
                (a8 / v.g("d30")).powi(8),
                (v.g("A4") / v.g("d34")).powi(4),
                (a8 / v.g("d37")).powi(8),
                1.0 / (v.g("gamma") * v.g("d37")),
            ])
        }),
    ]);
    n
}

/// Result of evaluating a cascade at `(eps, K)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeEval {
    pub eps: f64,
    pub k: f64,
    pub bound: f64,
    /// Threshold `K_hat` beyond which the bound is asserted.
    pub k_hat: f64,
    /// Additive components of the bound, in table order.
    pub terms: Vec<(String, f64)>,
    /// Every evaluated named constant (inputs excluded).
    pub nodes: BTreeMap<String, f64>,
    /// Named constants that feed neither the bound nor the threshold.
    pub unreachable: Vec<String>,
}

impl CascadeEval {
    pub fn above_threshold(&self) -> bool {
        self.k > self.k_hat
    }

    pub fn node(&self, name: &str) -> Option<f64> {
        self.nodes.get(name).copied()
    }
}

const TG_TERMS: [&str; 4] = ["term_exp_K", "term_exp_sqrtK", "term_poly", "term_exp_gamma"];
const TS_TERMS: [&str; 5] = ["term_tg", "term_exp_K", "term_exp_sqrtK", "term_poly", "term_exp_gamma"];

fn evaluate(
    nodes: &[Node],
    inputs: &[(&'static str, f64)],
    terms: &[&str],
) -> Result<CascadeEval> {
    let mut values: HashMap<&'static str, f64> = inputs.iter().cloned().collect();
    let index: HashMap<&'static str, usize> =
        nodes.iter().enumerate().map(|(i, n)| (n.name, i)).collect();
    if index.len() != nodes.len() {
        return Err(QprecError::Numerical("cascade table has duplicate node names".into()));
    }
    // Depth-first topological order over declared dependencies.
    let mut order = Vec::with_capacity(nodes.len());
    let mut state = vec![0u8; nodes.len()];
    fn visit(
        i: usize,
        nodes: &[Node],
        index: &HashMap<&'static str, usize>,
        inputs: &HashMap<&'static str, f64>,
        state: &mut [u8],
        order: &mut Vec<usize>,
    ) -> Result<()> {
        match state[i] {
            2 => return Ok(()),
            1 => {
                return Err(QprecError::Numerical(format!(
                    "cascade cycle through `{}`",
                    nodes[i].name
                )))
            }
            _ => {}
        }
        state[i] = 1;
        for d in nodes[i].deps {
            if let Some(&j) = index.get(d) {
                visit(j, nodes, index, inputs, state, order)?;
            } else if !inputs.contains_key(d) {
                return Err(QprecError::Numerical(format!(
                    "cascade node `{}` depends on unknown `{d}`",
                    nodes[i].name
                )));
            }
        }
        state[i] = 2;
        order.push(i);
        Ok(())
    }
    let input_map = values.clone();
    for i in 0..nodes.len() {
        visit(i, nodes, &index, &input_map, &mut state, &mut order)?;
    }
    for &i in &order {
        let n = &nodes[i];
        let x = (n.eval)(&Vals { node: n.name, deps: n.deps, values: &values });
        if x.is_nan() {
            return Err(QprecError::Numerical(format!("cascade node `{}` evaluated to NaN", n.name)));
        }
        values.insert(n.name, x);
    }
    // Ancestors of the outputs.
    let mut reach = vec![false; nodes.len()];
    let mut stack: Vec<usize> = ["bound", "k_hat"].iter().map(|n| index[n]).collect();
    while let Some(i) = stack.pop() {
        if reach[i] {
            continue;
        }
        reach[i] = true;
        for d in nodes[i].deps {
            if let Some(&j) = index.get(d) {
                stack.push(j);
            }
        }
    }
    let unreachable = nodes
        .iter()
        .zip(&reach)
        .filter(|(_, r)| !**r)
        .map(|(n, _)| n.name.to_string())
        .collect();
    Ok(CascadeEval {
        eps: values["eps"],
        k: values["K"],
        bound: values["bound"],
        k_hat: values["k_hat"],
        terms: terms.iter().map(|t| (t.to_string(), values[t])).collect(),
        nodes: nodes.iter().map(|n| (n.name.to_string(), values[n.name])).collect(),
        unreachable,
    })
}

fn check_args(eps: f64, k: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return invalid(format!("cascade: eps must be finite and > 0, got {eps}"));
    }
    if !(k.is_finite() && k >= 1.0) {
        return invalid(format!("cascade: K must be finite and >= 1, got {k}"));
    }
    Ok(())
}

/// Evaluates `R(eps, K)` and its threshold regardless of whether `K` exceeds it.
pub fn evaluate_tg(eps: f64, k: f64, p: &CascadeParams) -> Result<CascadeEval> {
    check_args(eps, k)?;
    p.validate()?;
    evaluate(&tg_nodes(), &p.inputs(eps, k), &TG_TERMS)
}

/// Evaluates `R_tilde(eps, K)` and its threshold regardless of whether `K` exceeds it.
/// The embedded `R` cascade is evaluated at `eps_38 = delta_tilde(T_g_bar, 0, eps/3)`
/// and its constants `delta_5`, `eps_4`, `delta_16` are reused where referenced.
pub fn evaluate_ts(eps: f64, k: f64, p: &CascadeParams) -> Result<CascadeEval> {
    check_args(eps, k)?;
    p.validate()?;
    let eps38 = td(p.tg_bar, 0.0, eps / 3.0);
    let tg = evaluate_tg(eps38, k, p)?;
    let mut inputs = p.inputs(eps, k);
    inputs.extend([
        ("tg.bound", tg.bound),
        ("tg.eps", eps38),
        ("tg.k_hat", tg.k_hat),
        ("tg.d5", tg.nodes["d5"]),
        ("tg.e4", tg.nodes["e4"]),
        ("tg.d16", tg.nodes["d16"]),
    ]);
    evaluate(&ts_nodes(), &inputs, &TS_TERMS)
}

fn asserted(e: CascadeEval) -> Result<CascadeEval> {
    if e.above_threshold() {
        Ok(e)
    } else {
        Err(QprecError::BelowThreshold { k: e.k, k_hat: e.k_hat })
    }
}

/// `R(eps, K)`; fails with [`QprecError::BelowThreshold`] when `K <= K_hat`.
pub fn tail_tg(eps: f64, k: f64, p: &CascadeParams) -> Result<CascadeEval> {
    asserted(evaluate_tg(eps, k, p)?)
}

/// `R_tilde(eps, K)`; fails with [`QprecError::BelowThreshold`] when `K <= K_tilde`.
pub fn tail_ts(eps: f64, k: f64, p: &CascadeParams) -> Result<CascadeEval> {
    asserted(evaluate_ts(eps, k, p)?)
}

/// `sup_eps eps^2 * rate(eps, K)` over a log grid of small `eps`, where `rate`
/// is the `1/K` coefficient of a cascade (`eps_tilde_3` or `eps_tilde_6`).
fn inverse_square_constant(
    p: &CascadeParams,
    k: f64,
    eval: fn(f64, f64, &CascadeParams) -> Result<CascadeEval>,
    node: &str,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for i in 0..=60 {
        let eps = 10f64.powf(-8.0 + 7.0 * i as f64 / 60.0);
        let e = eval(eps, k, p)?;
        best = best.max(eps * eps * e.nodes[node]);
    }
    Ok(best)
}

/// `C = (68 c_3)^{1/3}` with `eps_tilde_3 <= c_3 / eps^2` at dimension `K`.
pub fn kf_constant_tg(p: &CascadeParams, k: f64) -> Result<f64> {
    Ok((68.0 * inverse_square_constant(p, k, evaluate_tg, "te3")?).cbrt())
}

/// `C' = (48 c_tilde_3)^{1/3}` with `eps_tilde_6 <= c_tilde_3 / eps^2` at dimension `K`.
pub fn kf_constant_ts(p: &CascadeParams, k: f64) -> Result<f64> {
    Ok((48.0 * inverse_square_constant(p, k, evaluate_ts, "te6")?).cbrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::Constellation;

    fn params() -> CascadeParams {
        let cfg = SystemConfig::new(256, 64, 0.1, Constellation::qpsk(), 1.0).unwrap();
        let f = ShapingFunction::rzf(0.25).unwrap();
        let q = QuantizerSpec::one_bit_unit();
        CascadeParams::from_model(&cfg, &f, &q).unwrap()
    }

    #[test]
    fn tables_are_acyclic_and_positive() {
        let p = params();
        let e = evaluate_ts(0.1, 1e4, &p).unwrap();
        for (name, v) in &e.nodes {
            assert!(*v > 0.0, "{name} = {v}");
        }
        let g = evaluate_tg(0.1, 1e4, &p).unwrap();
        for (name, v) in &g.nodes {
            assert!(*v > 0.0, "{name} = {v}");
        }
    }

    #[test]
    fn unreachable_nodes_are_reported() {
        let p = params();
        let g = evaluate_tg(0.1, 1e4, &p).unwrap();
        for n in ["d9", "d20", "d27"] {
            assert!(g.unreachable.contains(&n.to_string()), "{n} missing from {:?}", g.unreachable);
        }
        assert!(!g.unreachable.contains(&"e1".to_string()));
        let s = evaluate_ts(0.1, 1e4, &p).unwrap();
        assert!(s.unreachable.contains(&"d38".to_string()));
    }

    #[test]
    fn below_threshold_is_signalled() {
        let p = params();
        match tail_tg(0.1, 1e3, &p) {
            Err(QprecError::BelowThreshold { k, k_hat }) => assert!(k <= k_hat),
            other => panic!("expected below-threshold, got {other:?}"),
        }
    }

    #[test]
    fn constant_modulus_hoeffding_terms_drop_out() {
        let p = params();
        assert_eq!(p.c_max, 0.0);
        let e = evaluate_tg(0.1, 1e4, &p).unwrap();
        assert!(e.nodes["te1"].is_finite());
    }
}
