//! Mapping of a parsed config document onto a [`SuiteConfig`].

use crate::ini::{ConfigError, Document, Entry};
use qprec::experiments::{Suite, SuiteConfig};
use qprec::models::ShapingFunction;
use qprec::optimizer::FamilyGrid;
use qprec::quantizer::QuantizerSpec;
use qprec::stochastic::Constellation;
use qprec::QprecError;
use std::path::{Path, PathBuf};
use std::str::FromStr;

const SCHEMA: &[(&str, &[&str])] = &[
    ("experiment", &["suite", "output"]),
    ("system", &["gamma", "sigma2", "power", "constellation"]),
    ("quantizer", &["kind", "amplitude", "levels", "step", "clip", "phases", "radius"]),
    ("shaping", &["kind", "rho", "scale"]),
    ("grid", &["rho_min", "rho_max", "points", "endpoints", "refinement_depth", "golden_iterations"]),
    ("run", &["k_ladder", "seeds", "trials", "channel_reuse", "reps", "eps", "cascade_ladder"]),
    ("checks", &["edge_slack", "ks_tolerance", "rel_tolerance", "abs_tolerance", "max_slope"]),
];

/// A fully resolved experiment: suite parameters plus the output directory.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub suite: SuiteConfig,
    pub output: PathBuf,
}

/// Parse config text. Relative output paths are resolved against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let doc = Document::parse(text)?;
    check_schema(&doc)?;
    let r = Reader { doc: &doc };

    let suite_name: String = r.required("experiment", "suite")?;
    let suite = Suite::parse(&suite_name).ok_or_else(|| {
        let names: Vec<&str> = Suite::ALL.iter().map(|s| s.name()).collect();
        r.error("experiment", "suite", format!("unknown suite `{suite_name}`; expected one of {}", names.join(", ")))
    })?;
    let mut cfg = SuiteConfig::new(suite);
    let output = base.join(r.optional::<String>("experiment", "output")?.unwrap_or_else(|| "results".into()));

    cfg.gamma = r.required("system", "gamma")?;
    cfg.sigma2 = r.required("system", "sigma2")?;
    if let Some(p) = r.optional("system", "power")? {
        cfg.power = p;
    }
    let cons: String = r.required("system", "constellation")?;
    cfg.constellation = parse_constellation(&cons).map_err(|m| r.error("system", "constellation", m))?;

    cfg.quantizer = parse_quantizer(&r)?;
    if doc.has_section("shaping") {
        cfg.shaping = parse_shaping(&r)?;
    }
    if doc.has_section("grid") {
        cfg.grid = parse_grid(&r, cfg.grid.clone())?;
    }

    cfg.k_ladder = r.required_list("run", "k_ladder")?;
    cfg.seeds = parse_seeds(&r)?;
    macro_rules! opt {
        ($sec:literal, $key:literal, $field:ident) => {
            if let Some(v) = r.optional($sec, $key)? {
                cfg.$field = v;
            }
        };
    }
    opt!("run", "trials", trials);
    opt!("run", "channel_reuse", channel_reuse);
    opt!("run", "reps", reps);
    opt!("checks", "edge_slack", edge_slack);
    opt!("checks", "ks_tolerance", ks_tolerance);
    opt!("checks", "rel_tolerance", rel_tolerance);
    opt!("checks", "abs_tolerance", abs_tolerance);
    opt!("checks", "max_slope", max_slope);
    if r.entry("run", "eps").is_some() {
        cfg.eps = r.required_list("run", "eps")?;
    }
    if r.entry("run", "cascade_ladder").is_some() {
        cfg.cascade_ladder = r.required_list("run", "cascade_ladder")?;
    }

    cfg.validate().map_err(|e| match e {
        QprecError::Config { field, reason } => {
            let line = section_of(&field).and_then(|s| r.entry(s, &field)).map(|e| e.line);
            let full = section_of(&field).map_or(field.clone(), |s| format!("{s}.{field}"));
            ConfigError::field(full, line, reason)
        }
        other => ConfigError::field("config", None, other.to_string()),
    })?;
    Ok(RunConfig { suite: cfg, output })
}

fn section_of(field: &str) -> Option<&'static str> {
    SCHEMA.iter().find(|(_, keys)| keys.contains(&field)).map(|(s, _)| *s)
}

fn check_schema(doc: &Document) -> Result<(), ConfigError> {
    for (section, table) in doc.sections() {
        let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| s == section) else {
            let line = table.values().map(|e| e.line).min();
            let known: Vec<&str> = SCHEMA.iter().map(|(s, _)| *s).collect();
            return Err(ConfigError {
                line,
                field: None,
                message: format!("unknown section [{section}]; expected one of {}", known.join(", ")),
            });
        };
        for (key, entry) in table {
            if !keys.contains(&key.as_str()) {
                return Err(ConfigError::field(
                    format!("{section}.{key}"),
                    Some(entry.line),
                    format!("unknown key; expected one of {}", keys.join(", ")),
                ));
            }
        }
    }
    Ok(())
}

struct Reader<'a> {
    doc: &'a Document,
}

impl Reader<'_> {
    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.doc.get(section, key)
    }

    fn error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::field(format!("{section}.{key}"), self.entry(section, key).map(|e| e.line), message)
    }

    fn optional<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| self.error(section, key, format!("cannot parse `{}`", e.value))),
        }
    }

    fn required<T: FromStr>(&self, section: &str, key: &str) -> Result<T, ConfigError> {
        self.optional(section, key)?
            .ok_or_else(|| self.error(section, key, format!("missing required field in [{section}]")))
    }

    fn required_list<T: FromStr>(&self, section: &str, key: &str) -> Result<Vec<T>, ConfigError> {
        let e = self
            .entry(section, key)
            .ok_or_else(|| self.error(section, key, format!("missing required field in [{section}]")))?;
        e.value
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| self.error(section, key, format!("cannot parse list item `{s}`"))))
            .collect()
    }
}

fn parse_constellation(s: &str) -> Result<Constellation, String> {
    match s.to_ascii_lowercase().as_str() {
        "qpsk" => Ok(Constellation::qpsk()),
        "qam16" | "16qam" => Ok(Constellation::qam16()),
        other => {
            let m = other
                .strip_prefix("psk:")
                .and_then(|m| m.parse::<usize>().ok())
                .ok_or_else(|| format!("unknown constellation `{s}`; expected qpsk, qam16 or psk:M"))?;
            if m < 2 {
                return Err("psk:M needs M >= 2".into());
            }
            Constellation::psk(m).map_err(|e| e.to_string())
        }
    }
}

fn parse_quantizer(r: &Reader) -> Result<QuantizerSpec, ConfigError> {
    let kind: String = r.required("quantizer", "kind")?;
    let built = match kind.as_str() {
        "one-bit" => match r.optional::<f64>("quantizer", "amplitude")? {
            Some(a) => QuantizerSpec::one_bit(a),
            None => Ok(QuantizerSpec::one_bit_unit()),
        },
        "uniform-iq" => QuantizerSpec::uniform_iq(
            r.required("quantizer", "levels")?,
            r.required("quantizer", "step")?,
            r.required("quantizer", "clip")?,
        ),
        "phase-ce" => QuantizerSpec::phase_ce(
            r.required("quantizer", "phases")?,
            r.optional("quantizer", "radius")?.unwrap_or(1.0),
        ),
        _ => {
            return Err(r.error("quantizer", "kind", format!("unknown quantizer `{kind}`; expected one-bit, uniform-iq or phase-ce")))
        }
    };
    built.map_err(|e| r.error("quantizer", "kind", e.to_string()))
}

fn parse_shaping(r: &Reader) -> Result<ShapingFunction, ConfigError> {
    let kind: String = r.required("shaping", "kind")?;
    let base = match kind.as_str() {
        "mf" => ShapingFunction::mf(),
        "zf" => ShapingFunction::zf(),
        "rzf" => ShapingFunction::rzf(r.required("shaping", "rho")?).map_err(|e| r.error("shaping", "rho", e.to_string()))?,
        _ => return Err(r.error("shaping", "kind", format!("unknown shaping `{kind}`; expected mf, zf or rzf"))),
    };
    match r.optional::<f64>("shaping", "scale")? {
        Some(c) => base.scaled(c).map_err(|e| r.error("shaping", "scale", e.to_string())),
        None => Ok(base),
    }
}

fn parse_grid(r: &Reader, default: FamilyGrid) -> Result<FamilyGrid, ConfigError> {
    let lo: f64 = r.required("grid", "rho_min")?;
    let hi: f64 = r.required("grid", "rho_max")?;
    let points: usize = r.required("grid", "points")?;
    let mut g = FamilyGrid::log_spaced(lo, hi, points).map_err(|e| r.error("grid", "points", e.to_string()))?;
    g.include_endpoints = r.optional("grid", "endpoints")?.unwrap_or(default.include_endpoints);
    g.refinement_depth = r.optional("grid", "refinement_depth")?.unwrap_or(default.refinement_depth);
    g.golden_iterations = r.optional("grid", "golden_iterations")?.unwrap_or(default.golden_iterations);
    g.validate().map_err(|e| r.error("grid", "points", e.to_string()))?;
    Ok(g)
}

fn parse_seeds(r: &Reader) -> Result<Vec<u64>, ConfigError> {
    let e = r
        .entry("run", "seeds")
        .ok_or_else(|| r.error("run", "seeds", "missing required field in [run]"))?;
    if let Some((a, b)) = e.value.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| r.error("run", "seeds", "bad range start"))?;
        let b: u64 = b.trim().parse().map_err(|_| r.error("run", "seeds", "bad range end"))?;
        return Ok((a..b).collect());
    }
    r.required_list("run", "seeds")
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[experiment]\nsuite = converge-sinr\noutput = out\n\n[system]\ngamma = 4\nsigma2 = 0.1\nconstellation = qpsk\n\n[quantizer]\nkind = one-bit\n\n[run]\nk_ladder = 16, 64\nseeds = 0..3\n";

    #[test]
    fn minimal_config_uses_suite_defaults() {
        let rc = parse_config(BASE, Path::new("/tmp/x")).unwrap();
        assert_eq!(rc.output, PathBuf::from("/tmp/x/out"));
        assert_eq!(rc.suite.k_ladder, vec![16, 64]);
        assert_eq!(rc.suite.seeds, vec![0, 1, 2]);
        assert_eq!(rc.suite.trials, SuiteConfig::new(Suite::ConvergeSinr).trials);
        assert_eq!(rc.suite.quantizer, QuantizerSpec::one_bit_unit());
    }

    #[test]
    fn missing_constellation_names_the_field() {
        let text = BASE.replace("constellation = qpsk\n", "");
        let e = parse_config(&text, Path::new(".")).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("system.constellation"));
    }

    #[test]
    fn diagnostics_point_at_lines() {
        let e = parse_config(&BASE.replace("gamma = 4", "gamma = four"), Path::new(".")).unwrap_err();
        assert_eq!((e.line, e.field.as_deref()), (Some(6), Some("system.gamma")));
        let e = parse_config(&BASE.replace("k_ladder = 16, 64", "k_ladder = 64, 16"), Path::new(".")).unwrap_err();
        assert_eq!((e.line, e.field.as_deref()), (Some(14), Some("run.k_ladder")));
        let e = parse_config(&format!("{BASE}typo = 1\n"), Path::new(".")).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("run.typo"));
        let e = parse_config(&BASE.replace("qpsk", "psk:1"), Path::new(".")).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("system.constellation"));
    }

    #[test]
    fn quantizer_and_shaping_blocks() {
        let text = BASE.replace("kind = one-bit\n", "kind = uniform-iq\nlevels = 4\nstep = 0.5\nclip = 1.0\n")
            + "\n[shaping]\nkind = rzf\nrho = 0.5\n\n[grid]\nrho_min = 0.01\nrho_max = 1\npoints = 5\n";
        let rc = parse_config(&text, Path::new(".")).unwrap();
        assert_eq!(rc.suite.quantizer, QuantizerSpec::uniform_iq(4, 0.5, 1.0).unwrap());
        assert_eq!(rc.suite.shaping, ShapingFunction::rzf(0.5).unwrap());
        assert_eq!(rc.suite.grid.rhos.len(), 5);
        let bad = BASE.replace("kind = one-bit\n", "kind = uniform-iq\nlevels = 4\n");
        let e = parse_config(&bad, Path::new(".")).unwrap_err();
        assert_eq!(e.field.as_deref(), Some("quantizer.step"));
    }
}
