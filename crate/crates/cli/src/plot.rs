//! Plot-ready series extracted from a results CSV.

use crate::results::{CSV_MAGIC, SCHEMA_VERSION};
use qprec::stats::{linear_fit, loglog_fit, LineFit};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug)]
pub enum PlotError {
    UnknownMetric { metric: String, available: Vec<String> },
    Format(String),
}

impl std::fmt::Display for PlotError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlotError::UnknownMetric { metric, available } => write!(
                f,
                "metric `{metric}` not found; available metrics: {}",
                available.join(", ")
            ),
            PlotError::Format(m) => write!(f, "{m}"),
        }
    }
}

/// One `(K, value)` series, sorted by `K`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Series per seed followed by the per-K mean across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    pub metric: String,
    pub loglog: bool,
    pub seeds: Vec<Series>,
    pub mean: Series,
    pub fit: Option<LineFit>,
}

/// Extract `metric` from CSV text. Non-finite values are dropped.
pub fn extract(csv_text: &str, metric: &str, loglog: bool) -> Result<PlotData, PlotError> {
    if let Some(first) = csv_text.lines().next() {
        if let Some(rest) = first.strip_prefix(CSV_MAGIC) {
            let version: u32 = rest
                .split_whitespace()
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| PlotError::Format("malformed schema header".into()))?;
            if version != SCHEMA_VERSION {
                return Err(PlotError::Format(format!(
                    "unsupported schema version {version} (expected {SCHEMA_VERSION})"
                )));
            }
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(csv_text.as_bytes());
    let mut rows = Vec::new();
    let mut available = std::collections::BTreeSet::new();
    if !csv_text.trim().lines().all(|l| l.starts_with('#')) {
        let headers = reader.headers().map_err(|e| PlotError::Format(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| PlotError::Format(format!("missing column `{name}`")))
        };
        let (ci_seed, ci_k, ci_metric, ci_value) = (col("seed")?, col("k")?, col("metric")?, col("value")?);
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| PlotError::Format(e.to_string()))?;
            let field = |c: usize| rec.get(c).unwrap_or("");
            let bad = |what: &str| PlotError::Format(format!("row {}: bad {what}", i + 1));
            let name = field(ci_metric).to_string();
            available.insert(name.clone());
            if name != metric {
                continue;
            }
            let seed: u64 = field(ci_seed).parse().map_err(|_| bad("seed"))?;
            let k: f64 = field(ci_k).parse().map_err(|_| bad("k"))?;
            let v: f64 = field(ci_value).parse().map_err(|_| bad("value"))?;
            rows.push((seed, k, v));
        }
    }
    if rows.is_empty() && !available.is_empty() {
        return Err(PlotError::UnknownMetric {
            metric: metric.to_string(),
            available: available.into_iter().collect(),
        });
    }

    let usable = |k: f64, v: f64| k.is_finite() && v.is_finite() && (!loglog || (k > 0.0 && v > 0.0));
    let mut per_seed: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    let mut per_k: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for &(seed, k, v) in &rows {
        if !usable(k, v) {
            continue;
        }
        per_seed.entry(seed).or_default().push((k, v));
        let e = per_k.entry(k.to_bits()).or_insert((k, 0.0, 0));
        e.1 += v;
        e.2 += 1;
    }
    let seeds = per_seed
        .into_iter()
        .map(|(seed, mut pts)| {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            Series { label: format!("seed={seed}"), points: pts }
        })
        .collect();
    let mut mean: Vec<(f64, f64)> = per_k.into_values().map(|(k, s, n)| (k, s / n as f64)).collect();
    mean.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (xs, ys): (Vec<f64>, Vec<f64>) = mean.iter().copied().unzip();
    let fit = if loglog { loglog_fit(&xs, &ys) } else { linear_fit(&xs, &ys) }.ok();
    Ok(PlotData {
        metric: metric.to_string(),
        loglog,
        seeds,
        mean: Series { label: "mean".into(), points: mean },
        fit,
    })
}

/// Two-column text: header comments, then blank-line separated series.
pub fn render_text(p: &PlotData) -> String {
    let mut s = String::new();
    let axes = if p.loglog { "loglog" } else { "linear" };
    let _ = writeln!(s, "# qprec-plot schema={SCHEMA_VERSION} metric={} axes={axes}", p.metric);
    match p.fit {
        Some(f) => {
            let _ = writeln!(s, "# fit(mean, {axes}): slope={} intercept={}", f.slope, f.intercept);
        }
        None => {
            let _ = writeln!(s, "# fit(mean, {axes}): unavailable");
        }
    }
    let _ = writeln!(s, "# columns: K value");
    if p.mean.points.is_empty() {
        return s;
    }
    for series in p.seeds.iter().chain(std::iter::once(&p.mean)) {
        let _ = writeln!(s, "\n# series {}", series.label);
        for (k, v) in &series.points {
            let _ = writeln!(s, "{k} {v}");
        }
    }
    s
}

/// Minimal standalone SVG line chart of every series.
pub fn render_svg(p: &PlotData) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 60.0;
    let tx = |v: f64| if p.loglog { v.log10() } else { v };
    let all: Vec<(f64, f64)> = p
        .seeds
        .iter()
        .chain(std::iter::once(&p.mean))
        .flat_map(|s| s.points.iter().map(|&(k, v)| (tx(k), tx(v))))
        .collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let axes = if p.loglog { " (log10 axes)" } else { "" };
    let _ = writeln!(
        s,
        r#"<text x="{M}" y="24" font-family="sans-serif" font-size="14">{} vs K{axes}</text>"#,
        p.metric
    );
    let _ = writeln!(
        s,
        r#"<path d="M{M} {M}V{}H{}" fill="none" stroke="black"/>"#,
        H - M,
        W - M
    );
    if !all.is_empty() {
        let bounds = |f: fn(&(f64, f64)) -> f64| {
            let lo = all.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = all.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) }
        };
        let (x0, x1) = bounds(|p| p.0);
        let (y0, y1) = bounds(|p| p.1);
        let px = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
        let py = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
        for (label, x, y, anchor) in [
            (format!("{:.3}", x0), px(x0), H - M + 16.0, "start"),
            (format!("{:.3}", x1), px(x1), H - M + 16.0, "end"),
            (format!("{:.3e}", y0), M - 4.0, py(y0), "end"),
            (format!("{:.3e}", y1), M - 4.0, py(y1) + 10.0, "end"),
        ] {
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="10" text-anchor="{anchor}">{label}</text>"#
            );
        }
        for series in p.seeds.iter().chain(std::iter::once(&p.mean)) {
            let is_mean = series.label == "mean";
            let pts: Vec<String> = series
                .points
                .iter()
                .map(|&(k, v)| format!("{:.2},{:.2}", px(tx(k)), py(tx(v))))
                .collect();
            let (stroke, width) = if is_mean { ("black", 2.0) } else { ("#999999", 1.0) };
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"><title>{}</title></polyline>"#,
                pts.join(" "),
                series.label
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "# qprec-results schema=1 suite=kyfan-rate\nexperiment,seed,k,metric,value,std_error,bound,holds,note,wall_time\nkyfan-rate,2,256,kf_ts,0.05,,,,,1.0\nkyfan-rate,1,64,kf_ts,0.1,,,,,1.0\nkyfan-rate,1,256,kf_ts,0.06,,,,,1.0\nkyfan-rate,2,64,kf_ts,0.08,,,,,1.0\nkyfan-rate,1,64,kf_tg,0.2,,,,,1.0\n";

    #[test]
    fn series_are_sorted_and_averaged() {
        let p = extract(CSV, "kf_ts", true).unwrap();
        assert_eq!(p.seeds.len(), 2);
        assert_eq!(p.seeds[1].points, vec![(64.0, 0.08), (256.0, 0.05)]);
        assert_eq!(p.mean.points.len(), 2);
        assert!((p.mean.points[0].1 - 0.09).abs() < 1e-15);
        let slope = p.fit.unwrap().slope;
        assert!((slope - (0.055f64 / 0.09).ln() / 4f64.ln()).abs() < 1e-12);
        let text = render_text(&p);
        assert!(text.starts_with("# qprec-plot schema=1 metric=kf_ts axes=loglog\n# fit(mean, loglog): slope=-0.35"));
        assert!(render_svg(&p).contains("<polyline"));
    }

    #[test]
    fn unknown_metric_lists_available() {
        match extract(CSV, "nope", false) {
            Err(PlotError::UnknownMetric { available, .. }) => assert_eq!(available, vec!["kf_tg", "kf_ts"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_gives_header_only() {
        for text in ["", "# qprec-results schema=1 suite=x\n", "# qprec-results schema=1 suite=x\nexperiment,seed,k,metric,value\n"] {
            let p = extract(text, "anything", false).unwrap();
            let out = render_text(&p);
            assert!(out.lines().all(|l| l.starts_with('#')), "{out}");
        }
        assert!(extract("# qprec-results schema=9 suite=x\n", "m", false).is_err());
    }
}
