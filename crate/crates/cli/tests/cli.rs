use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qprec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qprec"))
        .args(args)
        .env_remove("QPREC_THREADS")
        .output()
        .expect("binary runs")
}

fn sinr_config(dir: &Path, constellation: bool) -> std::path::PathBuf {
    let cons = if constellation { "constellation = qpsk\n" } else { "" };
    let text = format!(
        "[experiment]\nsuite = converge-sinr\noutput = out\n\n[system]\ngamma = 4\nsigma2 = 0.1\n{cons}\n[quantizer]\nkind = one-bit\n\n[shaping]\nkind = rzf\nrho = 0.25\n\n[run]\nk_ladder = 16, 64, 256\nseeds = 1, 2\ntrials = 4000\n"
    );
    let path = dir.join("sinr.ini");
    fs::write(&path, text).unwrap();
    path
}

fn strip_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn converge_sinr_run_writes_results_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sinr_config(dir.path(), true);
    let first = qprec(&["--threads", "2", "run", cfg.to_str().unwrap()]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let stdout = String::from_utf8(first.stdout).unwrap();
    assert!(stdout.contains("PASS sinr-gap-decreasing"), "{stdout}");

    let csv_path = dir.path().join("out/converge-sinr.csv");
    let csv = fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("# qprec-results schema=1 suite=converge-sinr\n"));
    assert_eq!(csv.lines().filter(|l| l.contains(",sinr_gap,")).count(), 6);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/converge-sinr.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["schema_version"], 1);

    let second = qprec(&["--threads", "1", "run", cfg.to_str().unwrap()]);
    assert_eq!(second.status.code(), Some(0));
    let again = fs::read_to_string(&csv_path).unwrap();
    assert_eq!(strip_wall_time(&csv), strip_wall_time(&again));

    let plot_a = dir.path().join("a.txt");
    let plot_b = dir.path().join("b.txt");
    let svg = dir.path().join("a.svg");
    for out in [&plot_a, &plot_b] {
        let o = qprec(&[
            "plot",
            csv_path.to_str().unwrap(),
            "--metric",
            "sinr_gap",
            "--loglog",
            "--svg",
            svg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(&plot_a).unwrap();
    assert_eq!(a, fs::read(&plot_b).unwrap());
    let text = String::from_utf8(a).unwrap();
    let slope: f64 = text
        .lines()
        .nth(1)
        .and_then(|l| l.split("slope=").nth(1))
        .and_then(|s| s.split_whitespace().next())
        .and_then(|s| s.parse().ok())
        .expect("slope in header");
    assert!(slope.is_finite() && slope < 0.0, "{slope}");
    assert!(text.contains("# series mean\n16 "));
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn missing_constellation_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sinr_config(dir.path(), false);
    let o = qprec(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("system.constellation"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn malformed_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ini");
    fs::write(&path, "[experiment]\nsuite = mp-check\nthis line is wrong\n").unwrap();
    let o = qprec(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("line 3"));
}

#[test]
fn plot_unknown_metric_lists_available_ones() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    fs::write(
        &path,
        "# qprec-results schema=1 suite=kyfan-rate\nexperiment,seed,k,metric,value,std_error,bound,holds,note,wall_time\nkyfan-rate,1,64,kf_ts,0.1,,,,,0.5\nkyfan-rate,1,64,kf_tg,0.2,,,,,0.5\n",
    )
    .unwrap();
    let o = qprec(&["plot", path.to_str().unwrap(), "--metric", "sinr_gap"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("kf_tg, kf_ts"), "{err}");
}

#[test]
fn plot_of_empty_results_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    fs::write(&path, "").unwrap();
    let o = qprec(&["plot", path.to_str().unwrap(), "--metric", "kf_ts"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(!text.is_empty() && text.lines().all(|l| l.starts_with('#')), "{text}");
}

#[test]
fn list_suites_names_every_suite() {
    let o = qprec(&["list-suites"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in [
        "mp-check", "equivalence", "converge-sinr", "converge-sep", "kyfan-rate", "bounds-audit", "optimize", "tail-audit",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name}");
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "ini") {
            let o = qprec(&["run", "--dry-run", path.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
            let resolved: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
            let stem = path.file_stem().unwrap().to_str().unwrap();
            assert_eq!(resolved["config"]["suite"], stem);
            n += 1;
        }
    }
    assert_eq!(n, 8);
}
