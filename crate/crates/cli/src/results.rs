//! Persistence of suite outputs: a versioned CSV of records and a JSON summary.

use qprec::experiments::{SuiteConfig, SuiteOutput};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_MAGIC: &str = "# qprec-results schema=";

/// Paths of the files written by [`write_outputs`].
#[derive(Clone, Debug)]
pub struct Written {
    pub csv: PathBuf,
    pub summary: PathBuf,
}

pub fn csv_bytes(out: &SuiteOutput) -> io::Result<Vec<u8>> {
    let mut buf = format!("{CSV_MAGIC}{SCHEMA_VERSION} suite={}\n", out.suite.name()).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in &out.records {
            w.serialize(r).map_err(io::Error::other)?;
        }
        w.flush()?;
    }
    Ok(buf)
}

pub fn summary_json(cfg: &SuiteConfig, out: &SuiteOutput) -> serde_json::Value {
    let checks: Vec<_> = out
        .checks
        .iter()
        .map(|c| serde_json::json!({ "name": c.name, "passed": c.passed, "detail": c.detail }))
        .collect();
    serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "suite": out.suite.name(),
        "passed": out.passed(),
        "records": out.records.len(),
        "checks": checks,
        "config": cfg,
    })
}

pub fn write_outputs(dir: &Path, cfg: &SuiteConfig, out: &SuiteOutput) -> io::Result<Written> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{}.csv", out.suite.name()));
    let summary = dir.join(format!("{}.summary.json", out.suite.name()));
    fs::write(&csv, csv_bytes(out)?)?;
    let mut text = serde_json::to_string_pretty(&summary_json(cfg, out)).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(&summary, text)?;
    Ok(Written { csv, summary })
}
