//! report.json and series/*.csv.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bosefield::report::Series;
use bosefield::CheckReport;
use serde::Serialize;

use crate::config::{ConfigError, Format, RunConfig};

pub const SCHEMA: u32 = 1;
pub const OUT_ENV: &str = "BOSEFIELD_OUT";

#[derive(Serialize)]
pub struct RunReport<'a> {
    schema: u32,
    seed: u64,
    checks: &'a [String],
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepReport>,
    reports: &'a [CheckReport],
}

#[derive(Serialize)]
struct SweepReport {
    axis: String,
    values: Vec<f64>,
    series: Series,
    verdicts: BTreeMap<String, String>,
}

impl<'a> RunReport<'a> {
    pub fn new(cfg: &'a RunConfig, reports: &'a [CheckReport]) -> RunReport<'a> {
        RunReport { schema: SCHEMA, seed: cfg.seed, checks: &cfg.checks, pass: reports.iter().all(|r| r.pass), sweep: None, reports }
    }

    pub fn with_sweep(mut self, axis: &str, values: &[f64], series: &Series, verdicts: &[(String, &str)]) -> RunReport<'a> {
        self.sweep = Some(SweepReport {
            axis: axis.to_string(),
            values: values.to_vec(),
            series: series.clone(),
            verdicts: verdicts.iter().map(|(k, v)| (k.clone(), v.to_string())).collect(),
        });
        self
    }
}

/// `$BOSEFIELD_OUT` if set, else the configured directory.
pub fn directory(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => cfg.output.directory.clone(),
    }
}

/// Report names made unique by a `#k` suffix on repeats, paired with values.
pub fn unique_names(reports: &[CheckReport]) -> Vec<(String, f64)> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    reports
        .iter()
        .map(|r| {
            let k = seen.entry(&r.name).or_insert(0);
            *k += 1;
            let name = if *k == 1 { r.name.clone() } else { format!("{}#{k}", r.name) };
            (name, r.value)
        })
        .collect()
}

/// Every series attached to a report, with file stems made unique in report order.
pub fn collect_series(reports: &[CheckReport]) -> Vec<(String, Series)> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for s in reports.iter().flat_map(|r| &r.series) {
        let stem: String = s.name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect();
        let k = seen.entry(stem.clone()).or_insert(0);
        *k += 1;
        let stem = if *k == 1 { stem } else { format!("{stem}_{k}") };
        out.push((stem, s.clone()));
    }
    out
}

pub fn trend(xs: &[f64]) -> &'static str {
    if xs.len() < 2 || xs.iter().any(|x| !x.is_finite()) {
        "undetermined"
    } else if xs.windows(2).all(|w| w[1] < w[0]) {
        "decreasing"
    } else if xs.windows(2).all(|w| w[1] > w[0]) {
        "increasing"
    } else if xs.windows(2).all(|w| w[1] == w[0]) {
        "constant"
    } else {
        "non-monotone"
    }
}

fn io_err(p: &Path, e: std::io::Error) -> ConfigError {
    ConfigError(format!("{}: {e}", p.display()))
}

pub fn write(cfg: &RunConfig, dir: &Path, report: &RunReport<'_>, series: &[(String, Series)]) -> Result<(), ConfigError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    if cfg.wants(Format::Json) {
        let p = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(report).map_err(|e| ConfigError(format!("serializing report: {e}")))?;
        text.push('\n');
        std::fs::write(&p, text).map_err(|e| io_err(&p, e))?;
    }
    if cfg.wants(Format::Csv) && !series.is_empty() {
        let sdir = dir.join("series");
        std::fs::create_dir_all(&sdir).map_err(|e| io_err(&sdir, e))?;
        for (stem, s) in series {
            let p = sdir.join(format!("{stem}.csv"));
            std::fs::write(&p, s.to_csv()).map_err(|e| io_err(&p, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trends() {
        assert_eq!(trend(&[3.0, 2.0, 1.0]), "decreasing");
        assert_eq!(trend(&[1.0, 2.0]), "increasing");
        assert_eq!(trend(&[1.0, 1.0]), "constant");
        assert_eq!(trend(&[1.0, 2.0, 1.0]), "non-monotone");
        assert_eq!(trend(&[1.0]), "undetermined");
    }

    #[test]
    fn repeated_names_get_suffixes() {
        let r = CheckReport::metric("a", "x", 1.0);
        let names: Vec<String> = unique_names(&[r.clone(), r.clone(), CheckReport::metric("b", "x", 2.0), r]).into_iter().map(|p| p.0).collect();
        assert_eq!(names, ["a", "a#2", "b", "a#3"]);
    }
}
