mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bosefield::report::Series;
use bosefield::{CheckReport, SUITES};
use clap::{Parser, Subcommand};

use config::{set_axis, ConfigError, RunConfig};

/// Runs named numerical check suites from a TOML configuration.
#[derive(Parser)]
#[command(name = "bosefield", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured suites and write report.json and series CSVs.
    Run { config: PathBuf },
    /// Rerun the configured suites once per value of a numeric key.
    Sweep {
        config: PathBuf,
        /// Dotted key, e.g. `trap.L` or `fock.nmax`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<String>,
    },
    /// Print every registered suite with its anchor.
    ListChecks,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => run(&config),
        Command::Sweep { config, axis, values } => sweep(&config, &axis, &values),
        Command::ListChecks => {
            for s in SUITES {
                println!("{} → {}", s.name, s.anchor);
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run_suites(cfg: &RunConfig) -> Result<Vec<CheckReport>, ConfigError> {
    let mut reports = Vec::new();
    for name in &cfg.checks {
        let suite = bosefield::suites::find(name).ok_or_else(|| ConfigError(format!("unknown suite `{name}`")))?;
        let settings = cfg.settings_for(suite)?;
        reports.extend(suite.run(&settings));
    }
    Ok(reports)
}

fn print_summary(reports: &[CheckReport]) {
    for r in reports {
        let status = match (r.pass, r.skipped) {
            (_, true) => "SKIP",
            (true, false) => "PASS",
            (false, false) => "FAIL",
        };
        print!("{status} {:<30} value {:<12.4e} bound {:<10.3e}", r.name, r.value, r.bound);
        if let Some(n) = &r.note {
            print!("  {n}");
        }
        println!();
    }
}

fn run(path: &Path) -> Result<bool, ConfigError> {
    let cfg = RunConfig::load(path)?;
    let reports = run_suites(&cfg)?;
    print_summary(&reports);
    let dir = output::directory(&cfg);
    output::write(&cfg, &dir, &output::RunReport::new(&cfg, &reports), &output::collect_series(&reports))?;
    let pass = reports.iter().all(|r| r.pass);
    println!("{} checks, {} failed; report in {}", reports.len(), reports.iter().filter(|r| !r.pass).count(), dir.display());
    Ok(pass)
}

fn parse_values(values: &[String]) -> Result<Vec<f64>, ConfigError> {
    let xs: Vec<&str> = values.iter().map(|v| v.trim()).filter(|v| !v.is_empty()).collect();
    if xs.is_empty() {
        return Err(ConfigError("--values needs at least one value".into()));
    }
    xs.iter()
        .map(|v| match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(ConfigError(format!("sweep value `{v}` is not a finite number"))),
        })
        .collect()
}

fn sweep(path: &Path, axis: &str, values: &[String]) -> Result<bool, ConfigError> {
    let xs = parse_values(values)?;
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    // Validates the unmodified file first so errors keep their line numbers.
    let base = RunConfig::parse(&src, &path.display().to_string())?;
    let doc: toml::Table = toml::from_str(&src).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let mut runs = Vec::new();
    for &x in &xs {
        let mut d = doc.clone();
        set_axis(&mut d, axis, x)?;
        let cfg = RunConfig::from_value(toml::Value::Table(d), &format!("{} with {axis} = {x}", path.display()))?;
        runs.push((x, cfg));
    }
    let mut columns: Vec<String> = Vec::new();
    let mut table: Vec<(f64, Vec<(String, f64)>, bool)> = Vec::new();
    let mut all = Vec::new();
    for (x, cfg) in &runs {
        let reports = run_suites(cfg)?;
        let named = output::unique_names(&reports);
        for (n, _) in &named {
            if !columns.contains(n) {
                columns.push(n.clone());
            }
        }
        table.push((*x, named, reports.iter().all(|r| r.pass)));
        all.extend(reports.into_iter().map(|r| r.with_param("sweep_value", *x)));
    }
    let mut header = vec![axis.to_string()];
    header.extend(columns.iter().cloned());
    header.push("pass".into());
    let mut series = Series { name: format!("sweep_{}", axis.replace('.', "_")), columns: header, rows: Vec::new() };
    for (x, named, pass) in &table {
        let mut row = vec![*x];
        row.extend(columns.iter().map(|c| named.iter().find(|(n, _)| n == c).map(|(_, v)| *v).unwrap_or(f64::NAN)));
        row.push(if *pass { 1.0 } else { 0.0 });
        series.push(row);
    }
    let verdicts: Vec<(String, &'static str)> =
        columns.iter().map(|c| (c.clone(), output::trend(&series.column(c).unwrap_or_default()))).collect();
    print!("{}", series.to_csv());
    for (c, v) in &verdicts {
        println!("# {c}: {v}");
    }
    let dir = output::directory(&base);
    let report = output::RunReport::new(&base, &all).with_sweep(axis, &xs, &series, &verdicts);
    let mut files = output::collect_series(&all);
    files.push((series.name.clone(), series.clone()));
    output::write(&base, &dir, &report, &files)?;
    Ok(all.iter().all(|r| r.pass))
}
