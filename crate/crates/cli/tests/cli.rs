use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bosefield"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_in(out: &Path, args: &[&str]) -> Output {
    bin().args(args).env("BOSEFIELD_OUT", out).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn ccr_run_passes_and_writes_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("ccr.toml");
    let o = run_in(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["seed"], 42);
    assert_eq!(report["pass"], true);
    let reps = report["reports"].as_array().unwrap();
    assert_eq!(reps.len(), 2);
    for r in reps {
        assert!(r["anchor"].as_str().is_some_and(|a| !a.is_empty()));
        assert_eq!(r["parameters"]["d"], 4);
    }
}

#[test]
fn reports_are_deterministic_apart_from_timing() {
    let strip = |dir: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
        for r in v["reports"].as_array_mut().unwrap() {
            r["runtime_ms"] = serde_json::Value::Null;
        }
        v
    };
    let cfg = configs().join("ccr.toml");
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    run_in(a.path(), &["run", cfg.to_str().unwrap()]);
    run_in(b.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn malformed_config_exits_2_with_line() {
    let tmp = TempDir::new().unwrap();
    let p = write(&tmp, "bad.toml", "checks = [\"ccr\"]\n[grid]\nd = 4\nwidth = 3\n");
    let o = run_in(tmp.path(), &["run", &p]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4"), "{err}");
    assert!(!tmp.path().join("report.json").exists());

    let p = write(&tmp, "range.toml", "checks = [\"ccr\"]\n\n[fock]\nnmax = 0\n");
    let o = run_in(tmp.path(), &["run", &p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("range.toml:4: fock.nmax"));

    let p = write(&tmp, "syntax.toml", "checks = [\"ccr\"\n");
    assert_eq!(run_in(tmp.path(), &["run", &p]).status.code(), Some(2));
    assert_eq!(run_in(tmp.path(), &["run", "/nonexistent/config.toml"]).status.code(), Some(2));
}

#[test]
fn loose_quadrature_fails_the_dyson_certificate() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("dyson_loose.toml");
    let o = run_in(tmp.path(), &["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    let r = &report["reports"][0];
    assert_eq!(r["name"], "dyson_certificate");
    assert_eq!(r["pass"], false);
    assert!(r["parameters"]["max_t_v_norm"].as_f64().unwrap() <= 1.0);
    assert!(tmp.path().join("series/dyson_certificate.csv").exists());

    // Same run at the default tolerance passes.
    let text = std::fs::read_to_string(&cfg).unwrap().replace("quad_tol = 0.5\n", "");
    let p = write(&tmp, "tight.toml", &text);
    assert_eq!(run_in(tmp.path(), &["run", &p]).status.code(), Some(0));
}

#[test]
fn trap_sweep_has_one_row_per_length() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("trap_sweep.toml");
    let o = run_in(tmp.path(), &["sweep", cfg.to_str().unwrap(), "--axis", "trap.L", "--values", "2,4,8,16"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let csv = std::fs::read_to_string(tmp.path().join("series/sweep_trap_L.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("trap.L,trap_gap"));
    assert!(stdout(&o).contains("# trap_gap: decreasing"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["sweep"]["verdicts"]["trap_gap"], "decreasing");
    assert_eq!(report["sweep"]["values"].as_array().unwrap().len(), 4);
}

#[test]
fn sweep_rejects_bad_axes_and_values() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("trap_sweep.toml");
    let c = cfg.to_str().unwrap();
    for args in [
        vec!["sweep", c, "--axis", "trap.L", "--values", ""],
        vec!["sweep", c, "--axis", "output.directory", "--values", "1,2"],
        vec!["sweep", c, "--axis", "potential.kind", "--values", "1"],
        vec!["sweep", c, "--axis", "fock.nmax", "--values", "2.5"],
        vec!["sweep", c, "--axis", "trap.L", "--values", "two"],
        vec!["sweep", c, "--axis", "trap.L", "--values", "-1"],
        vec!["sweep", c, "--axis", "trap.L"],
    ] {
        assert_eq!(run_in(tmp.path(), &args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn list_checks_is_the_registry() {
    let o = bin().arg("list-checks").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), bosefield::SUITES.len());
    assert_eq!(lines.len(), 16);
    assert!(lines.iter().any(|l| l.starts_with("cluster_limit → ")));
    assert!(lines.iter().any(|l| l.starts_with("kms → ")));
    assert!(lines[0].starts_with("ccr → "));
}
