//! Run configuration: strict TOML, validated at load.

use std::fmt;
use std::path::{Path, PathBuf};

use bosefield::{Grid, Potential, Settings, Suite, Trap};
use serde::Deserialize;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub checks: Vec<String>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub fock: FockConfig,
    pub potential: Option<Potential>,
    pub trap: Option<TrapConfig>,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub thermo: ThermoConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    42
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub d: Option<usize>,
    pub h: Option<f64>,
    pub periodic: Option<bool>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockConfig {
    pub nmax: Option<usize>,
    /// Bytes.
    pub memory_budget: Option<u64>,
}

/// `L = 4.0` or `infinite = true`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapConfig {
    #[serde(rename = "L")]
    pub l: Option<f64>,
    #[serde(default)]
    pub infinite: bool,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub times: Option<Vec<f64>>,
    pub dyson_order: Option<usize>,
    pub quad_tol: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermoConfig {
    pub betas: Option<Vec<f64>>,
    pub mu: Option<f64>,
    pub allow_mu_override: Option<bool>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: default_directory(), formats: default_formats() }
    }
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

pub const MAX_NMAX: usize = 16;
pub const MAX_DYSON_ORDER: usize = 40;

/// Line of `key` inside `[section]` (top level when `section` is empty), 1-based.
fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == section && key.is_empty() {
                return Some(i + 1);
            }
            continue;
        }
        let k = t.split('=').next().unwrap_or("").trim().trim_matches('"');
        if current == section && !key.is_empty() && k == key && t.contains('=') {
            return Some(i + 1);
        }
    }
    None
}

struct Checker<'a> {
    src: Option<&'a str>,
    origin: String,
}

impl Checker<'_> {
    fn fail(&self, section: &str, key: &str, msg: String) -> ConfigError {
        let line = self.src.and_then(|s| locate(s, section, key).or_else(|| locate(s, section, "")));
        let name = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        match line {
            Some(l) => ConfigError(format!("{}:{l}: {name}: {msg}", self.origin)),
            None => ConfigError(format!("{}: {name}: {msg}", self.origin)),
        }
    }

    fn positive(&self, section: &str, key: &str, x: f64) -> Result<(), ConfigError> {
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(self.fail(section, key, format!("must be positive and finite, got {x}")))
        }
    }

    fn finite(&self, section: &str, key: &str, x: f64) -> Result<(), ConfigError> {
        if x.is_finite() {
            Ok(())
        } else {
            Err(self.fail(section, key, format!("must be finite, got {x}")))
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&src, &path.display().to_string())
    }

    pub fn parse(src: &str, origin: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| ConfigError(format!("{origin}: {e}")))?;
        cfg.validate(Checker { src: Some(src), origin: origin.to_string() })?;
        Ok(cfg)
    }

    pub fn from_value(value: toml::Value, origin: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = value.try_into().map_err(|e| ConfigError(format!("{origin}: {e}")))?;
        cfg.validate(Checker { src: None, origin: origin.to_string() })?;
        Ok(cfg)
    }

    fn validate(&self, c: Checker<'_>) -> Result<(), ConfigError> {
        if self.checks.is_empty() {
            return Err(c.fail("", "checks", "at least one suite is required".into()));
        }
        for name in &self.checks {
            if bosefield::suites::find(name).is_none() {
                return Err(c.fail("", "checks", format!("unknown suite `{name}` (see `bosefield list-checks`)")));
            }
        }
        if let Some(d) = self.grid.d {
            if d < 2 {
                return Err(c.fail("grid", "d", format!("needs at least 2 points, got {d}")));
            }
        }
        if let Some(h) = self.grid.h {
            c.positive("grid", "h", h)?;
        }
        if let Some(n) = self.fock.nmax {
            if n == 0 || n > MAX_NMAX {
                return Err(c.fail("fock", "nmax", format!("must lie in 1..={MAX_NMAX}, got {n}")));
            }
        }
        if self.fock.memory_budget == Some(0) {
            return Err(c.fail("fock", "memory_budget", "must be positive".into()));
        }
        if let Some(p) = &self.potential {
            validate_potential(&c, p)?;
        }
        if let Some(t) = &self.trap {
            match (t.l, t.infinite) {
                (Some(l), false) => c.positive("trap", "L", l)?,
                (None, true) => {}
                _ => return Err(c.fail("trap", "L", "give exactly one of `L` and `infinite = true`".into())),
            }
        }
        if let Some(ts) = &self.dynamics.times {
            if ts.is_empty() {
                return Err(c.fail("dynamics", "times", "must not be empty".into()));
            }
            for &t in ts {
                c.finite("dynamics", "times", t)?;
            }
        }
        if let Some(o) = self.dynamics.dyson_order {
            if o > MAX_DYSON_ORDER {
                return Err(c.fail("dynamics", "dyson_order", format!("must be at most {MAX_DYSON_ORDER}, got {o}")));
            }
        }
        if let Some(q) = self.dynamics.quad_tol {
            c.positive("dynamics", "quad_tol", q)?;
        }
        if let Some(bs) = &self.thermo.betas {
            if bs.is_empty() {
                return Err(c.fail("thermo", "betas", "must not be empty".into()));
            }
            for &b in bs {
                c.positive("thermo", "betas", b)?;
            }
        }
        if let Some(mu) = self.thermo.mu {
            c.finite("thermo", "mu", mu)?;
        }
        if self.output.formats.is_empty() {
            return Err(c.fail("output", "formats", "must not be empty".into()));
        }
        Ok(())
    }

    /// Suite defaults with every configured field overridden.
    pub fn settings_for(&self, suite: &Suite) -> Result<Settings, ConfigError> {
        let mut s = (suite.defaults)();
        let g = &self.grid;
        s.grid = Grid::new(g.d.unwrap_or(s.grid.d), g.h.unwrap_or(s.grid.h), g.periodic.unwrap_or(s.grid.periodic))
            .map_err(|e| ConfigError(format!("grid for suite {}: {e}", suite.name)))?;
        if let Some(n) = self.fock.nmax {
            s.nmax = n;
        }
        if let Some(m) = self.fock.memory_budget {
            s.memory_budget = m;
        }
        if let Some(p) = &self.potential {
            s.potential = p.clone();
        }
        if let Some(t) = &self.trap {
            s.trap = match t.l {
                Some(l) => Trap::Finite(l),
                None => Trap::Infinite,
            };
        }
        if let Some(ts) = &self.dynamics.times {
            s.times = ts.clone();
        }
        if let Some(o) = self.dynamics.dyson_order {
            s.dyson_order = o;
        }
        if let Some(q) = self.dynamics.quad_tol {
            s.quad_tol = q;
        }
        if let Some(bs) = &self.thermo.betas {
            s.betas = bs.clone();
        }
        if self.thermo.mu.is_some() {
            s.mu = self.thermo.mu;
        }
        if let Some(a) = self.thermo.allow_mu_override {
            s.allow_mu_override = a;
        }
        s.seed = self.seed;
        Ok(s)
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

fn validate_potential(c: &Checker<'_>, p: &Potential) -> Result<(), ConfigError> {
    match p {
        Potential::Zero => Ok(()),
        Potential::Gaussian { amplitude, range } => {
            c.finite("potential", "amplitude", *amplitude)?;
            c.positive("potential", "range", *range)
        }
        Potential::Squarewell { depth, radius } => {
            c.finite("potential", "depth", *depth)?;
            if !(*radius >= 0.0 && radius.is_finite()) {
                return Err(c.fail("potential", "radius", format!("must be non-negative, got {radius}")));
            }
            Ok(())
        }
        Potential::Cosine { amplitude, wavelength, cutoff } => {
            c.finite("potential", "amplitude", *amplitude)?;
            c.positive("potential", "wavelength", *wavelength)?;
            c.positive("potential", "cutoff", *cutoff)
        }
        Potential::Table { values } => {
            if values.is_empty() {
                return Err(c.fail("potential", "values", "must not be empty".into()));
            }
            values.iter().try_for_each(|&v| c.finite("potential", "values", v))
        }
    }
}

/// Keys accepted by `sweep --axis`, and whether they take integers.
pub const NUMERIC_AXES: &[(&str, bool)] = &[
    ("seed", true),
    ("grid.d", true),
    ("grid.h", false),
    ("fock.nmax", true),
    ("fock.memory_budget", true),
    ("trap.L", false),
    ("dynamics.times", false),
    ("dynamics.dyson_order", true),
    ("dynamics.quad_tol", false),
    ("thermo.betas", false),
    ("thermo.mu", false),
    ("potential.amplitude", false),
    ("potential.range", false),
    ("potential.depth", false),
    ("potential.radius", false),
    ("potential.wavelength", false),
    ("potential.cutoff", false),
];

/// Sets `axis` to `x` in a parsed configuration. List-valued keys become one-element lists.
pub fn set_axis(doc: &mut toml::Table, axis: &str, x: f64) -> Result<(), ConfigError> {
    let Some(&(_, integer)) = NUMERIC_AXES.iter().find(|(k, _)| *k == axis) else {
        let known: Vec<&str> = NUMERIC_AXES.iter().map(|(k, _)| *k).collect();
        return Err(ConfigError(format!("`{axis}` is not a numeric key; expected one of {}", known.join(", "))));
    };
    let value = if integer {
        if x.fract() != 0.0 || x < 0.0 || x > i64::MAX as f64 {
            return Err(ConfigError(format!("`{axis}` takes non-negative integers, got {x}")));
        }
        toml::Value::Integer(x as i64)
    } else {
        toml::Value::Float(x)
    };
    let value = match axis {
        "dynamics.times" | "thermo.betas" => toml::Value::Array(vec![value]),
        _ => value,
    };
    let (section, key) = match axis.split_once('.') {
        Some((s, k)) => (Some(s), k),
        None => (None, axis),
    };
    if section == Some("potential") && !doc.get("potential").and_then(|p| p.get("kind")).is_some() {
        return Err(ConfigError(format!("`{axis}` needs a [potential] table with a `kind`")));
    }
    let table = match section {
        None => doc,
        Some(s) => {
            let entry = doc.entry(s).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match entry {
                toml::Value::Table(t) => t,
                _ => return Err(ConfigError(format!("`{s}` is not a table"))),
            }
        }
    };
    if axis == "trap.L" {
        table.remove("infinite");
    }
    table.insert(key.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "checks = [\"ccr\"]\n\n[grid]\nd = 4\nh = 0.5\n";

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::parse(BASE, "t.toml").unwrap();
        assert_eq!(c.seed, 42);
        let s = c.settings_for(bosefield::suites::find("ccr").unwrap()).unwrap();
        assert_eq!((s.grid.d, s.grid.h), (4, 0.5));
        assert_eq!(s.nmax, 3);
        assert!(c.wants(Format::Json) && c.wants(Format::Csv));
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let e = RunConfig::parse(&format!("{BASE}colour = 3\n"), "t.toml").unwrap_err();
        assert!(e.0.contains("line 6"), "{e}");
        assert!(e.0.contains("colour"), "{e}");
    }

    #[test]
    fn range_errors_point_at_the_key() {
        let e = RunConfig::parse("checks = [\"ccr\"]\n[grid]\nh = -1.0\n", "t.toml").unwrap_err();
        assert!(e.0.starts_with("t.toml:3: grid.h"), "{e}");
        let e = RunConfig::parse("checks = [\"nope\"]\n", "t.toml").unwrap_err();
        assert!(e.0.starts_with("t.toml:1: checks"), "{e}");
        let e = RunConfig::parse("checks = [\"kms\"]\n[trap]\nL = 2.0\ninfinite = true\n", "t.toml").unwrap_err();
        assert!(e.0.contains("exactly one"), "{e}");
    }

    #[test]
    fn potential_is_tagged_and_strict() {
        let ok = "checks = [\"dyson\"]\n[potential]\nkind = \"gaussian\"\namplitude = 1.0\nrange = 0.5\n";
        assert!(matches!(RunConfig::parse(ok, "t").unwrap().potential, Some(Potential::Gaussian { .. })));
        let bad = "checks = [\"dyson\"]\n[potential]\nkind = \"gaussian\"\namplitude = 1.0\nradius = 0.5\n";
        assert!(RunConfig::parse(bad, "t").is_err());
    }

    #[test]
    fn axes() {
        let mut doc: toml::Table = toml::from_str("checks = [\"trap_removal\"]\n[trap]\ninfinite = true\n").unwrap();
        set_axis(&mut doc, "trap.L", 4.0).unwrap();
        let c = RunConfig::from_value(toml::Value::Table(doc.clone()), "t").unwrap();
        assert_eq!(c.trap.unwrap().l, Some(4.0));
        assert!(set_axis(&mut doc, "fock.nmax", 2.5).is_err());
        assert!(set_axis(&mut doc, "output.directory", 1.0).is_err());
        assert!(set_axis(&mut doc, "potential.range", 1.0).is_err());
        set_axis(&mut doc, "thermo.betas", 2.0).unwrap();
        let c = RunConfig::from_value(toml::Value::Table(doc), "t").unwrap();
        assert_eq!(c.thermo.betas, Some(vec![2.0]));
    }
}
