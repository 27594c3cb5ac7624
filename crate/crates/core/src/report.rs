//! Check results shared by the test suites and the command line runner.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// How `pass` relates to `value`, `bound` and `tolerance`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `value ≤ bound + tolerance`.
    UpperBound,
    /// `value ≥ bound − tolerance`.
    LowerBound,
    /// A boolean verdict such as a monotone trend; `value` is 1 or 0.
    Predicate,
    /// A recorded value without a pass criterion; `bound` is unused.
    Metric,
}

/// Tabular data produced alongside a check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Series {
        Series { name: name.into(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|x| format!("{x:e}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub anchor: String,
    pub kind: CheckKind,
    pub parameters: BTreeMap<String, Value>,
    pub value: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub runtime_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<Series>,
    /// Set when the check's preconditions were not met; `pass` is then vacuous.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
}

impl CheckReport {
    fn build(name: &str, anchor: &str, kind: CheckKind, value: f64, bound: f64, tolerance: f64) -> CheckReport {
        let pass = match kind {
            CheckKind::UpperBound => value <= bound + tolerance,
            CheckKind::LowerBound => value >= bound - tolerance,
            CheckKind::Predicate => value == 1.0,
            CheckKind::Metric => true,
        };
        CheckReport {
            name: name.to_string(),
            anchor: anchor.to_string(),
            kind,
            parameters: BTreeMap::new(),
            value,
            bound,
            tolerance,
            pass,
            runtime_ms: 0.0,
            note: None,
            series: Vec::new(),
            skipped: false,
        }
    }

    pub fn upper(name: &str, anchor: &str, value: f64, bound: f64, tolerance: f64) -> CheckReport {
        Self::build(name, anchor, CheckKind::UpperBound, value, bound, tolerance)
    }

    pub fn lower(name: &str, anchor: &str, value: f64, bound: f64, tolerance: f64) -> CheckReport {
        Self::build(name, anchor, CheckKind::LowerBound, value, bound, tolerance)
    }

    pub fn predicate(name: &str, anchor: &str, ok: bool) -> CheckReport {
        Self::build(name, anchor, CheckKind::Predicate, if ok { 1.0 } else { 0.0 }, 1.0, 0.0)
    }

    pub fn metric(name: &str, anchor: &str, value: f64) -> CheckReport {
        Self::build(name, anchor, CheckKind::Metric, value, 0.0, 0.0)
    }

    /// A check that could not run, recorded as a failure.
    pub fn failed(name: &str, anchor: &str, reason: impl Into<String>) -> CheckReport {
        Self::predicate(name, anchor, false).with_note(reason)
    }

    /// A check whose preconditions do not hold for the given input.
    pub fn skipped(name: &str, anchor: &str, reason: impl Into<String>) -> CheckReport {
        CheckReport { skipped: true, ..Self::predicate(name, anchor, true).with_note(reason) }
    }

    pub fn with_param(mut self, key: &str, value: impl Into<Value>) -> CheckReport {
        self.parameters.insert(key.to_string(), value.into());
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> CheckReport {
        self.note = Some(note.into());
        self
    }

    pub fn with_series(mut self, s: Series) -> CheckReport {
        self.series.push(s);
        self
    }

    pub fn timed(mut self, start: Instant) -> CheckReport {
        self.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        self
    }
}

/// True when every entry is strictly below its predecessor.
pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_semantics() {
        assert!(CheckReport::upper("a", "x", 1.0, 1.0, 0.0).pass);
        assert!(!CheckReport::upper("a", "x", 1.1, 1.0, 0.05).pass);
        assert!(!CheckReport::upper("a", "x", f64::NAN, 1.0, 0.0).pass);
        assert!(CheckReport::lower("a", "x", 0.99, 1.0, 0.02).pass);
        assert!(!CheckReport::predicate("a", "x", false).pass);
    }

    #[test]
    fn round_trip_json() {
        let mut s = Series::new("gap", &["x", "gap"]);
        s.push(vec![4.0, 1e-3]);
        let r = CheckReport::upper("c", "topic", 0.5, 1.0, 1e-9).with_param("d", 8).with_series(s);
        let j = serde_json::to_string(&r).unwrap();
        let back: CheckReport = serde_json::from_str(&j).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.series[0].to_csv().lines().count(), 2);
    }

    #[test]
    fn decreasing() {
        assert!(strictly_decreasing(&[3.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[3.0, 3.0]));
    }
}
