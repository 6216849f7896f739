//! Check records, the JSON report and CSV series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `value ≤ bound`
    Le,
    /// `value ≥ bound`
    Ge,
    /// `value > bound`
    Gt,
    /// boolean check, `value` is 1 or 0
    Holds,
}

/// One named check. Failed checks keep the measured value and the bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: Option<f64>,
    pub bound: Option<f64>,
    pub relation: Relation,
    pub pass: bool,
    /// Domain error that prevented the check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CheckRecord {
    fn compare(name: &str, value: f64, bound: f64, relation: Relation) -> Self {
        let pass = match relation {
            Relation::Le => value <= bound,
            Relation::Ge => value >= bound,
            Relation::Gt => value > bound,
            Relation::Holds => value == 1.0,
        };
        CheckRecord {
            name: name.into(),
            value: Some(value),
            bound: Some(bound),
            relation,
            pass,
            error: None,
        }
    }

    pub fn le(name: &str, value: f64, bound: f64) -> Self {
        Self::compare(name, value, bound, Relation::Le)
    }

    pub fn ge(name: &str, value: f64, bound: f64) -> Self {
        Self::compare(name, value, bound, Relation::Ge)
    }

    pub fn gt(name: &str, value: f64, bound: f64) -> Self {
        Self::compare(name, value, bound, Relation::Gt)
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        CheckRecord {
            name: name.into(),
            value: Some(if ok { 1.0 } else { 0.0 }),
            bound: None,
            relation: Relation::Holds,
            pass: ok,
            error: None,
        }
    }

    pub fn error(name: &str, err: &fbstab::Error) -> Self {
        CheckRecord {
            name: name.into(),
            value: None,
            bound: None,
            relation: Relation::Holds,
            pass: false,
            error: Some(format!("{err:?}")),
        }
    }
}

/// A table written as `<name>.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Series {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width of series {}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    /// Header row, then one line per row; 17 significant digits, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{v:.16e}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub checks: Vec<CheckRecord>,
    /// Scalar results that are not pass/fail.
    pub values: BTreeMap<String, Option<f64>>,
    /// File names of the emitted series.
    pub series: Vec<String>,
}

impl ReportDocument {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        ReportDocument {
            tool: "fbstab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.clone(),
            checks: Vec::new(),
            values: BTreeMap::new(),
            series: Vec::new(),
        }
    }

    pub fn check(&mut self, rec: CheckRecord) {
        self.checks.push(rec);
    }

    pub fn value(&mut self, key: &str, v: f64) {
        self.values.insert(key.into(), v.is_finite().then_some(v));
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// 0 when every check passes, 2 when a domain error was recorded, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.checks.iter().any(|c| c.error.is_some()) {
            2
        } else if self.all_pass() {
            0
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Writes `report.json` and one CSV per series into `dir`.
pub fn emit(report: &ReportDocument, series: &[Series], dir: &Path) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join("report.json"), report.to_json()).map_err(io)?;
    for s in series {
        std::fs::write(dir.join(s.file_name()), s.to_csv()).map_err(io)?;
    }
    Ok(())
}
