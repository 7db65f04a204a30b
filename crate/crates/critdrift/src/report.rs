//! Experiment reports and their CSV, JSON and plot-data files.

use std::path::{Path, PathBuf};

use critdrift_core::lab;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::Result;

/// Closed verdict taxonomy of reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Inconclusive,
    ExpectedFailure,
    /// An invariant or estimate was violated.
    Counterexample,
}

impl From<lab::Verdict> for Verdict {
    fn from(v: lab::Verdict) -> Self {
        match v {
            lab::Verdict::Pass => Verdict::Pass,
            lab::Verdict::Inconclusive => Verdict::Inconclusive,
            lab::Verdict::ExpectedFailure => Verdict::ExpectedFailure,
            lab::Verdict::Fail | lab::Verdict::UnexpectedPass => Verdict::Counterexample,
        }
    }
}

impl Verdict {
    pub fn pass_if(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Counterexample
        }
    }
}

/// One table cell. Non-finite numbers are stored as text so that JSON round-trips.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn num(x: f64) -> Cell {
        if x.is_finite() {
            Cell::Num(x)
        } else {
            Cell::Text(x.to_string())
        }
    }

    pub fn opt(x: Option<f64>) -> Cell {
        x.map(Cell::num).unwrap_or_else(|| Cell::Text(String::new()))
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            Cell::Text(t) => t.parse().ok(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Num(x) => write!(f, "{x}"),
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Text(t) => f.write_str(t),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<Cell>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j].clone()).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedVerdict {
    pub name: String,
    pub verdict: Verdict,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl Provenance {
    pub fn now() -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Provenance { version: env!("CARGO_PKG_VERSION").into(), timestamp }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: RunConfig,
    pub table: Table,
    pub verdicts: Vec<NamedVerdict>,
    pub plot: Table,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn new(config: &RunConfig, table: Table, plot: Table) -> Self {
        ExperimentReport {
            experiment: config.experiment.clone(),
            config: config.clone(),
            table,
            verdicts: vec![],
            plot,
            provenance: Provenance::now(),
        }
    }

    pub fn verdict(&mut self, name: &str, verdict: Verdict, detail: impl Into<String>) {
        self.verdicts.push(NamedVerdict { name: name.into(), verdict, detail: detail.into() });
    }

    pub fn has_counterexample(&self) -> bool {
        self.verdicts.iter().any(|v| v.verdict == Verdict::Counterexample)
    }

    /// Worst verdict: counterexample over inconclusive over expected-failure over pass.
    pub fn overall(&self) -> Verdict {
        let rank = |v: Verdict| match v {
            Verdict::Pass => 0,
            Verdict::ExpectedFailure => 1,
            Verdict::Inconclusive => 2,
            Verdict::Counterexample => 3,
        };
        self.verdicts.iter().map(|v| v.verdict).max_by_key(|v| rank(*v)).unwrap_or(Verdict::Pass)
    }

    pub fn csv_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.csv", self.experiment))
    }

    pub fn json_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.json", self.experiment))
    }

    pub fn plot_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.plot.csv", self.experiment))
    }

    /// Writes `<experiment>.csv` and `<experiment>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.table.write_csv(&self.csv_path(dir))?;
        std::fs::write(self.json_path(dir), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Writes `<experiment>.plot.csv`; a report without plot columns gets the
    /// generic `x,y,series` header and no rows.
    pub fn emit_plotdata(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = self.plot_path(dir);
        if self.plot.columns.is_empty() {
            Table::new(&["x", "y", "series"]).write_csv(&path)?;
        } else {
            self.plot.write_csv(&path)?;
        }
        Ok(path)
    }

    /// Compact JSON verdict summary.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "experiment": self.experiment,
            "overall": self.overall(),
            "verdicts": self.verdicts,
            "rows": self.table.rows.len(),
        })
    }
}
