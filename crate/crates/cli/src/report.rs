//! Report container and its CSV, JSON, JSON-lines and SVG renderings.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{ExperimentConfig, Format};
use crate::error::CliError;
use crate::svg::Plot;

/// One named pass/fail check with its observed value and accepted range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

impl Check {
    pub fn within(name: impl Into<String>, value: f64, lower: f64, upper: f64) -> Check {
        Check { name: name.into(), value, lower, upper, pass: value >= lower && value <= upper }
    }

    /// `|observed − expected| ≤ k·σ`.
    pub fn sigma(name: impl Into<String>, observed: f64, expected: f64, sigma: f64, k: f64) -> Check {
        Check::within(name, observed, expected - k * sigma, expected + k * sigma)
    }

    pub fn line(&self) -> String {
        format!(
            "{} {} value={:?} range=[{:?}, {:?}]",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.lower,
            self.upper
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Replaces the typed rows in JSON output when set.
    pub records: Option<Vec<Value>>,
    /// Aggregates, in insertion order.
    pub summary: Vec<(String, f64)>,
    pub checks: Vec<Check>,
    pub plot: Option<Plot>,
    pub wall_clock_s: f64,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig, header: &[&str]) -> ExperimentReport {
        ExperimentReport {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            records: None,
            summary: Vec::new(),
            checks: Vec::new(),
            plot: None,
            wall_clock_s: 0.0,
        }
    }

    pub fn failed_checks(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect()
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn to_json_value(&self) -> Value {
        let rows = match &self.records {
            Some(r) => r.clone(),
            None => self
                .rows
                .iter()
                .map(|r| Value::Object(self.header.iter().cloned().zip(r.iter().map(|c| typed(c))).collect()))
                .collect(),
        };
        let summary: Map<String, Value> = self.summary.iter().map(|(k, v)| (k.clone(), number(*v))).collect();
        json!({
            "version": self.version,
            "command": self.config.command.label(),
            "config": self.config,
            "columns": self.header,
            "rows": rows,
            "summary": summary,
            "checks": self.checks,
            "wall_clock_s": self.wall_clock_s,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json_value()).expect("values are serializable");
        s.push('\n');
        s
    }

    /// One JSON object per row.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        if let Some(records) = &self.records {
            for r in records {
                s.push_str(&serde_json::to_string(r).expect("values are serializable"));
                s.push('\n');
            }
        }
        s
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => Ok(self.to_json()),
            Format::Jsonl => match self.records {
                Some(_) => Ok(self.to_jsonl()),
                None => Err(CliError::Usage(format!("{} has no JSON-lines form", self.config.command.label()))),
            },
            Format::Svg => match &self.plot {
                Some(p) => Ok(p.render()),
                None => Err(CliError::Usage(format!("{} has no plot", self.config.command.label()))),
            },
        }
    }

    /// Writes to `out`, or stdout when `None`.
    pub fn emit(&self, format: Format, out: Option<&Path>) -> Result<(), CliError> {
        let text = self.render(format)?;
        match out {
            Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(text.as_bytes())?;
                stdout.flush()?;
                Ok(())
            }
        }
    }
}

fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or_else(|| Value::String(format!("{v:?}")))
}

/// CSV cell to JSON: integers and floats become numbers, empty cells `null`.
fn typed(cell: &str) -> Value {
    if cell.is_empty() {
        Value::Null
    } else if let Ok(i) = cell.parse::<i64>() {
        Value::from(i)
    } else if let Ok(u) = cell.parse::<u64>() {
        Value::from(u)
    } else if let Ok(f) = cell.parse::<f64>() {
        number(f)
    } else {
        Value::String(cell.to_string())
    }
}
