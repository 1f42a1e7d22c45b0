//! Report assembly and serialization.

use std::fs;
use std::io::Write;

use num_rational::BigRational;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Format};
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Exact rationals travel as "num/den" strings.
pub fn rational(x: &BigRational) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// One CSV row: a parameter point and an observable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub command: String,
    pub p: String,
    pub observable: String,
    pub value: String,
    pub stderr: Option<f64>,
}

/// Result at one parameter point.
#[derive(Clone, Debug)]
pub struct Point {
    pub p: String,
    pub body: Value,
    pub rows: Vec<(String, String, Option<f64>)>,
    /// `None` when the command asserts nothing.
    pub passed: Option<bool>,
}

impl Point {
    pub fn new(p: &BigRational, body: Value) -> Point {
        Point { p: rational(p), body, rows: Vec::new(), passed: None }
    }

    pub fn row(&mut self, observable: impl Into<String>, value: impl Into<String>, stderr: Option<f64>) {
        self.rows.push((observable.into(), value.into(), stderr));
    }

    pub fn check(&mut self, ok: bool) {
        self.passed = Some(self.passed.unwrap_or(true) && ok);
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub command: String,
    pub config: ExperimentConfig,
    pub points: Vec<Point>,
}

impl Report {
    /// `false` only when some point failed an assertion.
    pub fn passed(&self) -> bool {
        self.points.iter().all(|p| p.passed != Some(false))
    }

    pub fn to_json(&self) -> Value {
        let passed: Option<bool> = if self.points.iter().any(|p| p.passed.is_some()) { Some(self.passed()) } else { None };
        json!({
            "schema_version": SCHEMA_VERSION,
            "code_version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": self.config,
            "passed": passed,
            "points": self.points.iter().map(|p| p.body.clone()).collect::<Vec<_>>(),
        })
    }

    pub fn rows(&self) -> Vec<Row> {
        self.points
            .iter()
            .flat_map(|pt| {
                pt.rows.iter().map(|(observable, value, stderr)| Row {
                    command: self.command.clone(),
                    p: pt.p.clone(),
                    observable: observable.clone(),
                    value: value.clone(),
                    stderr: *stderr,
                })
            })
            .collect()
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => Ok(serde_json::to_string_pretty(&self.to_json()).expect("json value") + "\n"),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                for row in self.rows() {
                    w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
                }
                let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
                Ok(String::from_utf8(bytes).expect("utf-8"))
            }
        }
    }

    pub fn emit(&self, format: Format, output: Option<&str>) -> Result<(), CliError> {
        let text = self.render(format)?;
        match output {
            Some(path) => fs::write(path, text).map_err(|e| CliError::Io(format!("{path}: {e}"))),
            None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
        }
    }
}
