//! Report emission: JSON documents and CSV tables, rounded to 12 significant
//! digits.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Significant digits kept in every emitted number.
pub const SIGNIFICANT_DIGITS: usize = 12;

pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        // Also folds -0.0 into 0.0.
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n
                .as_f64()
                .map(round_sig)
                .and_then(serde_json::Number::from_f64)
            {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Serializes `value` and rounds every float in it.
pub fn to_json<T: Serialize>(value: &T) -> Value {
    let mut v = serde_json::to_value(value).expect("report types serialize");
    round_value(&mut v);
    v
}

/// One CSV cell.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        serde_json::Number::from_f64(round_sig(x))
            .map(|n| n.to_string())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner()
            .map_err(|e| CliError::Io(e.error().to_string()))
    }
}

/// What a subcommand produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub name: &'static str,
    pub json: Value,
    pub table: Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
    Both,
}

impl Format {
    fn json(self) -> bool {
        matches!(self, Self::Json | Self::Both)
    }

    fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }
}

fn json_bytes(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("json values serialize");
    out.push(b'\n');
    out
}

/// Writes `<name>.json` / `<name>.csv` into `dir`, or prints to `out`.
/// With both formats on standard output the CSV follows the JSON after a
/// blank line.
pub fn emit(
    report: &Report,
    format: Format,
    dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io)?;
            if format.json() {
                std::fs::write(
                    dir.join(format!("{}.json", report.name)),
                    json_bytes(&report.json),
                )
                .map_err(io)?;
            }
            if format.csv() {
                std::fs::write(
                    dir.join(format!("{}.csv", report.name)),
                    report.table.to_csv()?,
                )
                .map_err(io)?;
            }
        }
        None => {
            if format.json() {
                out.write_all(&json_bytes(&report.json)).map_err(io)?;
            }
            if format == Format::Both {
                out.write_all(b"\n").map_err(io)?;
            }
            if format.csv() {
                out.write_all(&report.table.to_csv()?).map_err(io)?;
            }
        }
    }
    Ok(())
}
