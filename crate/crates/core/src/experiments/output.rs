//! CSV and JSON persistence of sweep results.
//!
//! CSV floats are written with 17 significant digits so they read back to the
//! same `f64`; an absent Pd (all drops infeasible) is an empty field.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::run::ResultRow;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "sweep_value,scheme,pd,pd_ci_low,pd_ci_high,mean_sensing_snr_db,mean_min_sinr_margin_db,drops_used,seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown output format '{other}' (expected csv or json)"))),
        }
    }
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn optional(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            float(r.sweep_value),
            r.scheme,
            optional(r.pd),
            optional(r.pd_ci_low),
            optional(r.pd_ci_high),
            optional(r.mean_sensing_snr_db),
            optional(r.mean_min_sinr_margin_db),
            r.drops_used,
            r.seed
        );
    }
    out
}

pub fn to_json(rows: &[ResultRow]) -> String {
    let mut text = serde_json::to_string_pretty(rows).expect("result rows always serialize");
    text.push('\n');
    text
}

pub fn render(rows: &[ResultRow], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => to_csv(rows),
        OutputFormat::Json => to_json(rows),
    }
}

pub fn emit_results(rows: &[ResultRow], format: OutputFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render(rows, format)).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Parses CSV written by [`to_csv`]. The infeasible-drop count is not a CSV
/// column and reads back as zero.
pub fn from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config("CSV header does not match the result schema".into()));
    }
    let bad = |line: &str| Error::Config(format!("malformed result line '{line}'"));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            Ok(ResultRow {
                sweep_value: num(f[0])?,
                scheme: f[1].parse()?,
                pd: opt(f[2])?,
                pd_ci_low: opt(f[3])?,
                pd_ci_high: opt(f[4])?,
                mean_sensing_snr_db: opt(f[5])?,
                mean_min_sinr_margin_db: opt(f[6])?,
                drops_used: f[7].parse().map_err(|_| bad(line))?,
                drops_infeasible: 0,
                seed: f[8].parse().map_err(|_| bad(line))?,
            })
        })
        .collect()
}

pub fn from_json(text: &str) -> Result<Vec<ResultRow>> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed result JSON: {e}")))
}

pub fn read_results(path: &Path, format: OutputFormat) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    match format {
        OutputFormat::Csv => from_csv(&text),
        OutputFormat::Json => from_json(&text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::Scheme;

    fn sample() -> Vec<ResultRow> {
        vec![
            ResultRow {
                sweep_value: 0.002_511_886_431_509_58,
                scheme: Scheme::SensingCentricWithX0,
                pd: Some(0.815),
                pd_ci_low: Some(0.8),
                pd_ci_high: Some(1.0 / 1.2),
                mean_sensing_snr_db: Some(3.162_277_660_168_379_5),
                mean_min_sinr_margin_db: Some(-1e-300),
                drops_used: 20,
                drops_infeasible: 0,
                seed: u64::MAX,
            },
            ResultRow {
                sweep_value: 2.0,
                scheme: Scheme::CommCentric,
                pd: None,
                pd_ci_low: None,
                pd_ci_high: None,
                mean_sensing_snr_db: None,
                mean_min_sinr_margin_db: None,
                drops_used: 0,
                drops_infeasible: 0,
                seed: 7,
            },
        ]
    }

    #[test]
    fn empty_csv_is_header_only() {
        assert_eq!(to_csv(&[]), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = sample();
        assert_eq!(from_csv(&to_csv(&rows)).unwrap(), rows);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let rows = sample();
        assert_eq!(from_json(&to_json(&rows)).unwrap(), rows);
    }

    #[test]
    fn csv_rejects_foreign_header() {
        assert!(from_csv("a,b\n1,2\n").is_err());
        assert!(from_csv(&format!("{CSV_HEADER}\n1,comm-centric\n")).is_err());
    }

    #[test]
    fn format_names() {
        assert_eq!("csv".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
