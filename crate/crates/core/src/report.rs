//! Report emission: full JSON detail and a one-row-per-(segment, mode) CSV
//! summary with fixed 4-decimal cells.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backtest::BacktestReport;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 11] = [
    "segment",
    "mode",
    "avg_accuracy",
    "avg_precision",
    "avg_recall",
    "avg_f1",
    "avg_auc",
    "class0_auc",
    "class1_auc",
    "class2_auc",
    "class3_auc",
];

/// Digits after the decimal point in CSV cells.
pub const DECIMALS: usize = 4;

/// Formats `x` with `decimals` places, rounding the exact binary value
/// half-to-even. Rust's fixed-precision formatting prints the exact decimal
/// expansion when given enough digits (at most 1074 after the point), so
/// the tie test below is exact.
pub fn format_fixed(x: f64, decimals: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let exact = format!("{:.1100}", x.abs());
    let (int_part, frac) = exact.split_once('.').expect("fixed format has a point");
    let mut digits: Vec<u8> = int_part.bytes().chain(frac.bytes().take(decimals)).map(|b| b - b'0').collect();
    let rest = &frac.as_bytes()[decimals..];
    let round_up = match rest.first() {
        Some(b) if *b > b'5' => true,
        Some(b'5') => {
            let beyond_half = rest[1..].iter().any(|&d| d != b'0');
            beyond_half || digits.last().is_some_and(|d| d % 2 == 1)
        }
        _ => false,
    };
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - decimals;
    let mut out = String::new();
    if x.is_sign_negative() && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    out.extend(digits[..split].iter().map(|d| char::from(b'0' + d)));
    if decimals > 0 {
        out.push('.');
        out.extend(digits[split..].iter().map(|d| char::from(b'0' + d)));
    }
    out
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format_fixed(x, DECIMALS)).unwrap_or_default()
}

pub fn csv_row(r: &BacktestReport) -> Vec<String> {
    let a = &r.averages;
    let mut row = vec![
        r.segment.to_string(),
        r.mode.name().to_string(),
        cell(Some(a.accuracy)),
        cell(Some(a.precision)),
        cell(Some(a.recall)),
        cell(Some(a.f1)),
        cell(a.auc),
    ];
    row.extend(a.class_auc.iter().map(|v| cell(*v)));
    row
}

/// Summary CSV; undefined AUCs are empty cells.
pub fn to_csv(reports: &[BacktestReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record(csv_row(r))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Every report of one run, serialized as the JSON report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSet {
    pub reports: Vec<BacktestReport>,
}

impl ReportSet {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub const JSON_NAME: &str = "report.json";
pub const CSV_NAME: &str = "report.csv";

/// Writes `report.json` and `report.csv` into `dir`, returning their paths.
pub fn emit_report(set: &ReportSet, dir: &Path) -> Result<[std::path::PathBuf; 2]> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join(JSON_NAME);
    let csv = dir.join(CSV_NAME);
    std::fs::write(&json, set.to_json()?).map_err(|e| Error::io(&json, e))?;
    std::fs::write(&csv, to_csv(&set.reports)?).map_err(|e| Error::io(&csv, e))?;
    Ok([json, csv])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_decimals() {
        assert_eq!(format_fixed(0.9377, 4), "0.9377");
        assert_eq!(format_fixed(0.0, 4), "0.0000");
        assert_eq!(format_fixed(1.0, 4), "1.0000");
        assert_eq!(format_fixed(0.99996, 4), "1.0000");
        assert_eq!(format_fixed(-0.00001, 4), "0.0000");
        assert_eq!(format_fixed(-0.12345678, 4), "-0.1235");
        assert_eq!(format_fixed(12.5, 0), "12");
        assert_eq!(format_fixed(13.5, 0), "14");
    }

    #[test]
    fn exact_ties_go_to_even() {
        // 0.5 / 2^k values are exact binary ties at the 4th decimal
        assert_eq!(format_fixed(0.03125, 4), "0.0312");
        assert_eq!(format_fixed(0.09375, 4), "0.0938");
        assert_eq!(format_fixed(0.15625, 4), "0.1562");
        // near-ties resolve by the exact binary value, not the literal
        assert_eq!(format_fixed(0.00015, 4), "0.0001");
        assert_eq!(format_fixed(0.00025, 4), "0.0003");
        assert_eq!(format_fixed(0.93765, 4), "0.9376");
    }
}
