//! Reading return series from CSV.
//!
//! Accepted headers are `t,r`, `t,return` and `t,price`. Times must be
//! strictly increasing integers. For return files, integer times missing
//! between two rows are recorded as excluded, so interval statistics never
//! bridge a gap. Price files yield the log-differences of consecutive rows.

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::market::ReturnSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Return,
    Price,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn sniff(header: &str, line: usize) -> Result<Column> {
    let cols: Vec<String> = header
        .split(',')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    match cols
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["t", "r"] | ["t", "return"] => Ok(Column::Return),
        ["t", "price"] => Ok(Column::Price),
        _ => Err(parse_err(
            line,
            format!(
                "expected header `t,r`, `t,return` or `t,price`, got `{}`",
                header.trim()
            ),
        )),
    }
}

/// Reads a return series. The result has `tau = 0` because the file does not
/// record the horizon.
pub fn read_returns<R: BufRead>(reader: R) -> Result<ReturnSeries> {
    let mut column = None;
    let mut rows: Vec<(u64, f64)> = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let Some(kind) = column else {
            column = Some(sniff(text, lineno)?);
            continue;
        };
        let mut fields = text.split(',');
        let (Some(t), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(lineno, "expected exactly two fields"));
        };
        let t: u64 = t
            .trim()
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad time `{}`: {e}", t.trim())))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad value `{}`: {e}", v.trim())))?;
        if !v.is_finite() {
            return Err(parse_err(lineno, "value is not finite"));
        }
        if kind == Column::Price && !(v > 0.0) {
            return Err(parse_err(
                lineno,
                format!("price must be positive, got {v}"),
            ));
        }
        if let Some(&(prev, _)) = rows.last() {
            if t <= prev {
                return Err(parse_err(
                    lineno,
                    format!("time {t} does not increase past {prev}"),
                ));
            }
        }
        rows.push((t, v));
    }
    let Some(kind) = column else {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    };
    let series = match kind {
        Column::Return => {
            let mut excluded = Vec::new();
            for w in rows.windows(2) {
                excluded.extend(w[0].0 + 1..w[1].0);
            }
            ReturnSeries::new(0, rows, excluded)
        }
        Column::Price => {
            let values = rows
                .windows(2)
                .map(|w| (w[1].0, (w[1].1 / w[0].1).ln()))
                .collect();
            ReturnSeries::new(0, values, Vec::new())
        }
    };
    if series.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(series)
}
