//! CSV ingestion and emission. Signals travel as CSV with a header row of
//! channel labels; numbers are written with Rust's shortest round-trip
//! float formatting, so read -> write is lossless.

use crate::{CliError, CliResult};
use ste_core::signal::TimeSeries;
use std::path::Path;

/// Read a multi-channel signal CSV: header row of labels, numeric body.
pub fn read_channels(path: &str, fs: f64) -> CliResult<Vec<TimeSeries>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let labels: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if labels.is_empty() {
        return Err(CliError::Data(format!("{path}: empty header row")));
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != labels.len() {
            return Err(CliError::Data(format!(
                "{path}: row {} has {} fields, expected {}",
                row_idx + 2,
                record.len(),
                labels.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Data(format!(
                    "{path}: row {}, column {}: unparseable value {field:?}",
                    row_idx + 2,
                    labels[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::Data(format!(
                    "{path}: row {}, column {}: non-finite value",
                    row_idx + 2,
                    labels[c]
                )));
            }
            cols[c].push(v);
        }
    }
    labels
        .into_iter()
        .zip(cols)
        .map(|(label, values)| TimeSeries::new(values, fs, label).map_err(CliError::from))
        .collect()
}

/// Write channels as a CSV with one column per series.
pub fn write_channels(path: &str, channels: &[&TimeSeries]) -> CliResult<()> {
    if channels.is_empty() {
        return Err(CliError::Config("no channels to write".into()));
    }
    let n = channels[0].values.len();
    if channels.iter().any(|c| c.values.len() != n) {
        return Err(CliError::Config("channel lengths differ".into()));
    }
    if let Some(dir) = Path::new(path).parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(channels.iter().map(|c| c.label.as_str()))?;
    for t in 0..n {
        w.write_record(channels.iter().map(|c| c.values[t].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a p-value CSV: returns (headers, rows, index of the `p` column).
pub fn read_pvalue_table(path: &str) -> CliResult<(Vec<String>, Vec<Vec<String>>, usize)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let p_idx = headers
        .iter()
        .position(|h| h == "p" || h == "p_raw" || h == "pvalue" || h == "p_value")
        .ok_or_else(|| CliError::Data(format!("{path}: no p/p_raw/pvalue column in header")))?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(record.iter().map(|s| s.to_string()).collect());
    }
    Ok((headers, rows, p_idx))
}
