//! CSV ingestion and emission for series data.
//!
//! Accepted input: one observation per line, either a bare value or
//! `period,value` with labels like `1960-Q1`. A header row is optional and is
//! detected by attempting to parse the first row's value field.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::series::{SeriesError, TimeSeries};

/// Read a series from a CSV file.
pub fn read_series_csv(path: &Path) -> Result<TimeSeries, SeriesError> {
    let text = fs::read_to_string(path)?;
    read_series_from_str(&text)
}

/// Read a series from CSV text. See the module docs for the accepted shape.
pub fn read_series_from_str(text: &str) -> Result<TimeSeries, SeriesError> {
    let mut values = Vec::new();
    let mut start_label: Option<String> = None;
    let mut saw_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let value_field = *fields.last().expect("split yields at least one field");
        match value_field.parse::<f64>() {
            Ok(v) => {
                if !saw_data && fields.len() >= 2 {
                    start_label = Some(fields[0].to_string());
                }
                saw_data = true;
                values.push(v);
            }
            Err(_) => {
                if saw_data {
                    return Err(SeriesError::Parse {
                        line: idx + 1,
                        content: raw.to_string(),
                    });
                }
                // non-numeric first row: header, skip
            }
        }
    }
    let frequency = match &start_label {
        Some(l) if l.contains("-Q") => 4,
        _ => 1,
    };
    TimeSeries::with_metadata(values, start_label, frequency)
}

/// Write a series as CSV. Quarterly-labelled series get a `period,value`
/// layout with advancing labels; everything else a single `value` column.
/// Values are printed in shortest round-trip form.
pub fn write_series_csv(path: &Path, series: &TimeSeries) -> Result<(), SeriesError> {
    let mut out = String::new();
    let labelled = series.label_at(1).is_some();
    if labelled {
        out.push_str("period,value\n");
        for (i, v) in series.values().iter().enumerate() {
            let label = series
                .label_at(i + 1)
                .expect("labelled series advances every period");
            out.push_str(&format!("{label},{v}\n"));
        }
    } else {
        out.push_str("value\n");
        for v in series.values() {
            out.push_str(&format!("{v}\n"));
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}
