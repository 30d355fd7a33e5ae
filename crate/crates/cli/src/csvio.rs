//! CSV ingestion and output. One dialect only: comma separated, header
//! row required, UTF-8, '.' decimal, scientific notation accepted.

use crate::errors::{CliError, CliResult};
use flam_core::Dataset;
use std::path::Path;

/// A parsed numeric table: column names and feature-major values.
pub struct NumericTable {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub n_rows: usize,
}

pub fn read_table(path: &Path) -> CliResult<NumericTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: bad header: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if names.is_empty() {
        return Err(CliError::data(format!("{}: empty header row", path.display())));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut n_rows = 0usize;
    for (r, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::data(format!("{}: row {}: {e}", path.display(), r + 1)))?;
        if record.len() != names.len() {
            return Err(CliError::data(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                r + 1,
                record.len(),
                names.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                CliError::data(format!(
                    "{}: row {}, column {}: cannot parse {field:?} as a number",
                    path.display(),
                    r + 1,
                    names[c]
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::data(format!(
                    "{}: row {}, column {}: missing or non-finite value",
                    path.display(),
                    r + 1,
                    names[c]
                )));
            }
            columns[c].push(value);
        }
        n_rows += 1;
    }
    Ok(NumericTable { names, columns, n_rows })
}

/// A dataset split into response and features, remembering feature names.
pub struct LoadedData {
    pub dataset: Dataset,
    pub feature_names: Vec<String>,
}

pub fn load_dataset(path: &Path, response: &str) -> CliResult<LoadedData> {
    let table = read_table(path)?;
    let y_idx = table.names.iter().position(|n| n == response).ok_or_else(|| {
        CliError::data(format!(
            "{}: response column {response:?} not found (columns: {})",
            path.display(),
            table.names.join(", ")
        ))
    })?;
    let mut feature_names = Vec::new();
    let mut columns = Vec::new();
    for (i, name) in table.names.iter().enumerate() {
        if i != y_idx {
            feature_names.push(name.clone());
            columns.push(table.columns[i].clone());
        }
    }
    if columns.is_empty() {
        return Err(CliError::data(format!(
            "{}: no feature columns besides the response",
            path.display()
        )));
    }
    let dataset = Dataset::new(table.columns[y_idx].clone(), columns)?;
    Ok(LoadedData { dataset, feature_names })
}

/// Select the named columns from a table, erroring with the full list of
/// missing names.
pub fn select_columns<'a>(
    table: &'a NumericTable,
    names: &[String],
    path: &Path,
) -> CliResult<Vec<&'a Vec<f64>>> {
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        match table.names.iter().position(|n| n == name) {
            Some(i) => out.push(&table.columns[i]),
            None => missing.push(name.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(CliError::data(format!(
            "{}: missing required columns: {}",
            path.display(),
            missing.join(", ")
        )));
    }
    Ok(out)
}

pub fn write_csv_records(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    writer
        .write_record(header)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    for row in rows {
        writer
            .write_record(&row)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// Serialize already-Serialize rows (experiment outputs) to CSV.
pub fn write_serializable<T: serde::Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

/// Canonical number formatting for generated CSVs: shortest round-trip
/// representation, so outputs are bit-stable across runs and thread
/// counts.
pub fn fmt_f64(v: f64) -> String {
    let mut buf = ryu_like(v);
    if !buf.contains('.') && !buf.contains('e') && !buf.contains("inf") && !buf.contains("NaN") {
        buf.push_str(".0");
    }
    buf
}

fn ryu_like(v: f64) -> String {
    // `{:?}` gives the shortest representation that round-trips
    format!("{v:?}")
}
