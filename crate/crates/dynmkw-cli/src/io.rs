// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV ingestion: rows are time points, columns are coordinates.

use std::path::Path;

use dynmkw::ObservationMatrix;

use crate::error::{CliError, Result};

/// A parsed input file: the observation matrix plus one label per
/// column (taken from the header row, or synthesized as c0, c1, ...).
#[derive(Debug, Clone)]
pub struct CsvData {
    pub matrix: ObservationMatrix,
    pub labels: Vec<String>,
}

/// Parses the `--delimiter` flag: a single ASCII character, with
/// "\t" and "tab" accepted as spellings of the tab character.
pub fn parse_delimiter(s: &str) -> Result<u8> {
    if s == "\\t" || s.eq_ignore_ascii_case("tab") {
        return Ok(b'\t');
    }
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii() => Ok(c as u8),
        _ => Err(CliError::usage(format!(
            "delimiter must be a single ASCII character (or \"tab\"); got {s:?}"
        ))),
    }
}

/// Reads a delimited numeric file into an observation matrix.
///
/// Rejects ragged rows, non-numeric cells, and non-finite values,
/// naming the offending line (1-based, as in the file) and column.
pub fn read_csv(path: &Path, has_header: bool, delimiter: u8) -> Result<CsvData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .delimiter(delimiter)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;

    let header_labels: Option<Vec<String>> = if has_header {
        let headers = reader
            .headers()
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        Some(headers.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = header_labels.as_ref().map(Vec::len);
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| translate_csv_error(path, e))?;
        // Line numbers restart at 1 for the first file line; the data
        // row index alone would miscount when a header is present.
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or((idx + 1 + usize::from(has_header)) as u64);
        let mut row = Vec::with_capacity(record.len());
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                CliError::runtime(format!(
                    "{}: line {line}, column {}: cannot parse {cell:?} as a number",
                    path.display(),
                    col + 1
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::runtime(format!(
                    "{}: line {line}, column {}: non-finite value {value}",
                    path.display(),
                    col + 1
                )));
            }
            row.push(value);
        }
        width.get_or_insert(row.len());
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::runtime(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let l = width.unwrap_or(0);
    let labels = header_labels.unwrap_or_else(|| (0..l).map(|c| format!("c{c}")).collect());
    let values: Vec<f64> = rows.iter().flatten().copied().collect();
    let matrix = ObservationMatrix::from_flat(rows.len(), l, values)?;
    Ok(CsvData { matrix, labels })
}

/// Rewrites csv-crate errors so ragged rows name their line number.
fn translate_csv_error(path: &Path, e: csv::Error) -> CliError {
    if let csv::ErrorKind::UnequalLengths { pos, expected_len, len } = e.kind() {
        let line = pos.as_ref().map(|p| p.line());
        let at = match line {
            Some(line) => format!("line {line}"),
            None => "a row".to_string(),
        };
        return CliError::runtime(format!(
            "{}: {at} has {len} fields; expected {expected_len}",
            path.display()
        ));
    }
    CliError::runtime(format!("{}: {e}", path.display()))
}
