//! Series CSV input and artifact output.
//!
//! Series files hold one numeric column, optionally preceded by a date or
//! label column and a header row. `NA`, `nan` and empty cells are missing
//! values and come back as NaN. Lines starting with `#` are comments.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

fn parse_cell(cell: &str) -> Option<f64> {
    if is_missing(cell) {
        Some(f64::NAN)
    } else {
        cell.parse::<f64>().ok().filter(|v| v.is_finite())
    }
}

/// Reads the last column of a series CSV.
pub fn read_series<R: Read>(input: R) -> Result<Vec<f64>> {
    read_column(input, None)
}

/// Reads the column headed `name`, or the last column when `name` is `None`.
pub fn read_column<R: Read>(input: R, name: Option<&str>) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    let mut width = None;
    let mut header_seen = false;
    let mut index = None;
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::Data(format!("line {line}: expected {w} columns, found {}", rec.len())));
            }
            _ => {}
        }
        if let (Some(want), None) = (name, index) {
            if header_seen || !out.is_empty() {
                return Err(Error::Data(format!("no column named '{want}'")));
            }
            index = Some(
                rec.iter()
                    .position(|c| c == want)
                    .ok_or_else(|| Error::Data(format!("line {line}: no column named '{want}'")))?,
            );
            header_seen = true;
            continue;
        }
        let cell = rec.get(index.unwrap_or(rec.len() - 1)).unwrap_or("");
        match parse_cell(cell) {
            Some(v) => out.push(v),
            // a leading non-numeric row is a header
            None if out.is_empty() && !header_seen => header_seen = true,
            None => return Err(Error::Data(format!("line {line}: '{cell}' is not a number or NA"))),
        }
    }
    if out.is_empty() {
        return Err(Error::Data("series file has no values".into()));
    }
    Ok(out)
}

pub fn read_series_file(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let f = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_column(BufReader::new(f), column)
}

/// Shortest text that parses back to the same value; NaN becomes `NA`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:?}")
    }
}

/// Writes `# `-prefixed comment lines, one per line of `text`.
pub fn write_comment<W: Write>(out: &mut W, text: &str) -> Result<()> {
    for line in text.lines() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

/// Writes equal-length named columns with a header row.
pub fn write_columns<W: Write>(out: &mut W, columns: &[(&str, &[f64])]) -> Result<()> {
    let len = columns.first().map_or(0, |c| c.1.len());
    if columns.iter().any(|c| c.1.len() != len) {
        return Err(Error::Dimension("columns differ in length".into()));
    }
    let header: Vec<&str> = columns.iter().map(|c| c.0).collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..len {
        let row: Vec<String> = columns.iter().map(|c| format_value(c.1[i])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
