//! Matrix files: a JSON object `{"rows": r, "cols": c, "data": [[...], ...]}`
//! or plain whitespace-separated rows, one matrix per file.
//!
//! Numbers are written in shortest round-trip form, so parse → serialize →
//! parse is bit-exact. Non-finite entries serialize as `null`.

use std::fmt;
use std::path::Path;

use nspkit_core::Matrix;
use serde_json::{json, Value};

#[derive(Debug)]
pub enum MatFileError {
    Io(String, std::io::Error),
    Json(serde_json::Error),
    Format(String),
}

impl fmt::Display for MatFileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatFileError::Io(path, e) => write!(f, "{path}: {e}"),
            MatFileError::Json(e) => write!(f, "invalid JSON: {e}"),
            MatFileError::Format(msg) => write!(f, "invalid matrix: {msg}"),
        }
    }
}

impl std::error::Error for MatFileError {}

fn bad(msg: impl Into<String>) -> MatFileError {
    MatFileError::Format(msg.into())
}

pub fn parse(text: &str) -> Result<Matrix, MatFileError> {
    if text.trim_start().starts_with('{') {
        let value: Value = serde_json::from_str(text).map_err(MatFileError::Json)?;
        from_json(&value)
    } else {
        parse_plain(text)
    }
}

pub fn read(path: &Path) -> Result<Matrix, MatFileError> {
    let text = std::fs::read_to_string(path).map_err(|e| MatFileError::Io(path.display().to_string(), e))?;
    parse(&text).map_err(|e| match e {
        MatFileError::Format(msg) => bad(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Reads a matrix with a single row or column as a vector.
pub fn read_vector(path: &Path) -> Result<Vec<f64>, MatFileError> {
    let m = read(path)?;
    if m.nrows() > 1 && m.ncols() > 1 {
        return Err(bad(format!("{}: expected a vector, found {}x{}", path.display(), m.nrows(), m.ncols())));
    }
    Ok(m.iter().copied().collect())
}

fn parse_plain(text: &str) -> Result<Matrix, MatFileError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| bad(format!("line {}: cannot parse {tok:?} as a number", lineno + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(bad(format!("row {} has {} entries, expected {cols}", i + 1, rows[i].len())));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    finite(Matrix::from_row_slice(rows.len(), cols, &flat))
}

pub fn from_json(value: &Value) -> Result<Matrix, MatFileError> {
    let dim = |key: &str| -> Result<usize, MatFileError> {
        value
            .get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| bad(format!("missing or invalid \"{key}\"")))
    };
    let (rows, cols) = (dim("rows")?, dim("cols")?);
    let data = value
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing \"data\" array"))?;
    if data.len() != rows {
        return Err(bad(format!("\"rows\" is {rows} but data has {} rows", data.len())));
    }
    let mut m = Matrix::zeros(rows, cols);
    for (i, row) in data.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| bad(format!("row {} is not an array", i + 1)))?;
        if row.len() != cols {
            return Err(bad(format!("row {} has {} entries, expected {cols}", i + 1, row.len())));
        }
        for (j, x) in row.iter().enumerate() {
            m[(i, j)] = x.as_f64().ok_or_else(|| bad(format!("entry ({}, {}) is not a number", i + 1, j + 1)))?;
        }
    }
    finite(m)
}

fn finite(m: Matrix) -> Result<Matrix, MatFileError> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(m)
    } else {
        Err(bad("entries must be finite"))
    }
}

/// A finite float as a JSON number, anything else as `null`.
pub fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

pub fn to_json(m: &Matrix) -> Value {
    let data: Vec<Value> = m
        .row_iter()
        .map(|row| Value::Array(row.iter().map(|&x| number(x)).collect()))
        .collect();
    json!({ "rows": m.nrows(), "cols": m.ncols(), "data": data })
}

pub fn serialize(m: &Matrix) -> String {
    let mut s = serde_json::to_string_pretty(&to_json(m)).expect("JSON values serialize");
    s.push('\n');
    s
}

pub fn write(path: &Path, m: &Matrix) -> Result<(), MatFileError> {
    std::fs::write(path, serialize(m)).map_err(|e| MatFileError::Io(path.display().to_string(), e))
}
