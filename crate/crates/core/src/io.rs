//! Field dumps: `i,j,value` CSV or little-endian binary `.f64`.
//!
//! The binary layout is an 8-byte header (`u32` grid size, `u32` reserved,
//! always zero) followed by `n²` `f64` values in row-major order. CSV values
//! use the shortest representation that parses back to the same bits.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridField, TorusGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldFormat {
    Csv,
    Binary,
}

impl FieldFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(FieldFormat::Csv),
            Some("f64") => Ok(FieldFormat::Binary),
            _ => Err(Error::Format {
                path: path.display().to_string(),
                message: "field dumps must end in .csv or .f64".into(),
            }),
        }
    }
}

pub fn encode_binary(field: &GridField) -> Vec<u8> {
    let n = field.grid().n() as u32;
    let mut out = Vec::with_capacity(8 + 8 * field.values().len());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_csv(field: &GridField) -> String {
    let n = field.grid().n();
    let mut out = String::with_capacity(24 * field.values().len());
    out.push_str("i,j,value\n");
    for i in 0..n {
        for j in 0..n {
            out.push_str(&format!("{i},{j},{}\n", field.at(i, j)));
        }
    }
    out
}

pub fn write_field(path: &Path, field: &GridField) -> Result<()> {
    let bytes = match FieldFormat::from_path(path)? {
        FieldFormat::Csv => encode_csv(field).into_bytes(),
        FieldFormat::Binary => encode_binary(field),
    };
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: &Path) -> Result<GridField> {
    let format = FieldFormat::from_path(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Format {
        path: path.display().to_string(),
        message,
    };
    match format {
        FieldFormat::Binary => decode_binary(&bytes).map_err(|e| bad(e.to_string())),
        FieldFormat::Csv => {
            let text = String::from_utf8(bytes).map_err(|e| bad(e.to_string()))?;
            decode_csv(&text).map_err(|e| bad(e.to_string()))
        }
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<GridField> {
    if bytes.len() < 8 {
        return Err(Error::Domain("binary field shorter than its header".into()));
    }
    let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let grid = TorusGrid::new(n)?;
    let body = &bytes[8..];
    if body.len() != 8 * grid.len() {
        return Err(Error::Shape(format!(
            "header says n = {n} but body holds {} bytes",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    GridField::new(&grid, values)
}

pub fn decode_csv(text: &str) -> Result<GridField> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "i,j,value" => {}
        _ => return Err(Error::Domain("missing `i,j,value` header".into())),
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let parse_err = || Error::Domain(format!("cannot parse row {}: {line}", lineno + 2));
        if parts.len() != 3 {
            return Err(parse_err());
        }
        let i: usize = parts[0].trim().parse().map_err(|_| parse_err())?;
        let j: usize = parts[1].trim().parse().map_err(|_| parse_err())?;
        let v: f64 = parts[2].trim().parse().map_err(|_| parse_err())?;
        rows.push((i, j, v));
    }
    let n = (rows.len() as f64).sqrt().round() as usize;
    if n * n != rows.len() {
        return Err(Error::Shape(format!("{} rows is not a square grid", rows.len())));
    }
    let grid = TorusGrid::new(n)?;
    let mut values = vec![f64::NAN; grid.len()];
    for (i, j, v) in rows {
        if i >= n || j >= n {
            return Err(Error::Shape(format!("node ({i}, {j}) outside {n}×{n} grid")));
        }
        values[grid.index(i, j)] = v;
    }
    GridField::new(&grid, values)
}
