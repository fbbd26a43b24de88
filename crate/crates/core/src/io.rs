//! Field files and report serialization.
//!
//! A field file is one JSON header line followed by little-endian `f64`
//! data in row-major cell order, component-major for vector fields.
//! Writes go to a sibling temporary file that is then renamed into place.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::geometry::Grid;
use crate::verify::{InequalityReport, CSV_COLUMNS};

pub const FIELD_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub schema_version: u32,
    pub label: String,
    pub grid: Grid,
    pub components: usize,
}

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let name = path.file_name().ok_or_else(|| Error::Format(format!("no file name in {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn encode(header: &FieldHeader, components: &[&[f64]]) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec(header)?;
    out.push(b'\n');
    for c in components {
        for v in c.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn decode(path: &Path) -> Result<(FieldHeader, Vec<Vec<f64>>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: FieldHeader = serde_json::from_str(line.trim_end())?;
    if header.schema_version != FIELD_SCHEMA_VERSION {
        return Err(Error::Format(format!("unsupported field schema {}", header.schema_version)));
    }
    let mut rest = Vec::new();
    reader.read_to_end(&mut rest)?;
    let len = header.grid.len();
    if rest.len() != 8 * len * header.components {
        return Err(Error::Format(format!(
            "expected {} data bytes, found {}",
            8 * len * header.components,
            rest.len()
        )));
    }
    let values: Vec<f64> = rest.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    let comps = values.chunks(len.max(1)).map(|c| c.to_vec()).collect();
    Ok((header, comps))
}

pub fn write_scalar_field(path: &Path, label: &str, f: &ScalarField) -> Result<()> {
    let header = FieldHeader {
        schema_version: FIELD_SCHEMA_VERSION,
        label: label.to_string(),
        grid: f.grid().clone(),
        components: 1,
    };
    write_atomic(path, &encode(&header, &[f.values()])?)
}

pub fn read_scalar_field(path: &Path) -> Result<(String, ScalarField)> {
    let (header, mut comps) = decode(path)?;
    if header.components != 1 {
        return Err(Error::Format(format!("expected a scalar field, found {} components", header.components)));
    }
    let f = ScalarField::new(&header.grid, comps.remove(0))?;
    Ok((header.label, f))
}

pub fn write_vector_field(path: &Path, label: &str, f: &VectorField) -> Result<()> {
    let header = FieldHeader {
        schema_version: FIELD_SCHEMA_VERSION,
        label: label.to_string(),
        grid: f.grid().clone(),
        components: f.dim(),
    };
    let comps: Vec<&[f64]> = f.components().iter().map(|c| c.as_slice()).collect();
    write_atomic(path, &encode(&header, &comps)?)
}

pub fn read_vector_field(path: &Path) -> Result<(String, VectorField)> {
    let (header, comps) = decode(path)?;
    let f = VectorField::new(&header.grid, comps)?;
    Ok((header.label, f))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Aggregate CSV of reports, header first, in input order.
pub fn reports_csv(reports: &[InequalityReport]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in reports {
        let row: Vec<String> = r
            .csv_row()
            .into_iter()
            .map(|f| if f.contains([',', '"', '\n']) { format!("\"{}\"", f.replace('"', "\"\"")) } else { f })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
