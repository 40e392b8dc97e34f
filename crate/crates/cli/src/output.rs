use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::CliError;

pub const SCHEMAS: [(&str, &str); 6] = [
    ("bound.schema.json", include_str!("../../../schemas/bound.schema.json")),
    (
        "optimize.schema.json",
        include_str!("../../../schemas/optimize.schema.json"),
    ),
    (
        "simulation.schema.json",
        include_str!("../../../schemas/simulation.schema.json"),
    ),
    ("check.schema.json", include_str!("../../../schemas/check.schema.json")),
    (
        "instance.schema.json",
        include_str!("../../../schemas/instance.schema.json"),
    ),
    (
        "schedule.schema.json",
        include_str!("../../../schemas/schedule.schema.json"),
    ),
];

/// Writes a finished document in one go, to `path` or stdout.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(path) => fs::write(path, bytes)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

pub fn json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn csv<I, R>(header: &[String], rows: I) -> Result<Vec<u8>, CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

/// Six decimals, or the shortest round-trip form when `full` is set.
pub fn real(x: f64, full: bool) -> String {
    if full {
        format!("{x}")
    } else {
        format!("{x:.6}")
    }
}

/// Left-aligned columns separated by two spaces.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let padded: Vec<String> = cells.zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&mut header.iter().copied());
    for row in rows {
        out += &line(&mut row.iter().map(String::as_str));
    }
    out
}
