//! CSV and JSON writers. Floats use 16 significant digits in scientific notation.

use crate::CliError;
use serde::Serialize;
use std::path::Path;

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Float cell: 17 significant digits, `.` separator.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<H: AsRef<str>>(path: &Path, header: &[H], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let cells: Vec<Vec<String>> = rows.iter().map(|r| r.iter().copied().map(float).collect()).collect();
    write_cells(path, header, &cells)
}

pub fn write_cells<H: AsRef<str>>(path: &Path, header: &[H], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(|e| io(path, e))?;
    w.write_record(header.iter().map(AsRef::as_ref)).map_err(|e| io(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let v = [0.1, -1.0 / 3.0, 1e-300, 6.02e23];
        write_csv(&path, &["a", "b", "c", "d"], &[v.to_vec()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains('\r'));
        let line = text.lines().nth(1).unwrap();
        let back: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(back, v);
    }
}
