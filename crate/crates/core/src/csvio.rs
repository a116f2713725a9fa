//! Plain numeric CSV files: one point per row, optional header line.

use std::path::Path;

use crate::error::{Error, Result};

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes rows of numbers; all rows must have the same length.
pub fn write_rows<I, R>(path: &Path, header: Option<&[String]>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: AsRef<[f64]>,
{
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    if let Some(h) = header {
        writer.write_record(h).map_err(|e| csv_error(path, e))?;
    }
    for row in rows {
        writer
            .write_record(row.as_ref().iter().map(|v| format_f64(*v)))
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Writes string records (for summary tables mixing labels and numbers).
pub fn write_records(path: &Path, header: &[&str], records: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(header)
        .map_err(|e| csv_error(path, e))?;
    for r in records {
        writer.write_record(r).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// A numeric table read from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub columns: usize,
    /// Row-major values.
    pub values: Vec<f64>,
}

impl Table {
    pub fn rows(&self) -> usize {
        if self.columns == 0 {
            0
        } else {
            self.values.len() / self.columns
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values
            .chunks_exact(self.columns)
            .map(|r| r[j])
            .collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.as_ref()?.iter().position(|h| h == name)?;
        Some(self.column(j))
    }
}

/// Reads a numeric CSV. A first line that does not parse as numbers is taken
/// as the header.
pub fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut header = None;
    let mut columns = 0;
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => {
                if columns == 0 {
                    columns = row.len();
                } else if row.len() != columns {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        message: format!(
                            "row {} has {} fields, expected {columns}",
                            line + 1,
                            row.len()
                        ),
                    });
                }
                values.extend(row);
            }
            Err(e) if line == 0 => {
                let _ = e;
                header = Some(record.iter().map(str::to_owned).collect::<Vec<_>>());
                columns = header.as_ref().map_or(0, Vec::len);
            }
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("row {}: {e}", line + 1),
                })
            }
        }
    }
    Ok(Table {
        header,
        columns,
        values,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}
