//! File formats and atomic output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes to a temporary file in the target directory, then renames it into
/// place; readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = parent_dir(path);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".qgf-")
        .tempfile_in(&dir)
        .map_err(|e| io_err(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    write_atomic(path, (text + "\n").as_bytes())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Price files carry the OHLCV header; everything else is treated as a
/// sequence or feature table.
pub fn is_price_csv(text: &str) -> bool {
    text.lines()
        .next()
        .is_some_and(|l| l.trim_start_matches('\u{feff}').starts_with("Date,Open,"))
}

fn parse_number(field: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| CliError::Data(format!("{}:{line}: `{field}` is not a number", path.display())))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Data(format!("{}:{line}: non-finite value", path.display())))
    }
}

/// Headerless CSV, one sequence per row. Rows may differ in length.
pub fn parse_sequences(text: &str, path: &Path) -> Result<Vec<Vec<f64>>> {
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.split(',').map(|f| parse_number(f, path, i + 1)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no sequences", path.display())));
    }
    Ok(rows)
}

pub fn format_sequences(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// CSV with a header row and a leading `Date` column.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedTable {
    pub columns: Vec<String>,
    pub dates: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DatedTable {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        if header.get(0) != Some("Date") || header.len() < 2 {
            return Err(CliError::Data(format!(
                "{}: expected a header starting with `Date` and at least one column",
                path.display()
            )));
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut dates = Vec::new();
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let line = i + 2;
            if record.len() != columns.len() + 1 {
                return Err(CliError::Data(format!(
                    "{}:{line}: {} fields, expected {}",
                    path.display(),
                    record.len(),
                    columns.len() + 1
                )));
            }
            dates.push(record[0].to_string());
            rows.push(
                record
                    .iter()
                    .skip(1)
                    .map(|f| parse_number(f, path, line))
                    .collect::<Result<Vec<f64>>>()?,
            );
        }
        if rows.is_empty() {
            return Err(CliError::Data(format!("{}: no data rows", path.display())));
        }
        Ok(Self { columns, dates, rows })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("Date");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (date, row) in self.dates.iter().zip(&self.rows) {
            out.push_str(date);
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Content digest of a file, or of a directory's files in name order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn digest_path(path: &Path) -> Result<FileDigest> {
    let sha256 = if path.is_dir() {
        let mut names: Vec<_> = fs::read_dir(path)
            .map_err(|e| io_err(path, e))?
            .map(|entry| entry.map(|e| e.file_name()))
            .collect::<std::io::Result<_>>()
            .map_err(|e| io_err(path, e))?;
        names.sort();
        let mut hasher = Sha256::new();
        for name in names {
            let file = path.join(&name);
            let bytes = fs::read(&file).map_err(|e| io_err(&file, e))?;
            hasher.update(name.to_string_lossy().as_bytes());
            hasher.update([0]);
            hasher.update(Sha256::digest(&bytes));
        }
        hex(&hasher.finalize())
    } else {
        sha256_bytes(&fs::read(path).map_err(|e| io_err(path, e))?)
    };
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256,
    })
}
