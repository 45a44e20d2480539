//! File formats: ensemble CSV and binary, mixing-matrix CSV, PSD and sample
//! set JSON, and raw-series corpora.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::synthesis::{MixingMatrix, Role, SignalEnsemble};

/// Leading bytes of the binary ensemble layout.
pub const ENSEMBLE_MAGIC: [u8; 4] = *b"MBSE";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Rows of `m` as CSV lines, shortest round-trip float formatting.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Headerless numeric CSV with rows of equal length.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>().map_err(|_| Error::NonNumericCell {
                    path: path.to_path_buf(),
                    line,
                    cell: cell.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format(format!(
                    "{}:{line}: expected {} columns, found {}",
                    path.display(),
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn write_ensemble_csv(path: &Path, x: &SignalEnsemble) -> Result<()> {
    write_matrix_csv(path, x.data())
}

pub fn read_ensemble_csv(path: &Path, role: Role) -> Result<SignalEnsemble> {
    SignalEnsemble::new(role, read_matrix_csv(path)?)
}

/// `magic ‖ T:u64 ‖ C:u64 ‖ role:u8 ‖ C·T little-endian f64, row-major`.
pub fn write_ensemble_binary(path: &Path, x: &SignalEnsemble) -> Result<()> {
    let mut w = create(path)?;
    let mut buf = Vec::with_capacity(21 + 8 * x.data().len());
    buf.extend_from_slice(&ENSEMBLE_MAGIC);
    buf.extend_from_slice(&(x.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(x.channels() as u64).to_le_bytes());
    buf.push(x.role().code());
    for i in 0..x.channels() {
        for v in x.data().row(i).iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_ensemble_binary(path: &Path) -> Result<SignalEnsemble> {
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_ensemble(&bytes).map_err(|msg| Error::Format(format!("{}: {msg}", path.display())))?
}

fn decode_ensemble(bytes: &[u8]) -> std::result::Result<Result<SignalEnsemble>, String> {
    if bytes.len() < 21 || bytes[..4] != ENSEMBLE_MAGIC {
        return Err("not an ensemble file".into());
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    let (t, c) = (word(4), word(12));
    let role =
        Role::from_code(bytes[20]).ok_or_else(|| format!("unknown role code {}", bytes[20]))?;
    let body = &bytes[21..];
    if c.checked_mul(t).and_then(|n| n.checked_mul(8)) != Some(body.len()) {
        return Err(format!(
            "expected {c}x{t} samples, body has {} bytes",
            body.len()
        ));
    }
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(SignalEnsemble::new(
        role,
        DMatrix::from_row_slice(c, t, &values),
    ))
}

pub fn write_mixing_csv(path: &Path, u: &MixingMatrix) -> Result<()> {
    write_matrix_csv(path, u.matrix())
}

pub fn read_mixing_csv(path: &Path) -> Result<MixingMatrix> {
    MixingMatrix::new(read_matrix_csv(path)?)
}

/// A named raw series from a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

/// Loads raw series from a directory of single-column CSV files (sorted by
/// file name) or from one wide CSV whose columns are series. A leading row
/// that is entirely non-numeric is taken as a header.
pub fn load_corpus(path: &Path) -> Result<Vec<Series>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
            .collect();
        files.sort();
        let mut out = Vec::with_capacity(files.len());
        for file in files {
            let columns = read_columns(&file)?;
            let name = file
                .file_stem()
                .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            match columns.len() {
                1 => out.push(Series {
                    name,
                    values: columns.into_iter().next().unwrap().values,
                }),
                0 => {
                    return Err(Error::InsufficientData(format!(
                        "{}: no data",
                        file.display()
                    )))
                }
                n => {
                    return Err(Error::Format(format!(
                        "{}: expected a single column, found {n}",
                        file.display()
                    )))
                }
            }
        }
        Ok(out)
    } else {
        read_columns(path)
    }
}

fn read_columns(path: &Path) -> Result<Vec<Series>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut names: Option<Vec<String>> = None;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in r.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        if idx == 0 && record.iter().all(|c| c.parse::<f64>().is_err()) {
            names = Some(record.iter().map(str::to_string).collect());
            continue;
        }
        let width = names.as_ref().map_or(record.len(), Vec::len);
        if columns.is_empty() {
            columns = vec![Vec::new(); width];
        }
        if record.len() != columns.len() {
            return Err(Error::Format(format!(
                "{}:{line}: expected {} columns, found {}",
                path.display(),
                columns.len(),
                record.len()
            )));
        }
        for (col, cell) in columns.iter_mut().zip(record.iter()) {
            let v = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumericCell {
                    path: path.to_path_buf(),
                    line,
                    cell: cell.to_string(),
                })?;
            col.push(v);
        }
    }
    let stem = path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    Ok(columns
        .into_iter()
        .enumerate()
        .map(|(i, values)| Series {
            name: names
                .as_ref()
                .and_then(|n| n.get(i).cloned())
                .unwrap_or_else(|| format!("{stem}[{i}]")),
            values,
        })
        .collect())
}
