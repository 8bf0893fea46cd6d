//! On-disk formats: a little-endian binary matrix container, a plain CSV
//! matrix reader, and a JSON metadata sidecar for generated instances.

use crate::error::{Error, Result};
use crate::matrix::DesignMatrix;
use crate::synth::ProblemInstance;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SXGM";
const VERSION: u32 = 1;

/// Writes a matrix as magic `SXGM`, version (u32), rows (u64), columns
/// (u64), then row-major entries (f64), all little-endian.
pub fn write_matrix(path: &Path, x: &DesignMatrix) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(x.n_rows() as u64).to_le_bytes())?;
    out.write_all(&(x.n_cols() as u64).to_le_bytes())?;
    for i in 0..x.n_rows() {
        for &v in x.row(i) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix`], validating magic, version,
/// and payload size.
pub fn read_matrix(path: &Path) -> Result<DesignMatrix> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|_| truncated(path))?;
    if &magic != MAGIC {
        return Err(Error::Parse(format!(
            "{} is not a matrix file (bad magic {:?})",
            path.display(),
            magic
        )));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word).map_err(|_| truncated(path))?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Parse(format!(
            "{}: unsupported matrix format version {version} (expected {VERSION})",
            path.display()
        )));
    }
    let mut long = [0u8; 8];
    input.read_exact(&mut long).map_err(|_| truncated(path))?;
    let n = u64::from_le_bytes(long) as usize;
    input.read_exact(&mut long).map_err(|_| truncated(path))?;
    let d = u64::from_le_bytes(long) as usize;
    let count = n
        .checked_mul(d)
        .ok_or_else(|| Error::Parse(format!("{}: matrix dimensions overflow", path.display())))?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        input.read_exact(&mut long).map_err(|_| truncated(path))?;
        entries.push(f64::from_le_bytes(long));
    }
    let mut probe = [0u8; 1];
    if input.read(&mut probe)? != 0 {
        return Err(Error::Parse(format!(
            "{}: trailing bytes after {n} x {d} entries",
            path.display()
        )));
    }
    DesignMatrix::from_rows(n, d, entries)
}

fn truncated(path: &Path) -> Error {
    Error::Parse(format!("{}: file ends before the declared payload", path.display()))
}

/// Reads a dense matrix from comma-separated text: one row per line, blank
/// lines and `#` comments skipped.  Every row must have the same width.
pub fn read_csv_matrix(path: &Path) -> Result<DesignMatrix> {
    let input = BufReader::new(File::open(path)?);
    let mut entries = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for (line_no, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut count = 0usize;
        for piece in trimmed.split(',') {
            let value: f64 = piece.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "{} line {}: {piece:?} is not a number",
                    path.display(),
                    line_no + 1
                ))
            })?;
            entries.push(value);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(Error::Parse(format!(
                    "{} line {}: expected {w} values, found {count}",
                    path.display(),
                    line_no + 1
                )));
            }
            Some(_) => {}
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| {
        Error::Parse(format!("{}: no data rows", path.display()))
    })?;
    DesignMatrix::from_rows(rows, width, entries)
}

/// Everything about a generated instance except the bulk data, stored next
/// to the matrix and target files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceMetadata {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub snr_db: f64,
    pub noise_sigma: f64,
    pub true_support: Vec<usize>,
    pub true_coefficients: Vec<f64>,
    pub instance_hash: String,
}

impl InstanceMetadata {
    pub fn of(inst: &ProblemInstance) -> Self {
        InstanceMetadata {
            seed: inst.seed,
            n: inst.x.n_rows(),
            d: inst.x.n_cols(),
            k: inst.true_support.len(),
            snr_db: inst.snr_db,
            noise_sigma: inst.noise_sigma,
            true_support: inst.true_support.clone(),
            true_coefficients: inst.true_coefficients.coefficients().to_vec(),
            instance_hash: format!("{:016x}", inst.hash64()),
        }
    }
}

pub fn write_metadata(path: &Path, meta: &InstanceMetadata) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, meta)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<InstanceMetadata> {
    let input = BufReader::new(File::open(path)?);
    serde_json::from_reader(input).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Writes targets as a single-column matrix file.
pub fn write_targets(path: &Path, y: &[f64]) -> Result<()> {
    let column = DesignMatrix::from_rows(y.len(), 1, y.to_vec())?;
    write_matrix(path, &column)
}

/// Reads targets written by [`write_targets`].
pub fn read_targets(path: &Path) -> Result<Vec<f64>> {
    let column = read_matrix(path)?;
    if column.n_cols() != 1 {
        return Err(Error::Parse(format!(
            "{}: expected a single-column target file, found {} columns",
            path.display(),
            column.n_cols()
        )));
    }
    Ok((0..column.n_rows()).map(|i| column.get(i, 0)).collect())
}
