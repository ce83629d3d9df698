//! Binary snapshots and CSV traces on disk.
//!
//! A snapshot is a 64-byte little-endian header followed by the field as
//! `(re, im)` pairs of IEEE-754 doubles in row-major axis order:
//!
//! | bytes  | content                          |
//! |--------|----------------------------------|
//! | 0..8   | magic `DNLS0001`                 |
//! | 8..12  | `dim` as `u32`                   |
//! | 12..24 | points per axis, 3 × `u32`       |
//! | 24..48 | half-width per axis, 3 × `f64`   |
//! | 48..56 | time as `f64`                    |
//! | 56..64 | reserved, zero                   |
//!
//! Unused axis slots are zero.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::diagnostics::{read_csv, write_csv, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::field::WaveFunction;
use crate::grid::Grid;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"DNLS0001";
pub const HEADER_LEN: usize = 64;

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn encode_snapshot(u: &WaveFunction, time: f64) -> Vec<u8> {
    let grid = u.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * grid.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    for axis in 0..3 {
        let n = grid.points().get(axis).copied().unwrap_or(0);
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for axis in 0..3 {
        let l = grid.half_width().get(axis).copied().unwrap_or(0.0);
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&time.to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
    for c in u.values() {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

/// Decodes a snapshot; `path` only labels errors.
pub fn decode_snapshot(bytes: &[u8], path: &Path) -> Result<(WaveFunction, f64)> {
    if bytes.len() < HEADER_LEN {
        return Err(format_error(
            path,
            format!("file is {} bytes, shorter than the {HEADER_LEN}-byte header", bytes.len()),
        ));
    }
    if &bytes[..8] != SNAPSHOT_MAGIC {
        return Err(format_error(path, "bad magic, not a snapshot file"));
    }
    let dim = u32_at(bytes, 8) as usize;
    if !(1..=3).contains(&dim) {
        return Err(format_error(path, format!("dimension {dim} is out of range")));
    }
    let points: Vec<usize> = (0..dim).map(|a| u32_at(bytes, 12 + 4 * a) as usize).collect();
    let half_width: Vec<f64> = (0..dim).map(|a| f64_at(bytes, 24 + 8 * a)).collect();
    let time = f64_at(bytes, 48);
    let grid = Grid::new(dim, &points, &half_width)
        .map_err(|e| format_error(path, format!("invalid grid in header: {e}")))?;
    let expected = HEADER_LEN + 16 * grid.len();
    if bytes.len() != expected {
        return Err(format_error(
            path,
            format!("expected {expected} bytes for the header's grid, found {}", bytes.len()),
        ));
    }
    let values: Vec<Complex64> = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| Complex64::new(f64_at(c, 0), f64_at(c, 8)))
        .collect();
    let u = WaveFunction::new(grid, values).map_err(|e| format_error(path, e.to_string()))?;
    Ok((u, time))
}

pub fn write_snapshot(path: &Path, u: &WaveFunction, time: f64) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&encode_snapshot(u, time))?;
    f.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(WaveFunction, f64)> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|e| format_error(path, e.to_string()))?
        .read_to_end(&mut bytes)?;
    decode_snapshot(&bytes, path)
}

pub fn write_trace(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write_csv(&mut f, records)?;
    f.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let f = File::open(path).map_err(|e| format_error(path, e.to_string()))?;
    read_csv(BufReader::new(f), &path.display().to_string())
}

/// File name of the snapshot taken after `step` steps.
pub fn snapshot_name(step: usize) -> String {
    format!("snap_{step:06}.bin")
}

/// Step index encoded in a snapshot file name.
pub fn parse_snapshot_name(name: &str) -> Option<usize> {
    name.strip_prefix("snap_")?.strip_suffix(".bin")?.parse().ok()
}
