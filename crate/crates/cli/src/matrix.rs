//! Binary matrix interchange for magnitude and phase fields.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `SCMX`                   |
//! | 4      | 4    | format version, `u32` = 1      |
//! | 8      | 4    | dtype, `u32`: 1 = f32, 2 = f64 |
//! | 12     | 8    | rows (frames), `u64`           |
//! | 20     | 8    | cols (bins), `u64`             |
//! | 28     | ..   | row-major payload              |

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::CliError;

pub const MAGIC: &[u8; 4] = b"SCMX";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn decode(bytes: &[u8]) -> Result<Array2<f64>, CliError> {
    if bytes.len() < 28 || &bytes[..4] != MAGIC {
        return Err(bad("not a matrix file (missing SCMX header)"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(bad(format!("unsupported matrix version {}", u32_at(4))));
    }
    let width = match u32_at(8) {
        1 => 4,
        2 => 8,
        d => return Err(bad(format!("unknown matrix dtype {d}"))),
    };
    let (rows, cols) = (u64_at(12) as usize, u64_at(20) as usize);
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| bad("matrix dimensions overflow"))?;
    let payload = &bytes[28..];
    if payload.len() != count * width {
        return Err(bad(format!(
            "matrix payload is {} bytes, header promises {rows}x{cols}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(width)
        .map(|c| match width {
            4 => f32::from_le_bytes(c.try_into().unwrap()) as f64,
            _ => f64::from_le_bytes(c.try_into().unwrap()),
        })
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

pub fn encode(values: &Array2<f64>, dtype: Dtype) -> Vec<u8> {
    let (rows, cols) = values.dim();
    let width = if dtype == Dtype::F32 { 4 } else { 8 };
    let mut out = Vec::with_capacity(28 + rows * cols * width);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dtype as u32).to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in values.iter() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(*v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>, CliError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes).map_err(|e| match e {
        CliError::Usage(msg) => CliError::Usage(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_matrix(path: &Path, values: &Array2<f64>, dtype: Dtype) -> Result<(), CliError> {
    std::fs::File::create(path)?.write_all(&encode(values, dtype))?;
    Ok(())
}

/// Widens a one-sided `(M, N/2 + 1)` field to all `N` bins using the
/// symmetry of a real signal's spectrum. `odd` negates the mirrored half,
/// as for phase. Full-width input is returned unchanged.
pub fn to_full_width(values: Array2<f64>, n: usize, odd: bool) -> Result<Array2<f64>, CliError> {
    let (rows, cols) = values.dim();
    if cols == n {
        return Ok(values);
    }
    if cols != n / 2 + 1 {
        return Err(bad(format!(
            "matrix has {cols} columns; expected {n} or {}",
            n / 2 + 1
        )));
    }
    let sign = if odd { -1.0 } else { 1.0 };
    Ok(Array2::from_shape_fn((rows, n), |(m, k)| {
        if k < cols {
            values[[m, k]]
        } else {
            sign * values[[m, n - k]]
        }
    }))
}
