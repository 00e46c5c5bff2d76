//! CSV emission and the binary checkpoint format.
//!
//! Checkpoint layout: magic bytes "NLSLAB1\0", a grid descriptor
//! (type tag byte, then the grid parameters), the time t, then the field
//! values as interleaved little-endian f64 pairs (re, im) in node order.

use crate::diagnostics::{DiagnosticsRow, CSV_HEADER};
use crate::domain::{CartesianGrid, Field, Grid, RadialGrid};
use num_complex::Complex64;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NLSLAB1\0";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not an NLSLAB1 checkpoint")]
    BadMagic,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("invalid grid in checkpoint: {0}")]
    BadGrid(String),
}

pub fn write_csv(rows: &[DiagnosticsRow], path: &Path) -> Result<(), IoError> {
    let mut out = String::with_capacity(rows.len() * 96 + 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_checkpoint(path: &Path, field: &Field, t: f64) -> Result<(), IoError> {
    let mut buf: Vec<u8> = Vec::with_capacity(64 + 16 * field.values.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    match field.grid.as_ref() {
        Grid::Radial(g) => {
            buf.push(0u8);
            buf.extend_from_slice(&g.a.to_le_bytes());
            buf.extend_from_slice(&g.r_max.to_le_bytes());
            buf.extend_from_slice(&(g.n as u64).to_le_bytes());
        }
        Grid::Cartesian(g) => {
            buf.push(1u8);
            buf.extend_from_slice(&g.half_width.to_le_bytes());
            buf.extend_from_slice(&(g.n as u64).to_le_bytes());
            for c in &g.x_obs {
                buf.extend_from_slice(&c.to_le_bytes());
            }
            buf.extend_from_slice(&g.a.to_le_bytes());
        }
    }
    buf.extend_from_slice(&t.to_le_bytes());
    for v in &field.values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.pos + n > self.buf.len() {
            return Err(IoError::Corrupt("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<(Field, f64), IoError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
    };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(IoError::BadMagic);
    }
    let tag = r.take(1)?[0];
    let grid = match tag {
        0 => {
            let a = r.f64()?;
            let r_max = r.f64()?;
            let n = r.u64()? as usize;
            Grid::Radial(
                RadialGrid::build(a, r_max, n).map_err(|e| IoError::BadGrid(e.to_string()))?,
            )
        }
        1 => {
            let half_width = r.f64()?;
            let n = r.u64()? as usize;
            let x_obs = [r.f64()?, r.f64()?, r.f64()?];
            let a = r.f64()?;
            Grid::Cartesian(
                CartesianGrid::build(half_width, n, x_obs, a)
                    .map_err(|e| IoError::BadGrid(e.to_string()))?,
            )
        }
        other => return Err(IoError::Corrupt(format!("unknown grid tag {other}"))),
    };
    let t = r.f64()?;
    let len = grid.len();
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        values.push(Complex64::new(r.f64()?, r.f64()?));
    }
    if r.pos != bytes.len() {
        return Err(IoError::Corrupt("trailing bytes".into()));
    }
    Ok((
        Field {
            grid: Arc::new(grid),
            values,
        },
        t,
    ))
}
