//! Little-endian field snapshots.
//!
//! Layout: magic `CNLS`, version `u32`, `d`, `l`, `N` as `u32`, `r_max` and `t`
//! as `f64`, then `l * N` complex samples (re, im as `f64`), component-major.
//! A JSON sidecar carries the system parameters and the potential source.

use super::{GridSpec, RadialGrid, RadialState};
use crate::model::SystemParams;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"CNLS";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}")]
    Magic([u8; 4]),
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("sidecar json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("state has {got} nodes but the grid has {want}")]
    Shape { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub version: u32,
    pub d: usize,
    pub l: usize,
    pub n: usize,
    pub r_max: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub params: SystemParams,
    pub potential: String,
    pub grid: GridSpec,
    pub t: f64,
}

pub fn write_snapshot_to<W: Write>(
    mut w: W,
    grid: &RadialGrid,
    state: &RadialState,
) -> Result<(), SnapshotError> {
    if state.n() != grid.n {
        return Err(SnapshotError::Shape {
            got: state.n(),
            want: grid.n,
        });
    }
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(grid.d as u32)?;
    w.write_u32::<LittleEndian>(state.l() as u32)?;
    w.write_u32::<LittleEndian>(grid.n as u32)?;
    w.write_f64::<LittleEndian>(grid.r_max)?;
    w.write_f64::<LittleEndian>(state.t)?;
    for c in &state.u {
        for z in c {
            w.write_f64::<LittleEndian>(z.re)?;
            w.write_f64::<LittleEndian>(z.im)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot_from<R: Read>(mut r: R) -> Result<(SnapshotHeader, RadialState), SnapshotError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SnapshotError::Magic(magic));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(SnapshotError::Version(version));
    }
    let d = r.read_u32::<LittleEndian>()? as usize;
    let l = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let r_max = r.read_f64::<LittleEndian>()?;
    let t = r.read_f64::<LittleEndian>()?;
    let mut u = Vec::with_capacity(l);
    for _ in 0..l {
        let mut c = Vec::with_capacity(n);
        for _ in 0..n {
            let re = r.read_f64::<LittleEndian>()?;
            let im = r.read_f64::<LittleEndian>()?;
            c.push(Complex64::new(re, im));
        }
        u.push(c);
    }
    Ok((
        SnapshotHeader {
            version,
            d,
            l,
            n,
            r_max,
            t,
        },
        RadialState { t, u },
    ))
}

pub fn write_snapshot(path: &Path, grid: &RadialGrid, state: &RadialState) -> Result<(), SnapshotError> {
    write_snapshot_to(BufWriter::new(File::create(path)?), grid, state)
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, RadialState), SnapshotError> {
    read_snapshot_from(BufReader::new(File::open(path)?))
}

/// Sidecar path for a snapshot: `<path>.json`.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

pub fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<(), SnapshotError> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, sidecar)?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar, SnapshotError> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}
