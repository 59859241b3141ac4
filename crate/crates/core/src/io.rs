//! File exports: 16-bit PGM previews and raw float32 arrays with JSON
//! sidecars. Byte layouts are fixed so identical runs produce identical files.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Sidecar describing a raw export.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RawSidecar {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub order: String,
    pub endianness: String,
}

/// Sidecar recording the windowing applied to a PGM preview.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PgmSidecar {
    pub shape: Vec<usize>,
    pub window_min: f64,
    pub window_max: f64,
}

/// Write a tensor as row-major little-endian float32 plus a JSON sidecar at
/// `<path>.json`.
pub fn export_raw(t: &Tensor, path: &Path) -> Result<Vec<PathBuf>> {
    let data = t.try_real()?;
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for &v in data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, &bytes)?;
    let sidecar = RawSidecar {
        shape: t.shape().to_vec(),
        dtype: "f32".into(),
        order: "row-major".into(),
        endianness: "little".into(),
    };
    let sidecar_path = sidecar_path_for(path);
    std::fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar).unwrap())?;
    Ok(vec![path.to_path_buf(), sidecar_path])
}

fn sidecar_path_for(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    PathBuf::from(os)
}

/// Read a raw export back (as f64 values at f32 precision).
pub fn import_raw(path: &Path) -> Result<Tensor> {
    let sidecar: RawSidecar =
        serde_json::from_slice(&std::fs::read(sidecar_path_for(path))?)
            .map_err(|e| Error::arg(format!("bad raw sidecar: {e}")))?;
    if sidecar.dtype != "f32" || sidecar.endianness != "little" {
        return Err(Error::arg("unsupported raw layout"));
    }
    let bytes = std::fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::arg("raw file length not a multiple of 4"));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Tensor::from_vec(sidecar.shape, values)
}

/// Write a 2-D tensor as a 16-bit big-endian binary PGM (P5), min/max
/// windowed, and record the window in `<path>.json`.
pub fn export_pgm16(t: &Tensor, path: &Path) -> Result<Vec<PathBuf>> {
    if t.rank() != 2 {
        return Err(Error::shape(format!("pgm export needs a 2-D tensor, got {:?}", t.shape())));
    }
    let v = t.try_real()?;
    let (h, w) = (t.shape()[0], t.shape()[1]);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = Vec::with_capacity(64 + v.len() * 2);
    write!(out, "P5\n{w} {h}\n65535\n")?;
    for &x in v {
        let q = (((x - lo) / span) * 65535.0).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    std::fs::write(path, &out)?;
    let sidecar = PgmSidecar { shape: vec![h, w], window_min: lo, window_max: hi };
    let sidecar_path = sidecar_path_for(path);
    std::fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar).unwrap())?;
    Ok(vec![path.to_path_buf(), sidecar_path])
}
