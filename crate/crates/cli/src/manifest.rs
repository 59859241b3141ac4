//! Run manifest: config hash, seed, and the artifact list. Wall-clock timing
//! lives here (and only here) so the data artifacts stay byte-reproducible.

use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub wall_seconds: f64,
}

/// FNV-1a 64-bit over the raw config bytes.
pub fn config_hash(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("fnv1a64:{h:016x}")
}

pub fn write_manifest(
    out_dir: &Path,
    config_bytes: &[u8],
    seed: u64,
    artifacts: &[PathBuf],
    wall_seconds: f64,
) -> std::io::Result<PathBuf> {
    let manifest = Manifest {
        config_hash: config_hash(config_bytes),
        seed,
        artifacts: artifacts
            .iter()
            .map(|p| {
                p.strip_prefix(out_dir)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
        wall_seconds,
    };
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_input_sensitive() {
        let a = config_hash(b"{\"seed\":1}");
        let b = config_hash(b"{\"seed\":1}");
        let c = config_hash(b"{\"seed\":2}");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.starts_with("fnv1a64:"));
    }
}
