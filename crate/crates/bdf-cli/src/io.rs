//! Artifact plumbing: run directory, manifest echo, CSV tables, JSON
//! reports, and the binary state container consumed by `decompose`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bdf_core::error::{BdfError, Result};
use bdf_core::lattice::MomentumLattice;
use bdf_core::linalg::CMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::config::RunConfig;

const STATE_MAGIC: &[u8; 8] = b"BDFSTATE";
const STATE_VERSION: u32 = 1;

pub struct RunDir {
    pub path: PathBuf,
    started: Instant,
    subcommand: &'static str,
}

impl RunDir {
    /// Create the directory and echo the resolved configuration into it.
    /// The manifest carries no timestamps so reruns stay byte-identical;
    /// wall-clock data goes to a separate file on completion.
    pub fn prepare(cfg: &RunConfig, subcommand: &'static str) -> Result<RunDir> {
        let path = cfg
            .run
            .output_dir
            .clone()
            .expect("resolve() always sets the run directory");
        fs::create_dir_all(&path)?;
        let manifest = toml::to_string_pretty(cfg)
            .map_err(|e| BdfError::Config(format!("manifest serialization: {e}")))?;
        fs::write(path.join("manifest.toml"), manifest)?;
        write_json(
            &path.join("versions.json"),
            &serde_json::json!({
                "bdf-cli": env!("CARGO_PKG_VERSION"),
                "bdf-core": bdf_core::VERSION,
            }),
        )?;
        Ok(RunDir {
            path,
            started: Instant::now(),
            subcommand,
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn finish(&self) -> Result<()> {
        write_json(
            &self.file("timing.json"),
            &serde_json::json!({
                "subcommand": self.subcommand,
                "wall_seconds": self.started.elapsed().as_secs_f64(),
            }),
        )
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| BdfError::Config(format!("report serialization: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Plain numeric CSV; floats use the shortest round-trip form, which keeps
/// identical runs byte-identical.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Lattice parameters and the pair (Q, Pi) of a run, enough to rebuild the
/// model and hand the state to the structure tools.
pub struct StateFile {
    pub box_length: f64,
    pub cutoff: f64,
    pub spinor_dim: usize,
    pub alpha: f64,
    pub light_speed: f64,
    pub q: CMatrix,
    pub pi: CMatrix,
}

pub fn save_state(
    path: &Path,
    lattice: &MomentumLattice,
    alpha: f64,
    light_speed: f64,
    q: &CMatrix,
    pi: &CMatrix,
) -> Result<()> {
    let dim = lattice.total_dim();
    let mut bytes = Vec::with_capacity(52 + 32 * dim * dim);
    bytes.extend_from_slice(STATE_MAGIC);
    bytes.extend_from_slice(&STATE_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(lattice.spinor_dim as u32).to_le_bytes());
    bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    bytes.extend_from_slice(&lattice.box_length.to_le_bytes());
    bytes.extend_from_slice(&lattice.cutoff.to_le_bytes());
    bytes.extend_from_slice(&alpha.to_le_bytes());
    bytes.extend_from_slice(&light_speed.to_le_bytes());
    for m in [q, pi] {
        for v in m.iter() {
            bytes.extend_from_slice(&v.re.to_le_bytes());
            bytes.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<StateFile> {
    let bytes = fs::read(path)?;
    let bad = |what: &str| BdfError::Config(format!("{}: {what}", path.display()));
    if bytes.len() < 52 || &bytes[..8] != STATE_MAGIC {
        return Err(bad("not a state container"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(8) != STATE_VERSION {
        return Err(bad("unsupported container version"));
    }
    let spinor_dim = u32_at(12) as usize;
    let dim = u32_at(16) as usize;
    if bytes.len() != 52 + 32 * dim * dim {
        return Err(bad("truncated or oversized payload"));
    }
    let mut matrices = Vec::new();
    let mut offset = 52;
    for _ in 0..2 {
        let mut m = CMatrix::zeros((dim, dim));
        for r in 0..dim {
            for c in 0..dim {
                m[(r, c)] = Complex64::new(f64_at(offset), f64_at(offset + 8));
                offset += 16;
            }
        }
        matrices.push(m);
    }
    let pi = matrices.pop().unwrap();
    let q = matrices.pop().unwrap();
    Ok(StateFile {
        box_length: f64_at(20),
        cutoff: f64_at(28),
        spinor_dim,
        alpha: f64_at(36),
        light_speed: f64_at(44),
        q,
        pi,
    })
}
