//! Run configuration: a strict-schema TOML file merged with flag overrides.
//!
//! Unknown keys are fatal so typos cannot silently fall back to defaults.
//! The fully resolved configuration is echoed into the run directory as
//! `manifest.toml`, which together with the seed pins every artifact.

use std::path::PathBuf;

use bdf_core::density::{ExternalDensity, GaussianCharge};
use bdf_core::error::{BdfError, Result};
use bdf_core::scf::ScfConfig;
use serde::{Deserialize, Serialize};

/// Supremum of the admissible coupling range.
pub const COUPLING_SUP: f64 = 4.0 / std::f64::consts::PI;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeBlock {
    pub box_length: f64,
    pub cutoff: f64,
    pub spinor_dim: usize,
}

impl Default for LatticeBlock {
    fn default() -> Self {
        LatticeBlock {
            box_length: 2.0 * std::f64::consts::PI,
            cutoff: 1.0,
            spinor_dim: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NucleusBlock {
    pub charge: f64,
    pub center: [f64; 3],
    pub width: f64,
}

impl Default for NucleusBlock {
    fn default() -> Self {
        NucleusBlock {
            charge: 1.0,
            center: [0.0; 3],
            width: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub alpha: f64,
    pub light_speed: f64,
    pub nuclei: Vec<NucleusBlock>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock {
            alpha: 0.5,
            light_speed: 1.0,
            nuclei: vec![NucleusBlock::default()],
        }
    }
}

/// Mirrors the solver's own configuration so the manifest is self-contained.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub tol: f64,
    pub max_iter: usize,
    pub stall_shift: f64,
    pub purify: bool,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let cfg = ScfConfig::default();
        SolverBlock {
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            stall_shift: cfg.stall_shift,
            purify: cfg.purify,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskBlock {
    /// Target charge for `ground-state`.
    pub charge: f64,
    /// Charge list for `hvz-scan`.
    pub charges: Vec<f64>,
    /// Sector whose binding margins `hvz-scan` reports.
    pub binding_n: i64,
    /// Split sizes for the binding margins.
    pub k_window: Vec<i64>,
    /// Couplings for `weak-coupling`, strictly decreasing.
    pub alphas: Vec<f64>,
    /// Particle count for `weak-coupling` and `nonrel-limit`.
    pub particles: i64,
    /// Base cutoff for `nonrel-limit`; the lattice cutoff is `lambda0 * c`.
    pub lambda0: f64,
    pub light_speeds: Vec<f64>,
    /// When set, `nonrel-limit` also verifies the stretched-box
    /// reparameterization at this light speed.
    pub scaling_light_speed: Option<f64>,
}

impl Default for TaskBlock {
    fn default() -> Self {
        TaskBlock {
            charge: 1.0,
            charges: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            binding_n: 1,
            k_window: vec![1],
            alphas: vec![0.2, 0.1, 0.05],
            particles: 1,
            lambda0: 0.2,
            light_speeds: vec![5.0, 10.0],
            scaling_light_speed: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Hard cap on the dense one-body dimension; raise deliberately.
    pub max_dim: usize,
    /// Worker-thread cap for the lattice convolutions.
    pub jobs: Option<usize>,
}

impl Default for RunBlock {
    fn default() -> Self {
        RunBlock {
            seed: 42,
            output_dir: None,
            max_dim: 2500,
            jobs: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lattice: LatticeBlock,
    pub model: ModelBlock,
    pub solver: SolverBlock,
    pub task: TaskBlock,
    pub run: RunBlock,
}

/// Flag overrides shared by every subcommand; a set flag wins over the file.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// Strict-schema TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub light_speed: Option<f64>,
    #[arg(long)]
    pub box_length: Option<f64>,
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long)]
    pub spinor_dim: Option<usize>,
    #[arg(long)]
    pub charge: Option<f64>,
    #[arg(long)]
    pub particles: Option<i64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Run directory; also settable via BDF_OUTPUT_DIR.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub max_dim: Option<usize>,
    /// Cap on worker threads used by the lattice convolutions.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl RunConfig {
    /// Read the file (when given), apply flags, resolve the run directory.
    /// Precedence: flag, then environment, then file, then default.
    pub fn resolve(ov: &Overrides, subcommand: &str) -> Result<RunConfig> {
        let mut cfg = match &ov.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                toml::from_str(&text).map_err(|e| {
                    BdfError::Config(format!("{}: {e}", path.display()))
                })?
            }
            None => RunConfig::default(),
        };

        macro_rules! take {
            ($field:expr, $opt:expr) => {
                if let Some(v) = $opt {
                    $field = v;
                }
            };
        }
        take!(cfg.model.alpha, ov.alpha);
        take!(cfg.model.light_speed, ov.light_speed);
        take!(cfg.lattice.box_length, ov.box_length);
        take!(cfg.lattice.cutoff, ov.cutoff);
        take!(cfg.lattice.spinor_dim, ov.spinor_dim);
        take!(cfg.task.charge, ov.charge);
        take!(cfg.task.particles, ov.particles);
        take!(cfg.run.seed, ov.seed);
        take!(cfg.solver.tol, ov.tol);
        take!(cfg.solver.max_iter, ov.max_iter);
        take!(cfg.run.max_dim, ov.max_dim);
        if ov.jobs.is_some() {
            cfg.run.jobs = ov.jobs;
        }

        cfg.run.output_dir = ov
            .output_dir
            .clone()
            .or_else(|| std::env::var_os("BDF_OUTPUT_DIR").map(PathBuf::from))
            .or(cfg.run.output_dir)
            .or_else(|| Some(PathBuf::from("runs").join(subcommand)));

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.model.alpha >= 0.0 && self.model.alpha < COUPLING_SUP) {
            return Err(BdfError::Config(format!(
                "coupling alpha = {} outside the admissible range 0 <= alpha < 4/pi = {COUPLING_SUP:.6}",
                self.model.alpha
            )));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.model.light_speed) {
            return Err(BdfError::Config("light speed must be positive".into()));
        }
        if !positive(self.lattice.box_length) || !positive(self.lattice.cutoff) {
            return Err(BdfError::Config(
                "box length and cutoff must be positive".into(),
            ));
        }
        if self.lattice.spinor_dim != 2 && self.lattice.spinor_dim != 4 {
            return Err(BdfError::Config(format!(
                "spinor dimension must be 2 or 4, got {}",
                self.lattice.spinor_dim
            )));
        }
        if !positive(self.solver.tol) || self.solver.max_iter == 0 {
            return Err(BdfError::Config(
                "solver tolerance must be positive and max_iter nonzero".into(),
            ));
        }
        if self.run.jobs == Some(0) {
            return Err(BdfError::Config("jobs must be at least 1".into()));
        }
        self.external_density().validate()?;
        Ok(())
    }

    pub fn external_density(&self) -> ExternalDensity {
        ExternalDensity {
            gaussians: self
                .model
                .nuclei
                .iter()
                .map(|n| GaussianCharge {
                    charge: n.charge,
                    center: n.center,
                    width: n.width,
                })
                .collect(),
        }
    }

    pub fn scf_config(&self) -> ScfConfig {
        ScfConfig {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            stall_shift: self.solver.stall_shift,
            purify: self.solver.purify,
        }
    }

    pub fn ensure_dim(&self, dim: usize) -> Result<()> {
        if dim > self.run.max_dim {
            return Err(BdfError::Config(format!(
                "one-body dimension {dim} exceeds the cap {}; raise it with --max-dim",
                self.run.max_dim
            )));
        }
        Ok(())
    }
}
