//! Flat TOML experiment config.

use std::path::{Path, PathBuf};

use mfif::delayed_sim::DelayedConfig;
use mfif::particle_sim::{DriftSpec, InitKind, InitialLaw, SimConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every key the config file may contain. Which keys are required depends
/// on the subcommand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<usize>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub alpha: Option<f64>,
    #[serde(default)]
    pub drift_kind: Option<String>,
    #[serde(default)]
    pub drift_params: Vec<f64>,
    pub init_kind: Option<String>,
    #[serde(default)]
    pub init_params: Vec<f64>,
    pub epsilon0: Option<f64>,
    pub noise_scale: Option<f64>,
    pub seed: Option<u64>,
    pub record_trajectories: Option<bool>,
    pub record_cap: Option<usize>,
    pub capture_fraction: Option<f64>,

    pub delta: Option<f64>,
    pub replicas: Option<usize>,
    pub record_replicas: Option<usize>,

    pub sweep_axis: Option<String>,
    pub sweep_values: Option<Vec<f64>>,

    pub jump_threshold: Option<f64>,
    pub bandwidth: Option<f64>,
    pub m1_resolution: Option<usize>,
    pub comparison_points: Option<usize>,

    pub curve_files: Option<Vec<PathBuf>>,
    pub curve_labels: Option<Vec<String>>,
    pub reference_files: Option<Vec<PathBuf>>,

    pub potentials: Option<Vec<f64>>,
    pub state_file: Option<PathBuf>,
}

fn required<T: Copy>(v: Option<T>, field: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::config(field, "missing"))
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("--config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        // file lists are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |files: &mut Option<Vec<PathBuf>>| {
            if let Some(files) = files {
                for f in files.iter_mut() {
                    if f.is_relative() {
                        *f = base.join(&*f);
                    }
                }
            }
        };
        rebase(&mut cfg.curve_files);
        rebase(&mut cfg.reference_files);
        if let Some(f) = &mut cfg.state_file {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
        Ok(cfg)
    }

    pub fn drift(&self) -> Result<DriftSpec, CliError> {
        let p = &self.drift_params;
        let expect = |k: usize| {
            if p.len() == k {
                Ok(())
            } else {
                Err(CliError::config(
                    "drift_params",
                    format!("expected {k} values, got {}", p.len()),
                ))
            }
        };
        let kind = self.drift_kind.as_deref().unwrap_or("zero");
        let spec = match kind {
            "zero" => {
                expect(0)?;
                DriftSpec::Zero
            }
            "constant" => {
                expect(1)?;
                DriftSpec::Constant { c: p[0] }
            }
            "affine" => {
                expect(2)?;
                DriftSpec::Affine { a: p[0], b: p[1] }
            }
            "piecewise_linear" => {
                if p.is_empty() || !p.len().is_multiple_of(2) {
                    return Err(CliError::config("drift_params", "expected x,y pairs"));
                }
                DriftSpec::PiecewiseLinear {
                    points: p.chunks(2).map(|c| (c[0], c[1])).collect(),
                }
            }
            other => return Err(CliError::config("drift_kind", format!("unknown kind `{other}`"))),
        };
        Ok(spec)
    }

    pub fn init(&self) -> Result<InitialLaw, CliError> {
        let p = &self.init_params;
        let expect = |k: usize| {
            if p.len() == k {
                Ok(())
            } else {
                Err(CliError::config(
                    "init_params",
                    format!("expected {k} values, got {}", p.len()),
                ))
            }
        };
        let kind = match self.init_kind.as_deref() {
            None => return Err(CliError::config("init_kind", "missing")),
            Some("point_mass") => {
                expect(1)?;
                InitKind::PointMass { x0: p[0] }
            }
            Some("uniform") => {
                expect(2)?;
                InitKind::Uniform { lo: p[0], hi: p[1] }
            }
            Some("truncated_gaussian") => {
                expect(3)?;
                InitKind::TruncatedGaussian {
                    mean: p[0],
                    sd: p[1],
                    hi: p[2],
                }
            }
            Some("points") => InitKind::Points { values: p.clone() },
            Some(other) => return Err(CliError::config("init_kind", format!("unknown kind `{other}`"))),
        };
        Ok(InitialLaw::new(kind, required(self.epsilon0, "epsilon0")?)?)
    }

    pub fn sim_config(&self, seed: u64) -> Result<SimConfig, CliError> {
        let mut cfg = SimConfig::new(
            required(self.n, "n")?,
            required(self.horizon, "horizon")?,
            required(self.dt, "dt")?,
            required(self.alpha, "alpha")?,
            self.drift()?,
            self.init()?,
        );
        cfg.seed = seed;
        if let Some(v) = self.noise_scale {
            cfg.noise_scale = v;
        }
        if let Some(v) = self.record_trajectories {
            cfg.record_trajectories = v;
        }
        if let Some(v) = self.record_cap {
            cfg.record_cap = v;
        }
        if let Some(v) = self.capture_fraction {
            cfg.capture_fraction = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn delayed_config(&self, seed: u64) -> Result<DelayedConfig, CliError> {
        let cfg = DelayedConfig {
            delta: required(self.delta, "delta")?,
            replicas: required(self.replicas, "replicas")?,
            horizon: required(self.horizon, "horizon")?,
            dt: required(self.dt, "dt")?,
            alpha: required(self.alpha, "alpha")?,
            drift: self.drift()?,
            init: self.init()?,
            noise_scale: self.noise_scale.unwrap_or(1.0),
            seed,
            record_replicas: self.record_replicas.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn seeds(&self, cli: &Option<Vec<u64>>) -> Vec<u64> {
        match cli {
            Some(s) => s.clone(),
            None => vec![self.seed.unwrap_or(0)],
        }
    }
}
