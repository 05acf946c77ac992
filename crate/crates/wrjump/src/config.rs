//! JSON run configuration for the command-line pipelines.
//!
//! One config file carries the model, the grid, and one block per task;
//! a subcommand picks its block. The schema is strict: unknown keys and
//! invalid values are rejected at parse time with the JSON path of the
//! offending key, before any output is written.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Field, GridSpec};
use crate::kinetic::{DensityPair, KineticRunConfig, ModelParams};
use crate::mesoscale::MesoRunConfig;
use crate::seeds::stream_rng;

/// Top-level config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinetic: Option<KineticTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<StationaryTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meso: Option<MesoTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsTask>,
}

impl RunConfig {
    pub fn grid_required(&self) -> Result<GridSpec> {
        self.grid
            .ok_or_else(|| Error::InvalidConfig("this task requires a `grid` block".into()))
    }
}

/// Parse and validate a config file; errors carry the JSON path.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| Error::InvalidConfig(format!("{} (at `{}`)", e.inner(), e.path())))
}

/// Initial density fields, built on the run grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDensity {
    /// flat profiles
    Constant { values: [f64; 2] },
    /// `base_i + amplitude_i cos(2 pi mode x / L)` along the first axis
    CosineMode {
        base: [f64; 2],
        amplitude: [f64; 2],
        mode: usize,
    },
    /// random superposition of low modes, nonnegative by construction
    RandomSmooth {
        base: [f64; 2],
        amplitude: f64,
        modes: usize,
        seed: u64,
    },
}

impl InitialDensity {
    pub fn build(&self, grid: GridSpec) -> Result<DensityPair> {
        let l = grid.box_length();
        match *self {
            InitialDensity::Constant { values } => {
                if values[0] < 0.0 || values[1] < 0.0 {
                    return Err(Error::InvalidConfig("negative constant density".into()));
                }
                Ok(DensityPair::constant(grid, values[0], values[1]))
            }
            InitialDensity::CosineMode {
                base,
                amplitude,
                mode,
            } => {
                for i in 0..2 {
                    if base[i] < amplitude[i].abs() {
                        return Err(Error::InvalidConfig(
                            "cosine amplitude larger than base; density would go negative".into(),
                        ));
                    }
                }
                let p = std::f64::consts::TAU * mode as f64 / l;
                let make = |b: f64, a: f64| Field::from_fn(grid, move |x| b + a * (p * x[0]).cos());
                DensityPair::new(make(base[0], amplitude[0]), make(base[1], amplitude[1]))
            }
            InitialDensity::RandomSmooth {
                base,
                amplitude,
                modes,
                seed,
            } => {
                if base[0] < amplitude || base[1] < amplitude || amplitude < 0.0 {
                    return Err(Error::InvalidConfig(
                        "random_smooth requires 0 <= amplitude <= min(base)".into(),
                    ));
                }
                let modes = modes.max(1);
                let mut rng = stream_rng(seed, &[77]);
                let mut fields = [Field::zeros(grid), Field::zeros(grid)];
                for (i, field) in fields.iter_mut().enumerate() {
                    // coefficients scaled so the total excursion is `amplitude`
                    let raw: Vec<(f64, f64)> = (0..modes)
                        .map(|_| {
                            (
                                rng.gen_range(-1.0..1.0),
                                rng.gen_range(0.0..std::f64::consts::TAU),
                            )
                        })
                        .collect();
                    let norm: f64 = raw.iter().map(|(c, _)| c.abs()).sum::<f64>().max(1e-12);
                    let coeffs: Vec<(f64, f64)> = raw
                        .iter()
                        .map(|&(c, th)| (amplitude * c / norm, th))
                        .collect();
                    *field = Field::from_fn(grid, |x| {
                        let mut v = base[i];
                        for (k, &(c, th)) in coeffs.iter().enumerate() {
                            let p = std::f64::consts::TAU * (k + 1) as f64 / l;
                            v += c * (p * x[0] + th).cos();
                        }
                        v
                    });
                }
                let [f0, f1] = fields;
                DensityPair::new(f0, f1)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticTask {
    pub initial: InitialDensity,
    pub run: KineticRunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateTask {
    pub intensities: [f64; 2],
    pub t_end: f64,
    pub snapshot_every: f64,
    #[serde(default = "one")]
    pub replicas: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryTask {
    pub ctilde: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityTask {
    pub c: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    #[serde(default = "default_scan_points")]
    pub points: usize,
}

fn default_scan_points() -> usize {
    512
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MesoTask {
    pub initial: InitialDensity,
    pub run: MesoRunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsTask {
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_dd: Option<f64>,
    /// override `max_i alpha_i` from the model
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// override `max_i <phi_i>` from the model
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

/// Everything a pipeline needs besides its task block.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub model: ModelParams,
    pub grid: Option<GridSpec>,
    pub seed: u64,
}
