//! Experiment configuration: JSON schema and resolution into runtime values.
//!
//! Parsing is strict — unknown keys are rejected everywhere so a typo cannot
//! silently change an experiment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freeu::FreeUParams;
use crate::grid::{custom_stop_grid, improved_grid, karras_grid, uniform_sigma_grid, TimeGrid};
use crate::models::{DenoiserModel, ModelSpec};
use crate::solvers::SolverKind;
use crate::vp::NoiseScheduleParams;

/// VP process constants; either a time range or a σ range pins the endpoints.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    #[serde(default = "default_beta_min")]
    pub beta_min: f64,
    #[serde(default = "default_beta_max")]
    pub beta_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_max: Option<f64>,
}

fn default_beta_min() -> f64 {
    0.1
}

fn default_beta_max() -> f64 {
    20.0
}

impl Default for ProcessSpec {
    fn default() -> Self {
        ProcessSpec {
            beta_min: default_beta_min(),
            beta_max: default_beta_max(),
            t_min: None,
            t_max: None,
            sigma_min: None,
            sigma_max: None,
        }
    }
}

impl ProcessSpec {
    pub fn resolve(&self) -> Result<NoiseScheduleParams> {
        match (self.t_min, self.t_max, self.sigma_min, self.sigma_max) {
            (None, None, Some(smin), Some(smax)) => {
                NoiseScheduleParams::from_sigma_range(self.beta_min, self.beta_max, smin, smax)
            }
            (t_min, t_max, None, None) => NoiseScheduleParams::new(
                self.beta_min,
                self.beta_max,
                t_min.unwrap_or(1e-3),
                t_max.unwrap_or(1.0),
            ),
            _ => Err(Error::Config(
                "give either a (t_min, t_max) range or a (sigma_min, sigma_max) range, not a mix"
                    .to_string(),
            )),
        }
    }
}

/// Schedule selection. `n` is the node count; the remaining knobs depend on
/// the kind.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    #[serde(alias = "uniform")]
    UniformSigma { n: usize },
    Karras {
        n: usize,
        #[serde(default = "default_karras_p")]
        p: f64,
    },
    Improved {
        n: usize,
        #[serde(default = "default_improved_p")]
        p: f64,
    },
    #[serde(alias = "custom")]
    CustomStop {
        n: usize,
        #[serde(default = "default_karras_p")]
        p1: f64,
        #[serde(default = "default_improved_p")]
        p2: f64,
        stop: u64,
    },
}

fn default_karras_p() -> f64 {
    7.0
}

fn default_improved_p() -> f64 {
    1.2
}

impl ScheduleSpec {
    pub fn build(&self, sched: &NoiseScheduleParams) -> Result<TimeGrid> {
        match *self {
            ScheduleSpec::UniformSigma { n } => uniform_sigma_grid(n, sched.sigma_max, sched),
            ScheduleSpec::Karras { n, p } => {
                karras_grid(n, p, sched.sigma_min, sched.sigma_max, sched)
            }
            ScheduleSpec::Improved { n, p } => improved_grid(n, p, sched.t_min, sched.t_max, sched),
            ScheduleSpec::CustomStop { n, p1, p2, stop } => {
                custom_stop_grid(n, p1, p2, stop, sched)
            }
        }
    }

    /// Parses a CLI `--kind` name with the defaults for that kind.
    pub fn from_kind_name(
        kind: &str,
        n: usize,
        p: Option<f64>,
        p1: Option<f64>,
        p2: Option<f64>,
        stop: Option<u64>,
    ) -> Result<Self> {
        match kind {
            "uniform" | "uniform_sigma" => Ok(ScheduleSpec::UniformSigma { n }),
            "karras" => Ok(ScheduleSpec::Karras {
                n,
                p: p.unwrap_or_else(default_karras_p),
            }),
            "improved" => Ok(ScheduleSpec::Improved {
                n,
                p: p.unwrap_or_else(default_improved_p),
            }),
            "custom" | "custom_stop" => Ok(ScheduleSpec::CustomStop {
                n,
                p1: p1.or(p).unwrap_or_else(default_karras_p),
                p2: p2.unwrap_or_else(default_improved_p),
                stop: stop.ok_or_else(|| {
                    Error::Config("custom schedule needs --stop".to_string())
                })?,
            }),
            other => Err(Error::Config(format!(
                "unknown schedule kind '{other}' (expected uniform|karras|improved|custom)"
            ))),
        }
    }
}

/// Model source: inline spec or a path to a spec file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Path {
        path: std::path::PathBuf,
    },
    Inline(ModelSpec),
}

impl ModelSource {
    pub fn build(&self) -> Result<Box<dyn DenoiserModel>> {
        match self {
            ModelSource::Path { path } => ModelSpec::from_path(path)?.build(),
            ModelSource::Inline(spec) => spec.build(),
        }
    }
}

/// The `sample` subcommand's configuration document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub process: ProcessSpec,
    pub solver: SolverKind,
    pub model: ModelSource,
    #[serde(default = "default_w")]
    pub w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeu: Option<FreeUParams>,
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_w() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
