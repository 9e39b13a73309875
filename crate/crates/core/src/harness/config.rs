use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerConfig, ControllerKind, MpcController};
use crate::error::{Error, Result};
use crate::sampler::InitMode;
use crate::scenarios::DEFAULT_SPACING;

/// Patch applied on top of a controller's defaults. `sweeps` sets Gibbs
/// sweeps for the Ising controller and rollout count for the Gaussian ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControllerOverrides {
    pub sweeps: Option<usize>,
    pub iters: Option<usize>,
    pub lambda: Option<f64>,
    pub horizon: Option<usize>,
    pub dt: Option<f64>,
    pub bits: Option<usize>,
    pub k_speed: Option<f64>,
    pub k_steer: Option<f64>,
    pub sigma: Option<[f64; 2]>,
    pub warm_start: Option<bool>,
    pub gibbs_init: Option<InitMode>,
    pub burn_in: Option<usize>,
}

impl ControllerOverrides {
    pub fn apply(&self, cfg: &mut ControllerConfig) {
        let (mpc, iterations, samples, lambda, warm_start) = match cfg {
            ControllerConfig::Ising(c) => {
                if let Some(b) = self.bits {
                    c.bits = b;
                }
                if let Some(k) = self.k_speed {
                    c.magnitudes[0] = k;
                }
                if let Some(k) = self.k_steer {
                    c.magnitudes[1] = k;
                }
                if let Some(init) = self.gibbs_init {
                    c.init = init;
                }
                if let Some(b) = self.burn_in {
                    c.burn_in = b;
                }
                (
                    &mut c.mpc,
                    &mut c.iterations,
                    &mut c.sweeps,
                    &mut c.lambda,
                    &mut c.warm_start,
                )
            }
            ControllerConfig::Linear(c) => {
                if let Some(s) = self.sigma {
                    c.sigma = s;
                }
                (
                    &mut c.mpc,
                    &mut c.iterations,
                    &mut c.samples,
                    &mut c.lambda,
                    &mut c.warm_start,
                )
            }
            ControllerConfig::Reference(c) => {
                if let Some(s) = self.sigma {
                    c.sigma = s;
                }
                (
                    &mut c.mpc,
                    &mut c.iterations,
                    &mut c.samples,
                    &mut c.lambda,
                    &mut c.warm_start,
                )
            }
        };
        if let Some(v) = self.horizon {
            mpc.horizon = v;
        }
        if let Some(v) = self.dt {
            mpc.dt = v;
        }
        if let Some(v) = self.iters {
            *iterations = v;
        }
        if let Some(v) = self.sweeps {
            *samples = v;
        }
        if let Some(v) = self.lambda {
            *lambda = v;
        }
        if let Some(v) = self.warm_start {
            *warm_start = v;
        }
    }
}

/// Flat key-value experiment description; loadable from a TOML file and
/// overridable from the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Empty selects the command's default set.
    pub controllers: Vec<ControllerKind>,
    pub n_traj: usize,
    pub n_seeds: usize,
    pub seed0: u64,
    /// Reference arc-length spacing.
    pub spacing: f64,
    pub sweep_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub sweeps: Option<usize>,
    pub iters: Option<usize>,
    pub lambda: Option<f64>,
    pub horizon: Option<usize>,
    pub dt: Option<f64>,
    pub bits: Option<usize>,
    pub k_speed: Option<f64>,
    pub k_steer: Option<f64>,
    pub sigma: Option<[f64; 2]>,
    pub warm_start: Option<bool>,
    pub gibbs_init: Option<InitMode>,
    pub burn_in: Option<usize>,
    pub output_dir: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    pub jobs: usize,
    /// Record wall-clock times in outputs (makes them non-reproducible).
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            controllers: Vec::new(),
            n_traj: 50,
            n_seeds: 10,
            seed0: 0,
            spacing: DEFAULT_SPACING,
            sweep_grid: vec![10, 20, 50, 100, 200, 500, 1000],
            m_grid: vec![1, 2, 3, 4],
            sweeps: None,
            iters: None,
            lambda: None,
            horizon: None,
            dt: None,
            bits: None,
            k_speed: None,
            k_steer: None,
            sigma: None,
            warm_start: None,
            gibbs_init: None,
            burn_in: None,
            output_dir: None,
            jobs: 0,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn overrides(&self) -> ControllerOverrides {
        ControllerOverrides {
            sweeps: self.sweeps,
            iters: self.iters,
            lambda: self.lambda,
            horizon: self.horizon,
            dt: self.dt,
            bits: self.bits,
            k_speed: self.k_speed,
            k_steer: self.k_steer,
            sigma: self.sigma,
            warm_start: self.warm_start,
            gibbs_init: self.gibbs_init,
            burn_in: self.burn_in,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 || self.n_seeds == 0 {
            return Err(Error::InvalidConfig(
                "n_traj and n_seeds must be at least 1".into(),
            ));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "spacing must be positive, got {}",
                self.spacing
            )));
        }
        Ok(())
    }

    pub fn controllers_or(&self, default: &[ControllerKind]) -> Vec<ControllerKind> {
        if self.controllers.is_empty() {
            default.to_vec()
        } else {
            self.controllers.clone()
        }
    }

    /// Defaults for `kind` with this config's overrides applied.
    pub fn controller(&self, kind: ControllerKind) -> Result<ControllerConfig> {
        let mut c = ControllerConfig::default_for(kind);
        self.overrides().apply(&mut c);
        c.validate()?;
        Ok(c)
    }

    pub(crate) fn echo_json(&self, kinds: &[ControllerKind]) -> Result<Vec<u8>> {
        let controllers = kinds
            .iter()
            .map(|&k| self.controller(k))
            .collect::<Result<Vec<_>>>()?;
        let echo = serde_json::json!({
            "experiment": self,
            "controllers": controllers,
            "metric": "mean squared (px, py) error of realized vs reference states, heading excluded",
            "trial_seed": "splitmix64 mix of (traj_seed, sample_seed, controller tag)",
        });
        let mut bytes = serde_json::to_vec_pretty(&echo)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}
