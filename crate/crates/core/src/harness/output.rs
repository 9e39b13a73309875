use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{AggregateRow, ExperimentConfig, TrialSpec};
use crate::controllers::{ControllerConfig, ControllerKind, TrialResult};
use crate::error::Result;

/// Per-trial forensic record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub controller: ControllerKind,
    pub traj_seed: u64,
    pub sample_seed: u64,
    pub trial_seed: u64,
    pub spacing: f64,
    pub config: ControllerConfig,
    /// `None` when the trial diverged.
    pub mse: Option<f64>,
    pub diverged: Option<String>,
    pub steps: usize,
    pub u0: Vec<[f64; 2]>,
    pub realized: Vec<[f64; 2]>,
    pub reference: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time: Option<Vec<f64>>,
}

impl TrialRecord {
    pub fn new(spec: &TrialSpec, trial: &TrialResult, cfg: &ExperimentConfig) -> Self {
        Self {
            controller: spec.controller.kind(),
            traj_seed: spec.traj_seed,
            sample_seed: spec.sample_seed,
            trial_seed: spec.seed(),
            spacing: cfg.spacing,
            config: spec.controller.clone(),
            mse: trial.is_ok().then_some(trial.mse),
            diverged: trial.diverged.clone(),
            steps: trial.steps(),
            u0: trial
                .per_step
                .iter()
                .map(|s| [s.u0.accel, s.u0.steer_rate])
                .collect(),
            realized: trial.realized.iter().map(|s| s.position()).collect(),
            reference: trial.reference.iter().map(|s| s.position()).collect(),
            wall_time: cfg
                .timing
                .then(|| trial.per_step.iter().map(|s| s.wall_time).collect()),
        }
    }

    pub fn file_name(&self) -> String {
        format!(
            "{}_t{:04}_s{:03}.json",
            self.controller, self.traj_seed, self.sample_seed
        )
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

/// `controller,M,S,mean_mse,std_mse,n_ok,n_diverged,mean_wall_time`; the
/// last column is empty unless timing was enabled.
pub fn write_table_csv<W: Write>(mut w: W, rows: &[AggregateRow]) -> io::Result<()> {
    writeln!(
        w,
        "controller,M,S,mean_mse,std_mse,n_ok,n_diverged,mean_wall_time"
    )?;
    for r in rows {
        let wall = r.mean_wall_time.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.controller,
            r.iterations,
            r.samples,
            r.mean_mse,
            r.std_mse,
            r.n_ok,
            r.n_diverged,
            wall
        )?;
    }
    Ok(())
}

/// `controller,M,S,mean_mse,std_mse`
pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[AggregateRow]) -> io::Result<()> {
    writeln!(w, "controller,M,S,mean_mse,std_mse")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.controller, r.iterations, r.samples, r.mean_mse, r.std_mse
        )?;
    }
    Ok(())
}
