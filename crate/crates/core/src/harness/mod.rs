//! Experiment runner: tracking-error tables, sample-count sweeps and
//! scenario corpora, with per-trial seeding that is independent of
//! scheduling order.

mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{run_closed_loop, ControllerConfig, ControllerKind, TrialResult};
use crate::error::{Error, Result};
use crate::rng::mix_seeds;
use crate::scenarios::{generate_scenario, ReferenceTrajectory};

pub use config::{ControllerOverrides, ExperimentConfig};
pub use output::{write_sweep_csv, write_table_csv, TrialRecord};

/// Seed of the sampling stream for one trial.
pub fn trial_seed(traj_seed: u64, sample_seed: u64, kind: ControllerKind) -> u64 {
    mix_seeds(&[traj_seed, sample_seed, kind.seed_tag()])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub controller: ControllerKind,
    #[serde(rename = "M")]
    pub iterations: usize,
    #[serde(rename = "S")]
    pub samples: usize,
    pub mean_mse: f64,
    pub std_mse: f64,
    pub n_ok: usize,
    pub n_diverged: usize,
    pub mean_wall_time: Option<f64>,
}

/// One scheduled closed-loop run.
#[derive(Clone, Debug)]
pub struct TrialSpec {
    pub traj_seed: u64,
    pub sample_seed: u64,
    pub controller: ControllerConfig,
}

impl TrialSpec {
    pub fn seed(&self) -> u64 {
        trial_seed(self.traj_seed, self.sample_seed, self.controller.kind())
    }
}

/// Mean and population standard deviation over the non-diverged trials.
pub fn aggregate<'a, I>(controller: &ControllerConfig, trials: I, timing: bool) -> AggregateRow
where
    I: IntoIterator<Item = &'a TrialResult>,
{
    let mut ok = Vec::new();
    let mut diverged = 0;
    let mut wall = Vec::new();
    for t in trials {
        if t.is_ok() {
            ok.push(t.mse);
        } else {
            diverged += 1;
        }
        wall.push(t.per_step.iter().map(|s| s.wall_time).sum::<f64>());
    }
    let n = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / n;
    let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    AggregateRow {
        controller: controller.kind(),
        iterations: controller.iterations(),
        samples: controller.samples(),
        mean_mse: mean,
        std_mse: var.sqrt(),
        n_ok: ok.len(),
        n_diverged: diverged,
        mean_wall_time: timing.then(|| wall.iter().sum::<f64>() / wall.len() as f64),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Runs trials on a worker pool; results come back in `specs` order.
pub fn run_trials(
    specs: &[TrialSpec],
    scenarios: &[(u64, ReferenceTrajectory)],
    jobs: usize,
) -> Result<Vec<TrialResult>> {
    let lookup = |seed: u64| {
        scenarios
            .iter()
            .find(|(s, _)| *s == seed)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::InvalidConfig(format!("no scenario for seed {seed}")))
    };
    pool(jobs)?.install(|| {
        specs
            .par_iter()
            .map(|spec| run_closed_loop(lookup(spec.traj_seed)?, &spec.controller, spec.seed()))
            .collect()
    })
}

fn corpus(cfg: &ExperimentConfig) -> Result<Vec<(u64, ReferenceTrajectory)>> {
    (0..cfg.n_traj as u64)
        .map(|k| {
            let seed = cfg.seed0 + k;
            Ok((seed, generate_scenario(seed, cfg.spacing)?))
        })
        .collect()
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Tracking-error table: every controller on `n_traj` scenarios times
/// `n_seeds` sampling seeds.
pub fn run_table(cfg: &ExperimentConfig) -> Result<Vec<AggregateRow>> {
    cfg.validate()?;
    let scenarios = corpus(cfg)?;
    let kinds = cfg.controllers_or(&ControllerKind::ALL);
    let mut rows = Vec::new();
    let mut records = Vec::new();

    for &kind in &kinds {
        let controller = cfg.controller(kind)?;
        let specs: Vec<TrialSpec> = scenarios
            .iter()
            .flat_map(|(traj_seed, _)| {
                (0..cfg.n_seeds as u64).map(|sample_seed| TrialSpec {
                    traj_seed: *traj_seed,
                    sample_seed,
                    controller: controller.clone(),
                })
            })
            .collect();
        let trials = run_trials(&specs, &scenarios, cfg.jobs)?;
        rows.push(aggregate(&controller, &trials, cfg.timing));
        if cfg.output_dir.is_some() {
            for (spec, trial) in specs.iter().zip(&trials) {
                records.push(TrialRecord::new(spec, trial, cfg));
            }
        }
    }

    if let Some(dir) = &cfg.output_dir {
        let trial_dir = dir.join("trials");
        create_dir(&trial_dir)?;
        for rec in &records {
            write_file(&trial_dir.join(rec.file_name()), &rec.to_json()?)?;
        }
        let mut csv = Vec::new();
        write_table_csv(&mut csv, &rows).map_err(|e| Error::io(dir.join("table.csv"), e))?;
        write_file(&dir.join("table.csv"), &csv)?;
        write_file(&dir.join("config.json"), &cfg.echo_json(&kinds)?)?;
    }
    Ok(rows)
}

/// Sample-count sweep on one pinned scenario (the first of the corpus) over
/// `m_grid x sweep_grid`, `n_seeds` repeats per cell.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<AggregateRow>> {
    cfg.validate()?;
    if cfg.sweep_grid.is_empty() || cfg.m_grid.is_empty() {
        return Err(Error::InvalidConfig(
            "sweep needs nonempty M and S grids".into(),
        ));
    }
    let kinds = cfg.controllers_or(&[ControllerKind::Ising, ControllerKind::Linear]);
    if kinds.contains(&ControllerKind::Reference) {
        return Err(Error::InvalidConfig(
            "the sweep supports only the ising and linear controllers".into(),
        ));
    }
    let scenario = vec![(cfg.seed0, generate_scenario(cfg.seed0, cfg.spacing)?)];

    let mut cells = Vec::new();
    let mut specs = Vec::new();
    for &kind in &kinds {
        for &m in &cfg.m_grid {
            for &s in &cfg.sweep_grid {
                let mut controller = cfg.controller(kind)?;
                ControllerOverrides {
                    iters: Some(m),
                    sweeps: Some(s),
                    ..Default::default()
                }
                .apply(&mut controller);
                for sample_seed in 0..cfg.n_seeds as u64 {
                    specs.push(TrialSpec {
                        traj_seed: cfg.seed0,
                        sample_seed,
                        controller: controller.clone(),
                    });
                }
                cells.push(controller);
            }
        }
    }
    let trials = run_trials(&specs, &scenario, cfg.jobs)?;
    let rows: Vec<AggregateRow> = cells
        .iter()
        .zip(trials.chunks(cfg.n_seeds))
        .map(|(c, chunk)| aggregate(c, chunk, cfg.timing))
        .collect();

    if let Some(dir) = &cfg.output_dir {
        create_dir(dir)?;
        let mut csv = Vec::new();
        write_sweep_csv(&mut csv, &rows).map_err(|e| Error::io(dir.join("sweep.csv"), e))?;
        write_file(&dir.join("sweep.csv"), &csv)?;
        write_file(&dir.join("config.json"), &cfg.echo_json(&kinds)?)?;
    }
    Ok(rows)
}

/// Writes `traj_<seed>.csv` for seeds `seed0 .. seed0 + n`.
pub fn gen_trajectories(n: usize, seed0: u64, spacing: f64, out: &Path) -> Result<Vec<PathBuf>> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one trajectory".into()));
    }
    create_dir(out)?;
    (0..n as u64)
        .map(|k| {
            let seed = seed0 + k;
            let traj = generate_scenario(seed, spacing)?;
            let mut buf = Vec::new();
            traj.write_csv(&mut buf).map_err(|e| Error::io(out, e))?;
            let path = out.join(format!("traj_{seed:04}.csv"));
            write_file(&path, &buf)?;
            Ok(path)
        })
        .collect()
}
