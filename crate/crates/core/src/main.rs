use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ising_mppi::controllers::ising::build_step_qubo;
use ising_mppi::controllers::{run_closed_loop, ControllerConfig, ControllerKind};
use ising_mppi::harness::{
    self, write_sweep_csv, write_table_csv, ExperimentConfig, TrialRecord, TrialSpec,
};
use ising_mppi::sampler::InitMode;
use ising_mppi::scenarios::generate_scenario;
use ising_mppi::{Error, Result};

#[derive(Parser)]
#[command(name = "ising-mppi", version, about = "Ising-machine MPPI experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write reference trajectories as `idx,px,py,theta` CSV files.
    GenTrajectories(Common),
    /// Tracking-error table over a scenario corpus.
    RunTable(Common),
    /// MSE versus samples and iterations on one scenario.
    RunSweep(Common),
    /// One closed-loop trial with per-step diagnostics.
    RunTrial(Common),
    /// QUBO instance file for the first control step of a scenario.
    DumpQubo(Common),
}

#[derive(Args)]
struct Common {
    /// TOML file with experiment keys; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    controller: Vec<ControllerKind>,
    #[arg(long = "n-traj")]
    n_traj: Option<usize>,
    #[arg(long = "n-seeds")]
    n_seeds: Option<usize>,
    /// S: Gibbs sweeps or rollouts per iteration. A comma list gives the sweep grid.
    #[arg(long, value_delimiter = ',')]
    sweeps: Vec<usize>,
    /// M: outer iterations. A comma list gives the sweep grid.
    #[arg(long, value_delimiter = ',')]
    iters: Vec<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    bits: Option<usize>,
    #[arg(long = "k-speed")]
    k_speed: Option<f64>,
    #[arg(long = "k-steer")]
    k_steer: Option<f64>,
    /// Gaussian noise std per input, `accel,steer_rate`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    sigma: Vec<f64>,
    /// Reference point spacing along the path.
    #[arg(long)]
    spacing: Option<f64>,
    /// Gibbs chain start: `zeros` or `random`.
    #[arg(long = "gibbs-init", value_parser = parse_init)]
    gibbs_init: Option<InitMode>,
    #[arg(long = "burn-in")]
    burn_in: Option<usize>,
    #[arg(long = "warm-start")]
    warm_start: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed0: Option<u64>,
    /// Sampling seed for run-trial.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    jobs: Option<usize>,
    /// Include wall-clock times in outputs.
    #[arg(long)]
    timing: bool,
}

impl Common {
    fn experiment(&self, grids: bool) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if !self.controller.is_empty() {
            cfg.controllers = self.controller.clone();
        }
        let single = |name: &str, v: &[usize]| -> Result<Option<usize>> {
            match v {
                [] => Ok(None),
                [x] => Ok(Some(*x)),
                _ => Err(Error::InvalidConfig(format!(
                    "--{name} takes a single value here"
                ))),
            }
        };
        if grids {
            if !self.sweeps.is_empty() {
                cfg.sweep_grid = self.sweeps.clone();
            }
            if !self.iters.is_empty() {
                cfg.m_grid = self.iters.clone();
            }
        } else {
            if let Some(s) = single("sweeps", &self.sweeps)? {
                cfg.sweeps = Some(s);
            }
            if let Some(m) = single("iters", &self.iters)? {
                cfg.iters = Some(m);
            }
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v.into();
                }
            )*};
        }
        set!(lambda, horizon, dt, bits, k_speed, k_steer);
        if let Some(v) = self.gibbs_init {
            cfg.gibbs_init = Some(v);
        }
        if let Some(v) = self.burn_in {
            cfg.burn_in = Some(v);
        }
        if let Some(v) = self.n_traj {
            cfg.n_traj = v;
        }
        if let Some(v) = self.n_seeds {
            cfg.n_seeds = v;
        }
        if let Some(v) = self.spacing {
            cfg.spacing = v;
        }
        if let Some(v) = self.seed0 {
            cfg.seed0 = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        match self.sigma.as_slice() {
            [] => {}
            [a, w] => cfg.sigma = Some([*a, *w]),
            _ => return Err(Error::InvalidConfig("--sigma expects two values".into())),
        }
        if self.warm_start {
            cfg.warm_start = Some(true);
        }
        if self.timing {
            cfg.timing = true;
        }
        if self.out.is_some() {
            cfg.output_dir = self.out.clone();
        }
        Ok(cfg)
    }
}

fn parse_init(s: &str) -> std::result::Result<InitMode, String> {
    match s {
        "zeros" => Ok(InitMode::Zeros),
        "random" => Ok(InitMode::Random),
        other => Err(format!("unknown init mode {other:?}")),
    }
}

fn single_controller(cfg: &ExperimentConfig) -> Result<ControllerConfig> {
    match cfg.controllers.as_slice() {
        [] => cfg.controller(ControllerKind::Ising),
        [k] => cfg.controller(*k),
        _ => Err(Error::InvalidConfig(
            "select exactly one --controller".into(),
        )),
    }
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenTrajectories(args) => {
            let cfg = args.experiment(false)?;
            let out = cfg
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("trajectories"));
            let files = harness::gen_trajectories(cfg.n_traj, cfg.seed0, cfg.spacing, &out)?;
            println!("wrote {} trajectories to {}", files.len(), out.display());
        }
        Command::RunTable(args) => {
            let cfg = args.experiment(false)?;
            let rows = harness::run_table(&cfg)?;
            write_table_csv(std::io::stdout().lock(), &rows).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })?;
        }
        Command::RunSweep(args) => {
            let cfg = args.experiment(true)?;
            let rows = harness::run_sweep(&cfg)?;
            write_sweep_csv(std::io::stdout().lock(), &rows).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })?;
        }
        Command::RunTrial(args) => {
            let cfg = args.experiment(false)?;
            let controller = single_controller(&cfg)?;
            let scenario = generate_scenario(cfg.seed0, cfg.spacing)?;
            let spec = TrialSpec {
                traj_seed: cfg.seed0,
                sample_seed: args.seed,
                controller,
            };
            let trial = run_closed_loop(&scenario, &spec.controller, spec.seed())?;
            eprintln!("step,px,py,ref_px,ref_py,accel,steer_rate,energies");
            for (k, s) in trial.per_step.iter().enumerate() {
                let x = trial.realized[k + 1];
                let r = trial.reference[k + 1];
                let e: Vec<String> = s
                    .per_iteration_energy
                    .iter()
                    .map(|v| format!("{v:.4}"))
                    .collect();
                eprintln!(
                    "{k},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
                    x.px,
                    x.py,
                    r.px,
                    r.py,
                    s.u0.accel,
                    s.u0.steer_rate,
                    e.join(";")
                );
            }
            match &trial.diverged {
                Some(why) => println!("diverged: {why}"),
                None => println!("mse {}", trial.mse),
            }
            if let Some(dir) = &cfg.output_dir {
                let rec = TrialRecord::new(&spec, &trial, &cfg);
                write_out(&dir.join(rec.file_name()), &rec.to_json()?)?;
            }
        }
        Command::DumpQubo(args) => {
            let cfg = args.experiment(false)?;
            let ising = match cfg.controller(ControllerKind::Ising)? {
                ControllerConfig::Ising(c) => c,
                _ => unreachable!(),
            };
            let scenario = generate_scenario(cfg.seed0, cfg.spacing)?;
            let n = ising.mpc.horizon;
            if scenario.len() <= n {
                return Err(Error::InvalidConfig(
                    "scenario shorter than the horizon".into(),
                ));
            }
            let ubar = vec![Default::default(); n];
            let q = build_step_qubo(
                &scenario.initial_state,
                &scenario.states[1..=n],
                &ubar,
                &ising,
                &ising.expansion()?,
            )?;
            let mut buf = Vec::new();
            q.write_instance(&mut buf)?;
            match &cfg.output_dir {
                Some(dir) => write_out(&dir.join(format!("qubo_{:04}.txt", cfg.seed0)), &buf)?,
                None => print!("{}", String::from_utf8_lossy(&buf)),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
