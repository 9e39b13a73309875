use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{validate_sampling, ControlStepResult, MpcController, MpcSettings};
use crate::dynamics::{linearize_along, Control, State};
use crate::error::{Error, Result};
use crate::qubo::{
    assemble_qubo, build_expansion, build_horizon, stack_controls, stack_states, unstack_controls,
    ExpansionMatrix, QuboProblem,
};
use crate::rng::SplitMix64;
use crate::sampler::{gibbs_sample, GibbsConfig, InitMode, ScanOrder};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingMppiConfig {
    pub mpc: MpcSettings,
    /// Outer relinearize-and-sample iterations.
    pub iterations: usize,
    /// Gibbs sweeps per iteration; one sample per sweep.
    pub sweeps: usize,
    pub lambda: f64,
    pub bits: usize,
    /// Expansion magnitude per input: (acceleration, steering rate).
    pub magnitudes: [f64; 2],
    pub burn_in: usize,
    pub init: InitMode,
    pub scan: ScanOrder,
    pub warm_start: bool,
}

impl Default for IsingMppiConfig {
    fn default() -> Self {
        Self {
            mpc: MpcSettings::default(),
            iterations: 4,
            sweeps: 200,
            lambda: 0.1,
            bits: 5,
            magnitudes: [15.0, 2.2],
            burn_in: 0,
            init: InitMode::Zeros,
            scan: ScanOrder::Cyclic,
            warm_start: false,
        }
    }
}

impl IsingMppiConfig {
    pub fn expansion(&self) -> Result<ExpansionMatrix> {
        build_expansion(self.bits, &self.magnitudes, self.mpc.horizon)
    }

    fn gibbs(&self, seed: u64) -> GibbsConfig {
        GibbsConfig {
            sweeps: self.sweeps,
            lambda: self.lambda,
            seed,
            init: self.init,
            burn_in: self.burn_in,
            scan: self.scan,
        }
    }
}

impl MpcController for IsingMppiConfig {
    fn settings(&self) -> &MpcSettings {
        &self.mpc
    }

    fn warm_start(&self) -> bool {
        self.warm_start
    }

    fn validate(&self) -> Result<()> {
        self.mpc.validate()?;
        validate_sampling(self.iterations, self.sweeps, self.lambda)?;
        self.expansion().map(|_| ())
    }

    fn step(
        &self,
        x0: &State,
        window: &[State],
        nominal: Option<&[Control]>,
        rng: &mut SplitMix64,
    ) -> Result<ControlStepResult> {
        ising_mppi_step_with(x0, window, nominal, self, rng, |q, seed| {
            Ok(gibbs_sample(q, &self.gibbs(seed))?.rounded)
        })
    }
}

/// Symmetrized QUBO for one outer iteration around the nominal `ubar`.
pub fn build_step_qubo(
    x0: &State,
    window: &[State],
    ubar: &[Control],
    cfg: &IsingMppiConfig,
    expansion: &ExpansionMatrix,
) -> Result<QuboProblem> {
    let mpc = &cfg.mpc;
    let steps = linearize_along(x0, ubar, mpc.dt, &mpc.params)?;
    let hm = build_horizon(&steps, mpc.dt)?;
    let q = assemble_qubo(
        &hm,
        expansion,
        &mpc.weights,
        x0,
        &stack_controls(ubar),
        &stack_states(window),
    )?;
    Ok(q.symmetrize().with_lambda(cfg.lambda))
}

pub fn ising_mppi_step(
    x0: &State,
    window: &[State],
    cfg: &IsingMppiConfig,
    rng: &mut SplitMix64,
) -> Result<ControlStepResult> {
    cfg.step(x0, window, None, rng)
}

/// Outer loop with a pluggable binary solver `solve(qubo, seed) -> a`.
pub fn ising_mppi_step_with<F>(
    x0: &State,
    window: &[State],
    nominal: Option<&[Control]>,
    cfg: &IsingMppiConfig,
    rng: &mut SplitMix64,
    mut solve: F,
) -> Result<ControlStepResult>
where
    F: FnMut(&QuboProblem, u64) -> Result<Vec<u8>>,
{
    let start = Instant::now();
    cfg.mpc.check_window(window)?;
    let expansion = cfg.expansion()?;
    let mut ubar = cfg.mpc.initial_nominal(nominal)?;
    let mut energies = Vec::with_capacity(cfg.iterations);

    for _ in 0..cfg.iterations {
        let q = build_step_qubo(x0, window, &ubar, cfg, &expansion)?;
        let a = solve(&q, rng.next_word())?;
        energies.push(q.energy(&a)?);
        let du = unstack_controls(&expansion.decode(&a)?);
        for (u, d) in ubar.iter_mut().zip(du) {
            u.accel += d.accel;
            u.steer_rate += d.steer_rate;
        }
        if !ubar.iter().all(Control::is_finite) {
            return Err(Error::Divergence("non-finite nominal controls".into()));
        }
    }

    Ok(ControlStepResult {
        u0: ubar[0],
        ubar,
        per_iteration_energy: energies,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
