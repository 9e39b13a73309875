use std::time::Instant;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    boltzmann_weights, validate_sampling, validate_sigma, ControlStepResult, MpcController,
    MpcSettings,
};
use crate::dynamics::{linearize_along, Control, State, CONTROL_DIM};
use crate::error::{Error, Result};
use crate::qubo::{
    assemble_linear_cost, build_horizon, stack_controls, stack_states, unstack_controls,
};
use crate::rng::SplitMix64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearMppiConfig {
    pub mpc: MpcSettings,
    pub iterations: usize,
    /// Gaussian perturbations per iteration.
    pub samples: usize,
    pub lambda: f64,
    /// Per-input standard deviation: (acceleration, steering rate).
    pub sigma: [f64; 2],
    pub warm_start: bool,
}

impl Default for LinearMppiConfig {
    fn default() -> Self {
        Self {
            mpc: MpcSettings::default(),
            iterations: 4,
            samples: 1000,
            lambda: 0.1,
            sigma: [1.5, 0.3],
            warm_start: false,
        }
    }
}

impl MpcController for LinearMppiConfig {
    fn settings(&self) -> &MpcSettings {
        &self.mpc
    }

    fn warm_start(&self) -> bool {
        self.warm_start
    }

    fn validate(&self) -> Result<()> {
        self.mpc.validate()?;
        validate_sampling(self.iterations, self.samples, self.lambda)?;
        validate_sigma(&self.sigma)
    }

    fn step(
        &self,
        x0: &State,
        window: &[State],
        nominal: Option<&[Control]>,
        rng: &mut SplitMix64,
    ) -> Result<ControlStepResult> {
        let start = Instant::now();
        let mpc = &self.mpc;
        mpc.check_window(window)?;
        let xref = stack_states(window);
        let mut ubar = stack_controls(&mpc.initial_nominal(nominal)?);
        let dim = ubar.len();
        let mut energies = Vec::with_capacity(self.iterations);

        for _ in 0..self.iterations {
            let steps = linearize_along(x0, &unstack_controls(&ubar), mpc.dt, &mpc.params)?;
            let hm = build_horizon(&steps, mpc.dt)?;
            let cost = assemble_linear_cost(&hm, &mpc.weights, x0, &ubar, &xref)?;

            let eps: Vec<DVector<f64>> = (0..self.samples)
                .map(|_| {
                    DVector::from_fn(dim, |k, _| {
                        let z: f64 = StandardNormal.sample(rng);
                        self.sigma[k % CONTROL_DIM] * z
                    })
                })
                .collect();
            let costs: Vec<f64> = eps.iter().map(|e| cost.energy(e)).collect();
            let weights = boltzmann_weights(&costs, self.lambda)?;
            let update = eps
                .iter()
                .zip(&weights)
                .fold(DVector::zeros(dim), |acc, (e, w)| acc + e * *w);
            energies.push(cost.energy(&update));
            ubar += update;
            if !ubar.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence("non-finite nominal controls".into()));
            }
        }

        let ubar = unstack_controls(&ubar);
        Ok(ControlStepResult {
            u0: ubar[0],
            ubar,
            per_iteration_energy: energies,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }
}

pub fn non_ising_linear_mppi_step(
    x0: &State,
    window: &[State],
    cfg: &LinearMppiConfig,
    rng: &mut SplitMix64,
) -> Result<ControlStepResult> {
    cfg.step(x0, window, None, rng)
}
