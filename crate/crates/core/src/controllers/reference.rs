use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    boltzmann_weights, validate_sampling, validate_sigma, ControlStepResult, MpcController,
    MpcSettings,
};
use crate::dynamics::{step_nonlinear, Control, State};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scenarios::wrap_angle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMppiConfig {
    pub mpc: MpcSettings,
    pub iterations: usize,
    /// Nonlinear rollouts per iteration.
    pub samples: usize,
    pub lambda: f64,
    pub sigma: [f64; 2],
    pub warm_start: bool,
}

impl Default for ReferenceMppiConfig {
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

/// Stage cost summed over the horizon; heading error is wrapped. A rollout
/// that leaves the steering domain costs `+inf`.
pub fn rollout_cost(x0: &State, controls: &[Control], window: &[State], mpc: &MpcSettings) -> f64 {
    let (q, r) = (&mpc.weights.q, &mpc.weights.r);
    let mut x = *x0;
    let mut cost = 0.0;
    for (u, target) in controls.iter().zip(window) {
        x = match step_nonlinear(&x, u, mpc.dt, &mpc.params) {
            Ok(next) if next.is_finite() => next,
            _ => return f64::INFINITY,
        };
        let err = [
            x.px - target.px,
            x.py - target.py,
            wrap_angle(x.theta - target.theta),
            x.v - target.v,
            x.delta - target.delta,
        ];
        cost += err.iter().zip(q).map(|(e, w)| w * e * e).sum::<f64>();
        cost += r[0] * u.accel * u.accel + r[1] * u.steer_rate * u.steer_rate;
    }
    cost
}

impl MpcController for ReferenceMppiConfig {
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
        let mut ubar = mpc.initial_nominal(nominal)?;
        let mut energies = Vec::with_capacity(self.iterations);
        let mut perturbed = vec![Control::ZERO; mpc.horizon];

        for _ in 0..self.iterations {
            let mut eps = Vec::with_capacity(self.samples);
            let mut costs = Vec::with_capacity(self.samples);
            for _ in 0..self.samples {
                let e: Vec<Control> = (0..mpc.horizon)
                    .map(|_| {
                        let za: f64 = StandardNormal.sample(rng);
                        let zw: f64 = StandardNormal.sample(rng);
                        Control::new(self.sigma[0] * za, self.sigma[1] * zw)
                    })
                    .collect();
                for ((p, u), d) in perturbed.iter_mut().zip(&ubar).zip(&e) {
                    *p = Control::new(u.accel + d.accel, u.steer_rate + d.steer_rate);
                }
                costs.push(rollout_cost(x0, &perturbed, window, mpc));
                eps.push(e);
            }
            let weights = boltzmann_weights(&costs, self.lambda)?;
            energies.push(costs.iter().copied().fold(f64::INFINITY, f64::min));
            for (e, w) in eps.iter().zip(&weights) {
                if *w == 0.0 {
                    continue;
                }
                for (u, d) in ubar.iter_mut().zip(e) {
                    u.accel += w * d.accel;
                    u.steer_rate += w * d.steer_rate;
                }
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
}

pub fn reference_mppi_step(
    x0: &State,
    window: &[State],
    cfg: &ReferenceMppiConfig,
    rng: &mut SplitMix64,
) -> Result<ControlStepResult> {
    cfg.step(x0, window, None, rng)
}
