use serde::{Deserialize, Serialize};

use super::{ControlStepResult, MpcController};
use crate::dynamics::{step_nonlinear, Control, State};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::scenarios::ReferenceTrajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// Initial state followed by the state after every executed step.
    pub realized: Vec<State>,
    pub reference: Vec<State>,
    /// Mean squared position error; `+inf` when the trial diverged.
    pub mse: f64,
    pub per_step: Vec<ControlStepResult>,
    pub diverged: Option<String>,
}

impl TrialResult {
    pub fn steps(&self) -> usize {
        self.realized.len() - 1
    }

    pub fn is_ok(&self) -> bool {
        self.diverged.is_none()
    }
}

pub(crate) fn shift_nominal(ubar: &[Control]) -> Vec<Control> {
    let mut next = ubar[1..].to_vec();
    next.push(*ubar.last().expect("nonempty nominal"));
    next
}

/// Mean squared `(px, py)` error of `realized[k]` against `reference[k]`,
/// k = 1..realized.len().
pub fn position_mse(realized: &[State], reference: &[State]) -> f64 {
    let n = realized.len().saturating_sub(1);
    if n == 0 {
        return 0.0;
    }
    realized[1..]
        .iter()
        .zip(&reference[1..])
        .map(|(x, r)| (x.px - r.px).powi(2) + (x.py - r.py).powi(2))
        .sum::<f64>()
        / n as f64
}

/// Receding-horizon loop over a reference. At step `k` the controller sees
/// reference states `k+1 ..= k+N` (the targets for its predicted states
/// `x_1 .. x_N`); the loop stops once fewer than `N` future points remain, so
/// the last `N - 1` reference points are never reached as step outcomes.
pub fn run_closed_loop<C>(
    scenario: &ReferenceTrajectory,
    controller: &C,
    seed: u64,
) -> Result<TrialResult>
where
    C: MpcController + ?Sized,
{
    controller.validate()?;
    let mpc = controller.settings();
    let n = mpc.horizon;
    if scenario.len() <= n {
        return Err(Error::InvalidConfig(format!(
            "scenario has {} points, needs more than the horizon {n}",
            scenario.len()
        )));
    }
    let steps = scenario.len() - n;

    let mut rng = SplitMix64::new(seed);
    let mut x = scenario.initial_state;
    let mut realized = Vec::with_capacity(steps + 1);
    realized.push(x);
    let mut per_step = Vec::with_capacity(steps);
    let mut nominal: Option<Vec<Control>> = None;
    let mut diverged = None;

    for k in 0..steps {
        let window = &scenario.states[k + 1..=k + n];
        let outcome = controller
            .step(&x, window, nominal.as_deref(), &mut rng)
            .and_then(|res| {
                let next = step_nonlinear(&x, &res.u0, mpc.dt, &mpc.params)?;
                if next.is_finite() {
                    Ok((res, next))
                } else {
                    Err(Error::Divergence(format!("non-finite state at step {k}")))
                }
            });
        match outcome {
            Ok((res, next)) => {
                if controller.warm_start() {
                    nominal = Some(shift_nominal(&res.ubar));
                }
                x = next;
                realized.push(x);
                per_step.push(res);
            }
            Err(e) => {
                diverged = Some(format!("step {k}: {e}"));
                break;
            }
        }
    }

    let mse = if diverged.is_some() {
        f64::INFINITY
    } else {
        position_mse(&realized, &scenario.states)
    };
    Ok(TrialResult {
        realized,
        reference: scenario.states.clone(),
        mse,
        per_step,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_repeats_last() {
        let u = [
            Control::new(1., 0.),
            Control::new(2., 0.),
            Control::new(3., 1.),
        ];
        assert_eq!(
            shift_nominal(&u),
            vec![
                Control::new(2., 0.),
                Control::new(3., 1.),
                Control::new(3., 1.)
            ]
        );
    }

    #[test]
    fn mse_skips_initial_state() {
        let r = vec![State::default(); 3];
        let x = vec![
            State::new(5., 5., 0., 0., 0.),
            State::new(1., 0., 0., 0., 0.),
            State::new(0., 2., 0., 0., 0.),
        ];
        assert_eq!(position_mse(&x, &r), 2.5);
    }
}
