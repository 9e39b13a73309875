//! Kinematic bicycle with first-order steering.
//!
//! State `[px, py, theta, v, delta]`, control `[accel, steer_rate]`:
//!
//! ```text
//! px'    = v cos(theta)
//! py'    = v sin(theta)
//! theta' = v tan(delta) / wheelbase
//! v'     = accel
//! delta' = steer_rate
//! ```

use std::f64::consts::FRAC_PI_2;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 5;
pub const CONTROL_DIM: usize = 2;

pub type StateVec = SVector<f64, STATE_DIM>;
pub type ControlVec = SVector<f64, CONTROL_DIM>;
pub type StateJacobian = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type InputJacobian = SMatrix<f64, STATE_DIM, CONTROL_DIM>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub px: f64,
    pub py: f64,
    /// Heading, kept unwrapped.
    pub theta: f64,
    pub v: f64,
    pub delta: f64,
}

impl State {
    pub fn new(px: f64, py: f64, theta: f64, v: f64, delta: f64) -> Self {
        Self {
            px,
            py,
            theta,
            v,
            delta,
        }
    }

    pub fn to_vector(&self) -> StateVec {
        StateVec::new(self.px, self.py, self.theta, self.v, self.delta)
    }

    pub fn from_vector(x: &StateVec) -> Self {
        Self::new(x[0], x[1], x[2], x[3], x[4])
    }

    pub fn position(&self) -> [f64; 2] {
        [self.px, self.py]
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub accel: f64,
    pub steer_rate: f64,
}

impl Control {
    pub const ZERO: Control = Control {
        accel: 0.0,
        steer_rate: 0.0,
    };

    pub fn new(accel: f64, steer_rate: f64) -> Self {
        Self { accel, steer_rate }
    }

    pub fn to_vector(&self) -> ControlVec {
        ControlVec::new(self.accel, self.steer_rate)
    }

    pub fn from_vector(u: &ControlVec) -> Self {
        Self::new(u[0], u[1])
    }

    pub fn is_finite(&self) -> bool {
        self.accel.is_finite() && self.steer_rate.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub wheelbase: f64,
}

impl ModelParams {
    pub fn new(wheelbase: f64) -> Result<Self> {
        if !(wheelbase > 0.0 && wheelbase.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "wheelbase must be positive, got {wheelbase}"
            )));
        }
        Ok(Self { wheelbase })
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { wheelbase: 1.0 }
    }
}

/// Local affine model `f(x, u) ~ a x + b u + residual` around `(xbar, ubar)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedStep {
    pub a: StateJacobian,
    pub b: InputJacobian,
    /// `f(xbar, ubar) - a xbar - b ubar`
    pub residual: StateVec,
    pub xbar: State,
    pub ubar: Control,
}

fn check_steering(delta: f64) -> Result<()> {
    if delta.abs() < FRAC_PI_2 {
        Ok(())
    } else {
        Err(Error::SteeringDomain { delta })
    }
}

pub fn derivative(x: &State, u: &Control, p: &ModelParams) -> Result<StateVec> {
    check_steering(x.delta)?;
    let (sin, cos) = x.theta.sin_cos();
    Ok(StateVec::new(
        x.v * cos,
        x.v * sin,
        x.v / p.wheelbase * x.delta.tan(),
        u.accel,
        u.steer_rate,
    ))
}

pub fn jacobians(
    x: &State,
    _u: &Control,
    p: &ModelParams,
) -> Result<(StateJacobian, InputJacobian)> {
    check_steering(x.delta)?;
    let (sin, cos) = x.theta.sin_cos();
    let cos_delta = x.delta.cos();

    let mut a = StateJacobian::zeros();
    a[(0, 2)] = -x.v * sin;
    a[(0, 3)] = cos;
    a[(1, 2)] = x.v * cos;
    a[(1, 3)] = sin;
    a[(2, 3)] = x.delta.tan() / p.wheelbase;
    a[(2, 4)] = x.v / (p.wheelbase * cos_delta * cos_delta);

    let mut b = InputJacobian::zeros();
    b[(3, 0)] = 1.0;
    b[(4, 1)] = 1.0;
    Ok((a, b))
}

/// Explicit Euler step, the same first-order discretization the condensed
/// horizon model uses.
pub fn step_nonlinear(x: &State, u: &Control, dt: f64, p: &ModelParams) -> Result<State> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let dx = derivative(x, u, p)?;
    Ok(State::from_vector(&(x.to_vector() + dx * dt)))
}

pub fn linearize_at(x: &State, u: &Control, p: &ModelParams) -> Result<LinearizedStep> {
    let f = derivative(x, u, p)?;
    let (a, b) = jacobians(x, u, p)?;
    let residual = f - a * x.to_vector() - b * u.to_vector();
    Ok(LinearizedStep {
        a,
        b,
        residual,
        xbar: *x,
        ubar: *u,
    })
}

/// `(I + a dt) x + b dt u + residual dt`
pub fn step_linearized(step: &LinearizedStep, x: &StateVec, u: &ControlVec, dt: f64) -> StateVec {
    x + (step.a * x + step.b * u + step.residual) * dt
}

/// Rolls the nonlinear model from `x0` under `ubar` and linearizes at every
/// nominal point `(xbar_n, ubar_n)`, n = 0..N-1.
pub fn linearize_along(
    x0: &State,
    ubar: &[Control],
    dt: f64,
    p: &ModelParams,
) -> Result<Vec<LinearizedStep>> {
    if ubar.is_empty() {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let mut steps = Vec::with_capacity(ubar.len());
    let mut x = *x0;
    for (n, u) in ubar.iter().enumerate() {
        if !x.is_finite() || !u.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite nominal point at step {n}"
            )));
        }
        steps.push(linearize_at(&x, u, p)?);
        if n + 1 < ubar.len() {
            x = step_nonlinear(&x, u, dt, p)?;
        }
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_4, PI};

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    const P: ModelParams = ModelParams { wheelbase: 1.0 };

    fn central_differences(x: &State, u: &Control, h: f64) -> (StateJacobian, InputJacobian) {
        let xv = x.to_vector();
        let uv = u.to_vector();
        let mut a = StateJacobian::zeros();
        let mut b = InputJacobian::zeros();
        for k in 0..STATE_DIM {
            let mut plus = xv;
            let mut minus = xv;
            plus[k] += h;
            minus[k] -= h;
            let fp = derivative(&State::from_vector(&plus), u, &P).unwrap();
            let fm = derivative(&State::from_vector(&minus), u, &P).unwrap();
            a.set_column(k, &((fp - fm) / (2.0 * h)));
        }
        for k in 0..CONTROL_DIM {
            let mut plus = uv;
            let mut minus = uv;
            plus[k] += h;
            minus[k] -= h;
            let fp = derivative(x, &Control::from_vector(&plus), &P).unwrap();
            let fm = derivative(x, &Control::from_vector(&minus), &P).unwrap();
            b.set_column(k, &((fp - fm) / (2.0 * h)));
        }
        (a, b)
    }

    #[test]
    fn derivative_examples() {
        let f = derivative(&State::new(0., 0., 0., 1., 0.), &Control::ZERO, &P).unwrap();
        assert_eq!(f, StateVec::new(1., 0., 0., 0., 0.));

        let f = derivative(
            &State::new(0., 0., PI / 2., 2., 0.),
            &Control::new(1., 0.5),
            &P,
        )
        .unwrap();
        assert_abs_diff_eq!(f, StateVec::new(0., 2., 0., 1., 0.5), epsilon = 1e-15);

        let f = derivative(&State::new(1., 1., 0., 1., FRAC_PI_4), &Control::ZERO, &P).unwrap();
        assert_abs_diff_eq!(f, StateVec::new(1., 0., 1., 0., 0.), epsilon = 1e-15);
    }

    #[test]
    fn steering_guard() {
        let x = State::new(0., 0., 0., 1., FRAC_PI_2);
        assert!(matches!(
            derivative(&x, &Control::ZERO, &P),
            Err(Error::SteeringDomain { .. })
        ));
        assert!(jacobians(&x, &Control::ZERO, &P).is_err());
        let x = State::new(0., 0., 0., 1., -2.0);
        assert!(step_nonlinear(&x, &Control::ZERO, 0.1, &P).is_err());
    }

    #[test]
    fn jacobians_at_rest() {
        let (a, b) = jacobians(&State::default(), &Control::ZERO, &P).unwrap();
        let mut expected = StateJacobian::zeros();
        expected[(0, 3)] = 1.0;
        assert_eq!(a, expected);
        let mut eb = InputJacobian::zeros();
        eb[(3, 0)] = 1.0;
        eb[(4, 1)] = 1.0;
        assert_eq!(b, eb);
    }

    #[test]
    fn euler_examples() {
        let x = step_nonlinear(&State::new(0., 0., 0., 1., 0.), &Control::ZERO, 0.1, &P).unwrap();
        assert_abs_diff_eq!(
            x.to_vector(),
            StateVec::new(0.1, 0., 0., 1., 0.),
            epsilon = 1e-15
        );

        let x = step_nonlinear(&State::default(), &Control::new(1., 0.), 0.1, &P).unwrap();
        assert_abs_diff_eq!(
            x.to_vector(),
            StateVec::new(0., 0., 0., 0.1, 0.),
            epsilon = 1e-15
        );

        let x = step_nonlinear(
            &State::new(0., 0., 0., 1., FRAC_PI_4),
            &Control::ZERO,
            0.1,
            &P,
        )
        .unwrap();
        assert_abs_diff_eq!(
            x.to_vector(),
            StateVec::new(0.1, 0., 0.1, 1., FRAC_PI_4),
            epsilon = 1e-15
        );

        assert!(step_nonlinear(&State::default(), &Control::ZERO, 0.0, &P).is_err());
    }

    #[test]
    fn rest_rollout_has_zero_residuals() {
        let x0 = State::new(0., 0., 0.7, 0., 0.);
        let steps = linearize_along(&x0, &[Control::ZERO; 8], 0.1, &P).unwrap();
        assert_eq!(steps.len(), 8);
        for s in &steps {
            assert_abs_diff_eq!(s.residual, StateVec::zeros(), epsilon = 1e-15);
        }
    }

    #[test]
    fn single_step_horizon() {
        let x0 = State::new(1., 2., 0.3, 1.5, 0.1);
        let u = Control::new(0.4, -0.2);
        let steps = linearize_along(&x0, &[u], 0.1, &P).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].xbar, x0);
        assert_eq!(steps[0].ubar, u);
        assert!(linearize_along(&x0, &[], 0.1, &P).is_err());
    }

    #[test]
    fn nominal_rollout_follows_nonlinear_model() {
        let x0 = State::new(0., 0., 0.2, 1.0, 0.05);
        let ubar: Vec<_> = (0..6)
            .map(|k| Control::new(0.5 * k as f64, 0.1 - 0.05 * k as f64))
            .collect();
        let steps = linearize_along(&x0, &ubar, 0.1, &P).unwrap();
        for n in 0..steps.len() - 1 {
            let next = step_nonlinear(&steps[n].xbar, &steps[n].ubar, 0.1, &P).unwrap();
            assert_eq!(next, steps[n + 1].xbar);
        }
    }

    fn arb_point() -> impl Strategy<Value = (State, Control)> {
        (
            (
                -10.0..10.0f64,
                -10.0..10.0f64,
                -4.0..4.0f64,
                -5.0..5.0f64,
                -1.2..1.2f64,
            ),
            (-5.0..5.0f64, -2.0..2.0f64),
        )
            .prop_map(|((px, py, th, v, d), (a, w))| {
                (State::new(px, py, th, v, d), Control::new(a, w))
            })
    }

    proptest! {
        #[test]
        fn jacobians_match_central_differences((x, u) in arb_point()) {
            let (a, b) = jacobians(&x, &u, &P).unwrap();
            let (fa, fb) = central_differences(&x, &u, 1e-6);
            prop_assert!((a - fa).amax() < 1e-5);
            prop_assert!((b - fb).amax() < 1e-5);
        }

        #[test]
        fn linearization_exact_at_nominal((x, u) in arb_point()) {
            let step = linearize_at(&x, &u, &P).unwrap();
            let f = derivative(&x, &u, &P).unwrap();
            let affine = step.a * x.to_vector() + step.b * u.to_vector() + step.residual;
            prop_assert!((affine - f).amax() < 1e-12);
        }

        #[test]
        fn linear_step_matches_euler_at_nominal((x, u) in arb_point()) {
            let step = linearize_at(&x, &u, &P).unwrap();
            let lin = step_linearized(&step, &x.to_vector(), &u.to_vector(), 0.1);
            let nl = step_nonlinear(&x, &u, 0.1, &P).unwrap().to_vector();
            prop_assert!((lin - nl).amax() < 1e-12);
        }
    }
}
