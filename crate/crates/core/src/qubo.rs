//! Condensed horizon model, binary control encoding and QUBO assembly.
//!
//! Bit layout of a binary action vector `a` (length `N * m * L`): timestep
//! major, then input, then bit from least significant to the signed most
//! significant bit. Bit `k` of input `j` at timestep `n` lives at index
//! `(n * m + j) * L + k`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Control, LinearizedStep, State, StateJacobian, CONTROL_DIM, STATE_DIM};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct HorizonMatrices {
    /// `(N s) x s`, block row `j` is `Phi(0, j + 1)`.
    pub a_blk: DMatrix<f64>,
    /// `(N s) x (N m)`, block `(j, i)` is `Phi(i + 1, j + 1) B_i dt` for `i <= j`.
    pub b_blk: DMatrix<f64>,
    /// `(N s)`, block `j` is `sum_{i <= j} Phi(i + 1, j + 1) r_i dt`.
    pub c_vec: DVector<f64>,
    pub horizon: usize,
    pub state_dim: usize,
    pub control_dim: usize,
}

impl HorizonMatrices {
    /// Stacked prediction `[x_1; ...; x_N]`.
    pub fn predict(&self, x0: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a_blk * x0 + &self.b_blk * u + &self.c_vec
    }
}

/// State-transition product `(I + A_{j-1} dt) ... (I + A_i dt)`, identity when `i == j`.
pub fn phi(i: usize, j: usize, steps: &[LinearizedStep], dt: f64) -> Result<StateJacobian> {
    if i > j {
        return Err(Error::Index(format!("phi({i}, {j}) requires i <= j")));
    }
    if j > steps.len() {
        return Err(Error::Index(format!(
            "phi({i}, {j}) exceeds horizon {}",
            steps.len()
        )));
    }
    let mut out = StateJacobian::identity();
    for step in &steps[i..j] {
        out = (StateJacobian::identity() + step.a * dt) * out;
    }
    Ok(out)
}

pub fn build_horizon(steps: &[LinearizedStep], dt: f64) -> Result<HorizonMatrices> {
    let n = steps.len();
    if n == 0 {
        return Err(Error::InvalidConfig("horizon must be at least 1".into()));
    }
    let (s, m) = (STATE_DIM, CONTROL_DIM);
    let mut a_blk = DMatrix::zeros(n * s, s);
    let mut b_blk = DMatrix::zeros(n * s, n * m);
    let mut c_vec = DVector::zeros(n * s);

    for j in 0..n {
        a_blk
            .fixed_view_mut::<STATE_DIM, STATE_DIM>(j * s, 0)
            .copy_from(&phi(0, j + 1, steps, dt)?);
        let mut c_j = nalgebra::SVector::<f64, STATE_DIM>::zeros();
        for (i, step) in steps.iter().enumerate().take(j + 1) {
            let transition = phi(i + 1, j + 1, steps, dt)?;
            b_blk
                .fixed_view_mut::<STATE_DIM, CONTROL_DIM>(j * s, i * m)
                .copy_from(&(transition * step.b * dt));
            c_j += transition * step.residual * dt;
        }
        c_vec.fixed_rows_mut::<STATE_DIM>(j * s).copy_from(&c_j);
    }

    Ok(HorizonMatrices {
        a_blk,
        b_blk,
        c_vec,
        horizon: n,
        state_dim: s,
        control_dim: m,
    })
}

/// One row of the per-input encoding: `K 2^k / 2^(L-1)` for the low bits and
/// `-K` for the most significant bit.
pub fn expansion_row(bits: usize, magnitude: f64) -> Vec<f64> {
    let scale = magnitude / 2f64.powi(bits as i32 - 1);
    (0..bits)
        .map(|k| {
            if k + 1 == bits {
                -magnitude
            } else {
                scale * 2f64.powi(k as i32)
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionMatrix {
    /// `(N m) x (N m L)`
    pub e_blk: DMatrix<f64>,
    pub bits_per_input: usize,
    pub magnitudes: Vec<f64>,
    pub horizon: usize,
}

impl ExpansionMatrix {
    pub fn num_bits(&self) -> usize {
        self.e_blk.ncols()
    }

    pub fn num_inputs(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn bit_index(&self, timestep: usize, input: usize, bit: usize) -> usize {
        (timestep * self.num_inputs() + input) * self.bits_per_input + bit
    }

    /// `E a` for a binary vector.
    pub fn decode(&self, a: &[u8]) -> Result<DVector<f64>> {
        check_binary(a, self.num_bits())?;
        let av = DVector::from_iterator(a.len(), a.iter().map(|&b| b as f64));
        Ok(&self.e_blk * av)
    }

    pub fn layout(&self) -> BitLayout {
        BitLayout {
            horizon: self.horizon,
            bits: self.bits_per_input,
            inputs: self.num_inputs(),
        }
    }
}

pub fn build_expansion(bits: usize, magnitudes: &[f64], horizon: usize) -> Result<ExpansionMatrix> {
    if bits == 0 || horizon == 0 || magnitudes.is_empty() {
        return Err(Error::InvalidConfig(
            "expansion needs at least one bit, one timestep and one input".into(),
        ));
    }
    if let Some(k) = magnitudes.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
        return Err(Error::InvalidConfig(format!(
            "expansion magnitude must be positive, got {k}"
        )));
    }
    let m = magnitudes.len();
    let mut e_blk = DMatrix::zeros(horizon * m, horizon * m * bits);
    for n in 0..horizon {
        for (j, &k) in magnitudes.iter().enumerate() {
            let row = n * m + j;
            for (b, w) in expansion_row(bits, k).into_iter().enumerate() {
                e_blk[(row, row * bits + b)] = w;
            }
        }
    }
    Ok(ExpansionMatrix {
        e_blk,
        bits_per_input: bits,
        magnitudes: magnitudes.to_vec(),
        horizon,
    })
}

/// Diagonal stage weights, repeated over the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub q: [f64; STATE_DIM],
    pub r: [f64; CONTROL_DIM],
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            q: [1000.0, 1000.0, 1.0, 0.0, 0.0],
            r: [1.0, 1.0],
        }
    }
}

impl CostWeights {
    pub fn new(q: [f64; STATE_DIM], r: [f64; CONTROL_DIM]) -> Result<Self> {
        let w = Self { q, r };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig(
                "state weights must be finite and >= 0".into(),
            ));
        }
        if self.r.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig(
                "control weights must be finite and > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn q_blk(&self, horizon: usize) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            horizon * STATE_DIM,
            (0..horizon).flat_map(|_| self.q),
        ))
    }

    pub fn r_blk(&self, horizon: usize) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            horizon * CONTROL_DIM,
            (0..horizon).flat_map(|_| self.r),
        ))
    }
}

/// Shape metadata carried into the instance file header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitLayout {
    pub horizon: usize,
    pub bits: usize,
    pub inputs: usize,
}

impl BitLayout {
    /// Layout for an instance with no control structure.
    pub fn flat(d: usize) -> Self {
        Self {
            horizon: 1,
            bits: d,
            inputs: 1,
        }
    }

    pub fn num_bits(&self) -> usize {
        self.horizon * self.bits * self.inputs
    }
}

/// `H(a) = a^T J a + h^T a` over `a` in `{0, 1}^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuboProblem {
    pub j: DMatrix<f64>,
    pub h: DVector<f64>,
    pub lambda_hint: f64,
    pub layout: BitLayout,
}

pub(crate) fn check_binary(a: &[u8], d: usize) -> Result<()> {
    if a.len() != d {
        return Err(Error::Shape {
            context: "binary vector",
            expected: d,
            actual: a.len(),
        });
    }
    if let Some((index, &value)) = a.iter().enumerate().find(|(_, &v)| v > 1) {
        return Err(Error::NotBinary { index, value });
    }
    Ok(())
}

impl QuboProblem {
    pub fn new(j: DMatrix<f64>, h: DVector<f64>) -> Result<Self> {
        let d = h.len();
        if j.nrows() != d || j.ncols() != d {
            return Err(Error::Shape {
                context: "coupling matrix",
                expected: d,
                actual: j.nrows().max(j.ncols()),
            });
        }
        Ok(Self {
            j,
            h,
            lambda_hint: 1.0,
            layout: BitLayout::flat(d),
        })
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda_hint = lambda;
        self
    }

    pub fn with_layout(mut self, layout: BitLayout) -> Result<Self> {
        if layout.num_bits() != self.d() {
            return Err(Error::Shape {
                context: "bit layout",
                expected: self.d(),
                actual: layout.num_bits(),
            });
        }
        self.layout = layout;
        Ok(self)
    }

    pub fn d(&self) -> usize {
        self.h.len()
    }

    pub fn energy(&self, a: &[u8]) -> Result<f64> {
        check_binary(a, self.d())?;
        Ok(self.energy_unchecked(a))
    }

    pub(crate) fn energy_unchecked(&self, a: &[u8]) -> f64 {
        let mut e = 0.0;
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0 {
                continue;
            }
            e += self.h[i];
            for (k, &ak) in a.iter().enumerate() {
                if ak != 0 {
                    e += self.j[(i, k)];
                }
            }
        }
        e
    }

    /// Symmetric coupling, diagonal folded into the biases; `H` is unchanged
    /// on binary inputs because `a_i^2 = a_i`.
    pub fn symmetrize(&self) -> QuboProblem {
        let mut j = (&self.j + self.j.transpose()) * 0.5;
        let h = &self.h + j.diagonal();
        j.fill_diagonal(0.0);
        QuboProblem {
            j,
            h,
            lambda_hint: self.lambda_hint,
            layout: self.layout,
        }
    }

    pub fn is_symmetric_zero_diagonal(&self) -> bool {
        let d = self.d();
        (0..d).all(|i| self.j[(i, i)] == 0.0 && (0..i).all(|k| self.j[(i, k)] == self.j[(k, i)]))
    }

    /// Plain-text instance: header `d N L m lambda`, then `d` bias lines, then
    /// one `i j J_ij` line per nonzero upper-triangular coupling (`i <= j`).
    pub fn write_instance<W: Write>(&self, mut w: W) -> Result<()> {
        if !self
            .j
            .iter()
            .zip(self.j.transpose().iter())
            .all(|(a, b)| a == b)
        {
            return Err(Error::InvalidConfig(
                "instance files require a symmetric coupling matrix".into(),
            ));
        }
        let mut out = String::new();
        let l = self.layout;
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            self.d(),
            l.horizon,
            l.bits,
            l.inputs,
            self.lambda_hint
        );
        for v in self.h.iter() {
            let _ = writeln!(out, "{v}");
        }
        for i in 0..self.d() {
            for k in i..self.d() {
                let v = self.j[(i, k)];
                if v != 0.0 {
                    let _ = writeln!(out, "{i} {k} {v}");
                }
            }
        }
        w.write_all(out.as_bytes())
            .map_err(|e| Error::io("<instance>", e))
    }

    pub fn read_instance<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().map(|l| l.map_err(|e| Error::io("<instance>", e)));
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty instance file".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse(format!("bad header line: {header:?}")));
        }
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
        };
        let float = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
        };
        let d = int(fields[0])?;
        let layout = BitLayout {
            horizon: int(fields[1])?,
            bits: int(fields[2])?,
            inputs: int(fields[3])?,
        };
        let lambda = float(fields[4])?;

        let mut h = DVector::zeros(d);
        for i in 0..d {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing bias line {i}")))??;
            h[i] = float(line.trim())?;
        }
        let mut j = DMatrix::zeros(d, d);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Parse(format!("bad coupling line: {line:?}")));
            }
            let (a, b, v) = (int(parts[0])?, int(parts[1])?, float(parts[2])?);
            if a >= d || b >= d || a > b {
                return Err(Error::Parse(format!(
                    "coupling index out of range: {line:?}"
                )));
            }
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
        QuboProblem::new(j, h)?
            .with_layout(layout)
            .map(|q| q.with_lambda(lambda))
    }
}

/// Quadratic cost over a continuous control deviation `du` (no expansion).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearCost {
    pub j_u: DMatrix<f64>,
    pub h_u: DVector<f64>,
}

impl LinearCost {
    pub fn energy(&self, du: &DVector<f64>) -> f64 {
        (du.transpose() * &self.j_u * du)[(0, 0)] + self.h_u.dot(du)
    }
}

/// Stacks a control sequence into `[u_0; ...; u_{N-1}]`.
pub fn stack_controls(u: &[Control]) -> DVector<f64> {
    DVector::from_iterator(
        u.len() * CONTROL_DIM,
        u.iter().flat_map(|c| [c.accel, c.steer_rate]),
    )
}

pub fn unstack_controls(u: &DVector<f64>) -> Vec<Control> {
    u.as_slice()
        .chunks_exact(CONTROL_DIM)
        .map(|c| Control::new(c[0], c[1]))
        .collect()
}

pub fn state_column(x: &State) -> DVector<f64> {
    DVector::from_column_slice(x.to_vector().as_slice())
}

pub fn stack_states(x: &[State]) -> DVector<f64> {
    DVector::from_iterator(
        x.len() * STATE_DIM,
        x.iter().flat_map(|s| [s.px, s.py, s.theta, s.v, s.delta]),
    )
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            actual,
        })
    }
}

/// `J_u = B^T Q B + R`, `h_u = 2 B^T Q (A x0 + B ubar + c - xref)`.
pub fn assemble_linear_cost(
    hm: &HorizonMatrices,
    w: &CostWeights,
    x0: &State,
    ubar: &DVector<f64>,
    xref: &DVector<f64>,
) -> Result<LinearCost> {
    let n = hm.horizon;
    check_len("stacked reference", n * hm.state_dim, xref.len())?;
    check_len("stacked nominal controls", n * hm.control_dim, ubar.len())?;
    let q_blk = w.q_blk(n);
    let qb = &q_blk * &hm.b_blk;
    let j_u = hm.b_blk.transpose() * &qb + w.r_blk(n);
    let error = hm.predict(&state_column(x0), ubar) - xref;
    let h_u = qb.transpose() * error * 2.0;
    Ok(LinearCost { j_u, h_u })
}

/// Raw (unsymmetrized) QUBO: `J = E^T J_u E`, `h = E^T h_u`. The constant
/// `a`-independent part of the tracking cost is dropped.
pub fn assemble_qubo(
    hm: &HorizonMatrices,
    ex: &ExpansionMatrix,
    w: &CostWeights,
    x0: &State,
    ubar: &DVector<f64>,
    xref: &DVector<f64>,
) -> Result<QuboProblem> {
    check_len(
        "expansion rows",
        hm.horizon * hm.control_dim,
        ex.e_blk.nrows(),
    )?;
    let lc = assemble_linear_cost(hm, w, x0, ubar, xref)?;
    let e = &ex.e_blk;
    let j = e.transpose() * lc.j_u * e;
    let h = e.transpose() * lc.h_u;
    QuboProblem::new(j, h)?.with_layout(ex.layout())
}
