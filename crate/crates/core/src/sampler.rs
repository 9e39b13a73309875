//! Gibbs sampling from `p(a) ~ exp(-H(a) / lambda)` over binary vectors, a
//! software stand-in for a p-bit Ising machine, plus exhaustive oracles for
//! small instances.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubo::{check_binary, QuboProblem};
use crate::rng::SplitMix64;

/// Exhaustive routines refuse instances larger than this.
pub const MAX_ENUMERATION_BITS: usize = 20;

const EXP_CLAMP: f64 = 700.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    Zeros,
    #[default]
    Random,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanOrder {
    /// Bits `0..d` in order every sweep.
    #[default]
    Cyclic,
    /// `d` uniformly drawn bit indices per sweep.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub sweeps: usize,
    pub lambda: f64,
    pub seed: u64,
    pub init: InitMode,
    pub burn_in: usize,
    pub scan: ScanOrder,
}

impl GibbsConfig {
    pub fn new(sweeps: usize, lambda: f64, seed: u64) -> Self {
        Self {
            sweeps,
            lambda,
            seed,
            init: InitMode::default(),
            burn_in: 0,
            scan: ScanOrder::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::InvalidConfig("sweeps must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub bit_means: Vec<f64>,
    pub rounded: Vec<u8>,
    pub final_state: Vec<u8>,
    /// `H` after each recorded sweep.
    pub energy_trace: Vec<f64>,
}

/// `h_i + 2 sum_{j != i} J_ij a_j`
pub fn local_field(q: &QuboProblem, a: &[u8], i: usize) -> Result<f64> {
    check_binary(a, q.d())?;
    if i >= q.d() {
        return Err(Error::Index(format!(
            "bit {i} out of range for d = {}",
            q.d()
        )));
    }
    let coupling: f64 = a
        .iter()
        .enumerate()
        .filter(|&(k, &ak)| k != i && ak != 0)
        .map(|(k, _)| q.j[(i, k)])
        .sum();
    Ok(q.h[i] + 2.0 * coupling)
}

/// `1 / (1 + e^-z)` with the exponent clamped to +-700.
pub fn logistic(z: f64) -> f64 {
    let z = z.clamp(-EXP_CLAMP, EXP_CLAMP);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `p(a_i = 1 | rest) = logistic(-field_i / lambda)`
pub fn conditional_prob(q: &QuboProblem, a: &[u8], i: usize, lambda: f64) -> Result<f64> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    Ok(logistic(-local_field(q, a, i)? / lambda))
}

/// Runs the chain and hands every recorded post-burn-in sweep state to
/// `visit`. Local fields are maintained incrementally, so a sweep costs
/// `O(d)` plus `O(d)` per flipped bit.
pub fn gibbs_sample_with<F>(
    q: &QuboProblem,
    cfg: &GibbsConfig,
    mut visit: F,
) -> Result<SampleResult>
where
    F: FnMut(&[u8]),
{
    cfg.validate()?;
    if !q.is_symmetric_zero_diagonal() {
        return Err(Error::InvalidConfig(
            "Gibbs sampling requires a symmetrized problem".into(),
        ));
    }
    let d = q.d();
    let mut rng = SplitMix64::new(cfg.seed);
    let mut a: Vec<u8> = match cfg.init {
        InitMode::Zeros => vec![0; d],
        InitMode::Random => (0..d).map(|_| (rng.next_word() >> 63) as u8).collect(),
    };

    let mut field: Vec<f64> = (0..d)
        .map(|i| local_field(q, &a, i))
        .collect::<Result<_>>()?;
    let mut energy = q.energy_unchecked(&a);

    let mut counts = vec![0u64; d];
    let mut energy_trace = Vec::with_capacity(cfg.sweeps);
    let inv_lambda = 1.0 / cfg.lambda;

    for sweep in 0..cfg.burn_in + cfg.sweeps {
        for step in 0..d {
            let i = match cfg.scan {
                ScanOrder::Cyclic => step,
                ScanOrder::Random => rng.below(d),
            };
            let p_one = logistic(-field[i] * inv_lambda);
            let new = u8::from(rng.next_f64() < p_one);
            if new != a[i] {
                let delta = f64::from(new) - f64::from(a[i]);
                energy += delta * field[i];
                a[i] = new;
                let col = q.j.column(i);
                for (k, f) in field.iter_mut().enumerate() {
                    *f += 2.0 * delta * col[k];
                }
            }
        }
        if sweep >= cfg.burn_in {
            for (c, &bit) in counts.iter_mut().zip(&a) {
                *c += u64::from(bit);
            }
            energy_trace.push(energy);
            visit(&a);
        }
    }

    let bit_means: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / cfg.sweeps as f64)
        .collect();
    let rounded = round_mean(&bit_means)?;
    Ok(SampleResult {
        bit_means,
        rounded,
        final_state: a,
        energy_trace,
    })
}

pub fn gibbs_sample(q: &QuboProblem, cfg: &GibbsConfig) -> Result<SampleResult> {
    gibbs_sample_with(q, cfg, |_| {})
}

/// `1` where the mean is strictly above one half.
pub fn round_mean(bit_means: &[f64]) -> Result<Vec<u8>> {
    bit_means
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if (0.0..=1.0).contains(&value) {
                Ok(u8::from(value > 0.5))
            } else {
                Err(Error::NotProbability { index, value })
            }
        })
        .collect()
}

/// Bit `i` of the state index is `a_i`.
pub fn bits_from_index(index: usize, d: usize) -> Vec<u8> {
    (0..d).map(|i| ((index >> i) & 1) as u8).collect()
}

pub fn index_from_bits(a: &[u8]) -> usize {
    a.iter()
        .enumerate()
        .fold(0, |acc, (i, &b)| acc | (usize::from(b) << i))
}

fn check_enumerable(d: usize) -> Result<()> {
    if d > MAX_ENUMERATION_BITS {
        Err(Error::TooLarge {
            d,
            max: MAX_ENUMERATION_BITS,
        })
    } else {
        Ok(())
    }
}

/// `H` of every state, indexed as in [`bits_from_index`].
pub fn enumerate_energies(q: &QuboProblem) -> Result<Vec<f64>> {
    check_enumerable(q.d())?;
    let d = q.d();
    Ok((0..1usize << d)
        .map(|idx| q.energy_unchecked(&bits_from_index(idx, d)))
        .collect())
}

/// Exact `exp(-H / lambda) / Z` over all `2^d` states.
pub fn exact_boltzmann(q: &QuboProblem, lambda: f64) -> Result<Vec<f64>> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let energies = enumerate_energies(q)?;
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = energies
        .iter()
        .map(|e| (-(e - min) / lambda).exp())
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    Ok(p)
}

/// Marginals `p(a_i = 1)` of a state distribution.
pub fn marginals(probs: &[f64], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for (idx, p) in probs.iter().enumerate() {
        for (i, mi) in m.iter_mut().enumerate() {
            if (idx >> i) & 1 == 1 {
                *mi += p;
            }
        }
    }
    m
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Global minimizer by enumeration; ties go to the lowest state index.
pub fn brute_force_min(q: &QuboProblem) -> Result<(Vec<u8>, f64)> {
    let energies = enumerate_energies(q)?;
    let (best, e) = energies
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |(bi, be), (i, &e)| if e < be { (i, e) } else { (bi, be) },
        );
    Ok((bits_from_index(best, q.d()), e))
}

/// `sweep,energy` rows.
pub fn write_energy_trace<W: Write>(mut w: W, trace: &[f64]) -> std::io::Result<()> {
    writeln!(w, "sweep,energy")?;
    for (i, e) in trace.iter().enumerate() {
        writeln!(w, "{i},{e}")?;
    }
    Ok(())
}
