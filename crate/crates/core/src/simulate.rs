//! Closed-loop Monte Carlo rollouts of a synthesized controller.
//!
//! At every step the state is quantized to its lattice cell, the controller's
//! input for that cell is applied, a disturbance lattice point is drawn
//! uniformly, and Gaussian noise is added to the dynamics. Labels are taken
//! from the quantized cell, matching the abstraction's semantics. Leaving the
//! domain counts as a failure.
//!
//! Each rollout owns a random stream derived from `(seed, rollout)`, so the
//! output does not depend on the number of worker threads.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{DynamicsSpec, ExprError};
use crate::grid::{GridError, Label, LabeledStates, Space};
use crate::kernel::{cholesky, derive_seed, KernelError, NoiseModel};
use crate::synthesis::{Controller, SpecKind};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("custom noise densities cannot be sampled; use a normal noise model")]
    UnsupportedNoise,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("dynamics evaluation failed at x = {x:?}: {source}")]
    Dynamics {
        x: Vec<f64>,
        #[source]
        source: ExprError,
    },
    #[error("controller does not match the problem: {0}")]
    Incompatible(String),
    #[error("no start state: {0}")]
    NoStart(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone)]
pub struct SimulationOptions {
    pub rollouts: usize,
    pub steps: usize,
    pub seed: u64,
    /// Start from this point instead of sampling start states.
    pub start: Option<Vec<f64>>,
    /// When sampling start states, only use those with `p_min >= min_p`.
    pub min_p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Controller-table position of the start state.
    pub start: usize,
    /// Visited states, starting with the initial one.
    pub states: Vec<Vec<f64>>,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rollouts: usize,
    pub successes: usize,
    pub fraction: f64,
    /// Binomial standard error of `fraction`.
    pub stderr: f64,
    /// Mean and minimum of the controller's bounds over the start states.
    pub mean_p_min: f64,
    pub mean_p_max: f64,
    pub min_p_min: f64,
}

/// Samples additive noise.
enum Sampler {
    Diagonal(Vec<f64>),
    /// Lower Cholesky factor of the inverse covariance.
    Precision { l: Vec<f64>, n: usize },
}

impl Sampler {
    fn new(noise: &NoiseModel) -> Result<Self, SimulateError> {
        match noise {
            NoiseModel::DiagonalNormal { sigma } => Ok(Self::Diagonal(sigma.clone())),
            NoiseModel::FullNormal { inv_cov, .. } => {
                let n = noise.dims();
                Ok(Self::Precision {
                    l: cholesky(inv_cov, n)?,
                    n,
                })
            }
            NoiseModel::Custom { .. } => Err(SimulateError::UnsupportedNoise),
        }
    }

    fn add_to(&self, rng: &mut ChaCha8Rng, x: &mut [f64]) {
        match self {
            Self::Diagonal(sigma) => {
                for (v, s) in x.iter_mut().zip(sigma) {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += s * z;
                }
            }
            Self::Precision { l, n } => {
                // with P = L·Lᵀ, solving Lᵀ·y = z gives y ~ N(0, P⁻¹)
                let n = *n;
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let mut y = vec![0.0; n];
                for i in (0..n).rev() {
                    let mut s = z[i];
                    for k in i + 1..n {
                        s -= l[k * n + i] * y[k];
                    }
                    y[i] = s / l[i * n + i];
                }
                for (v, d) in x.iter_mut().zip(y) {
                    *v += d;
                }
            }
        }
    }
}

/// Everything a rollout needs besides the options.
pub struct ClosedLoop<'a> {
    pub dynamics: &'a DynamicsSpec,
    pub noise: &'a NoiseModel,
    pub disturb_space: Option<&'a Space>,
    pub labels: &'a LabeledStates,
    pub controller: &'a Controller,
}

impl ClosedLoop<'_> {
    fn check(&self) -> Result<(), SimulateError> {
        let c = self.controller;
        let dims = self.dynamics.dims();
        let bad = |m: &str| Err(SimulateError::Incompatible(m.into()));
        if c.state_space.dims() != dims.state || self.noise.dims() != dims.state {
            return bad("state dimension");
        }
        if c.states != self.labels.safe {
            return bad("the controller's safe states differ from the configured labels");
        }
        let n_u = match (&c.policy, &c.input_space) {
            (Some(_), Some(u)) => u.dims(),
            _ => 0,
        };
        if n_u != dims.input {
            return bad("input dimension (a verification result cannot drive a system with inputs)");
        }
        if self.disturb_space.map_or(0, Space::dims) != dims.disturb {
            return bad("disturbance dimension");
        }
        Ok(())
    }
}

pub fn simulate(
    system: &ClosedLoop<'_>,
    opts: &SimulationOptions,
) -> Result<(Vec<Rollout>, Summary), SimulateError> {
    system.check()?;
    let sampler = Sampler::new(system.noise)?;
    let c = system.controller;
    let fixed_start = match &opts.start {
        Some(x) => {
            let idx = c.state_space.quantize(x)?;
            let k = c
                .position(idx)
                .ok_or_else(|| SimulateError::NoStart(format!("{x:?} is not a safe state")))?;
            Some((k, x.clone()))
        }
        None => None,
    };
    let eligible: Vec<usize> = (0..c.states.len()).filter(|&k| c.p_min[k] >= opts.min_p).collect();
    if fixed_start.is_none() && eligible.is_empty() {
        return Err(SimulateError::NoStart(format!("no safe state has p_min >= {}", opts.min_p)));
    }
    let table = system.labels.label_table();
    let rollouts = (0..opts.rollouts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, r as u64, 0));
            let (k, x0) = match &fixed_start {
                Some((k, x)) => (*k, x.clone()),
                None => {
                    let k = eligible[rng.random_range(0..eligible.len())];
                    (k, c.state_space.rep_point(c.states[k])?)
                }
            };
            rollout(system, &sampler, &table, k, x0, opts.steps, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(c, &rollouts);
    Ok((rollouts, summary))
}

fn rollout(
    system: &ClosedLoop<'_>,
    sampler: &Sampler,
    table: &[Label],
    start: usize,
    x0: Vec<f64>,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout, SimulateError> {
    let c = system.controller;
    let reach = c.spec != SpecKind::Safety;
    let mut states = vec![x0];
    let mut w = Vec::new();
    let mut step = 0;
    let satisfied = loop {
        let x = states.last().expect("nonempty");
        let Ok(q) = c.state_space.quantize(x) else {
            break false;
        };
        match table[q] {
            Label::Avoid => break false,
            Label::Target => break reach,
            Label::Safe if step == steps => break !reach,
            Label::Safe => {}
        }
        let u = match (&c.policy, &c.input_space) {
            (Some(p), Some(space)) => {
                let k = c.position(q).expect("safe states are in the table");
                space.rep_point(p[k])?
            }
            _ => Vec::new(),
        };
        if let Some(space) = system.disturb_space {
            let j = rng.random_range(0..space.total());
            w = space.rep_point(j)?;
        }
        let mut next = system
            .dynamics
            .eval(x, &u, &w)
            .map_err(|source| SimulateError::Dynamics { x: x.clone(), source })?;
        sampler.add_to(rng, &mut next);
        states.push(next);
        step += 1;
    };
    Ok(Rollout {
        start,
        states,
        satisfied,
    })
}

fn summarize(c: &Controller, rollouts: &[Rollout]) -> Summary {
    let n = rollouts.len();
    let successes = rollouts.iter().filter(|r| r.satisfied).count();
    let fraction = if n > 0 { successes as f64 / n as f64 } else { 0.0 };
    let stderr = if n > 0 {
        (fraction * (1.0 - fraction) / n as f64).sqrt()
    } else {
        0.0
    };
    let mean = |v: &[f64]| {
        if n == 0 {
            0.0
        } else {
            rollouts.iter().map(|r| v[r.start]).sum::<f64>() / n as f64
        }
    };
    Summary {
        rollouts: n,
        successes,
        fraction,
        stderr,
        mean_p_min: mean(&c.p_min),
        mean_p_max: mean(&c.p_max),
        min_p_min: rollouts
            .iter()
            .map(|r| c.p_min[r.start])
            .fold(f64::INFINITY, f64::min),
    }
}

/// Writes `rollout,step,x1..xn,satisfied` rows.
pub fn write_csv<W: Write>(w: &mut W, dims: usize, rollouts: &[Rollout]) -> io::Result<()> {
    write!(w, "rollout,step")?;
    for d in 1..=dims {
        write!(w, ",x{d}")?;
    }
    writeln!(w, ",satisfied")?;
    for (r, ro) in rollouts.iter().enumerate() {
        for (s, x) in ro.states.iter().enumerate() {
            write!(w, "{r},{s}")?;
            for v in x {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", u8::from(ro.satisfied))?;
        }
    }
    Ok(())
}
