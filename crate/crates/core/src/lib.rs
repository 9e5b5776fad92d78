//! Finite interval abstractions of stochastic control systems and controller
//! synthesis over them.
//!
//! A system `x' = f(x, u, w) + noise` on a bounded box is partitioned into a
//! uniform grid ([`grid`]). For every (state, input, disturbance) triple the
//! [`abstraction`] module bounds the probability of landing in each cell,
//! producing an interval MDP ([`abstraction::Imdp`]). [`synthesis`] then
//! runs interval iteration on that IMDP to obtain a controller together with
//! guaranteed lower and upper satisfaction probabilities for safety,
//! reachability or reach-avoid specifications.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod abstraction;
pub mod cli;
pub mod config;
pub mod expr;
pub mod feasible;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod simulate;
pub mod synthesis;

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::Min => Direction::Max,
            Direction::Max => Direction::Min,
        }
    }
}

/// Runs `f` on a dedicated pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, rayon::ThreadPoolBuildError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    Ok(builder.build()?.install(f))
}
