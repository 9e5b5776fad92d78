//! Optimal feasible distributions: maximize or minimize `weights · q` over
//! probability vectors `q` with `lower <= q <= upper`.
//!
//! The optimum of this LP is reached greedily: start at `lower` and hand the
//! remaining mass `1 - Σ lower` to slots in weight order (descending for max,
//! ascending for min), each up to its upper bound. [`solve_bruteforce`]
//! enumerates the vertices of the feasible polytope and serves as an oracle.

use thiserror::Error;

use crate::Direction;

/// Slack allowed on `Σ lower <= 1 <= Σ upper`.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Largest slot count accepted by the enumeration oracle.
pub const BRUTEFORCE_MAX_SLOTS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibleError {
    #[error("infeasible bounds: lower sums to {lower_sum}, upper sums to {upper_sum}")]
    Infeasible { lower_sum: f64, upper_sum: f64 },
    #[error("lower, upper and weights must have equal lengths ({lower}, {upper}, {weights})")]
    Shape {
        lower: usize,
        upper: usize,
        weights: usize,
    },
    #[error("slot {slot}: lower bound {lower} exceeds upper bound {upper}")]
    InvertedBounds { slot: usize, lower: f64, upper: f64 },
    #[error("enumeration supports at most {BRUTEFORCE_MAX_SLOTS} slots, got {0}")]
    TooManySlots(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleProblem {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub weights: Vec<f64>,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub value: f64,
    pub dist: Vec<f64>,
}

impl FeasibleProblem {
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        weights: Vec<f64>,
        direction: Direction,
    ) -> Result<Self, FeasibleError> {
        let p = Self {
            lower,
            upper,
            weights,
            direction,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FeasibleError> {
        if self.lower.len() != self.upper.len() || self.lower.len() != self.weights.len() {
            return Err(FeasibleError::Shape {
                lower: self.lower.len(),
                upper: self.upper.len(),
                weights: self.weights.len(),
            });
        }
        for (slot, (&lower, &upper)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lower <= upper) {
                return Err(FeasibleError::InvertedBounds { slot, lower, upper });
            }
        }
        let lower_sum: f64 = self.lower.iter().sum();
        let upper_sum: f64 = self.upper.iter().sum();
        if lower_sum > 1.0 + FEASIBILITY_TOL || upper_sum < 1.0 - FEASIBILITY_TOL {
            return Err(FeasibleError::Infeasible {
                lower_sum,
                upper_sum,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }
}

/// Slot indices in greedy fill order for `direction`; ties keep index order.
pub fn fill_order(weights: &[f64], direction: Direction) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    match direction {
        Direction::Max => order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a])),
        Direction::Min => order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b])),
    }
    order
}

/// Greedy optimum.
pub fn solve_sorted(p: &FeasibleProblem) -> Result<Solution, FeasibleError> {
    p.validate()?;
    let mut dist = p.lower.clone();
    let mut slack = 1.0 - p.lower.iter().sum::<f64>();
    for slot in fill_order(&p.weights, p.direction) {
        if slack <= 0.0 {
            break;
        }
        let add = (p.upper[slot] - p.lower[slot]).min(slack);
        dist[slot] += add;
        slack -= add;
    }
    let value = dot(&p.weights, &dist);
    Ok(Solution { value, dist })
}

/// Greedy optimum value for bounds given by accessor, with a precomputed
/// fill order. This is the allocation-free form used inside value iteration,
/// where one order serves every row of an iteration.
#[inline]
pub fn sorted_value(
    lower: impl Fn(usize) -> f64,
    upper: impl Fn(usize) -> f64,
    weights: &[f64],
    order: &[usize],
) -> f64 {
    let mut value = 0.0;
    let mut lower_sum = 0.0;
    for (slot, &w) in weights.iter().enumerate() {
        let lo = lower(slot);
        value += lo * w;
        lower_sum += lo;
    }
    let mut slack = 1.0 - lower_sum;
    for &slot in order {
        if slack <= 0.0 {
            break;
        }
        let add = (upper(slot) - lower(slot)).min(slack);
        value += add * weights[slot];
        slack -= add;
    }
    value
}

/// Vertex enumeration: for each slot and each assignment of every other slot
/// to its lower or upper bound, the slot takes the residual mass if that fits
/// its bounds. The best candidate is returned (first found on ties).
pub fn solve_bruteforce(p: &FeasibleProblem) -> Result<Solution, FeasibleError> {
    p.validate()?;
    let n = p.len();
    if n > BRUTEFORCE_MAX_SLOTS {
        return Err(FeasibleError::TooManySlots(n));
    }
    let better = |a: f64, b: f64| match p.direction {
        Direction::Max => a > b,
        Direction::Min => a < b,
    };
    let mut best: Option<Solution> = None;
    let mut q = vec![0.0; n];
    for s in 0..n {
        for mask in 0u32..(1u32 << (n - 1)) {
            let mut bit = 0;
            let mut others = 0.0;
            for (i, slot) in q.iter_mut().enumerate() {
                if i == s {
                    continue;
                }
                *slot = if mask >> bit & 1 == 1 {
                    p.upper[i]
                } else {
                    p.lower[i]
                };
                others += *slot;
                bit += 1;
            }
            let residual = 1.0 - others;
            let tol = FEASIBILITY_TOL;
            if residual < p.lower[s] - tol || residual > p.upper[s] + tol {
                continue;
            }
            q[s] = residual.clamp(p.lower[s], p.upper[s]);
            let value = dot(&p.weights, &q);
            if best.as_ref().is_none_or(|b| better(value, b.value)) {
                best = Some(Solution {
                    value,
                    dist: q.clone(),
                });
            }
        }
    }
    best.ok_or(FeasibleError::Infeasible {
        lower_sum: p.lower.iter().sum(),
        upper_sum: p.upper.iter().sum(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
