//! Interval iteration over an IMDP.
//!
//! Two value vectors are iterated side by side: `v0` from all zeros and `v1`
//! from all ones. Each update solves, per row, the feasible-distribution LP
//! whose weights are the current values of the safe destinations followed by
//! the target and avoid weights. Both iterates bracket the fixed point, so
//! `max |v1 - v0| <= eps` certifies convergence.
//!
//! Reachability (and reach-avoid) maximizes over inputs and minimizes over
//! disturbances. Safety is solved through its complement: the probability of
//! ever reaching the avoid set (or leaving the domain) is minimized over
//! inputs and maximized over disturbances, and the safety bounds are one
//! minus that.

use std::collections::VecDeque;
use std::fmt;

use log::{debug, info};
use rayon::prelude::*;
use thiserror::Error;

use crate::abstraction::Imdp;
use crate::feasible::fill_order;
use crate::grid::{GridError, Space};
use crate::Direction;

pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;
/// Slack allowed when asserting the bracket `v0 <= v1` and monotonicity.
pub const BRACKET_TOL: f64 = 1e-12;
const PROGRESS_EVERY: usize = 1000;
/// Number of gaps kept for the convergence trace.
const TRACE_LEN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error(
        "no convergence after {iterations} iterations (gap {gap:e}); \
         lower bound self-converges at {k0:?}, upper bound at {k1:?}"
    )]
    NonConvergence {
        iterations: usize,
        gap: f64,
        k0: Option<usize>,
        k1: Option<usize>,
    },
    #[error("neither bound self-converges within {0} iterations")]
    NoSelfConvergence(usize),
    #[error("safety specifications take no target set ({0} target states)")]
    TargetInSafety(usize),
    #[error("verification requires an abstraction without inputs")]
    HasInputs,
    #[error("invalid options: {0}")]
    Options(String),
    #[error("policy has {got} entries for {expected} states or an input index out of range")]
    BadPolicy { expected: usize, got: usize },
    #[error("bracket violated at iteration {iteration}, state {state}: {detail}")]
    Bracket {
        iteration: usize,
        state: usize,
        detail: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecKind {
    Safety,
    Reach,
    ReachAvoid,
}

impl SpecKind {
    pub fn name(self) -> &'static str {
        match self {
            SpecKind::Safety => "safety",
            SpecKind::Reach => "reach",
            SpecKind::ReachAvoid => "reach-avoid",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "safety" => Some(SpecKind::Safety),
            "reach" => Some(SpecKind::Reach),
            "reach-avoid" => Some(SpecKind::ReachAvoid),
            _ => None,
        }
    }

    /// The objective actually iterated: safety runs avoid-reach.
    fn objective(self) -> Objective {
        match self {
            SpecKind::Safety => Objective::AvoidReach,
            SpecKind::Reach | SpecKind::ReachAvoid => Objective::Reach,
        }
    }
}

impl fmt::Display for SpecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which bound drives the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Pessimistic,
    Optimistic,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Pessimistic => "pessimistic",
            Mode::Optimistic => "optimistic",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "pessimistic" => Some(Mode::Pessimistic),
            "optimistic" => Some(Mode::Optimistic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Infinite,
    Finite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisOptions {
    pub mode: Mode,
    pub eps: f64,
    pub horizon: Horizon,
    pub max_iterations: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Pessimistic,
            eps: DEFAULT_EPS,
            horizon: Horizon::Infinite,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

impl SynthesisOptions {
    fn validate(&self) -> Result<(), SynthesisError> {
        match self.horizon {
            Horizon::Infinite if !(self.eps > 0.0) => {
                Err(SynthesisError::Options(format!("eps must be positive, got {}", self.eps)))
            }
            Horizon::Finite(0) => Err(SynthesisError::Options("horizon must be at least 1".into())),
            _ if self.max_iterations == 0 => {
                Err(SynthesisError::Options("max_iterations must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Objective iterated by the Bellman operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Reach the target while avoiding the avoid set: inputs maximize,
    /// disturbances minimize; the target slot weighs 1, the avoid slot 0.
    Reach,
    /// Reach the avoid set (or leave the domain): inputs minimize,
    /// disturbances maximize; the target slot weighs 0, the avoid slot 1.
    AvoidReach,
}

impl Objective {
    fn slot_weights(self) -> (f64, f64) {
        match self {
            Objective::Reach => (1.0, 0.0),
            Objective::AvoidReach => (0.0, 1.0),
        }
    }

    fn input_direction(self) -> Direction {
        match self {
            Objective::Reach => Direction::Max,
            Objective::AvoidReach => Direction::Min,
        }
    }
}

#[inline]
fn better(direction: Direction, a: f64, b: f64) -> bool {
    match direction {
        Direction::Max => a > b,
        Direction::Min => a < b,
    }
}

/// Row data and per-row lower sums shared by every iteration.
struct Operator<'a> {
    imdp: &'a Imdp,
    objective: Objective,
    lower_sum: Vec<f64>,
}

impl<'a> Operator<'a> {
    fn new(imdp: &'a Imdp, objective: Objective) -> Self {
        let lower_sum = (0..imdp.rows())
            .map(|r| imdp.t_min.row(r).iter().sum::<f64>() + imdp.r_min[r] + imdp.a_min[r])
            .collect();
        Self {
            imdp,
            objective,
            lower_sum,
        }
    }

    /// Destination weights: values, then the target slot, then the avoid slot.
    fn extended(&self, values: &[f64]) -> Vec<f64> {
        let (target, avoid) = self.objective.slot_weights();
        let mut ext = Vec::with_capacity(values.len() + 2);
        ext.extend_from_slice(values);
        ext.push(target);
        ext.push(avoid);
        ext
    }

    /// Greedy LP optimum of one row.
    #[inline]
    fn row_value(&self, row: usize, ext: &[f64], order: &[usize]) -> f64 {
        let m = self.imdp;
        let lo = m.t_min.row(row);
        let hi = m.t_max.row(row);
        let n = lo.len();
        let mut value: f64 = lo.iter().zip(ext).map(|(a, b)| a * b).sum();
        value += m.r_min[row] * ext[n] + m.a_min[row] * ext[n + 1];
        let mut slack = 1.0 - self.lower_sum[row];
        for &s in order {
            if slack <= 0.0 {
                break;
            }
            let gap = if s < n {
                hi[s] - lo[s]
            } else if s == n {
                m.r_max[row] - m.r_min[row]
            } else {
                m.a_max[row] - m.a_min[row]
            };
            let add = gap.min(slack);
            value += add * ext[s];
            slack -= add;
        }
        value.clamp(0.0, 1.0)
    }

    /// One Bellman update of `values`, writing new values and the optimizing
    /// input per state. With a policy only that input is evaluated.
    fn apply(
        &self,
        values: &[f64],
        lp: Direction,
        policy: Option<&[usize]>,
        out: &mut [f64],
        argbest: &mut [usize],
    ) {
        let ext = self.extended(values);
        let order = fill_order(&ext, lp);
        let ri = self.imdp.row_index();
        let u_dir = self.objective.input_direction();
        let w_dir = u_dir.flip();
        out.par_iter_mut()
            .zip(argbest.par_iter_mut())
            .enumerate()
            .for_each(|(k, (slot, arg))| {
                let inputs = match policy {
                    Some(p) => p[k]..p[k] + 1,
                    None => 0..ri.n_u,
                };
                let mut best = f64::NAN;
                let mut best_j = inputs.start;
                for j in inputs {
                    let mut worst = f64::NAN;
                    for i in 0..ri.n_w {
                        let v = self.row_value(ri.row(k, j, i), &ext, &order);
                        if worst.is_nan() || better(w_dir, v, worst) {
                            worst = v;
                        }
                    }
                    if best.is_nan() || better(u_dir, worst, best) {
                        best = worst;
                        best_j = j;
                    }
                }
                *slot = best;
                *arg = best_j;
            });
    }
}

/// Single Bellman step: returns the updated values and, per state, the
/// optimizing input (lowest index on ties). Inputs are maximized for
/// reachability and minimized for safety (avoid-reach); disturbances play
/// the opposite role.
pub fn bellman_step(
    imdp: &Imdp,
    values: &[f64],
    lp: Direction,
    spec: SpecKind,
    fixed_policy: Option<&[usize]>,
) -> Result<(Vec<f64>, Vec<usize>), SynthesisError> {
    check_policy(imdp, fixed_policy)?;
    let op = Operator::new(imdp, spec.objective());
    let mut out = vec![0.0; imdp.n_states()];
    let mut arg = vec![0; imdp.n_states()];
    op.apply(values, lp, fixed_policy, &mut out, &mut arg);
    Ok((out, arg))
}

fn check_policy(imdp: &Imdp, policy: Option<&[usize]>) -> Result<(), SynthesisError> {
    if let Some(p) = policy {
        if p.len() != imdp.n_states() || p.iter().any(|&j| j >= imdp.n_inputs()) {
            return Err(SynthesisError::BadPolicy {
                expected: imdp.n_states(),
                got: p.len(),
            });
        }
    }
    Ok(())
}

/// States from which the goal slot (target for reach, avoid for
/// avoid-reach) has positive upper probability along some path, whatever
/// the inputs, disturbances and distributions. Every other state has value
/// zero under any choice, so its upper iterate can start at zero; without
/// this, a loop that never reaches the goal would keep the upper iterate at
/// one forever.
pub fn can_reach_goal(imdp: &Imdp, objective: Objective) -> Vec<bool> {
    let n = imdp.n_states();
    let per_state = imdp.n_inputs() * imdp.n_disturbances();
    let goal = match objective {
        Objective::Reach => &imdp.r_max,
        Objective::AvoidReach => &imdp.a_max,
    };
    let mut reach = vec![false; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut queue = Vec::new();
    for k in 0..n {
        for row in k * per_state..(k + 1) * per_state {
            if goal[row] > 0.0 && !reach[k] {
                reach[k] = true;
                queue.push(k);
            }
            for (l, &p) in imdp.t_max.row(row).iter().enumerate() {
                if p > 0.0 && preds[l].last() != Some(&k) {
                    preds[l].push(k);
                }
            }
        }
    }
    while let Some(l) = queue.pop() {
        for &k in &preds[l] {
            if !reach[k] {
                reach[k] = true;
                queue.push(k);
            }
        }
    }
    reach
}

/// Stepwise interval iteration, exposing every iterate.
pub struct IntervalIteration<'a> {
    op: Operator<'a>,
    lp: Direction,
    fixed: Option<Vec<usize>>,
    v0: Vec<f64>,
    v1: Vec<f64>,
    next0: Vec<f64>,
    next1: Vec<f64>,
    policy: Vec<usize>,
    scratch: Vec<usize>,
    iteration: usize,
}

impl<'a> IntervalIteration<'a> {
    pub fn new(
        imdp: &'a Imdp,
        objective: Objective,
        lp: Direction,
        fixed_policy: Option<Vec<usize>>,
    ) -> Result<Self, SynthesisError> {
        check_policy(imdp, fixed_policy.as_deref())?;
        let n = imdp.n_states();
        let v1 = can_reach_goal(imdp, objective)
            .into_iter()
            .map(|reach| if reach { 1.0 } else { 0.0 })
            .collect();
        Ok(Self {
            op: Operator::new(imdp, objective),
            lp,
            policy: fixed_policy.clone().unwrap_or_else(|| vec![0; n]),
            fixed: fixed_policy,
            v0: vec![0.0; n],
            v1,
            next0: vec![0.0; n],
            next1: vec![0.0; n],
            scratch: vec![0; n],
            iteration: 0,
        })
    }

    /// Advances both iterates once and checks the bracket. The policy is
    /// taken from the lower iterate's update.
    pub fn step(&mut self) -> Result<f64, SynthesisError> {
        let fixed = self.fixed.as_deref();
        self.op
            .apply(&self.v0, self.lp, fixed, &mut self.next0, &mut self.policy);
        self.op
            .apply(&self.v1, self.lp, fixed, &mut self.next1, &mut self.scratch);
        self.iteration += 1;
        for k in 0..self.v0.len() {
            let (a, b) = (self.next0[k], self.next1[k]);
            let detail = if a > b + BRACKET_TOL {
                Some(format!("v0 = {a} exceeds v1 = {b}"))
            } else if a < self.v0[k] - BRACKET_TOL {
                Some(format!("v0 decreased from {} to {a}", self.v0[k]))
            } else if b > self.v1[k] + BRACKET_TOL {
                Some(format!("v1 increased from {} to {b}", self.v1[k]))
            } else {
                None
            };
            if let Some(detail) = detail {
                return Err(SynthesisError::Bracket {
                    iteration: self.iteration,
                    state: k,
                    detail,
                });
            }
        }
        std::mem::swap(&mut self.v0, &mut self.next0);
        std::mem::swap(&mut self.v1, &mut self.next1);
        Ok(self.gap())
    }

    pub fn gap(&self) -> f64 {
        self.v0
            .iter()
            .zip(&self.v1)
            .map(|(a, b)| b - a)
            .fold(0.0, f64::max)
    }

    pub fn v0(&self) -> &[f64] {
        &self.v0
    }

    pub fn v1(&self) -> &[f64] {
        &self.v1
    }

    pub fn policy(&self) -> &[usize] {
        &self.policy
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn into_parts(self) -> (Vec<f64>, Vec<f64>, Vec<usize>, usize) {
        (self.v0, self.v1, self.policy, self.iteration)
    }
}

/// Result of one phase.
struct Phase {
    v0: Vec<f64>,
    v1: Vec<f64>,
    /// Policy per step (finite horizon: index 0 is the first step taken).
    policy: Vec<Vec<usize>>,
    iterations: usize,
    /// Last gaps ‖V₁ − V₀‖∞, oldest first (empty for finite horizons).
    trace: Vec<f64>,
}

impl Phase {
    fn first_policy(&self) -> Vec<usize> {
        self.policy[0].clone()
    }
}

fn run_infinite(
    imdp: &Imdp,
    objective: Objective,
    lp: Direction,
    fixed: Option<Vec<usize>>,
    opts: &SynthesisOptions,
) -> Result<Phase, SynthesisError> {
    let mut it = IntervalIteration::new(imdp, objective, lp, fixed.clone())?;
    let mut gap = it.gap();
    let mut trace = VecDeque::with_capacity(TRACE_LEN);
    trace.push_back(gap);
    while gap > opts.eps {
        if it.iteration() >= opts.max_iterations {
            let d = self_convergence(imdp, objective, lp, fixed.as_deref(), opts.eps, opts.max_iterations);
            return Err(SynthesisError::NonConvergence {
                iterations: it.iteration(),
                gap,
                k0: d.0,
                k1: d.1,
            });
        }
        gap = it.step()?;
        if trace.len() == TRACE_LEN {
            trace.pop_front();
        }
        trace.push_back(gap);
        if it.iteration() % PROGRESS_EVERY == 0 {
            info!("iteration {}: gap {gap:e}", it.iteration());
        }
    }
    debug!("converged after {} iterations (gap {gap:e})", it.iteration());
    let (v0, v1, policy, iterations) = it.into_parts();
    Ok(Phase {
        v0,
        v1,
        policy: vec![policy],
        iterations,
        trace: trace.into(),
    })
}

/// K steps of value iteration from zeros. Without a fixed schedule the
/// optimizing input of each step is recorded; `schedule[t]` is the input to
/// apply with `K - t` steps to go, so `schedule[0]` is the first move.
fn run_finite(
    imdp: &Imdp,
    objective: Objective,
    lp: Direction,
    steps: usize,
    schedule: Option<&[Vec<usize>]>,
) -> Phase {
    let op = Operator::new(imdp, objective);
    let n = imdp.n_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut arg = vec![0; n];
    let mut recorded = vec![Vec::new(); steps];
    for t in 0..steps {
        // step t of the backward recursion decides the move with t + 1 steps to go
        let slot = steps - 1 - t;
        let fixed = schedule.map(|s| s[slot].as_slice());
        op.apply(&v, lp, fixed, &mut next, &mut arg);
        recorded[slot] = arg.clone();
        std::mem::swap(&mut v, &mut next);
    }
    Phase {
        v1: v.clone(),
        v0: v,
        policy: recorded,
        iterations: steps,
        trace: Vec::new(),
    }
}

/// Lower and upper probabilities of an objective plus the policy found.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
    /// Tail of the gap trace of each phase.
    pub trace: [Vec<f64>; 2],
}

/// Two-phase solve. Phase 1 uses the LP direction of the bound that drives
/// the policy and records the policy from the lower iterate; phase 2 fixes
/// that policy and solves with the opposite LP direction.
fn two_phase(
    imdp: &Imdp,
    objective: Objective,
    fixed: Option<Vec<usize>>,
    opts: &SynthesisOptions,
) -> Result<Bounds, SynthesisError> {
    opts.validate()?;
    // the bound that is "bad" for the controller drives a pessimistic policy
    let adverse = match objective {
        Objective::Reach => Direction::Min,
        Objective::AvoidReach => Direction::Max,
    };
    let lp1 = match opts.mode {
        Mode::Pessimistic => adverse,
        Mode::Optimistic => adverse.flip(),
    };
    let lp2 = lp1.flip();
    let (first, second) = match opts.horizon {
        Horizon::Infinite => {
            let first = run_infinite(imdp, objective, lp1, fixed.clone(), opts)?;
            let policy = fixed.unwrap_or_else(|| first.first_policy());
            let second = run_infinite(imdp, objective, lp2, Some(policy), opts)?;
            (first, second)
        }
        Horizon::Finite(k) => {
            let fixed_schedule = fixed.map(|p| vec![p; k]);
            let first = run_finite(imdp, objective, lp1, k, fixed_schedule.as_deref());
            let second = run_finite(imdp, objective, lp2, k, Some(&first.policy));
            (first, second)
        }
    };
    // Each phase reports the iterate facing the controller's concern: the
    // pessimistic reach bound comes from phase 1's lower iterate and the
    // optimistic one from phase 2's upper iterate, and symmetrically for the
    // other cases. `min_lp` is the min-LP value, `max_lp` the max-LP value.
    let (min_lp, max_lp) = match (objective, opts.mode) {
        (Objective::Reach, Mode::Pessimistic) => (first.v0, second.v1),
        (Objective::Reach, Mode::Optimistic) => (second.v0, first.v1),
        (Objective::AvoidReach, Mode::Pessimistic) => (second.v1, first.v0),
        (Objective::AvoidReach, Mode::Optimistic) => (first.v1, second.v0),
    };
    // both phases converge only to within eps, so the two bounds may cross
    // by that much; the lower one is pulled down to keep the pair ordered
    let iterations = first.iterations + second.iterations;
    let trace = [first.trace, second.trace];
    let policy = first.policy.into_iter().next().unwrap_or_default();
    let low: Vec<f64> = min_lp.iter().zip(&max_lp).map(|(a, b)| a.min(*b)).collect();
    Ok(Bounds {
        low,
        high: max_lp,
        policy,
        iterations,
        trace,
    })
}

/// Synthesis or verification result as a lookup table over safe states.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub spec: SpecKind,
    pub mode: Mode,
    pub eps: f64,
    pub horizon: Horizon,
    pub iterations: usize,
    pub state_space: Space,
    pub input_space: Option<Space>,
    /// Safe-state indices into the state space.
    pub states: Vec<usize>,
    /// Input index per safe state; `None` in verification mode.
    pub policy: Option<Vec<usize>>,
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
}

impl Controller {
    pub fn validate(&self) -> Result<(), String> {
        let n = self.states.len();
        if self.p_min.len() != n || self.p_max.len() != n {
            return Err("probability vectors do not match the state list".into());
        }
        if let Some(p) = &self.policy {
            let n_u = self.input_space.as_ref().map_or(1, Space::total);
            if p.len() != n || p.iter().any(|&j| j >= n_u) {
                return Err("policy entries are not valid input indices".into());
            }
        }
        for k in 0..n {
            let (a, b) = (self.p_min[k], self.p_max[k]);
            if !(0.0 <= a && a <= b && b <= 1.0) {
                return Err(format!("state {}: p_min {a} / p_max {b} out of order", self.states[k]));
            }
        }
        if self.states.iter().any(|&s| s >= self.state_space.total()) {
            return Err("state index out of range".into());
        }
        Ok(())
    }

    /// Position of a state index in the table.
    pub fn position(&self, state: usize) -> Option<usize> {
        self.states.binary_search(&state).ok()
    }

    /// Input point prescribed at continuous state `x`, if `x` quantizes to a
    /// safe state. The inner `None` means the controller has no inputs.
    pub fn input_at(&self, x: &[f64]) -> Result<Option<Option<Vec<f64>>>, GridError> {
        let index = self.state_space.quantize(x)?;
        let Some(k) = self.position(index) else {
            return Ok(None);
        };
        match (&self.policy, &self.input_space) {
            (Some(p), Some(space)) => Ok(Some(Some(space.rep_point(p[k])?))),
            _ => Ok(Some(None)),
        }
    }
}

fn controller(
    imdp: &Imdp,
    spec: SpecKind,
    opts: &SynthesisOptions,
    p_min: Vec<f64>,
    p_max: Vec<f64>,
    policy: Option<Vec<usize>>,
    iterations: usize,
) -> Controller {
    Controller {
        spec,
        mode: opts.mode,
        eps: opts.eps,
        horizon: opts.horizon,
        iterations,
        state_space: imdp.state_space.clone(),
        input_space: imdp.input_space.clone(),
        states: imdp.labels.safe.clone(),
        policy,
        p_min,
        p_max,
    }
}

/// Bounds on the probability of reaching the avoid set (including leaving
/// the domain), with the policy that minimizes it.
pub fn avoid_reach(imdp: &Imdp, opts: &SynthesisOptions) -> Result<Bounds, SynthesisError> {
    // pessimistic safety means pessimistic (high) avoid-reach
    two_phase(imdp, Objective::AvoidReach, None, opts)
}

/// Reachability or reach-avoid controller.
pub fn synthesize_reach(imdp: &Imdp, opts: &SynthesisOptions) -> Result<Controller, SynthesisError> {
    reach_traced(imdp, opts).map(|(c, _)| c)
}

fn reach_traced(imdp: &Imdp, opts: &SynthesisOptions) -> Result<(Controller, [Vec<f64>; 2]), SynthesisError> {
    let b = two_phase(imdp, Objective::Reach, None, opts)?;
    let spec = if imdp.labels.avoid.is_empty() {
        SpecKind::Reach
    } else {
        SpecKind::ReachAvoid
    };
    let c = controller(imdp, spec, opts, b.low, b.high, Some(b.policy), b.iterations);
    Ok((c, b.trace))
}

/// Safety controller: one minus the avoid-reach bounds.
pub fn synthesize_safe(imdp: &Imdp, opts: &SynthesisOptions) -> Result<Controller, SynthesisError> {
    safe_traced(imdp, opts).map(|(c, _)| c)
}

fn safe_traced(imdp: &Imdp, opts: &SynthesisOptions) -> Result<(Controller, [Vec<f64>; 2]), SynthesisError> {
    if !imdp.labels.target.is_empty() {
        return Err(SynthesisError::TargetInSafety(imdp.labels.target.len()));
    }
    let b = avoid_reach(imdp, opts)?;
    let (p_min, p_max) = complement(&b);
    let c = controller(imdp, SpecKind::Safety, opts, p_min, p_max, Some(b.policy), b.iterations);
    Ok((c, b.trace))
}

/// Safety bounds from avoid-reach bounds.
pub fn complement(b: &Bounds) -> (Vec<f64>, Vec<f64>) {
    (
        b.high.iter().map(|v| 1.0 - v).collect(),
        b.low.iter().map(|v| 1.0 - v).collect(),
    )
}

/// Dispatches on the specification kind.
pub fn synthesize(imdp: &Imdp, spec: SpecKind, opts: &SynthesisOptions) -> Result<Controller, SynthesisError> {
    synthesize_traced(imdp, spec, opts).map(|(c, _)| c)
}

/// Like [`synthesize`], also returning the last gaps ‖V₁ − V₀‖∞ of both
/// phases (empty for finite horizons).
pub fn synthesize_traced(
    imdp: &Imdp,
    spec: SpecKind,
    opts: &SynthesisOptions,
) -> Result<(Controller, [Vec<f64>; 2]), SynthesisError> {
    match spec {
        SpecKind::Safety => safe_traced(imdp, opts),
        SpecKind::Reach | SpecKind::ReachAvoid => reach_traced(imdp, opts),
    }
}

/// Bounds for an input-free abstraction (an interval Markov chain).
pub fn verify(imdp: &Imdp, spec: SpecKind, opts: &SynthesisOptions) -> Result<Controller, SynthesisError> {
    verify_traced(imdp, spec, opts).map(|(c, _)| c)
}

pub fn verify_traced(
    imdp: &Imdp,
    spec: SpecKind,
    opts: &SynthesisOptions,
) -> Result<(Controller, [Vec<f64>; 2]), SynthesisError> {
    if imdp.input_space.is_some() {
        return Err(SynthesisError::HasInputs);
    }
    let (mut c, trace) = synthesize_traced(imdp, spec, opts)?;
    c.policy = None;
    Ok((c, trace))
}

/// Per-bound self-convergence: the first iteration `k` at which
/// `max |V_b(k) - V_b(k-1)| <= eps`, for the lower (`k0`) and upper (`k1`)
/// iterate separately, using the phase-1 configuration of `mode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diagnosis {
    pub k0: Option<usize>,
    pub k1: Option<usize>,
}

pub fn diagnose_convergence(
    imdp: &Imdp,
    spec: SpecKind,
    mode: Mode,
    eps: f64,
    max_iterations: usize,
) -> Result<Diagnosis, SynthesisError> {
    let objective = spec.objective();
    let adverse = match objective {
        Objective::Reach => Direction::Min,
        Objective::AvoidReach => Direction::Max,
    };
    let lp = match mode {
        Mode::Pessimistic => adverse,
        Mode::Optimistic => adverse.flip(),
    };
    let (k0, k1) = self_convergence(imdp, objective, lp, None, eps, max_iterations);
    if k0.is_none() && k1.is_none() {
        return Err(SynthesisError::NoSelfConvergence(max_iterations));
    }
    Ok(Diagnosis { k0, k1 })
}

fn self_convergence(
    imdp: &Imdp,
    objective: Objective,
    lp: Direction,
    policy: Option<&[usize]>,
    eps: f64,
    max_iterations: usize,
) -> (Option<usize>, Option<usize>) {
    let op = Operator::new(imdp, objective);
    let n = imdp.n_states();
    let run = |start: f64| {
        let mut v = vec![start; n];
        let mut next = vec![0.0; n];
        let mut arg = vec![0; n];
        for k in 1..=max_iterations {
            op.apply(&v, lp, policy, &mut next, &mut arg);
            let delta = v
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if delta <= eps {
                return Some(k);
            }
            std::mem::swap(&mut v, &mut next);
        }
        None
    };
    (run(0.0), run(1.0))
}
