//! IMDP construction: interval bounds on one-step transition probabilities
//! between partition cells, computed row by row over a worker pool.

mod builder;
pub mod optimizer;

use thiserror::Error;

use crate::expr::ExprError;
use crate::grid::{GridError, LabeledStates, Space};
use crate::kernel::KernelError;

pub use builder::build_abstraction;
pub use optimizer::{optimize_over_cell, OptimizerOptions};

/// Row-sum slack tolerated by the IMDP invariants.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Largest row-sum violation the post-pass may repair.
pub const REPAIR_LIMIT: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AbstractionError {
    #[error("state space has no safe states")]
    NoSafeStates,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid options: {0}")]
    Options(String),
    #[error("objective is not finite at {point:?}")]
    NonFinite { point: Vec<f64> },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("row {row}, destination {dest}: {source}")]
    AtRow {
        row: usize,
        dest: String,
        #[source]
        source: Box<AbstractionError>,
    },
    #[error("row {row} violates the IMDP invariants: {detail}")]
    Invariant { row: usize, detail: String },
}

/// Dense row-major matrix of probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Bijection between `(safe position, input, disturbance)` and matrix rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowIndex {
    pub n_u: usize,
    pub n_w: usize,
}

impl RowIndex {
    #[inline]
    pub fn row(&self, k: usize, j: usize, i: usize) -> usize {
        (k * self.n_u + j) * self.n_w + i
    }

    #[inline]
    pub fn split(&self, row: usize) -> (usize, usize, usize) {
        let i = row % self.n_w;
        let rest = row / self.n_w;
        (rest / self.n_u, rest % self.n_u, i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbstractionOptions {
    /// Skip the lower-bound optimization wherever the upper bound is negligible.
    pub low_cost: bool,
    /// Per-start evaluation budget; `None` uses 200 per optimized dimension.
    pub optimizer_max_evals: Option<usize>,
    pub optimizer_tol: f64,
    /// Upper bounds at or below this are treated as zero for the lower bound.
    pub zero_cutoff: f64,
    /// Start points per optimization; `None` uses `1 + 2 * dims`.
    pub multistart: Option<usize>,
    /// Base seed for Monte Carlo integrals.
    pub seed: u64,
}

impl Default for AbstractionOptions {
    fn default() -> Self {
        Self {
            low_cost: false,
            optimizer_max_evals: None,
            optimizer_tol: 1e-8,
            zero_cutoff: 1e-12,
            multistart: None,
            seed: 0,
        }
    }
}

impl AbstractionOptions {
    pub fn validate(&self) -> Result<(), AbstractionError> {
        if !(self.zero_cutoff >= 0.0 && self.zero_cutoff < 1e-6) {
            return Err(AbstractionError::Options(format!(
                "zero_cutoff must lie in [0, 1e-6), got {}",
                self.zero_cutoff
            )));
        }
        if !(self.optimizer_tol > 0.0) {
            return Err(AbstractionError::Options("optimizer_tol must be positive".into()));
        }
        if self.optimizer_max_evals == Some(0) || self.multistart == Some(0) {
            return Err(AbstractionError::Options(
                "optimizer_max_evals and multistart must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn optimizer(&self, dims: usize) -> OptimizerOptions {
        let base = OptimizerOptions::for_dims(dims);
        OptimizerOptions {
            max_evals: self.optimizer_max_evals.unwrap_or(base.max_evals),
            tol: self.optimizer_tol,
            multistart: self.multistart.unwrap_or(base.multistart),
        }
    }
}

/// Interval MDP over the safe states, with target and avoid mass aggregated
/// into per-row vectors. An absent input or disturbance space counts as a
/// single dummy point.
#[derive(Debug, Clone, PartialEq)]
pub struct Imdp {
    pub state_space: Space,
    pub input_space: Option<Space>,
    pub disturb_space: Option<Space>,
    pub labels: LabeledStates,
    pub t_min: DenseMatrix,
    pub t_max: DenseMatrix,
    pub r_min: Vec<f64>,
    pub r_max: Vec<f64>,
    pub a_min: Vec<f64>,
    pub a_max: Vec<f64>,
}

impl Imdp {
    /// Assembles an IMDP from parts, checking shapes and invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_space: Space,
        input_space: Option<Space>,
        disturb_space: Option<Space>,
        labels: LabeledStates,
        t_min: DenseMatrix,
        t_max: DenseMatrix,
        r_min: Vec<f64>,
        r_max: Vec<f64>,
        a_min: Vec<f64>,
        a_max: Vec<f64>,
    ) -> Result<Self, AbstractionError> {
        let imdp = Self {
            state_space,
            input_space,
            disturb_space,
            labels,
            t_min,
            t_max,
            r_min,
            r_max,
            a_min,
            a_max,
        };
        imdp.check_shapes()?;
        imdp.check_invariants()?;
        Ok(imdp)
    }

    pub fn n_states(&self) -> usize {
        self.labels.safe.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.input_space.as_ref().map_or(1, Space::total)
    }

    pub fn n_disturbances(&self) -> usize {
        self.disturb_space.as_ref().map_or(1, Space::total)
    }

    pub fn rows(&self) -> usize {
        self.n_states() * self.n_inputs() * self.n_disturbances()
    }

    pub fn row_index(&self) -> RowIndex {
        RowIndex {
            n_u: self.n_inputs(),
            n_w: self.n_disturbances(),
        }
    }

    pub fn check_shapes(&self) -> Result<(), AbstractionError> {
        self.labels.validate(self.state_space.total())?;
        let rows = self.rows();
        let cols = self.n_states();
        if cols == 0 {
            return Err(AbstractionError::NoSafeStates);
        }
        for (name, m) in [("t_min", &self.t_min), ("t_max", &self.t_max)] {
            if m.rows != rows || m.cols != cols || m.data.len() != rows * cols {
                return Err(AbstractionError::Dimension(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    m.rows, m.cols
                )));
            }
        }
        for (name, v) in [
            ("r_min", &self.r_min),
            ("r_max", &self.r_max),
            ("a_min", &self.a_min),
            ("a_max", &self.a_max),
        ] {
            if v.len() != rows {
                return Err(AbstractionError::Dimension(format!(
                    "{name} has {} entries, expected {rows}",
                    v.len()
                )));
            }
        }
        Ok(())
    }

    /// Verifies entry ordering and the per-row feasibility sums.
    pub fn check_invariants(&self) -> Result<(), AbstractionError> {
        for row in 0..self.rows() {
            self.check_row(row)?;
        }
        Ok(())
    }

    pub fn check_row(&self, row: usize) -> Result<(), AbstractionError> {
        let bad = |detail: String| AbstractionError::Invariant { row, detail };
        let lo = self.t_min.row(row);
        let hi = self.t_max.row(row);
        for (c, (&a, &b)) in lo.iter().zip(hi).enumerate() {
            if !(0.0 <= a && a <= b && b <= 1.0) {
                return Err(bad(format!("t bounds [{a}, {b}] at column {c}")));
            }
        }
        let pairs = [
            ("r", self.r_min[row], self.r_max[row]),
            ("a", self.a_min[row], self.a_max[row]),
        ];
        for (name, a, b) in pairs {
            if !(0.0 <= a && a <= b && b <= 1.0) {
                return Err(bad(format!("{name} bounds [{a}, {b}]")));
            }
        }
        let low: f64 = lo.iter().sum::<f64>() + self.r_min[row] + self.a_min[row];
        let high: f64 = hi.iter().sum::<f64>() + self.r_max[row] + self.a_max[row];
        if low > 1.0 + ROW_SUM_TOL {
            return Err(bad(format!("lower bounds sum to {low}")));
        }
        if high < 1.0 - ROW_SUM_TOL {
            return Err(bad(format!("upper bounds sum to {high}")));
        }
        Ok(())
    }
}

/// Size of an abstraction before building it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostEstimate {
    /// Number of (state, input, disturbance) rows.
    pub rows: u64,
    /// Matrix entries per bound: rows times states.
    pub d: u64,
    /// Bytes for two dense matrices and six row vectors of 8-byte reals.
    pub bytes: u64,
    /// Set when a product overflowed and the figures are saturated.
    pub saturated: bool,
}

/// Problem size for `n_s` states, `n_u` inputs, `n_w` disturbances (0 = absent).
pub fn estimate_cost(n_s: u64, n_u: u64, n_w: u64) -> CostEstimate {
    let n_u = n_u.max(1);
    let n_w = n_w.max(1);
    let rows = n_s.checked_mul(n_u).and_then(|v| v.checked_mul(n_w));
    let d = rows.and_then(|r| r.checked_mul(n_s));
    let bytes = d
        .and_then(|d| d.checked_mul(16))
        .zip(rows.and_then(|r| r.checked_mul(48)))
        .and_then(|(m, v)| m.checked_add(v));
    let saturated = bytes.is_none();
    let (rows, d, bytes) = (
        rows.unwrap_or(u64::MAX),
        d.unwrap_or(u64::MAX),
        bytes.unwrap_or(u64::MAX),
    );
    CostEstimate {
        rows,
        d,
        bytes,
        saturated,
    }
}
