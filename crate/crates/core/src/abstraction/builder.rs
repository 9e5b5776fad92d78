//! Row-parallel IMDP assembly.
//!
//! Three evaluation strategies share one row layout:
//!
//! * **separable** — diagonal Gaussian noise and dynamics where every output
//!   coordinate depends on at most one (distinct) state variable. The box
//!   probability is then a product of one-dimensional factors, each a
//!   function of a single source coordinate, so the extrema over a source
//!   cell are products of 1-D extrema. Those are tabulated once per
//!   (output, source coordinate, input, disturbance) and rows are assembled
//!   by multiplication.
//! * **general** — diagonal Gaussian noise with arbitrary dynamics. The image
//!   of the source cell is enclosed by interval arithmetic; a destination
//!   whose mass is provably at most `zero_cutoff` is bounded without running
//!   the optimizer.
//! * **monte carlo** — full-covariance or custom noise; every probability is
//!   a seeded Monte Carlo integral optimized over the source cell.

use log::{debug, info};
use rayon::prelude::*;

use crate::expr::{DynamicsSpec, Env, Interval};
use crate::grid::{Cell, Label, LabeledStates, Space};
use crate::kernel::{cholesky, derive_seed, interval_mass, mc_box_probability, NoiseModel};
use crate::Direction;

use super::{
    optimize_over_cell, AbstractionError, AbstractionOptions, DenseMatrix, Imdp, OptimizerOptions,
    REPAIR_LIMIT, ROW_SUM_TOL,
};

/// Destination id used for the whole-domain integral in seed derivation.
const DOMAIN_DEST: u64 = u64::MAX;

/// Builds the IMDP on the current rayon pool. Rows are independent and each
/// one is computed sequentially, so the result does not depend on the number
/// of workers.
pub fn build_abstraction(
    dynamics: &DynamicsSpec,
    noise: &NoiseModel,
    state_space: &Space,
    input_space: Option<&Space>,
    disturb_space: Option<&Space>,
    labels: &LabeledStates,
    opts: &AbstractionOptions,
) -> Result<Imdp, AbstractionError> {
    opts.validate()?;
    let ctx = Context::new(
        dynamics,
        noise,
        state_space,
        input_space,
        disturb_space,
        labels,
        opts,
    )?;
    let n_s = labels.safe.len();
    let rows = n_s * ctx.n_u * ctx.n_w;
    info!(
        "building abstraction: {n_s} safe states, {} inputs, {} disturbances, {rows} rows ({} path)",
        ctx.n_u,
        ctx.n_w,
        ctx.path.name()
    );

    let factors = match &ctx.path {
        Path::Separable { sigma, sources } => Some(ctx.factor_table(sigma, sources)?),
        _ => None,
    };

    let mut t_min = DenseMatrix::zeros(rows, n_s);
    let mut t_max = DenseMatrix::zeros(rows, n_s);
    let scalars: Vec<RowScalars> = t_min
        .data
        .par_chunks_mut(n_s)
        .zip(t_max.data.par_chunks_mut(n_s))
        .enumerate()
        .map(|(row, (lo, hi))| {
            let mut acc = RowAcc::new(lo, hi);
            match (&ctx.path, &factors) {
                (Path::Separable { sources, .. }, Some(table)) => {
                    ctx.separable_row(row, sources, table, &mut acc)
                }
                (Path::General { sigma }, _) => ctx.general_row(row, sigma, &mut acc)?,
                (Path::MonteCarlo { marginal_sigma }, _) => {
                    ctx.monte_carlo_row(row, marginal_sigma.as_deref(), &mut acc)?
                }
                _ => unreachable!("factor table exists exactly for the separable path"),
            }
            acc.finish(row)
        })
        .collect::<Result<_, _>>()?;

    let mut r_min = Vec::with_capacity(rows);
    let mut r_max = Vec::with_capacity(rows);
    let mut a_min = Vec::with_capacity(rows);
    let mut a_max = Vec::with_capacity(rows);
    for s in &scalars {
        r_min.push(s.r_min);
        r_max.push(s.r_max);
        a_min.push(s.a_min);
        a_max.push(s.a_max);
    }
    log_sparsity(&t_max);

    Imdp::new(
        state_space.clone(),
        input_space.cloned(),
        disturb_space.cloned(),
        labels.clone(),
        t_min,
        t_max,
        r_min,
        r_max,
        a_min,
        a_max,
    )
}

enum Path {
    Separable {
        sigma: Vec<f64>,
        sources: Vec<Option<usize>>,
    },
    General {
        sigma: Vec<f64>,
    },
    MonteCarlo {
        /// Marginal standard deviations, when known, for pruning.
        marginal_sigma: Option<Vec<f64>>,
    },
}

impl Path {
    fn name(&self) -> &'static str {
        match self {
            Path::Separable { .. } => "separable",
            Path::General { .. } => "general",
            Path::MonteCarlo { .. } => "monte carlo",
        }
    }
}

struct Context<'a> {
    dynamics: &'a DynamicsSpec,
    noise: &'a NoiseModel,
    space: &'a Space,
    labels: &'a LabeledStates,
    opts: &'a AbstractionOptions,
    label_table: Vec<Label>,
    safe_pos: Vec<Option<usize>>,
    inputs: Vec<Vec<f64>>,
    disturbances: Vec<Vec<f64>>,
    n_u: usize,
    n_w: usize,
    path: Path,
}

fn lattice_points(space: Option<&Space>) -> Vec<Vec<f64>> {
    match space {
        None => vec![Vec::new()],
        Some(s) => (0..s.total())
            .map(|i| {
                let mut p = vec![0.0; s.dims()];
                s.rep_point_into(i, &mut p);
                p
            })
            .collect(),
    }
}

impl<'a> Context<'a> {
    fn new(
        dynamics: &'a DynamicsSpec,
        noise: &'a NoiseModel,
        space: &'a Space,
        input_space: Option<&Space>,
        disturb_space: Option<&Space>,
        labels: &'a LabeledStates,
        opts: &'a AbstractionOptions,
    ) -> Result<Self, AbstractionError> {
        let dims = dynamics.dims();
        let n = space.dims();
        let check = |what: &str, expected: usize, got: usize| {
            if expected == got {
                Ok(())
            } else {
                Err(AbstractionError::Dimension(format!(
                    "{what}: dynamics expect {expected} dimensions, got {got}"
                )))
            }
        };
        check("state space", dims.state, n)?;
        check("input space", dims.input, input_space.map_or(0, Space::dims))?;
        check("disturbance space", dims.disturb, disturb_space.map_or(0, Space::dims))?;
        check("noise model", n, noise.dims())?;
        labels.validate(space.total())?;
        if labels.safe.is_empty() {
            return Err(AbstractionError::NoSafeStates);
        }
        let inputs = lattice_points(input_space);
        let disturbances = lattice_points(disturb_space);
        let path = match noise {
            NoiseModel::DiagonalNormal { sigma } => match dynamics.separable_sources() {
                Some(sources) => Path::Separable {
                    sigma: sigma.clone(),
                    sources,
                },
                None => Path::General {
                    sigma: sigma.clone(),
                },
            },
            NoiseModel::FullNormal { inv_cov, .. } => Path::MonteCarlo {
                marginal_sigma: Some(marginal_sigma(inv_cov, n)?),
            },
            NoiseModel::Custom { .. } => Path::MonteCarlo {
                marginal_sigma: None,
            },
        };
        Ok(Self {
            dynamics,
            noise,
            space,
            labels,
            opts,
            label_table: labels.label_table(),
            safe_pos: labels.safe_positions(),
            n_u: inputs.len(),
            n_w: disturbances.len(),
            inputs,
            disturbances,
            path,
        })
    }

    fn split(&self, row: usize) -> (usize, usize, usize) {
        let i = row % self.n_w;
        let rest = row / self.n_w;
        (rest / self.n_u, rest % self.n_u, i)
    }

    fn source_cell(&self, k: usize) -> Cell {
        let mut center = vec![0.0; self.space.dims()];
        self.space.rep_point_into(self.labels.safe[k], &mut center);
        Cell::around(&center, self.space.eta())
    }

    /// Destination interval of lattice position `c` along dimension `d`.
    #[inline]
    fn dest_interval(&self, d: usize, c: usize) -> (f64, f64) {
        let center = self.space.axis_value(d, c);
        let half = self.space.eta()[d] / 2.0;
        (center - half, center + half)
    }

    fn domain_interval(&self, d: usize) -> (f64, f64) {
        let half = self.space.eta()[d] / 2.0;
        (self.space.lb()[d] - half, self.space.ub()[d] + half)
    }

    fn dest_cell(&self, l: usize) -> Cell {
        let n = self.space.dims();
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for d in 0..n {
            (lo[d], hi[d]) = self.dest_interval(d, self.space.coord_index(l, d));
        }
        Cell::new(lo, hi)
    }

    fn optimizer(&self, free_dims: usize) -> OptimizerOptions {
        self.opts.optimizer(free_dims)
    }

    fn at_row(row: usize, dest: impl Into<String>) -> impl FnOnce(AbstractionError) -> AbstractionError {
        move |e| AbstractionError::AtRow {
            row,
            dest: dest.into(),
            source: Box::new(e),
        }
    }

    // ---- separable path -------------------------------------------------

    /// One-dimensional factor extrema for every (output, source coordinate,
    /// input, disturbance), computed in parallel in a fixed order.
    fn factor_table(
        &self,
        sigma: &[f64],
        sources: &[Option<usize>],
    ) -> Result<Vec<Vec<Factor>>, AbstractionError> {
        let n = self.space.dims();
        let inner = self.n_u * self.n_w;
        (0..n)
            .map(|d| {
                let n_src = sources[d].map_or(1, |s| self.space.counts()[s]);
                (0..n_src * inner)
                    .into_par_iter()
                    .map(|key| {
                        let (sc, rest) = (key / inner, key % inner);
                        let (j, i) = (rest / self.n_w, rest % self.n_w);
                        self.factor(d, sigma[d], sources[d], sc, j, i)
                            .map_err(|e| self.factor_error(e, d, sources[d], sc, j, i))
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect()
    }

    /// Attributes a factor failure to the first row that uses the factor.
    fn factor_error(
        &self,
        e: AbstractionError,
        d: usize,
        source: Option<usize>,
        sc: usize,
        j: usize,
        i: usize,
    ) -> AbstractionError {
        let k = self
            .labels
            .safe
            .iter()
            .position(|&state| source.is_none_or(|s| self.space.coord_index(state, s) == sc));
        match k {
            Some(k) => Self::at_row((k * self.n_u + j) * self.n_w + i, format!("(factor of f{})", d + 1))(e),
            None => e,
        }
    }

    fn factor(
        &self,
        d: usize,
        sigma: f64,
        source: Option<usize>,
        sc: usize,
        j: usize,
        i: usize,
    ) -> Result<Factor, AbstractionError> {
        let n = self.space.dims();
        let expr = &self.dynamics.exprs()[d];
        let (u, w) = (&self.inputs[j], &self.disturbances[i]);
        let cell = match source {
            Some(s) => {
                let c = self.space.axis_value(s, sc);
                let h = self.space.eta()[s] / 2.0;
                Cell::new(vec![c - h], vec![c + h])
            }
            None => Cell::point(&[0.0]),
        };
        let mut x = vec![0.0; n];
        let mut mean_at = |t: f64| -> Result<f64, AbstractionError> {
            if let Some(s) = source {
                x[s] = t;
            }
            let m = expr.eval(&Env::new(&x, u, w))?;
            if m.is_finite() {
                Ok(m)
            } else {
                Err(AbstractionError::NonFinite { point: x.clone() })
            }
        };
        let opt = self.optimizer(1);
        let mut extrema = |lo: f64, hi: f64| -> Result<(f64, f64), AbstractionError> {
            let mut objective = |p: &[f64]| Ok(interval_mass(lo, hi, mean_at(p[0])?, sigma));
            let max = optimize_over_cell(&mut objective, &cell, Direction::Max, &opt)?;
            let min = optimize_over_cell(&mut objective, &cell, Direction::Min, &opt)?;
            Ok((min.min(max), max.max(min)))
        };
        let counts = self.space.counts()[d];
        let mut lo = Vec::with_capacity(counts);
        let mut hi = Vec::with_capacity(counts);
        for c in 0..counts {
            let (a, b) = self.dest_interval(d, c);
            let (mn, mx) = extrema(a, b)?;
            lo.push(mn);
            hi.push(mx);
        }
        let (a, b) = self.domain_interval(d);
        let domain = extrema(a, b)?;
        Ok(Factor { lo, hi, domain })
    }

    fn separable_row(
        &self,
        row: usize,
        sources: &[Option<usize>],
        table: &[Vec<Factor>],
        acc: &mut RowAcc<'_>,
    ) {
        let (k, j, i) = self.split(row);
        let state = self.labels.safe[k];
        let inner = self.n_u * self.n_w;
        let factors: Vec<&Factor> = (0..self.space.dims())
            .map(|d| {
                let sc = sources[d].map_or(0, |s| self.space.coord_index(state, s));
                &table[d][sc * inner + j * self.n_w + i]
            })
            .collect();
        let lo: Vec<&[f64]> = factors.iter().map(|f| f.lo.as_slice()).collect();
        let hi: Vec<&[f64]> = factors.iter().map(|f| f.hi.as_slice()).collect();
        let low_cost = self.opts.low_cost;
        let cutoff = self.opts.zero_cutoff;
        for_each_dest(self.space.counts(), &lo, &hi, |l, mut pl, ph| {
            if low_cost && ph <= cutoff {
                pl = 0.0;
            }
            acc.record(self.label_table[l], self.safe_pos[l], pl, ph);
        });
        let dom_min: f64 = factors.iter().map(|f| f.domain.0).product();
        let dom_max: f64 = factors.iter().map(|f| f.domain.1).product();
        acc.set_domain(dom_min, dom_max);
    }

    // ---- general diagonal path ------------------------------------------

    fn general_row(
        &self,
        row: usize,
        sigma: &[f64],
        acc: &mut RowAcc<'_>,
    ) -> Result<(), AbstractionError> {
        let (k, j, i) = self.split(row);
        let (u, w) = (&self.inputs[j], &self.disturbances[i]);
        let cell = self.source_cell(k);
        let n = self.space.dims();
        let enclosure = self.mean_enclosure(&cell, u, w);
        let bounds = self.pruning_bounds(&enclosure, sigma);
        let free = cell.lo.iter().zip(&cell.hi).filter(|(a, b)| b > a).count();
        let opt = self.optimizer(free);

        let mut mean = vec![0.0; n];
        let mut mass = |x: &[f64], lo: &[f64], hi: &[f64]| -> Result<f64, AbstractionError> {
            self.dynamics.eval_into(x, u, w, &mut mean)?;
            if mean.iter().any(|m| !m.is_finite()) {
                return Err(AbstractionError::NonFinite { point: x.to_vec() });
            }
            let mut p = 1.0;
            for d in 0..n {
                p *= interval_mass(lo[d], hi[d], mean[d], sigma[d]);
                if p == 0.0 {
                    break;
                }
            }
            Ok(p)
        };

        for (l, &bound) in bounds.iter().enumerate() {
            let label = self.label_table[l];
            if bound <= self.opts.zero_cutoff {
                acc.record(label, self.safe_pos[l], 0.0, bound);
                continue;
            }
            let dest = self.dest_cell(l);
            let (lo, hi) = self
                .extrema(&cell, &opt, |x| mass(x, &dest.lo, &dest.hi))
                .map_err(Self::at_row(row, format!("state {l}")))?;
            acc.record(label, self.safe_pos[l], lo, hi);
        }
        let domain = self.space.domain();
        let (dmin, dmax) = self
            .optimize_both(&cell, &opt, |x| mass(x, &domain.lo, &domain.hi))
            .map_err(Self::at_row(row, "domain"))?;
        acc.set_domain(dmin, dmax);
        Ok(())
    }

    fn mean_enclosure(&self, cell: &Cell, u: &[f64], w: &[f64]) -> Vec<Interval> {
        let boxed: Vec<Interval> = cell
            .lo
            .iter()
            .zip(&cell.hi)
            .map(|(&a, &b)| Interval::new(a, b))
            .collect();
        self.dynamics.eval_interval(&boxed, u, w)
    }

    /// Upper bound on each destination's mass: per dimension, the mass of a
    /// Gaussian over an interval is largest when its mean is as close to the
    /// interval's center as the enclosure allows.
    fn pruning_bounds(&self, enclosure: &[Interval], sigma: &[f64]) -> Vec<f64> {
        let n = self.space.dims();
        let axes: Vec<Vec<f64>> = (0..n)
            .map(|d| {
                let m = enclosure[d];
                (0..self.space.counts()[d])
                    .map(|c| {
                        if !(m.lo.is_finite() && m.hi.is_finite()) {
                            return 1.0;
                        }
                        let (a, b) = self.dest_interval(d, c);
                        let nearest = (0.5 * (a + b)).clamp(m.lo, m.hi);
                        interval_mass(a, b, nearest, sigma[d])
                    })
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = axes.iter().map(Vec::as_slice).collect();
        let mut out = vec![0.0; self.space.total()];
        for_each_dest(self.space.counts(), &refs, &refs, |l, _, p| out[l] = p);
        out
    }

    /// Max first; the min is skipped in low-cost mode when the max is negligible.
    fn extrema<F>(&self, cell: &Cell, opt: &OptimizerOptions, f: F) -> Result<(f64, f64), AbstractionError>
    where
        F: FnMut(&[f64]) -> Result<f64, AbstractionError>,
    {
        let mut f = f;
        let max = optimize_over_cell(&mut f, cell, Direction::Max, opt)?;
        if self.opts.low_cost && max <= self.opts.zero_cutoff {
            return Ok((0.0, max));
        }
        let min = optimize_over_cell(&mut f, cell, Direction::Min, opt)?;
        Ok((min.min(max), max.max(min)))
    }

    fn optimize_both<F>(&self, cell: &Cell, opt: &OptimizerOptions, f: F) -> Result<(f64, f64), AbstractionError>
    where
        F: FnMut(&[f64]) -> Result<f64, AbstractionError>,
    {
        let mut f = f;
        let max = optimize_over_cell(&mut f, cell, Direction::Max, opt)?;
        let min = optimize_over_cell(&mut f, cell, Direction::Min, opt)?;
        Ok((min.min(max), max.max(min)))
    }

    // ---- monte carlo path -----------------------------------------------

    fn monte_carlo_row(
        &self,
        row: usize,
        marginal: Option<&[f64]>,
        acc: &mut RowAcc<'_>,
    ) -> Result<(), AbstractionError> {
        let (k, j, i) = self.split(row);
        let (u, w) = (&self.inputs[j], &self.disturbances[i]);
        let cell = self.source_cell(k);
        let n = self.space.dims();
        let bounds = match marginal {
            Some(sigma) => self.marginal_bounds(&self.mean_enclosure(&cell, u, w), sigma),
            None => vec![1.0; self.space.total()],
        };
        let free = cell.lo.iter().zip(&cell.hi).filter(|(a, b)| b > a).count();
        let opt = self.optimizer(free);

        let mut mean = vec![0.0; n];
        let mut mass = |x: &[f64], dest: &Cell, seed: u64| -> Result<f64, AbstractionError> {
            self.dynamics.eval_into(x, u, w, &mut mean)?;
            if mean.iter().any(|m| !m.is_finite()) {
                return Err(AbstractionError::NonFinite { point: x.to_vec() });
            }
            Ok(mc_box_probability(self.noise, &mean, dest, seed)?.estimate)
        };

        for (l, &bound) in bounds.iter().enumerate() {
            let label = self.label_table[l];
            if bound <= self.opts.zero_cutoff {
                acc.record(label, self.safe_pos[l], 0.0, bound);
                continue;
            }
            let dest = self.dest_cell(l);
            let seed = derive_seed(self.opts.seed, row as u64, l as u64);
            let (lo, hi) = self
                .extrema(&cell, &opt, |x| mass(x, &dest, seed))
                .map_err(Self::at_row(row, format!("state {l}")))?;
            acc.record(label, self.safe_pos[l], lo, hi);
        }
        let domain = self.space.domain();
        let seed = derive_seed(self.opts.seed, row as u64, DOMAIN_DEST);
        let (dmin, dmax) = self
            .optimize_both(&cell, &opt, |x| mass(x, &domain, seed))
            .map_err(Self::at_row(row, "domain"))?;
        acc.set_domain(dmin, dmax);
        Ok(())
    }

    /// A box's mass never exceeds the mass of any one of its marginal slabs.
    fn marginal_bounds(&self, enclosure: &[Interval], sigma: &[f64]) -> Vec<f64> {
        let n = self.space.dims();
        let axes: Vec<Vec<f64>> = (0..n)
            .map(|d| {
                let m = enclosure[d];
                (0..self.space.counts()[d])
                    .map(|c| {
                        if !(m.lo.is_finite() && m.hi.is_finite()) {
                            return 1.0;
                        }
                        let (a, b) = self.dest_interval(d, c);
                        interval_mass(a, b, (0.5 * (a + b)).clamp(m.lo, m.hi), sigma[d])
                    })
                    .collect()
            })
            .collect();
        (0..self.space.total())
            .map(|l| {
                (0..n)
                    .map(|d| axes[d][self.space.coord_index(l, d)])
                    .fold(1.0, f64::min)
            })
            .collect()
    }
}

/// Standard deviations of the marginals of N(0, inv_cov^-1).
fn marginal_sigma(inv_cov: &[f64], n: usize) -> Result<Vec<f64>, AbstractionError> {
    // inv_cov = L L^T, so Cov = L^-T L^-1 and Cov_dd = sum_k (L^-1)_kd^2
    let l = cholesky(inv_cov, n)?;
    let mut linv = vec![0.0; n * n];
    for col in 0..n {
        for r in col..n {
            let mut s = if r == col { 1.0 } else { 0.0 };
            for k in col..r {
                s -= l[r * n + k] * linv[k * n + col];
            }
            linv[r * n + col] = s / l[r * n + r];
        }
    }
    Ok((0..n)
        .map(|d| (0..n).map(|k| linv[k * n + d].powi(2)).sum::<f64>().sqrt())
        .collect())
}

/// Per-dimension 1-D extrema of one factor.
struct Factor {
    lo: Vec<f64>,
    hi: Vec<f64>,
    domain: (f64, f64),
}

/// Walks every destination in flat-index order, passing the products of the
/// per-dimension `lo` and `hi` factors. Prefix products are reused so each
/// step costs one multiplication per changed dimension.
fn for_each_dest(counts: &[usize], lo: &[&[f64]], hi: &[&[f64]], mut emit: impl FnMut(usize, f64, f64)) {
    let n = counts.len();
    let total: usize = counts.iter().product();
    let mut coords = vec![0usize; n];
    let mut plo = vec![1.0; n + 1];
    let mut phi = vec![1.0; n + 1];
    let refresh = |from: usize, coords: &[usize], plo: &mut [f64], phi: &mut [f64]| {
        for d in from..n {
            plo[d + 1] = plo[d] * lo[d][coords[d]];
            phi[d + 1] = phi[d] * hi[d][coords[d]];
        }
    };
    refresh(0, &coords, &mut plo, &mut phi);
    for l in 0..total {
        emit(l, plo[n], phi[n]);
        let mut d = n;
        while d > 0 {
            d -= 1;
            coords[d] += 1;
            if coords[d] < counts[d] {
                break;
            }
            coords[d] = 0;
        }
        refresh(d, &coords, &mut plo, &mut phi);
    }
}

struct RowScalars {
    r_min: f64,
    r_max: f64,
    a_min: f64,
    a_max: f64,
}

/// Accumulates one row: safe destinations go to the matrix slices, target
/// and avoid masses are summed, and the whole-domain extrema give leakage.
struct RowAcc<'a> {
    t_lo: &'a mut [f64],
    t_hi: &'a mut [f64],
    r: (f64, f64),
    avoid: (f64, f64),
    domain: (f64, f64),
}

impl<'a> RowAcc<'a> {
    fn new(t_lo: &'a mut [f64], t_hi: &'a mut [f64]) -> Self {
        Self {
            t_lo,
            t_hi,
            r: (0.0, 0.0),
            avoid: (0.0, 0.0),
            domain: (1.0, 1.0),
        }
    }

    #[inline]
    fn record(&mut self, label: Label, pos: Option<usize>, lo: f64, hi: f64) {
        let lo = lo.clamp(0.0, 1.0);
        let hi = hi.clamp(0.0, 1.0);
        let (lo, hi) = (lo.min(hi), hi.max(lo));
        match label {
            Label::Safe => {
                let k = pos.expect("safe state has a position");
                self.t_lo[k] = lo;
                self.t_hi[k] = hi;
            }
            Label::Target => {
                self.r.0 += lo;
                self.r.1 += hi;
            }
            Label::Avoid => {
                self.avoid.0 += lo;
                self.avoid.1 += hi;
            }
        }
    }

    fn set_domain(&mut self, min: f64, max: f64) {
        let min = min.clamp(0.0, 1.0);
        let max = max.clamp(0.0, 1.0);
        self.domain = (min.min(max), max.max(min));
    }

    /// Clamps the row into a valid IMDP row. A lower-sum excess is taken out
    /// of the leakage part of `a_min` first; a remainder up to the repair
    /// limit is removed proportionally from the other lower bounds. An
    /// upper-sum deficit is added to `a_max`, which only widens the interval.
    fn finish(self, row: usize) -> Result<RowScalars, AbstractionError> {
        let t_lo = self.t_lo;
        let t_hi = self.t_hi;
        let mut r_min = self.r.0.min(1.0);
        let r_max = self.r.1.min(1.0);
        let mut avoid_min = self.avoid.0.min(1.0);
        let avoid_max = self.avoid.1.min(1.0);
        let mut leak_min = (1.0 - self.domain.1).max(0.0);
        let leak_max = (1.0 - self.domain.0).max(0.0);
        if leak_min + avoid_min > 1.0 {
            leak_min = 1.0 - avoid_min;
        }
        let mut a_max = (leak_max + avoid_max).min(1.0);

        let t_low: f64 = t_lo.iter().sum();
        let low = t_low + r_min + avoid_min + leak_min;
        if low > 1.0 {
            let mut excess = low - 1.0;
            let cut = excess.min(leak_min);
            leak_min -= cut;
            excess -= cut;
            if excess > 0.0 {
                if excess > REPAIR_LIMIT {
                    return Err(AbstractionError::Invariant {
                        row,
                        detail: format!("lower bounds exceed one by {excess:e} beyond the leakage"),
                    });
                }
                let others = t_low + r_min + avoid_min;
                let scale = (others - excess) / others;
                t_lo.iter_mut().for_each(|v| *v *= scale);
                r_min *= scale;
                avoid_min *= scale;
                debug!("row {row}: scaled lower bounds by {scale}");
            }
        }
        let a_min = (leak_min + avoid_min).min(a_max);

        let high: f64 = t_hi.iter().sum::<f64>() + r_max + a_max;
        if high < 1.0 {
            a_max = (a_max + (1.0 - high)).min(1.0);
        }
        let low: f64 = t_lo.iter().sum::<f64>() + r_min + a_min;
        if low > 1.0 + ROW_SUM_TOL {
            return Err(AbstractionError::Invariant {
                row,
                detail: format!("lower bounds sum to {low} after repair"),
            });
        }
        Ok(RowScalars {
            r_min,
            r_max,
            a_min,
            a_max,
        })
    }
}

fn log_sparsity(t_max: &DenseMatrix) {
    const EDGES: [f64; 4] = [1e-12, 1e-9, 1e-6, 1e-3];
    let mut counts = [0usize; EDGES.len() + 2];
    for &v in &t_max.data {
        let bucket = if v == 0.0 {
            0
        } else {
            1 + EDGES.iter().take_while(|&&e| v > e).count()
        };
        counts[bucket] += 1;
    }
    info!(
        "t_max sparsity: zero {}, <=1e-12 {}, <=1e-9 {}, <=1e-6 {}, <=1e-3 {}, >1e-3 {}",
        counts[0], counts[1], counts[2], counts[3], counts[4], counts[5]
    );
}
