//! Box-constrained Nelder-Mead with multistart.
//!
//! Iterates are clamped into the cell before every evaluation, so the value
//! returned is always attained at some feasible point: a max is never above
//! the true max, a min never below the true min.

use crate::grid::Cell;
use crate::Direction;

use super::AbstractionError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    /// Objective evaluations allowed per start point.
    pub max_evals: usize,
    /// Convergence threshold on the spread of simplex values.
    pub tol: f64,
    /// Number of start points (cell center first, then corners).
    pub multistart: usize,
}

impl OptimizerOptions {
    pub fn for_dims(dims: usize) -> Self {
        let dims = dims.max(1);
        Self {
            max_evals: 200 * dims,
            tol: 1e-8,
            multistart: 1 + 2 * dims,
        }
    }
}

/// Relative simplex extent (per unit of cell width) below which a start ends.
const EXTENT_TOL: f64 = 1e-7;

/// Fresh simplices built around the incumbent per start point.
const MAX_RESTARTS: usize = 4;

/// Center first, then corners: all-low, all-high, and single flips of each.
pub fn start_points(cell: &Cell, count: usize) -> Vec<Vec<f64>> {
    let n = cell.dims();
    let mut out: Vec<Vec<f64>> = vec![cell.center()];
    let push = |p: Vec<f64>, out: &mut Vec<Vec<f64>>| {
        if !out.contains(&p) {
            out.push(p);
        }
    };
    let low = cell.lo.clone();
    let high = cell.hi.clone();
    let mut candidates = vec![low.clone(), high.clone()];
    for d in 0..n {
        let mut a = low.clone();
        a[d] = cell.hi[d];
        candidates.push(a);
        let mut b = high.clone();
        b[d] = cell.lo[d];
        candidates.push(b);
    }
    for c in candidates {
        if out.len() >= count.max(1) {
            break;
        }
        push(c, &mut out);
    }
    out.truncate(count.max(1));
    out
}

/// Approximate min or max of `objective` over `cell`.
pub fn optimize_over_cell<F>(
    mut objective: F,
    cell: &Cell,
    direction: Direction,
    opts: &OptimizerOptions,
) -> Result<f64, AbstractionError>
where
    F: FnMut(&[f64]) -> Result<f64, AbstractionError>,
{
    let sign = match direction {
        Direction::Min => 1.0,
        Direction::Max => -1.0,
    };
    let free: Vec<usize> = (0..cell.dims())
        .filter(|&d| cell.hi[d] > cell.lo[d])
        .collect();
    let mut point = cell.center();
    let mut eval = |free_coords: &[f64], point: &mut Vec<f64>| -> Result<f64, AbstractionError> {
        for (slot, &d) in free.iter().enumerate() {
            point[d] = free_coords[slot].clamp(cell.lo[d], cell.hi[d]);
        }
        let v = objective(point)?;
        if !v.is_finite() {
            return Err(AbstractionError::NonFinite {
                point: point.clone(),
            });
        }
        Ok(sign * v)
    };

    let mut best = f64::INFINITY;
    for start in start_points(cell, opts.multistart) {
        let mut s: Vec<f64> = free.iter().map(|&d| start[d]).collect();
        let mut v = f64::INFINITY;
        // restart from the best vertex until a fresh simplex stops improving;
        // projection can flatten a simplex against a face of the box
        for _ in 0..MAX_RESTARTS {
            let (fv, at) = nelder_mead(&mut eval, &mut point, &s, cell, &free, opts)?;
            let improved = fv < v - opts.tol;
            v = v.min(fv);
            s = at;
            if !improved {
                break;
            }
        }
        best = best.min(v);
        if free.is_empty() {
            break;
        }
    }
    Ok(sign * best)
}

fn nelder_mead<E>(
    eval: &mut E,
    point: &mut Vec<f64>,
    start: &[f64],
    cell: &Cell,
    free: &[usize],
    opts: &OptimizerOptions,
) -> Result<(f64, Vec<f64>), AbstractionError>
where
    E: FnMut(&[f64], &mut Vec<f64>) -> Result<f64, AbstractionError>,
{
    let k = free.len();
    let f0 = eval(start, point)?;
    if k == 0 {
        return Ok((f0, Vec::new()));
    }
    let width: Vec<f64> = free.iter().map(|&d| cell.hi[d] - cell.lo[d]).collect();
    let clamp = |v: &mut [f64]| {
        for (slot, &d) in free.iter().enumerate() {
            v[slot] = v[slot].clamp(cell.lo[d], cell.hi[d]);
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k + 1);
    simplex.push((start.to_vec(), f0));
    for i in 0..k {
        let mut v = start.to_vec();
        let step = 0.25 * width[i];
        let d = free[i];
        v[i] = if v[i] + step <= cell.hi[d] {
            v[i] + step
        } else {
            v[i] - step
        };
        let f = eval(&v, point)?;
        simplex.push((v, f));
    }
    let mut evals = k + 1;

    let mut centroid = vec![0.0; k];
    let mut trial = vec![0.0; k];
    let mut trial2 = vec![0.0; k];
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[k].1;
        let extent = simplex[1..]
            .iter()
            .flat_map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .zip(&width)
                    .map(|((a, b), w)| (a - b).abs() / w)
            })
            .fold(0.0, f64::max);
        if f_worst - f_best <= opts.tol && extent <= EXTENT_TOL.max(opts.tol) {
            break;
        }
        if extent <= 1e-15 {
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for (v, _) in &simplex[..k] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / k as f64;
            }
        }
        let worst = simplex[k].0.clone();
        for i in 0..k {
            trial[i] = centroid[i] + (centroid[i] - worst[i]);
        }
        clamp(&mut trial);
        let fr = eval(&trial, point)?;
        evals += 1;

        if fr < f_best {
            for i in 0..k {
                trial2[i] = centroid[i] + 2.0 * (trial[i] - centroid[i]);
            }
            clamp(&mut trial2);
            let fe = eval(&trial2, point)?;
            evals += 1;
            simplex[k] = if fe < fr {
                (trial2.clone(), fe)
            } else {
                (trial.clone(), fr)
            };
        } else if fr < simplex[k - 1].1 {
            simplex[k] = (trial.clone(), fr);
        } else {
            let outside = fr < f_worst;
            for i in 0..k {
                trial2[i] = if outside {
                    centroid[i] + 0.5 * (trial[i] - centroid[i])
                } else {
                    centroid[i] + 0.5 * (worst[i] - centroid[i])
                };
            }
            clamp(&mut trial2);
            let fc = eval(&trial2, point)?;
            evals += 1;
            if fc < fr.min(f_worst) {
                simplex[k] = (trial2.clone(), fc);
            } else {
                let anchor = simplex[0].0.clone();
                for (v, f) in simplex.iter_mut().skip(1) {
                    for i in 0..k {
                        v[i] = anchor[i] + 0.5 * (v[i] - anchor[i]);
                    }
                    *f = eval(v, point)?;
                    evals += 1;
                }
            }
        }
    }
    let (at, fv) = simplex
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("simplex has k + 1 vertices");
    Ok((fv, at))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::box_probability;

    fn opts(d: usize) -> OptimizerOptions {
        OptimizerOptions::for_dims(d)
    }

    #[test]
    fn constant_objective() {
        let cell = Cell::new(vec![0.0, 0.0], vec![1.0, 2.0]);
        for dir in [Direction::Min, Direction::Max] {
            let v = optimize_over_cell(|_| Ok(0.3), &cell, dir, &opts(2)).unwrap();
            assert_eq!(v, 0.3);
        }
    }

    #[test]
    fn linear_objective_hits_the_bounds() {
        let cell = Cell::new(vec![0.0], vec![1.0]);
        let min = optimize_over_cell(|x| Ok(x[0]), &cell, Direction::Min, &opts(1)).unwrap();
        let max = optimize_over_cell(|x| Ok(x[0]), &cell, Direction::Max, &opts(1)).unwrap();
        assert!(min.abs() <= 1e-8);
        assert!((max - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn quadratic_interior_optimum() {
        let cell = Cell::new(vec![-1.0, -1.0], vec![1.0, 1.0]);
        let f = |x: &[f64]| Ok(-(x[0] - 0.3).powi(2) - 2.0 * (x[1] + 0.2).powi(2));
        let max = optimize_over_cell(f, &cell, Direction::Max, &opts(2)).unwrap();
        assert!(max.abs() < 1e-8, "{max}");
        let min = optimize_over_cell(f, &cell, Direction::Min, &opts(2)).unwrap();
        assert!((min - (-(1.3f64.powi(2)) - 2.0 * 1.2f64.powi(2))).abs() < 1e-8, "{min}");
    }

    #[test]
    fn only_feasible_points_are_evaluated() {
        let cell = Cell::new(vec![-0.5, 2.0], vec![0.5, 3.0]);
        let mut outside = 0;
        let _ = optimize_over_cell(
            |x| {
                if !cell.contains(x) {
                    outside += 1;
                }
                Ok(x[0] * x[1])
            },
            &cell,
            Direction::Max,
            &opts(2),
        );
        assert_eq!(outside, 0);
    }

    #[test]
    fn degenerate_cell_is_a_point_evaluation() {
        let cell = Cell::point(&[0.25, -1.0]);
        let f = |x: &[f64]| Ok(x[0] + x[1]);
        assert_eq!(optimize_over_cell(f, &cell, Direction::Min, &opts(2)).unwrap(), -0.75);
        assert_eq!(optimize_over_cell(f, &cell, Direction::Max, &opts(2)).unwrap(), -0.75);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let cell = Cell::new(vec![0.0], vec![1.0]);
        let r = optimize_over_cell(|_| Ok(f64::NAN), &cell, Direction::Min, &opts(1));
        assert!(matches!(r, Err(AbstractionError::NonFinite { .. })));
    }

    #[test]
    fn gaussian_mass_matches_grid_scan() {
        // affine dynamics x' = 0.9 x + 0.4, sigma 0.3, source [0, 0.5], dest [0.6, 0.8]
        let src = Cell::new(vec![0.0], vec![0.5]);
        let dest = Cell::new(vec![0.6], vec![0.8]);
        let f = |x: &[f64]| Ok(box_probability(&[0.3], &[0.9 * x[0] + 0.4], &dest));
        let scan: Vec<f64> = (0..=1000)
            .map(|i| f(&[0.5 * i as f64 / 1000.0]).unwrap())
            .collect();
        let smax = scan.iter().copied().fold(f64::MIN, f64::max);
        let smin = scan.iter().copied().fold(f64::MAX, f64::min);
        let max = optimize_over_cell(f, &src, Direction::Max, &opts(1)).unwrap();
        let min = optimize_over_cell(f, &src, Direction::Min, &opts(1)).unwrap();
        assert!((max - smax).abs() < 1e-6 && max >= smax - 1e-12);
        assert!((min - smin).abs() < 1e-6 && min <= smin + 1e-12);
    }

    #[test]
    fn start_point_layout() {
        let cell = Cell::new(vec![0.0], vec![1.0]);
        assert_eq!(
            start_points(&cell, 3),
            vec![vec![0.5], vec![0.0], vec![1.0]]
        );
        let cell = Cell::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        let pts = start_points(&cell, 5);
        assert_eq!(pts.len(), 5);
        assert_eq!(pts[0], vec![0.5, 0.5]);
        assert_eq!(start_points(&Cell::point(&[1.0]), 3).len(), 1);
    }
}
