//! Uniform lattice partitions of state, input and disturbance boxes.
//!
//! A [`Space`] places representative points at `lb + i * eta` (both endpoints
//! included) and surrounds each one with a cell of half-width `eta / 2`.
//! Flat indices are row-major with dimension 0 varying slowest; every file
//! format in this crate relies on that layout.

use thiserror::Error;

use crate::expr::{ExprError, Predicate};

/// Relative tolerance used when checking that `(ub - lb) / eta` is integral.
const LATTICE_FIT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension mismatch: lb has {lb}, ub has {ub}, eta has {eta} entries")]
    DimensionMismatch { lb: usize, ub: usize, eta: usize },
    #[error("dimension {dim}: eta must be positive and finite, got {eta}")]
    NonPositiveEta { dim: usize, eta: f64 },
    #[error("dimension {dim}: upper bound {ub} is below lower bound {lb}")]
    InvertedBounds { dim: usize, lb: f64, ub: f64 },
    #[error("dimension {dim}: lattice does not fit, (ub - lb) / eta = {ratio} is not an integer")]
    LatticeMismatch { dim: usize, ratio: f64 },
    #[error("index {index} out of range for space with {total} points")]
    IndexOutOfRange { index: usize, total: usize },
    #[error("point {point:?} lies outside the quantizable domain")]
    OutOfDomain { point: Vec<f64> },
    #[error("point has {got} coordinates, space has {expected} dimensions")]
    PointDimension { expected: usize, got: usize },
    #[error("space has too many points to index")]
    TooLarge,
    #[error("predicate evaluation failed at {point:?}: {source}")]
    Predicate {
        point: Vec<f64>,
        #[source]
        source: ExprError,
    },
    #[error("invalid labeling: {0}")]
    InvalidLabels(String),
}

/// A uniform lattice over an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Space {
    lb: Vec<f64>,
    ub: Vec<f64>,
    eta: Vec<f64>,
    counts: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl Space {
    pub fn new(lb: Vec<f64>, ub: Vec<f64>, eta: Vec<f64>) -> Result<Self, GridError> {
        if lb.len() != ub.len() || lb.len() != eta.len() {
            return Err(GridError::DimensionMismatch {
                lb: lb.len(),
                ub: ub.len(),
                eta: eta.len(),
            });
        }
        let mut counts = Vec::with_capacity(lb.len());
        for d in 0..lb.len() {
            if !(eta[d] > 0.0 && eta[d].is_finite()) {
                return Err(GridError::NonPositiveEta { dim: d, eta: eta[d] });
            }
            if !(ub[d] >= lb[d]) || !lb[d].is_finite() || !ub[d].is_finite() {
                return Err(GridError::InvertedBounds {
                    dim: d,
                    lb: lb[d],
                    ub: ub[d],
                });
            }
            let ratio = (ub[d] - lb[d]) / eta[d];
            let steps = ratio.round();
            if (ratio - steps).abs() > LATTICE_FIT_TOL * steps.max(1.0) {
                return Err(GridError::LatticeMismatch { dim: d, ratio });
            }
            counts.push(steps as usize + 1);
        }
        let mut strides = vec![1usize; counts.len()];
        let mut total: usize = 1;
        for d in (0..counts.len()).rev() {
            strides[d] = total;
            total = total.checked_mul(counts[d]).ok_or(GridError::TooLarge)?;
        }
        Ok(Self {
            lb,
            ub,
            eta,
            counts,
            strides,
            total,
        })
    }

    pub fn dims(&self) -> usize {
        self.lb.len()
    }

    pub fn lb(&self) -> &[f64] {
        &self.lb
    }

    pub fn ub(&self) -> &[f64] {
        &self.ub
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    /// Number of lattice points along each dimension.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    fn check_index(&self, index: usize) -> Result<(), GridError> {
        if index >= self.total {
            return Err(GridError::IndexOutOfRange {
                index,
                total: self.total,
            });
        }
        Ok(())
    }

    /// Lattice coordinate of `index` along dimension `dim`.
    #[inline]
    pub fn coord_index(&self, index: usize, dim: usize) -> usize {
        (index / self.strides[dim]) % self.counts[dim]
    }

    /// Decodes a flat index into its per-dimension lattice indices.
    pub fn multi_index(&self, index: usize) -> Result<Vec<usize>, GridError> {
        self.check_index(index)?;
        Ok((0..self.dims()).map(|d| self.coord_index(index, d)).collect())
    }

    pub fn flat_index(&self, multi: &[usize]) -> Result<usize, GridError> {
        if multi.len() != self.dims() {
            return Err(GridError::PointDimension {
                expected: self.dims(),
                got: multi.len(),
            });
        }
        let mut index = 0;
        for (d, &i) in multi.iter().enumerate() {
            if i >= self.counts[d] {
                return Err(GridError::IndexOutOfRange {
                    index: i,
                    total: self.counts[d],
                });
            }
            index += i * self.strides[d];
        }
        Ok(index)
    }

    /// Coordinate of lattice position `i` along dimension `dim`.
    #[inline]
    pub fn axis_value(&self, dim: usize, i: usize) -> f64 {
        self.lb[dim] + i as f64 * self.eta[dim]
    }

    pub fn rep_point(&self, index: usize) -> Result<Vec<f64>, GridError> {
        self.check_index(index)?;
        let mut out = vec![0.0; self.dims()];
        self.rep_point_into(index, &mut out);
        Ok(out)
    }

    /// Writes the representative point of a known-valid index into `out`.
    #[inline]
    pub fn rep_point_into(&self, index: usize, out: &mut [f64]) {
        for (d, slot) in out.iter_mut().enumerate() {
            *slot = self.axis_value(d, self.coord_index(index, d));
        }
    }

    pub fn cell_of(&self, index: usize) -> Result<Cell, GridError> {
        let rep = self.rep_point(index)?;
        Ok(Cell::around(&rep, &self.eta))
    }

    /// The box covered by the union of all cells.
    pub fn domain(&self) -> Cell {
        Cell {
            lo: (0..self.dims())
                .map(|d| self.lb[d] - self.eta[d] / 2.0)
                .collect(),
            hi: (0..self.dims())
                .map(|d| self.ub[d] + self.eta[d] / 2.0)
                .collect(),
        }
    }

    /// Index of the nearest representative point; ties go to the lower index.
    pub fn quantize(&self, x: &[f64]) -> Result<usize, GridError> {
        if x.len() != self.dims() {
            return Err(GridError::PointDimension {
                expected: self.dims(),
                got: x.len(),
            });
        }
        let mut index = 0;
        for d in 0..self.dims() {
            let half = self.eta[d] / 2.0;
            if !(x[d] >= self.lb[d] - half && x[d] <= self.ub[d] + half) {
                return Err(GridError::OutOfDomain { point: x.to_vec() });
            }
            let t = (x[d] - self.lb[d]) / self.eta[d];
            let i = (t - 0.5).ceil().max(0.0) as usize;
            index += i.min(self.counts[d] - 1) * self.strides[d];
        }
        Ok(index)
    }
}

/// An axis-aligned box. Bounds may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Cell {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn around(center: &[f64], width: &[f64]) -> Self {
        Self {
            lo: center.iter().zip(width).map(|(c, w)| c - w / 2.0).collect(),
            hi: center.iter().zip(width).map(|(c, w)| c + w / 2.0).collect(),
        }
    }

    /// The whole of R^n, represented with infinite sentinels.
    pub fn whole_space(dims: usize) -> Self {
        Self {
            lo: vec![f64::NEG_INFINITY; dims],
            hi: vec![f64::INFINITY; dims],
        }
    }

    /// A zero-width cell at a single point.
    pub fn point(p: &[f64]) -> Self {
        Self {
            lo: p.to_vec(),
            hi: p.to_vec(),
        }
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(d, v)| *v >= self.lo[d] && *v <= self.hi[d])
    }
}

/// Classification of a state index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Safe,
    Target,
    Avoid,
}

/// Partition of state indices into safe, target and avoid lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledStates {
    pub safe: Vec<usize>,
    pub target: Vec<usize>,
    pub avoid: Vec<usize>,
}

impl LabeledStates {
    /// Every state safe.
    pub fn all_safe(total: usize) -> Self {
        Self {
            safe: (0..total).collect(),
            target: Vec::new(),
            avoid: Vec::new(),
        }
    }

    /// Builds and validates a labeling over `total` states.
    pub fn new(
        total: usize,
        safe: Vec<usize>,
        target: Vec<usize>,
        avoid: Vec<usize>,
    ) -> Result<Self, GridError> {
        let labels = Self {
            safe,
            target,
            avoid,
        };
        labels.validate(total)?;
        Ok(labels)
    }

    pub fn total(&self) -> usize {
        self.safe.len() + self.target.len() + self.avoid.len()
    }

    pub fn validate(&self, total: usize) -> Result<(), GridError> {
        let mut seen = vec![false; total];
        for (name, list) in [
            ("safe", &self.safe),
            ("target", &self.target),
            ("avoid", &self.avoid),
        ] {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(GridError::InvalidLabels(format!(
                    "{name} list is not strictly increasing"
                )));
            }
            for &i in list {
                if i >= total {
                    return Err(GridError::InvalidLabels(format!(
                        "{name} index {i} out of range {total}"
                    )));
                }
                if seen[i] {
                    return Err(GridError::InvalidLabels(format!(
                        "state {i} carries more than one label"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(GridError::InvalidLabels(format!(
                "state {missing} has no label"
            )));
        }
        Ok(())
    }

    /// Per-state label table.
    pub fn label_table(&self) -> Vec<Label> {
        let mut out = vec![Label::Safe; self.total()];
        for &i in &self.target {
            out[i] = Label::Target;
        }
        for &i in &self.avoid {
            out[i] = Label::Avoid;
        }
        out
    }

    /// Maps a state index to its position in the safe list.
    pub fn safe_positions(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.total()];
        for (k, &i) in self.safe.iter().enumerate() {
            out[i] = Some(k);
        }
        out
    }
}

/// Classifies every representative point. Avoid takes precedence over target.
pub fn label_states(
    space: &Space,
    target: Option<&Predicate>,
    avoid: Option<&Predicate>,
) -> Result<LabeledStates, GridError> {
    let mut safe = Vec::new();
    let mut targets = Vec::new();
    let mut avoids = Vec::new();
    let mut x = vec![0.0; space.dims()];
    for index in 0..space.total() {
        space.rep_point_into(index, &mut x);
        let check = |p: Option<&Predicate>| -> Result<bool, GridError> {
            match p {
                Some(p) => p.eval_state(&x).map_err(|source| GridError::Predicate {
                    point: x.clone(),
                    source,
                }),
                None => Ok(false),
            }
        };
        if check(avoid)? {
            avoids.push(index);
        } else if check(target)? {
            targets.push(index);
        } else {
            safe.push(index);
        }
    }
    Ok(LabeledStates {
        safe,
        target: targets,
        avoid: avoids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_predicate;

    fn robot() -> Space {
        Space::new(vec![-10.0, -10.0], vec![10.0, 10.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn cardinalities() {
        assert_eq!(robot().counts(), &[21, 21]);
        assert_eq!(robot().total(), 441);
        let u = Space::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![0.2, 0.2]).unwrap();
        assert_eq!(u.total(), 121);
        let single = Space::new(vec![0.0], vec![0.0], vec![1.0]).unwrap();
        assert_eq!(single.counts(), &[1]);
        assert_eq!(single.total(), 1);
        let vehicle = Space::new(
            vec![-5.0, -5.0, -3.4],
            vec![5.0, 5.0, 3.4],
            vec![0.5, 0.5, 0.4],
        )
        .unwrap();
        assert_eq!(vehicle.total(), 7938);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            Space::new(vec![0.0], vec![1.0, 2.0], vec![1.0]),
            Err(GridError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            Space::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 0.0]),
            Err(GridError::NonPositiveEta { dim: 1, .. })
        ));
        assert!(matches!(
            Space::new(vec![1.0], vec![0.0], vec![1.0]),
            Err(GridError::InvertedBounds { dim: 0, .. })
        ));
        assert!(matches!(
            Space::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 0.3]),
            Err(GridError::LatticeMismatch { dim: 1, .. })
        ));
    }

    #[test]
    fn rep_points_and_cells() {
        let s = robot();
        assert_eq!(s.rep_point(0).unwrap(), vec![-10.0, -10.0]);
        assert_eq!(s.rep_point(440).unwrap(), vec![10.0, 10.0]);
        // dimension 0 is the slowest
        assert_eq!(s.rep_point(1).unwrap(), vec![-10.0, -9.0]);
        assert!(s.rep_point(441).is_err());

        let origin = s.flat_index(&[10, 10]).unwrap();
        let c = s.cell_of(origin).unwrap();
        assert_eq!(c.lo, vec![-0.5, -0.5]);
        assert_eq!(c.hi, vec![0.5, 0.5]);

        let single = Space::new(vec![0.0], vec![0.0], vec![1.0]).unwrap();
        assert_eq!(single.cell_of(0).unwrap(), Cell::new(vec![-0.5], vec![0.5]));

        let room = Space::new(vec![19.0; 3], vec![21.0; 3], vec![0.1; 3]).unwrap();
        assert_eq!(room.rep_point(0).unwrap(), vec![19.0, 19.0, 19.0]);
        let c = room.cell_of(0).unwrap();
        assert!((c.lo[0] - 18.95).abs() < 1e-12 && (c.hi[0] - 19.05).abs() < 1e-12);
    }

    #[test]
    fn quantize_examples() {
        let s = robot();
        let origin = s.flat_index(&[10, 10]).unwrap();
        assert_eq!(s.quantize(&[0.2, -0.3]).unwrap(), origin);
        assert_eq!(s.quantize(&[0.0, 0.0]).unwrap(), origin);
        assert_eq!(s.quantize(&[0.5, 0.0]).unwrap(), origin);
        assert!(matches!(
            s.quantize(&[10.6, 0.0]),
            Err(GridError::OutOfDomain { .. })
        ));
        assert_eq!(s.quantize(&[10.5, -10.5]).unwrap(), s.flat_index(&[20, 0]).unwrap());
    }

    #[test]
    fn tie_break_matches_exhaustive_scan() {
        let s = robot();
        for &x in &[-9.5, -0.5, 0.5, 3.5, 9.5] {
            let p = [x, x];
            let got = s.quantize(&p).unwrap();
            // exhaustive scan: nearest point, lowest index among ties
            let mut best = (f64::INFINITY, usize::MAX);
            for i in 0..s.total() {
                let r = s.rep_point(i).unwrap();
                let dist = r
                    .iter()
                    .zip(&p)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if dist < best.0 {
                    best = (dist, i);
                }
            }
            assert_eq!(got, best.1, "x = {x}");
        }
    }

    #[test]
    fn labeling_examples() {
        let s = robot();
        let target = parse_predicate("x1>=5 & x1<=7 & x2>=5 & x2<=7", 2).unwrap();
        let avoid = parse_predicate("x1>=-2 & x1<=2 & x2>=-2 & x2<=2", 2).unwrap();
        let l = label_states(&s, Some(&target), None).unwrap();
        assert_eq!(l.target.len(), 9);
        let l = label_states(&s, None, Some(&avoid)).unwrap();
        assert_eq!(l.avoid.len(), 25);
        let l = label_states(&s, None, None).unwrap();
        assert_eq!(l.safe.len(), 441);
        assert!(l.target.is_empty() && l.avoid.is_empty());
        let l = label_states(&s, Some(&target), Some(&avoid)).unwrap();
        assert_eq!(l.safe.len(), 407);
        l.validate(441).unwrap();
    }

    #[test]
    fn avoid_wins_on_overlap() {
        let s = robot();
        let p = parse_predicate("x1 >= 0", 2).unwrap();
        let l = label_states(&s, Some(&p), Some(&p)).unwrap();
        assert!(l.target.is_empty());
        assert_eq!(l.avoid.len(), 11 * 21);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quantize_error_bounded(x in -10.5f64..=10.5, y in -10.5f64..=10.5) {
                let s = robot();
                let i = s.quantize(&[x, y]).unwrap();
                let r = s.rep_point(i).unwrap();
                prop_assert!((r[0] - x).abs() <= 0.5 + 1e-12);
                prop_assert!((r[1] - y).abs() <= 0.5 + 1e-12);
            }

            #[test]
            fn quantize_inverts_rep_point(i in 0usize..441) {
                let s = robot();
                prop_assert_eq!(s.quantize(&s.rep_point(i).unwrap()).unwrap(), i);
            }

            #[test]
            fn cells_tile_the_domain(x in -10.5f64..=10.5, y in -10.5f64..=10.5) {
                let s = robot();
                let inside: Vec<usize> = (0..s.total())
                    .filter(|&i| {
                        let c = s.cell_of(i).unwrap();
                        c.lo[0] < x && x < c.hi[0] && c.lo[1] < y && y < c.hi[1]
                    })
                    .collect();
                prop_assert!(inside.len() <= 1);
                prop_assert!(s.domain().contains(&[x, y]));
            }
        }
    }
}
