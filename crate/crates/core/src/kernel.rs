//! Noise models and the transition-probability integrals built on them.
//!
//! Diagonal Gaussian noise has a closed form: the probability of landing in a
//! box is a product of one-dimensional normal masses. Full-covariance and
//! custom densities are integrated by plain Monte Carlo over the target box
//! with a seeded ChaCha stream, so every estimate is a deterministic function
//! of `(mean, cell, seed, samples)`.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{Env, Expr};
use crate::grid::Cell;

/// Default Monte Carlo sample count per integral.
pub const DEFAULT_SAMPLES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("sigma[{dim}] must be positive and finite, got {value}")]
    BadSigma { dim: usize, value: f64 },
    #[error("inverse covariance must be a square matrix with {expected} entries, got {got}")]
    BadShape { expected: usize, got: usize },
    #[error("inverse covariance is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("inverse covariance is not positive definite (leading minor {order} is not positive)")]
    NotPositiveDefinite { order: usize },
    #[error("covariance determinant must be positive, got {0}")]
    BadDeterminant(f64),
    #[error("covariance determinant {given} disagrees with 1/det(inv_cov) = {computed}")]
    DeterminantMismatch { given: f64, computed: f64 },
    #[error("Monte Carlo needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: noise has {noise} dimensions, argument has {arg}")]
    Dimension { noise: usize, arg: usize },
    #[error("density is negative ({value}) at {point:?}")]
    NegativeDensity { value: f64, point: Vec<f64> },
    #[error("density is not finite at {point:?}")]
    NonFiniteDensity { point: Vec<f64> },
    #[error("Monte Carlo integration needs a bounded cell")]
    UnboundedCell,
    #[error("closed-form box probability requires diagonal normal noise")]
    NotDiagonal,
}

/// Additive noise on the next state.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    DiagonalNormal {
        sigma: Vec<f64>,
    },
    /// Correlated normal given by its inverse covariance (row-major) and the
    /// determinant of the covariance matrix.
    FullNormal {
        inv_cov: Vec<f64>,
        det: f64,
        samples: usize,
    },
    Custom {
        density: Expr,
        dims: usize,
        samples: usize,
    },
}

impl NoiseModel {
    pub fn diagonal(sigma: Vec<f64>) -> Result<Self, KernelError> {
        for (dim, &value) in sigma.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(KernelError::BadSigma { dim, value });
            }
        }
        Ok(Self::DiagonalNormal { sigma })
    }

    /// `det` is the determinant of the covariance (the inverse of `det(inv_cov)`).
    pub fn full_normal(inv_cov: Vec<f64>, det: f64, samples: usize) -> Result<Self, KernelError> {
        let n = (inv_cov.len() as f64).sqrt().round() as usize;
        if n * n != inv_cov.len() || n == 0 {
            return Err(KernelError::BadShape {
                expected: n * n,
                got: inv_cov.len(),
            });
        }
        for r in 0..n {
            for c in 0..r {
                let (a, b) = (inv_cov[r * n + c], inv_cov[c * n + r]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(KernelError::NotSymmetric { row: r, col: c });
                }
            }
        }
        let det_inv = cholesky_determinant(&inv_cov, n)?;
        if !(det > 0.0 && det.is_finite()) {
            return Err(KernelError::BadDeterminant(det));
        }
        let computed = 1.0 / det_inv;
        if (det - computed).abs() > 1e-9 * computed.max(det) {
            return Err(KernelError::DeterminantMismatch {
                given: det,
                computed,
            });
        }
        if samples < 2 {
            return Err(KernelError::TooFewSamples(samples));
        }
        Ok(Self::FullNormal {
            inv_cov,
            det,
            samples,
        })
    }

    pub fn custom(density: Expr, dims: usize, samples: usize) -> Result<Self, KernelError> {
        if samples < 2 {
            return Err(KernelError::TooFewSamples(samples));
        }
        Ok(Self::Custom {
            density,
            dims,
            samples,
        })
    }

    pub fn dims(&self) -> usize {
        match self {
            NoiseModel::DiagonalNormal { sigma } => sigma.len(),
            NoiseModel::FullNormal { inv_cov, .. } => (inv_cov.len() as f64).sqrt().round() as usize,
            NoiseModel::Custom { dims, .. } => *dims,
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, NoiseModel::DiagonalNormal { .. })
    }

    /// Density of the noise at offset `y - mean`.
    fn density(&self, y: &[f64], mean: &[f64]) -> Result<f64, KernelError> {
        let v = match self {
            NoiseModel::DiagonalNormal { sigma } => sigma
                .iter()
                .enumerate()
                .map(|(d, s)| {
                    let z = (y[d] - mean[d]) / s;
                    (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt())
                })
                .product(),
            NoiseModel::FullNormal { inv_cov, det, .. } => {
                let n = y.len();
                let mut q = 0.0;
                for r in 0..n {
                    let dr = y[r] - mean[r];
                    let mut row = 0.0;
                    for c in 0..n {
                        row += inv_cov[r * n + c] * (y[c] - mean[c]);
                    }
                    q += dr * row;
                }
                (2.0 * PI).powf(-(n as f64) / 2.0) / det.sqrt() * (-0.5 * q).exp()
            }
            NoiseModel::Custom { density, .. } => {
                let env = Env {
                    y,
                    m: mean,
                    ..Env::default()
                };
                density.eval(&env).map_err(|_| KernelError::NonFiniteDensity {
                    point: y.to_vec(),
                })?
            }
        };
        if !v.is_finite() {
            return Err(KernelError::NonFiniteDensity { point: y.to_vec() });
        }
        if v < 0.0 {
            return Err(KernelError::NegativeDensity {
                value: v,
                point: y.to_vec(),
            });
        }
        Ok(v)
    }
}

/// Determinant of a symmetric matrix via Cholesky; fails unless positive definite.
fn cholesky_determinant(a: &[f64], n: usize) -> Result<f64, KernelError> {
    let l = cholesky(a, n)?;
    Ok((0..n).map(|i| l[i * n + i] * l[i * n + i]).product())
}

/// Lower-triangular Cholesky factor, row-major.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>, KernelError> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(KernelError::NotPositiveDefinite { order: i + 1 });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Mass of N(mean, sigma^2) on `[lo, hi]`, evaluated on the tail that keeps
/// the subtraction well conditioned.
#[inline]
pub fn interval_mass(lo: f64, hi: f64, mean: f64, sigma: f64) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let a = (lo - mean) / (sigma * SQRT_2);
    let b = (hi - mean) / (sigma * SQRT_2);
    let p = if a >= 0.0 {
        0.5 * (libm::erfc(a) - libm::erfc(b))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b) - libm::erfc(-a))
    } else {
        1.0 - 0.5 * libm::erfc(-a) - 0.5 * libm::erfc(b)
    };
    p.clamp(0.0, 1.0)
}

/// Closed-form probability that `mean + noise` lands in `cell`, for diagonal noise.
pub fn box_probability(sigma: &[f64], mean: &[f64], cell: &Cell) -> f64 {
    debug_assert_eq!(sigma.len(), mean.len());
    let mut p = 1.0;
    for d in 0..sigma.len() {
        p *= interval_mass(cell.lo[d], cell.hi[d], mean[d], sigma[d]);
        if p == 0.0 {
            break;
        }
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Plain Monte Carlo estimate of the probability that `mean + noise` lands in
/// `cell`: `volume(cell)` times the average density at uniform points.
pub fn mc_box_probability(
    noise: &NoiseModel,
    mean: &[f64],
    cell: &Cell,
    seed: u64,
) -> Result<McEstimate, KernelError> {
    let samples = match noise {
        NoiseModel::FullNormal { samples, .. } | NoiseModel::Custom { samples, .. } => *samples,
        NoiseModel::DiagonalNormal { .. } => DEFAULT_SAMPLES,
    };
    mc_box_probability_with(noise, mean, cell, seed, samples)
}

pub fn mc_box_probability_with(
    noise: &NoiseModel,
    mean: &[f64],
    cell: &Cell,
    seed: u64,
    samples: usize,
) -> Result<McEstimate, KernelError> {
    let n = noise.dims();
    if mean.len() != n || cell.dims() != n {
        return Err(KernelError::Dimension {
            noise: n,
            arg: mean.len().max(cell.dims()),
        });
    }
    if samples < 2 {
        return Err(KernelError::TooFewSamples(samples));
    }
    if cell.lo.iter().chain(&cell.hi).any(|v| !v.is_finite()) {
        return Err(KernelError::UnboundedCell);
    }
    let volume = cell.volume();
    if !(volume > 0.0) {
        return Ok(McEstimate {
            estimate: 0.0,
            stderr: 0.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = vec![0.0; n];
    // Welford accumulation of the density samples
    let mut avg = 0.0;
    let mut m2 = 0.0;
    for k in 0..samples {
        for d in 0..n {
            let t: f64 = rng.random();
            y[d] = cell.lo[d] + t * (cell.hi[d] - cell.lo[d]);
        }
        let f = noise.density(&y, mean)?;
        let delta = f - avg;
        avg += delta / (k + 1) as f64;
        m2 += delta * (f - avg);
    }
    let var = m2 / (samples - 1) as f64;
    Ok(McEstimate {
        estimate: (volume * avg).clamp(0.0, 1.0),
        stderr: volume * (var / samples as f64).sqrt(),
    })
}

/// Deterministic per-integral seed from a base seed and two indices.
pub fn derive_seed(base: u64, row: u64, dest: u64) -> u64 {
    let mut h = splitmix(base ^ 0x6a09_e667_f3bc_c908);
    h = splitmix(h ^ row);
    splitmix(h ^ dest.rotate_left(32))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
