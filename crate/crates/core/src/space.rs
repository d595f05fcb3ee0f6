//! Relaxed metric spaces: distances that are symmetric and vanish on the
//! diagonal, with the triangle inequality weakened by a factor `rho >= 1`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of random triples checked when a precomputed matrix is loaded.
pub const DEFAULT_TRIANGLE_SAMPLES: usize = 20_000;

const TRIANGLE_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpaceKind {
    /// `d(x, y) = ||x - y||^p`.
    EuclideanPower { p: f64 },
    /// Distances looked up in a dense matrix.
    PrecomputedMatrix,
}

/// A dense symmetric matrix of pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("distance matrix"));
        }
        if data.len() != n * n {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

#[derive(Debug, Clone)]
enum Metric {
    EuclideanPower { p: f64 },
    Precomputed(Arc<DistanceMatrix>),
}

/// A relaxed metric space together with its triangle constant `rho`.
///
/// In a precomputed-matrix space a point is a one-coordinate vector holding
/// its row index into the matrix.
#[derive(Debug, Clone)]
pub struct MetricSpace {
    metric: Metric,
    rho: f64,
}

impl MetricSpace {
    /// Euclidean distance raised to the power `p`. The relaxed-triangle
    /// constant is `1` for `p <= 1` and `2^(p-1)` otherwise.
    pub fn euclidean_power(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::invalid(format!("distance power must be positive, got {p}")));
        }
        let rho = if p <= 1.0 { 1.0 } else { 2f64.powf(p - 1.0) };
        Ok(Self { metric: Metric::EuclideanPower { p }, rho })
    }

    /// Squared Euclidean distance, the k-means objective (`rho = 2`).
    pub fn squared_euclidean() -> Self {
        Self { metric: Metric::EuclideanPower { p: 2.0 }, rho: 2.0 }
    }

    /// Euclidean distance (`rho = 1`).
    pub fn euclidean() -> Self {
        Self { metric: Metric::EuclideanPower { p: 1.0 }, rho: 1.0 }
    }

    /// Wraps a precomputed matrix. Symmetry, the zero diagonal and
    /// non-negativity are checked on every entry; the `rho`-relaxed triangle
    /// inequality is checked on a random sample of triples.
    pub fn precomputed(matrix: DistanceMatrix, rho: f64, seed: u64) -> Result<Self> {
        Self::precomputed_with_checks(matrix, rho, seed, DEFAULT_TRIANGLE_SAMPLES)
    }

    pub fn precomputed_with_checks(
        matrix: DistanceMatrix,
        rho: f64,
        seed: u64,
        triangle_samples: usize,
    ) -> Result<Self> {
        if !(rho.is_finite() && rho >= 1.0) {
            return Err(Error::invalid(format!("rho must be >= 1, got {rho}")));
        }
        let n = matrix.len();
        for i in 0..n {
            if matrix.get(i, i) != 0.0 {
                return Err(Error::InvalidMatrix(format!("d({i},{i}) = {} is not zero", matrix.get(i, i))));
            }
            for j in (i + 1)..n {
                let (a, b) = (matrix.get(i, j), matrix.get(j, i));
                if !(a.is_finite() && a >= 0.0) {
                    return Err(Error::InvalidMatrix(format!("d({i},{j}) = {a} is not a finite non-negative value")));
                }
                if a != b {
                    return Err(Error::InvalidMatrix(format!("asymmetric entries d({i},{j}) = {a}, d({j},{i}) = {b}")));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..triangle_samples {
            let (x, y, z) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
            let lhs = matrix.get(x, y);
            let rhs = rho * (matrix.get(x, z) + matrix.get(z, y));
            if lhs > rhs * (1.0 + TRIANGLE_REL_TOL) {
                return Err(Error::InvalidMatrix(format!(
                    "relaxed triangle violated: d({x},{y}) = {lhs} > {rho} * (d({x},{z}) + d({z},{y})) = {rhs}"
                )));
            }
        }
        Ok(Self { metric: Metric::Precomputed(Arc::new(matrix)), rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn kind(&self) -> SpaceKind {
        match &self.metric {
            Metric::EuclideanPower { p } => SpaceKind::EuclideanPower { p: *p },
            Metric::Precomputed(_) => SpaceKind::PrecomputedMatrix,
        }
    }

    pub fn is_squared_euclidean(&self) -> bool {
        matches!(self.metric, Metric::EuclideanPower { p } if p == 2.0)
    }

    /// Checks that a point set of dimension `dim` can live in this space.
    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        match &self.metric {
            Metric::Precomputed(_) if dim != 1 => Err(Error::DimensionMismatch { expected: 1, got: dim }),
            _ => Ok(()),
        }
    }

    /// Distance between two points of equal dimension.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        if let Metric::Precomputed(m) = &self.metric {
            self.check_dim(x.len())?;
            let (i, j) = (matrix_index(x[0], m.len())?, matrix_index(y[0], m.len())?);
            return Ok(m.get(i, j));
        }
        Ok(self.dist(x, y))
    }

    /// Distance without dimension checks. Callers guarantee equal lengths
    /// and, for matrix spaces, valid indices.
    #[inline]
    pub(crate) fn dist(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.metric {
            Metric::EuclideanPower { p } => {
                let s = squared_l2(x, y);
                if *p == 2.0 {
                    s
                } else if *p == 1.0 {
                    s.sqrt()
                } else {
                    s.powf(p / 2.0)
                }
            }
            Metric::Precomputed(m) => m.get(x[0] as usize, y[0] as usize),
        }
    }

    /// Validates that the coordinates of a matrix-space point are row indices.
    pub(crate) fn check_points(&self, coords: &[f64]) -> Result<()> {
        if let Metric::Precomputed(m) = &self.metric {
            for &c in coords {
                matrix_index(c, m.len())?;
            }
        }
        Ok(())
    }
}

fn matrix_index(c: f64, n: usize) -> Result<usize> {
    if c >= 0.0 && c.fract() == 0.0 && (c as usize) < n {
        Ok(c as usize)
    } else {
        Err(Error::invalid(format!("{c} is not a row index of a {n}-point distance matrix")))
    }
}

#[inline]
pub(crate) fn squared_l2(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = x.len() / 4;
    for c in 0..chunks {
        let b = c * 4;
        for l in 0..4 {
            let d = x[b + l] - y[b + l];
            acc[l] += d * d;
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..x.len() {
        let d = x[j] - y[j];
        s += d * d;
    }
    s
}
