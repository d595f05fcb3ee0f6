use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::sum::compensated_sum;

/// Points stored row-major with strictly positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointSet {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedPointSet {
    pub fn new(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be at least 1"));
        }
        if coords.is_empty() {
            return Err(Error::Empty("point set"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: coords.len() % dim });
        }
        let n = coords.len() / dim;
        if weights.len() != n {
            return Err(Error::invalid(format!("{n} points but {} weights", weights.len())));
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::NonPositiveWeight { index, value });
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate {c}")));
        }
        Ok(Self { dim, coords, weights })
    }

    pub fn unit(dim: usize, coords: Vec<f64>) -> Result<Self> {
        let n = coords.len().checked_div(dim).unwrap_or(0);
        Self::new(dim, coords, vec![1.0; n])
    }

    /// Builds a set from row vectors, which must share one dimension.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], weights: Vec<f64>) -> Result<Self> {
        let (dim, coords) = flatten_rows(rows)?;
        Self::new(dim, coords, weights)
    }

    /// Points on the real line.
    pub fn on_line(xs: &[f64], weights: Vec<f64>) -> Result<Self> {
        Self::new(1, xs.to_vec(), weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total_weight(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// The points at `indices`, re-weighted by `weights`.
    pub fn subset(&self, indices: &[usize], weights: Vec<f64>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("point subset"));
        }
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        Self::new(self.dim, coords, weights)
    }

    /// Number of points with pairwise distinct coordinates.
    pub fn distinct_count(&self) -> usize {
        self.points().map(bit_key).collect::<HashSet<_>>().len()
    }
}

/// An ordered set of centroids. Exact duplicates are dropped on construction
/// (first occurrence kept), so indices are stable and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    dim: usize,
    coords: Vec<f64>,
}

impl CentroidSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("centroid dimension must be at least 1"));
        }
        if coords.is_empty() {
            return Err(Error::Empty("centroid set"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: coords.len() % dim });
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("non-finite centroid coordinate {c}")));
        }
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(coords.len());
        for row in coords.chunks_exact(dim) {
            if seen.insert(bit_key(row)) {
                kept.extend_from_slice(row);
            }
        }
        Ok(Self { dim, coords: kept })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let (dim, coords) = flatten_rows(rows)?;
        Self::new(dim, coords)
    }

    pub fn on_line(xs: &[f64]) -> Result<Self> {
        Self::new(1, xs.to_vec())
    }

    /// Centroids picked from a point set by index.
    pub fn from_indices(points: &WeightedPointSet, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * points.dim());
        for &i in indices {
            coords.extend_from_slice(points.point(i));
        }
        Self::new(points.dim(), coords)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn centroid(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// The first `len` centroids.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(Error::invalid(format!("prefix length {len} out of range 1..={}", self.len())));
        }
        Ok(Self { dim: self.dim, coords: self.coords[..len * self.dim].to_vec() })
    }

    /// Keeps only the centroids whose index satisfies `keep`.
    pub fn retain_indices(&self, keep: &[bool]) -> Result<Self> {
        let coords: Vec<f64> = self
            .iter()
            .zip(keep)
            .filter(|(_, k)| **k)
            .flat_map(|(c, _)| c.iter().copied())
            .collect();
        Self::new(self.dim, coords)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }
}

fn flatten_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<(usize, Vec<f64>)> {
    let first = rows.first().ok_or(Error::Empty("rows"))?;
    let dim = first.as_ref().len();
    let mut coords = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
        }
        coords.extend_from_slice(r);
    }
    Ok((dim, coords))
}

fn bit_key(row: &[f64]) -> Vec<u64> {
    // -0.0 and 0.0 are the same location
    row.iter().map(|x| if *x == 0.0 { 0 } else { x.to_bits() }).collect()
}
