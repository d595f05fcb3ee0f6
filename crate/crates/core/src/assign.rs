//! Nearest-centroid assignment and the clustering cost
//! `V(Q | X, w) = sum_x w_x d(x, Q)`.

use crate::error::{Error, Result};
use crate::par;
use crate::points::{CentroidSet, WeightedPointSet};
use crate::space::MetricSpace;
use crate::sum::compensated_sum;

/// Per-point owning centroid and distance to it.
///
/// Ties go to the lowest centroid index.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub owner: Vec<usize>,
    pub dist: Vec<f64>,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    /// `sum_x w_x * dist[x]`, summed in point order.
    pub fn cost(&self, weights: &[f64]) -> f64 {
        compensated_sum(weights.iter().zip(&self.dist).map(|(w, d)| w * d))
    }

    /// Total weight owned by each of `k` centroids.
    pub fn cluster_weights(&self, weights: &[f64], k: usize) -> Vec<f64> {
        let mut acc = vec![crate::sum::CompensatedSum::new(); k];
        for (&o, &w) in self.owner.iter().zip(weights) {
            acc[o].add(w);
        }
        acc.iter().map(|s| s.value()).collect()
    }

    /// Cost restricted to each cluster.
    pub fn cluster_costs(&self, weights: &[f64], k: usize) -> Vec<f64> {
        let mut acc = vec![crate::sum::CompensatedSum::new(); k];
        for ((&o, &w), &d) in self.owner.iter().zip(weights).zip(&self.dist) {
            acc[o].add(w * d);
        }
        acc.iter().map(|s| s.value()).collect()
    }

    /// Number of points owned by each of `k` centroids.
    pub fn cluster_sizes(&self, k: usize) -> Vec<usize> {
        let mut sizes = vec![0; k];
        for &o in &self.owner {
            sizes[o] += 1;
        }
        sizes
    }
}

pub(crate) fn check_compatible(space: &MetricSpace, points: &WeightedPointSet, centroids: &CentroidSet) -> Result<()> {
    if points.dim() != centroids.dim() {
        return Err(Error::DimensionMismatch { expected: points.dim(), got: centroids.dim() });
    }
    space.check_dim(points.dim())?;
    space.check_points(centroids.coords())?;
    space.check_points(points.coords())
}

#[inline]
pub(crate) fn nearest(space: &MetricSpace, x: &[f64], centroids: &CentroidSet) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = space.dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Assigns every point to its nearest centroid.
pub fn assign(space: &MetricSpace, points: &WeightedPointSet, centroids: &CentroidSet) -> Result<Assignment> {
    check_compatible(space, points, centroids)?;
    Ok(assign_unchecked(space, points, centroids))
}

pub(crate) fn assign_unchecked(space: &MetricSpace, points: &WeightedPointSet, centroids: &CentroidSet) -> Assignment {
    let pairs = par::map_range(points.len(), |i| nearest(space, points.point(i), centroids));
    let (owner, dist) = pairs.into_iter().unzip();
    Assignment { owner, dist }
}

/// Per-point distances `d(x, Q)` without owners.
pub(crate) fn distances_unchecked(space: &MetricSpace, points: &WeightedPointSet, centroids: &CentroidSet) -> Vec<f64> {
    par::map_range(points.len(), |i| nearest(space, points.point(i), centroids).1)
}

/// The clustering cost `V(Q | X, w)`.
pub fn cost(space: &MetricSpace, points: &WeightedPointSet, centroids: &CentroidSet) -> Result<f64> {
    check_compatible(space, points, centroids)?;
    Ok(cost_unchecked(space, points, centroids))
}

pub(crate) fn cost_unchecked(space: &MetricSpace, points: &WeightedPointSet, centroids: &CentroidSet) -> f64 {
    let d = distances_unchecked(space, points, centroids);
    compensated_sum(points.weights().iter().zip(&d).map(|(w, d)| w * d))
}

/// An assignment grown one centroid at a time, as kmeans++ does. Each added
/// centroid costs one distance evaluation per point.
#[derive(Debug, Clone)]
pub(crate) struct IncrementalAssignment {
    slots: Vec<(usize, f64)>,
    centroids: usize,
}

impl IncrementalAssignment {
    pub(crate) fn new(n: usize) -> Self {
        Self { slots: vec![(0, f64::INFINITY); n], centroids: 0 }
    }

    pub(crate) fn add(&mut self, space: &MetricSpace, points: &WeightedPointSet, centroid: &[f64]) {
        let j = self.centroids;
        par::for_each_mut(&mut self.slots, |i, slot| {
            let d = space.dist(points.point(i), centroid);
            // strict: earlier centroids win ties
            if d < slot.1 {
                *slot = (j, d);
            }
        });
        self.centroids += 1;
    }

    #[inline]
    pub(crate) fn dist(&self, i: usize) -> f64 {
        self.slots[i].1
    }

    pub(crate) fn cost(&self, weights: &[f64]) -> f64 {
        compensated_sum(weights.iter().zip(&self.slots).map(|(w, s)| w * s.1))
    }

    pub(crate) fn snapshot(&self) -> Assignment {
        let (owner, dist) = self.slots.iter().copied().unzip();
        Assignment { owner, dist }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> WeightedPointSet {
        WeightedPointSet::on_line(xs, vec![1.0; xs.len()]).unwrap()
    }

    #[test]
    fn assign_examples() {
        let sq = MetricSpace::squared_euclidean();
        let q = CentroidSet::on_line(&[0.0, 10.0]).unwrap();
        let a = assign(&sq, &line(&[0.0, 10.0]), &q).unwrap();
        assert_eq!(a.owner, vec![0, 1]);
        assert_eq!(a.dist, vec![0.0, 0.0]);

        let a = assign(&sq, &line(&[0.0, 4.0, 10.0]), &q).unwrap();
        assert_eq!(a.owner, vec![0, 0, 1]);
        assert_eq!(a.dist, vec![0.0, 16.0, 0.0]);

        let a = assign(&sq, &line(&[5.0]), &q).unwrap();
        assert_eq!(a.owner, vec![0]);
    }

    #[test]
    fn cost_examples() {
        let sq = MetricSpace::squared_euclidean();
        let q = CentroidSet::on_line(&[0.0, 10.0]).unwrap();
        assert_eq!(cost(&sq, &line(&[0.0, 4.0, 10.0]), &q).unwrap(), 16.0);
        let x = WeightedPointSet::on_line(&[0.0, 4.0, 10.0], vec![1.0, 2.0, 1.0]).unwrap();
        assert_eq!(cost(&sq, &x, &q).unwrap(), 32.0);
        let all = CentroidSet::on_line(&[10.0, 4.0, 0.0, 7.0]).unwrap();
        assert_eq!(cost(&sq, &x, &all).unwrap(), 0.0);
    }

    #[test]
    fn cost_rejects_dimension_mismatch() {
        let sq = MetricSpace::squared_euclidean();
        let q = CentroidSet::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(matches!(cost(&sq, &line(&[1.0]), &q), Err(Error::DimensionMismatch { .. })));
    }

    fn brute_force(space: &MetricSpace, x: &WeightedPointSet, q: &CentroidSet) -> (Vec<usize>, Vec<f64>) {
        let mut owner = vec![];
        let mut dist = vec![];
        for p in x.points() {
            let mut best = 0;
            for j in 1..q.len() {
                if space.distance(p, q.centroid(j)).unwrap() < space.distance(p, q.centroid(best)).unwrap() {
                    best = j;
                }
            }
            owner.push(best);
            dist.push(space.distance(p, q.centroid(best)).unwrap());
        }
        (owner, dist)
    }

    fn instance(max_n: usize, max_k: usize) -> impl Strategy<Value = (WeightedPointSet, CentroidSet, f64)> {
        (1usize..=max_n, 1usize..=max_k, 1usize..4, prop::sample::select(vec![0.5, 1.0, 2.0, 3.0])).prop_flat_map(
            |(n, k, d, p)| {
                // small integer grid makes ties common
                (
                    prop::collection::vec(-4i32..4, n * d),
                    prop::collection::vec(0.1f64..5.0, n),
                    prop::collection::vec(-4i32..4, k * d),
                )
                    .prop_map(move |(xs, ws, qs)| {
                        let x = WeightedPointSet::new(d, xs.into_iter().map(f64::from).collect(), ws).unwrap();
                        let q = CentroidSet::new(d, qs.into_iter().map(f64::from).collect()).unwrap();
                        (x, q, p)
                    })
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn assign_matches_brute_force((x, q, p) in instance(500, 20)) {
            let space = MetricSpace::euclidean_power(p).unwrap();
            let a = assign(&space, &x, &q).unwrap();
            let (owner, dist) = brute_force(&space, &x, &q);
            prop_assert_eq!(&a.owner, &owner);
            prop_assert_eq!(&a.dist, &dist);
            prop_assert!(a.owner.iter().all(|&o| o < q.len()));
        }

        #[test]
        fn cost_is_additive_over_clusters((x, q, p) in instance(200, 10)) {
            let space = MetricSpace::euclidean_power(p).unwrap();
            let a = assign(&space, &x, &q).unwrap();
            let total = cost(&space, &x, &q).unwrap();
            let by_cluster: f64 = a.cluster_costs(x.weights(), q.len()).iter().sum();
            prop_assert!((total - by_cluster).abs() <= 1e-9 * total.max(1e-300));
        }

        #[test]
        fn adding_a_centroid_never_increases_cost((x, q, p) in instance(200, 10), extra in prop::collection::vec(-5i32..5, 3)) {
            let space = MetricSpace::euclidean_power(p).unwrap();
            let before = cost(&space, &x, &q).unwrap();
            let mut coords = q.coords().to_vec();
            coords.extend(extra.iter().take(q.dim()).map(|&v| f64::from(v)));
            let grown = CentroidSet::new(q.dim(), coords).unwrap();
            prop_assert!(cost(&space, &x, &grown).unwrap() <= before);
        }

        #[test]
        fn incremental_matches_full((x, q, p) in instance(200, 10)) {
            let space = MetricSpace::euclidean_power(p).unwrap();
            let mut inc = IncrementalAssignment::new(x.len());
            for c in q.iter() {
                inc.add(&space, &x, c);
            }
            let full = assign(&space, &x, &q).unwrap();
            prop_assert_eq!(inc.snapshot(), full);
        }
    }
}
