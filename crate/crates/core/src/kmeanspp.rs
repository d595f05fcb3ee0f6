//! kmeans++ (D^2) seeding with a full trace of per-prefix costs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assign::{check_compatible, Assignment, IncrementalAssignment};
use crate::error::{Error, Result};
use crate::points::{CentroidSet, WeightedPointSet};
use crate::space::MetricSpace;
use crate::sum::CompensatedSum;

/// An ordered kmeans++ centroid sequence `m_1..m_l` with prefix costs
/// `v_i = V({m_1..m_i} | X, w)`.
#[derive(Debug, Clone)]
pub struct KmeansPPTrace {
    /// Indices into the point set of the selected centroids, in order.
    pub indices: Vec<usize>,
    pub centroids: CentroidSet,
    pub prefix_costs: Vec<f64>,
    /// Assignment of every point to the full prefix.
    pub final_assignment: Assignment,
    /// Set when the residual mass hit zero before `requested` centroids.
    pub truncated: bool,
    pub requested: usize,
    pub seed: u64,
}

impl KmeansPPTrace {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The first `len` centroids, `M_len`.
    pub fn prefix(&self, len: usize) -> Result<CentroidSet> {
        self.centroids.prefix(len)
    }

    /// `v_len`, clamped to the last available prefix when the trace was truncated.
    pub fn cost_at(&self, len: usize) -> f64 {
        self.prefix_costs[len.clamp(1, self.len()) - 1]
    }
}

/// Stepwise kmeans++: each step draws one centroid and updates the per-point
/// distance to the prefix with one distance evaluation per point.
pub struct KmeansPP<'a> {
    space: &'a MetricSpace,
    points: &'a WeightedPointSet,
    assignment: IncrementalAssignment,
    rng: ChaCha8Rng,
    chosen: Vec<usize>,
    costs: Vec<f64>,
    exhausted: bool,
}

impl<'a> KmeansPP<'a> {
    pub fn new(space: &'a MetricSpace, points: &'a WeightedPointSet, seed: u64) -> Result<Self> {
        space.check_dim(points.dim())?;
        space.check_points(points.coords())?;
        Ok(Self {
            space,
            points,
            assignment: IncrementalAssignment::new(points.len()),
            rng: ChaCha8Rng::seed_from_u64(seed),
            chosen: Vec::new(),
            costs: Vec::new(),
            exhausted: false,
        })
    }

    /// Draws the next centroid. Returns its point index and the new prefix
    /// cost, or `None` once every point sits at distance zero.
    pub fn step(&mut self) -> Option<(usize, f64)> {
        if self.exhausted {
            return None;
        }
        let w = self.points.weights();
        let pick = if self.chosen.is_empty() {
            draw_proportional(&mut self.rng, w.len(), |i| w[i])
        } else {
            let a = &self.assignment;
            draw_proportional(&mut self.rng, w.len(), |i| w[i] * a.dist(i))
        };
        let Some(pick) = pick else {
            self.exhausted = true;
            return None;
        };
        self.assignment.add(self.space, self.points, self.points.point(pick));
        let v = self.assignment.cost(w);
        self.chosen.push(pick);
        self.costs.push(v);
        Some((pick, v))
    }

    pub fn chosen(&self) -> &[usize] {
        &self.chosen
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn assignment(&self) -> Assignment {
        self.assignment.snapshot()
    }

    pub fn centroids(&self) -> Result<CentroidSet> {
        CentroidSet::from_indices(self.points, &self.chosen)
    }

    pub fn into_trace(self, requested: usize, seed: u64) -> Result<KmeansPPTrace> {
        Ok(KmeansPPTrace {
            centroids: self.centroids()?,
            final_assignment: self.assignment.snapshot(),
            truncated: self.chosen.len() < requested,
            indices: self.chosen,
            prefix_costs: self.costs,
            requested,
            seed,
        })
    }
}

/// Weighted categorical draw with a single uniform against the running prefix
/// sum of masses. Zero-mass items are never returned.
fn draw_proportional<R: Rng, F: Fn(usize) -> f64>(rng: &mut R, n: usize, mass: F) -> Option<usize> {
    let total: f64 = (0..n).map(&mass).collect::<CompensatedSum>().value();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for i in 0..n {
        let m = mass(i);
        if m > 0.0 {
            acc += m;
            last_positive = Some(i);
            if acc > target {
                return Some(i);
            }
        }
    }
    // rounding left target just above the accumulated total
    last_positive
}

/// Runs `ell` kmeans++ iterations. Stops early, with `truncated` set, when all
/// residual distances are zero.
pub fn run_trace(space: &MetricSpace, points: &WeightedPointSet, ell: usize, seed: u64) -> Result<KmeansPPTrace> {
    if ell == 0 {
        return Err(Error::invalid("kmeans++ needs at least one iteration"));
    }
    if ell > points.len() {
        return Err(Error::invalid(format!("{ell} iterations requested for {} points", points.len())));
    }
    let mut seeder = KmeansPP::new(space, points, seed)?;
    for _ in 0..ell {
        if seeder.step().is_none() {
            break;
        }
    }
    seeder.into_trace(ell, seed)
}

/// Costs `v_i` of every prefix of `centroids`, computed by replaying them.
pub fn prefix_costs(space: &MetricSpace, points: &WeightedPointSet, centroids: &CentroidSet) -> Result<Vec<f64>> {
    check_compatible(space, points, centroids)?;
    let mut inc = IncrementalAssignment::new(points.len());
    Ok(centroids
        .iter()
        .map(|c| {
            inc.add(space, points, c);
            inc.cost(points.weights())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::cost;

    fn line(xs: &[f64]) -> WeightedPointSet {
        WeightedPointSet::on_line(xs, vec![1.0; xs.len()]).unwrap()
    }

    #[test]
    fn two_points_second_is_forced() {
        let sq = MetricSpace::squared_euclidean();
        let x = line(&[0.0, 10.0]);
        for seed in 0..50 {
            let t = run_trace(&sq, &x, 2, seed).unwrap();
            assert_eq!(t.len(), 2);
            assert_ne!(t.indices[0], t.indices[1]);
            assert_eq!(t.prefix_costs, vec![100.0, 0.0]);
            assert!(!t.truncated);
        }
    }

    #[test]
    fn truncates_when_every_point_is_a_centroid() {
        let sq = MetricSpace::squared_euclidean();
        let x = line(&[1.0, 1.0, 5.0, 5.0]);
        let t = run_trace(&sq, &x, 4, 3).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.truncated);
        assert_eq!(*t.prefix_costs.last().unwrap(), 0.0);
        assert_eq!(t.cost_at(4), 0.0);
    }

    #[test]
    fn rejects_bad_lengths() {
        let sq = MetricSpace::squared_euclidean();
        let x = line(&[1.0, 2.0]);
        assert!(run_trace(&sq, &x, 0, 0).is_err());
        assert!(run_trace(&sq, &x, 3, 0).is_err());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let sq = MetricSpace::squared_euclidean();
        let xs: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64 * 0.37).collect();
        let x = WeightedPointSet::new(2, xs, vec![1.0; 150]).unwrap();
        let a = run_trace(&sq, &x, 12, 99).unwrap();
        let b = run_trace(&sq, &x, 12, 99).unwrap();
        assert_eq!(a.indices, b.indices);
        assert_eq!(
            a.prefix_costs.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.prefix_costs.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn prefix_costs_match_fresh_cost_and_decrease() {
        let sq = MetricSpace::squared_euclidean();
        let xs: Vec<f64> = (0..600).map(|i| ((i * 7919) % 613) as f64 / 13.0).collect();
        let ws: Vec<f64> = (0..200).map(|i| 0.5 + (i % 7) as f64).collect();
        let x = WeightedPointSet::new(3, xs, ws).unwrap();
        let t = run_trace(&sq, &x, 20, 5).unwrap();
        for i in 1..=t.len() {
            let fresh = cost(&sq, &x, &t.prefix(i).unwrap()).unwrap();
            let v = t.prefix_costs[i - 1];
            assert!((fresh - v).abs() <= 1e-9 * fresh.max(1e-300), "prefix {i}: {fresh} vs {v}");
            if i > 1 {
                assert!(v <= t.prefix_costs[i - 2]);
            }
        }
        assert_eq!(prefix_costs(&sq, &x, &t.centroids).unwrap(), t.prefix_costs);
    }

    #[test]
    fn first_draw_is_uniform_for_unit_weights() {
        let sq = MetricSpace::squared_euclidean();
        let n = 8;
        let x = line(&(0..n).map(|i| i as f64).collect::<Vec<_>>());
        let trials = 10_000;
        let mut counts = vec![0usize; n];
        for seed in 0..trials {
            counts[run_trace(&sq, &x, 1, seed as u64).unwrap().indices[0]] += 1;
        }
        let p = 1.0 / n as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - trials as f64 * p).abs() <= 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn first_draw_follows_weights() {
        let sq = MetricSpace::squared_euclidean();
        let x = WeightedPointSet::on_line(&[0.0, 1.0, 2.0], vec![1.0, 0.0001, 3.0]).unwrap();
        let trials = 4000;
        let hits = (0..trials).filter(|&s| run_trace(&sq, &x, 1, s).unwrap().indices[0] == 2).count();
        let p = 3.0 / 4.0001;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((hits as f64 - trials as f64 * p).abs() <= 4.0 * sigma);
    }
}
