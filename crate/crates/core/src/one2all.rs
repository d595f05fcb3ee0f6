//! One-to-all base probabilities.
//!
//! For centroids `M` with cells `X_m`, every point gets
//!
//! ```text
//! pi_x = min{1, max{2 rho w_x d(x, M) / V(M), 8 rho^2 w_x / w(X_m)}}
//! ```
//!
//! These dominate, up to the factor `min{1, V(Q)/V(M)}`, the pps base
//! probabilities of every centroid set `Q` in the space, so one sample drawn
//! from them estimates the cost of all `Q` whose cost is not far below `V(M)`.

use crate::assign::{assign, Assignment};
use crate::error::{Error, Result};
use crate::kmeanspp::KmeansPPTrace;
use crate::points::{CentroidSet, WeightedPointSet};
use crate::sampling::pps_base;
use crate::space::MetricSpace;
use crate::sum::{compensated_sum, CompensatedSum};

/// Absolute slack allowed when checking the dominance inequality.
pub const DOMINANCE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct One2AllProbabilities {
    pub pi: Vec<f64>,
    /// `M` with empty-cell centroids removed.
    pub centroids: CentroidSet,
    /// `V(M | X, w)`.
    pub cost: f64,
    /// `w(X_m)` per centroid.
    pub cluster_weights: Vec<f64>,
    /// Weighted median `Delta_m` of the distances within each cell.
    pub medians: Vec<f64>,
    pub rho: f64,
    /// Owner of each point, indexing `centroids`.
    pub owner: Vec<usize>,
    /// Number of centroids dropped because their cell was empty.
    pub dropped: usize,
}

impl One2AllProbabilities {
    /// `|pi|_1`.
    pub fn overhead(&self) -> f64 {
        compensated_sum(self.pi.iter().copied())
    }

    /// `8 rho^2 |M| + 2 rho`, the bound on [`overhead`](Self::overhead).
    pub fn overhead_bound(&self) -> f64 {
        overhead_bound(self.rho, self.centroids.len())
    }

    /// Capped probabilities `min{1, factor * pi_x}`.
    pub fn scaled(&self, factor: f64) -> Vec<f64> {
        cap_scale(factor, &self.pi)
    }

    /// Expected size `|min{1, factor * pi}|_1` of a sample drawn at `factor`.
    pub fn expected_size(&self, factor: f64) -> f64 {
        compensated_sum(self.pi.iter().map(|&p| cap(factor, p)))
    }
}

pub fn overhead_bound(rho: f64, centroids: usize) -> f64 {
    8.0 * rho * rho * centroids as f64 + 2.0 * rho
}

#[inline]
fn cap(factor: f64, p: f64) -> f64 {
    // factor may be infinite (p > 0 always here), which saturates to 1
    if p <= 0.0 {
        0.0
    } else {
        (factor * p).min(1.0)
    }
}

/// `min{1, factor * p_x}` pointwise.
pub fn cap_scale(factor: f64, probs: &[f64]) -> Vec<f64> {
    probs.iter().map(|&p| cap(factor, p)).collect()
}

/// The smallest value `D` with `sum_{v <= D} w >= W/2` and `sum_{v >= D} w >= W/2`.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("weighted median input"));
    }
    if values.len() != weights.len() {
        return Err(Error::invalid(format!("{} values but {} weights", values.len(), weights.len())));
    }
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::NonPositiveWeight { index, value });
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN value in weighted median input"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total = compensated_sum(weights.iter().copied());
    let mut below = CompensatedSum::new(); // weight of values < current candidate
    let mut i = 0;
    while i < order.len() {
        let v = values[order[i]];
        let mut at = CompensatedSum::new();
        let mut j = i;
        while j < order.len() && values[order[j]] == v {
            at.add(weights[order[j]]);
            j += 1;
        }
        let strictly_below = below.value();
        let up_to = strictly_below + at.value();
        let from = total - strictly_below;
        if 2.0 * up_to >= total && 2.0 * from >= total {
            return Ok(v);
        }
        below.add(at.value());
        i = j;
    }
    // unreachable for positive weights: the last value always satisfies both
    Ok(values[*order.last().unwrap()])
}

/// One-to-all probabilities for centroids `M`. Centroids with empty cells are
/// dropped first; this changes neither the cost nor any probability.
pub fn one2all_probs(space: &MetricSpace, points: &WeightedPointSet, centroids: &CentroidSet) -> Result<One2AllProbabilities> {
    let a = assign(space, points, centroids)?;
    Ok(from_assignment(space.rho(), points, centroids, &a))
}

/// Same as [`one2all_probs`] but reusing an assignment of `points` to `centroids`.
pub fn from_assignment(rho: f64, points: &WeightedPointSet, centroids: &CentroidSet, a: &Assignment) -> One2AllProbabilities {
    let k = centroids.len();
    let sizes = a.cluster_sizes(k);
    let keep: Vec<bool> = sizes.iter().map(|&s| s > 0).collect();
    let dropped = keep.iter().filter(|k| !**k).count();
    let (centroids, owner) = if dropped == 0 {
        (centroids.clone(), a.owner.clone())
    } else {
        let mut remap = vec![usize::MAX; k];
        let mut next = 0;
        for (j, &kept) in keep.iter().enumerate() {
            if kept {
                remap[j] = next;
                next += 1;
            }
        }
        let m = centroids.retain_indices(&keep).expect("at least one cell is non-empty");
        (m, a.owner.iter().map(|&o| remap[o]).collect())
    };
    let k = centroids.len();
    let w = points.weights();
    let reassigned = Assignment { owner, dist: a.dist.clone() };
    let cost = reassigned.cost(w);
    let cluster_weights = reassigned.cluster_weights(w, k);

    let first = 2.0 * rho;
    let second = 8.0 * rho * rho;
    let pi = (0..points.len())
        .map(|i| {
            let by_cost = if cost > 0.0 { first * w[i] * reassigned.dist[i] / cost } else { 0.0 };
            let by_cell = second * w[i] / cluster_weights[reassigned.owner[i]];
            by_cost.max(by_cell).min(1.0)
        })
        .collect();

    let mut cell_values: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut cell_weights: Vec<Vec<f64>> = vec![Vec::new(); k];
    for i in 0..points.len() {
        cell_values[reassigned.owner[i]].push(reassigned.dist[i]);
        cell_weights[reassigned.owner[i]].push(w[i]);
    }
    let medians = cell_values
        .iter()
        .zip(&cell_weights)
        .map(|(v, cw)| weighted_median(v, cw).expect("cells are non-empty with positive weights"))
        .collect();

    One2AllProbabilities {
        pi,
        centroids,
        cost,
        cluster_weights,
        medians,
        rho,
        owner: reassigned.owner,
        dropped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceReport {
    pub holds: bool,
    /// `max_x min{1, V(Q)/V(M)} psi_x / pi_x`.
    pub worst_ratio: f64,
    pub violations: usize,
    pub query_cost: f64,
}

/// Checks `pi^(M) >= min{1, V(Q)/V(M)} psi^(Q)` at every point.
pub fn verify_dominance(
    space: &MetricSpace,
    points: &WeightedPointSet,
    probs: &One2AllProbabilities,
    query: &CentroidSet,
) -> Result<DominanceReport> {
    let psi = match pps_base(space, points, query) {
        Ok(b) => b,
        Err(Error::DegenerateDistribution) => {
            // V(Q) = 0: the factor min{1, V(Q)/V(M)} vanishes
            return Ok(DominanceReport { holds: true, worst_ratio: 0.0, violations: 0, query_cost: 0.0 });
        }
        Err(e) => return Err(e),
    };
    let factor = if probs.cost > 0.0 { (psi.total / probs.cost).min(1.0) } else { 1.0 };
    let mut worst = 0.0f64;
    let mut violations = 0;
    for (&s, &p) in psi.psi.iter().zip(&probs.pi) {
        let need = factor * s;
        worst = worst.max(need / p);
        if need > p + DOMINANCE_SLACK {
            violations += 1;
        }
    }
    Ok(DominanceReport { holds: violations == 0, worst_ratio: worst, violations, query_cost: psi.total })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweetSpotMode {
    /// Minimize the expected sample size `|min{1, max{1, v_i/C} eps^-2 pi^(M_i)}|_1`.
    Exact { threshold: f64, eps: f64 },
    /// Minimize the proxy `i * v_i`.
    Rough,
}

impl SweetSpotMode {
    fn validate(&self) -> Result<()> {
        if let SweetSpotMode::Exact { threshold, eps } = *self {
            if !(threshold > 0.0 && threshold.is_finite()) {
                return Err(Error::invalid(format!("cost threshold must be positive, got {threshold}")));
            }
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::invalid(format!("eps must be positive, got {eps}")));
            }
        }
        Ok(())
    }
}

/// Probabilities `min{1, max{1, v/C} eps^-2 pi}` used by the cost oracle.
pub fn oracle_probabilities(probs: &One2AllProbabilities, threshold: f64, eps: f64) -> Vec<f64> {
    probs.scaled(oracle_factor(probs.cost, threshold, eps))
}

pub(crate) fn oracle_factor(cost: f64, threshold: f64, eps: f64) -> f64 {
    (cost / threshold).max(1.0) / (eps * eps)
}

/// Online sweet-spot selection over kmeans++ prefixes, fed one prefix at a
/// time. Ties keep the shortest prefix.
#[derive(Debug, Clone)]
pub struct SweetSpotSearch {
    mode: SweetSpotMode,
    best: Option<(usize, f64, One2AllProbabilities)>,
    scores: Vec<f64>,
}

impl SweetSpotSearch {
    pub fn new(mode: SweetSpotMode) -> Result<Self> {
        mode.validate()?;
        Ok(Self { mode, best: None, scores: Vec::new() })
    }

    /// Offers prefix `M_i` (of length `i`, 1-based) with cost `v_i` and the
    /// assignment of the points to it.
    pub fn observe(&mut self, rho: f64, points: &WeightedPointSet, prefix: &CentroidSet, v: f64, a: &Assignment) {
        let i = self.scores.len() + 1;
        let improves = |score: f64, best: &Option<(usize, f64, One2AllProbabilities)>| {
            best.as_ref().is_none_or(|(_, b, _)| score < *b)
        };
        match self.mode {
            SweetSpotMode::Rough => {
                let score = i as f64 * v;
                self.scores.push(score);
                if improves(score, &self.best) {
                    self.best = Some((i, score, from_assignment(rho, points, prefix, a)));
                }
            }
            SweetSpotMode::Exact { threshold, eps } => {
                let probs = from_assignment(rho, points, prefix, a);
                let score = probs.expected_size(oracle_factor(v, threshold, eps));
                self.scores.push(score);
                if improves(score, &self.best) {
                    self.best = Some((i, score, probs));
                }
            }
        }
    }

    /// Score of every prefix observed so far.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// The winning prefix length and its probabilities.
    pub fn finish(self) -> Option<(usize, One2AllProbabilities)> {
        self.best.map(|(i, _, p)| (i, p))
    }
}

/// Picks the prefix of a kmeans++ trace that minimizes the sample size
/// (exact mode) or the proxy `i * v_i` (rough mode). Returns the 1-based
/// prefix length and the probabilities for that prefix.
pub fn sweet_spot(
    space: &MetricSpace,
    points: &WeightedPointSet,
    trace: &KmeansPPTrace,
    mode: SweetSpotMode,
) -> Result<(usize, One2AllProbabilities)> {
    if trace.is_empty() {
        return Err(Error::Empty("kmeans++ trace"));
    }
    let mut search = SweetSpotSearch::new(mode)?;
    if mode == SweetSpotMode::Rough {
        let i = rough_sweet_spot(&trace.prefix_costs);
        let probs = one2all_probs(space, points, &trace.prefix(i)?)?;
        return Ok((i, probs));
    }
    let mut inc = crate::assign::IncrementalAssignment::new(points.len());
    for i in 1..=trace.len() {
        inc.add(space, points, trace.centroids.centroid(i - 1));
        search.observe(space.rho(), points, &trace.prefix(i)?, trace.prefix_costs[i - 1], &inc.snapshot());
    }
    Ok(search.finish().expect("trace is non-empty"))
}

/// `argmin_i i * v_i` over 1-based prefix lengths, ties to the smallest `i`.
pub fn rough_sweet_spot(prefix_costs: &[f64]) -> usize {
    let mut best = (1, f64::INFINITY);
    for (j, &v) in prefix_costs.iter().enumerate() {
        let score = (j + 1) as f64 * v;
        if score < best.1 {
            best = (j + 1, score);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmeanspp::run_trace;

    fn line(xs: &[f64]) -> WeightedPointSet {
        WeightedPointSet::on_line(xs, vec![1.0; xs.len()]).unwrap()
    }

    /// Checks both defining inequalities by direct summation.
    fn is_weighted_median(values: &[f64], weights: &[f64], m: f64) -> bool {
        let total: f64 = weights.iter().sum();
        let le: f64 = values.iter().zip(weights).filter(|(v, _)| **v <= m).map(|(_, w)| w).sum();
        let ge: f64 = values.iter().zip(weights).filter(|(v, _)| **v >= m).map(|(_, w)| w).sum();
        2.0 * le >= total * (1.0 - 1e-12) && 2.0 * ge >= total * (1.0 - 1e-12)
    }

    #[test]
    fn weighted_median_examples() {
        assert_eq!(weighted_median(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(weighted_median(&[1.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
        // W = 6; v = 1: below-or-equal 3 >= 3, above-or-equal 6 >= 3
        assert_eq!(weighted_median(&[5.0, 1.0, 9.0, 3.0], &[1.0, 3.0, 1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(weighted_median(&[], &[]), Err(Error::Empty(_))));
        assert!(weighted_median(&[1.0], &[0.0]).is_err());
        assert!(weighted_median(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn weighted_median_brute_force() {
        // every candidate value is checked; the answer is the smallest that passes
        let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
            (vec![4.0, 4.0, 1.0, 7.0], vec![0.5, 0.5, 2.0, 0.1]),
            (vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0]),
            (vec![3.0, 1.0, 2.0, 5.0, 4.0], vec![1.0, 1.0, 1.0, 1.0, 10.0]),
        ];
        for (v, w) in cases {
            let m = weighted_median(&v, &w).unwrap();
            let expect = v
                .iter()
                .copied()
                .filter(|&c| is_weighted_median(&v, &w, c))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(m, expect);
        }
    }

    #[test]
    fn tiny_instance_saturates() {
        let sq = MetricSpace::squared_euclidean();
        let x = line(&[0.0, 4.0, 10.0]);
        let m = CentroidSet::on_line(&[0.0, 10.0]).unwrap();
        let p = one2all_probs(&sq, &x, &m).unwrap();
        assert_eq!(p.cost, 16.0);
        assert_eq!(p.cluster_weights, vec![2.0, 1.0]);
        assert_eq!(p.pi, vec![1.0, 1.0, 1.0]);
        assert_eq!(p.medians, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_cost_gives_all_ones() {
        let sq = MetricSpace::squared_euclidean();
        let x = line(&[1.0, 2.0, 3.0, 8.0]);
        let m = CentroidSet::on_line(&[1.0, 2.0, 3.0, 8.0]).unwrap();
        let p = one2all_probs(&sq, &x, &m).unwrap();
        assert_eq!(p.cost, 0.0);
        assert!(p.pi.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_cells_are_dropped_without_effect() {
        let sq = MetricSpace::squared_euclidean();
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 5.0).collect();
        let x = line(&xs);
        let m = CentroidSet::on_line(&[-4.0, 4.0]).unwrap();
        let m_extra = CentroidSet::on_line(&[-4.0, 1000.0, 4.0, -999.0]).unwrap();
        let a = one2all_probs(&sq, &x, &m).unwrap();
        let b = one2all_probs(&sq, &x, &m_extra).unwrap();
        assert_eq!(b.dropped, 2);
        assert_eq!(a.dropped, 0);
        assert_eq!(a.cost, b.cost);
        assert_eq!(a.pi, b.pi);
        assert_eq!(b.centroids, m);
        assert_eq!(a.owner, b.owner);
    }

    #[test]
    fn lower_bounds_per_term() {
        let sq = MetricSpace::squared_euclidean();
        let coords: Vec<f64> = (0..300).map(|i| ((i * 31) % 97) as f64 * 0.21).collect();
        let ws: Vec<f64> = (0..150).map(|i| 0.2 + (i % 5) as f64).collect();
        let x = WeightedPointSet::new(2, coords, ws).unwrap();
        let t = run_trace(&sq, &x, 4, 11).unwrap();
        let p = one2all_probs(&sq, &x, &t.centroids).unwrap();
        let rho = sq.rho();
        let dist = assign(&sq, &x, &p.centroids).unwrap().dist;
        for (i, d) in dist.iter().enumerate() {
            let wm = p.cluster_weights[p.owner[i]];
            assert!(p.pi[i] > 0.0 && p.pi[i] <= 1.0);
            assert!(p.pi[i] >= (8.0 * rho * rho * x.weight(i) / wm).min(1.0));
            assert!(p.pi[i] >= (2.0 * rho * x.weight(i) * d / p.cost).min(1.0));
        }
        assert!(p.overhead() <= p.overhead_bound());
    }

    #[test]
    fn dominance_with_q_equal_m() {
        let sq = MetricSpace::squared_euclidean();
        let xs: Vec<f64> = (0..500).map(|i| ((i * 7919) % 1013) as f64 / 7.0).collect();
        let x = line(&xs);
        let m = CentroidSet::on_line(&[10.0, 80.0]).unwrap();
        let p = one2all_probs(&sq, &x, &m).unwrap();
        let r = verify_dominance(&sq, &x, &p, &m).unwrap();
        assert!(r.holds);
        // with Q = M the first term alone gives psi_x / pi_x <= 1 / (2 rho)
        assert!(r.worst_ratio <= 1.0 / (2.0 * sq.rho()) + 1e-12);
    }

    #[test]
    fn rough_sweet_spot_examples() {
        assert_eq!(rough_sweet_spot(&[5.0, 5.0, 5.0, 5.0]), 1);
        // scores 100, 80, 117, 156
        assert_eq!(rough_sweet_spot(&[100.0, 40.0, 39.0, 39.0]), 2);
        // exact ties keep the shorter prefix
        assert_eq!(rough_sweet_spot(&[4.0, 2.0, 1.5]), 1);
    }

    #[test]
    fn exact_mode_rejects_bad_parameters() {
        assert!(SweetSpotSearch::new(SweetSpotMode::Exact { threshold: 0.0, eps: 0.1 }).is_err());
        assert!(SweetSpotSearch::new(SweetSpotMode::Exact { threshold: 1.0, eps: -0.1 }).is_err());
    }

    #[test]
    fn exact_sweet_spot_minimizes_expected_size() {
        let sq = MetricSpace::squared_euclidean();
        let mut xs = Vec::new();
        for c in 0..6 {
            for j in 0..50 {
                xs.push(c as f64 * 100.0 + (j as f64 * 0.731).sin());
            }
        }
        let x = line(&xs);
        let t = run_trace(&sq, &x, 10, 4).unwrap();
        let c = t.prefix_costs[5];
        let (i, probs) = sweet_spot(&sq, &x, &t, SweetSpotMode::Exact { threshold: c, eps: 0.5 }).unwrap();
        let size = |j: usize| {
            let p = one2all_probs(&sq, &x, &t.prefix(j).unwrap()).unwrap();
            oracle_probabilities(&p, c, 0.5).iter().sum::<f64>()
        };
        let best = size(i);
        for j in 1..=t.len() {
            assert!(best <= size(j) + 1e-9, "prefix {i} beaten by {j}");
        }
        assert_eq!(probs.centroids, t.prefix(i).unwrap());
    }
}
