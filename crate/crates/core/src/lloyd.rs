//! The default base clusterer: best-of-`restarts` kmeans++ seedings refined
//! by weighted Lloyd iterations, for squared Euclidean spaces.

use crate::assign::{assign, assign_unchecked, check_compatible, Assignment};
use crate::error::{Error, Result};
use crate::kmeanspp::run_trace;
use crate::par;
use crate::points::{CentroidSet, WeightedPointSet};
use crate::seed::substream;
use crate::space::MetricSpace;

/// Anything that maps a weighted point set to at most `k` centroids.
///
/// Implementations must honor the weights: clusterers run on samples whose
/// weights are inverse inclusion probabilities.
pub trait BaseClusterer: Sync {
    fn cluster(&self, space: &MetricSpace, data: &WeightedPointSet, k: usize, seed: u64) -> Result<CentroidSet>;
}

impl<F> BaseClusterer for F
where
    F: Fn(&MetricSpace, &WeightedPointSet, usize, u64) -> Result<CentroidSet> + Sync,
{
    fn cluster(&self, space: &MetricSpace, data: &WeightedPointSet, k: usize, seed: u64) -> Result<CentroidSet> {
        self(space, data, k, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LloydClusterer {
    pub restarts: usize,
    pub lloyd_iters: usize,
}

impl Default for LloydClusterer {
    fn default() -> Self {
        Self { restarts: 5, lloyd_iters: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaseClustererConfig {
    pub restarts: usize,
    pub lloyd_iters: usize,
    pub k: usize,
    pub seed: u64,
}

impl BaseClustererConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        let d = LloydClusterer::default();
        Self { restarts: d.restarts, lloyd_iters: d.lloyd_iters, k, seed }
    }
}

impl BaseClusterer for LloydClusterer {
    fn cluster(&self, space: &MetricSpace, data: &WeightedPointSet, k: usize, seed: u64) -> Result<CentroidSet> {
        let cfg = BaseClustererConfig { restarts: self.restarts, lloyd_iters: self.lloyd_iters, k, seed };
        Ok(base_cluster_traced(space, data, &cfg)?.centroids)
    }
}

fn require_squared_euclidean(space: &MetricSpace) -> Result<()> {
    if space.is_squared_euclidean() {
        Ok(())
    } else {
        Err(Error::Unsupported("Lloyd iterations need a squared Euclidean space".into()))
    }
}

/// One Lloyd iteration: every centroid moves to the weighted mean of its
/// cell. A centroid whose cell is empty is re-seeded at the point currently
/// farthest from its owner.
pub fn lloyd_step(space: &MetricSpace, points: &WeightedPointSet, centroids: &CentroidSet) -> Result<CentroidSet> {
    require_squared_euclidean(space)?;
    let a = assign(space, points, centroids)?;
    Ok(step_from_assignment(points, centroids, &a))
}

fn step_from_assignment(points: &WeightedPointSet, centroids: &CentroidSet, a: &Assignment) -> CentroidSet {
    let (k, dim) = (centroids.len(), points.dim());
    let mut sums = vec![0.0; k * dim];
    let mut mass = vec![0.0; k];
    for (i, x) in points.points().enumerate() {
        let (o, w) = (a.owner[i], points.weight(i));
        mass[o] += w;
        for (s, v) in sums[o * dim..(o + 1) * dim].iter_mut().zip(x) {
            *s += w * v;
        }
    }
    let mut far: Vec<usize> = Vec::new();
    if mass.contains(&0.0) {
        far = (0..points.len()).collect();
        far.sort_by(|&i, &j| a.dist[j].total_cmp(&a.dist[i]).then(i.cmp(&j)));
    }
    let mut far = far.into_iter();
    let mut coords = Vec::with_capacity(k * dim);
    for j in 0..k {
        if mass[j] > 0.0 {
            coords.extend(sums[j * dim..(j + 1) * dim].iter().map(|s| s / mass[j]));
        } else if let Some(i) = far.next() {
            coords.extend_from_slice(points.point(i));
        } else {
            coords.extend_from_slice(centroids.centroid(j));
        }
    }
    CentroidSet::new(dim, coords).expect("means of finite points are finite")
}

/// Result of [`base_cluster_traced`], with the cost history for inspection.
#[derive(Debug, Clone)]
pub struct BaseClusterRun {
    pub centroids: CentroidSet,
    pub cost: f64,
    /// Cost of each kmeans++ restart.
    pub restart_costs: Vec<f64>,
    /// Cost before each Lloyd step, then the final cost.
    pub lloyd_costs: Vec<f64>,
}

/// Best of `restarts` kmeans++ seedings, refined by `lloyd_iters` Lloyd steps.
pub fn base_cluster(space: &MetricSpace, points: &WeightedPointSet, cfg: &BaseClustererConfig) -> Result<CentroidSet> {
    Ok(base_cluster_traced(space, points, cfg)?.centroids)
}

pub fn base_cluster_traced(space: &MetricSpace, points: &WeightedPointSet, cfg: &BaseClustererConfig) -> Result<BaseClusterRun> {
    require_squared_euclidean(space)?;
    if cfg.restarts == 0 {
        return Err(Error::invalid("need at least one restart"));
    }
    if cfg.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    // a sample can hold fewer points than k
    let k = cfg.k.min(points.len());
    let traces = par::map_jobs(cfg.restarts, |r| run_trace(space, points, k, substream(cfg.seed, r as u64)));
    let mut best: Option<(f64, CentroidSet)> = None;
    let mut restart_costs = Vec::with_capacity(cfg.restarts);
    for t in traces {
        let t = t?;
        let v = *t.prefix_costs.last().expect("trace has at least one centroid");
        restart_costs.push(v);
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, t.centroids));
        }
    }
    let (mut best_cost, mut current) = best.expect("restarts >= 1");
    let mut best_centroids = current.clone();
    let mut lloyd_costs = vec![best_cost];
    for _ in 0..cfg.lloyd_iters {
        let a = assign_unchecked(space, points, &current);
        let next = step_from_assignment(points, &current, &a);
        let v = crate::assign::cost_unchecked(space, points, &next);
        lloyd_costs.push(v);
        if v <= best_cost {
            best_cost = v;
            best_centroids = next.clone();
        }
        let converged = next == current;
        current = next;
        if converged {
            break;
        }
    }
    check_compatible(space, points, &best_centroids)?;
    Ok(BaseClusterRun { centroids: best_centroids, cost: best_cost, restart_costs, lloyd_costs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::cost;

    fn line(xs: &[f64]) -> WeightedPointSet {
        WeightedPointSet::on_line(xs, vec![1.0; xs.len()]).unwrap()
    }

    #[test]
    fn step_examples() {
        let sq = MetricSpace::squared_euclidean();
        let q = lloyd_step(&sq, &line(&[0.0, 2.0]), &CentroidSet::on_line(&[1.0]).unwrap()).unwrap();
        assert_eq!(q.coords(), &[1.0]);

        let x = line(&[0.0, 2.0, 10.0, 12.0]);
        let q = lloyd_step(&sq, &x, &CentroidSet::on_line(&[1.0, 11.0]).unwrap()).unwrap();
        assert_eq!(q.coords(), &[1.0, 11.0]);
        assert_eq!(cost(&sq, &x, &q).unwrap(), 4.0);

        let q = lloyd_step(&sq, &x, &CentroidSet::on_line(&[0.0, 12.0]).unwrap()).unwrap();
        assert_eq!(q.coords(), &[1.0, 11.0]);
    }

    #[test]
    fn weighted_mean() {
        let sq = MetricSpace::squared_euclidean();
        let x = WeightedPointSet::on_line(&[0.0, 4.0], vec![3.0, 1.0]).unwrap();
        let q = lloyd_step(&sq, &x, &CentroidSet::on_line(&[2.0]).unwrap()).unwrap();
        assert_eq!(q.coords(), &[1.0]);
    }

    #[test]
    fn empty_cell_reseeds_at_farthest_point() {
        let sq = MetricSpace::squared_euclidean();
        let x = line(&[0.0, 1.0, 9.0]);
        // centroid 100 owns nothing; 9 is farthest from its owner 0
        let q = lloyd_step(&sq, &x, &CentroidSet::on_line(&[0.0, 100.0]).unwrap()).unwrap();
        assert_eq!(q.coords(), &[10.0 / 3.0, 9.0]);
    }

    #[test]
    fn non_squared_space_is_unsupported() {
        let l1 = MetricSpace::euclidean();
        let err = lloyd_step(&l1, &line(&[0.0, 1.0]), &CentroidSet::on_line(&[0.0]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        assert!(base_cluster(&l1, &line(&[0.0, 1.0]), &BaseClustererConfig::new(1, 0)).is_err());
    }

    #[test]
    fn separated_pairs() {
        let sq = MetricSpace::squared_euclidean();
        let x = line(&[0.0, 2.0, 100.0, 102.0]);
        for seed in 0..10 {
            let q = base_cluster(&sq, &x, &BaseClustererConfig::new(2, seed)).unwrap();
            let mut c = q.coords().to_vec();
            c.sort_by(f64::total_cmp);
            assert_eq!(c, vec![1.0, 101.0]);
            assert_eq!(cost(&sq, &x, &q).unwrap(), 4.0);
        }
    }

    #[test]
    fn k_equals_n_gives_zero_cost() {
        let sq = MetricSpace::squared_euclidean();
        let x = WeightedPointSet::new(2, vec![0.0, 0.0, 1.0, 5.0, -3.0, 2.0, 7.0, 7.0], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let q = base_cluster(&sq, &x, &BaseClustererConfig::new(4, 1)).unwrap();
        assert_eq!(cost(&sq, &x, &q).unwrap(), 0.0);
        // more centroids than points is clamped
        let q = base_cluster(&sq, &x, &BaseClustererConfig::new(9, 1)).unwrap();
        assert_eq!(q.len(), 4);
    }

    #[test]
    fn lloyd_never_increases_cost_and_beats_restarts() {
        let sq = MetricSpace::squared_euclidean();
        let coords: Vec<f64> = (0..2000).map(|i| ((i * 7919 + 13) % 1009) as f64 / 17.0).collect();
        let x = WeightedPointSet::unit(4, coords).unwrap();
        let run = base_cluster_traced(&sq, &x, &BaseClustererConfig::new(6, 3)).unwrap();
        for w in run.lloyd_costs.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{} -> {}", w[0], w[1]);
        }
        let min_restart = run.restart_costs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(run.cost <= min_restart);
        assert!((cost(&sq, &x, &run.centroids).unwrap() - run.cost).abs() <= 1e-9 * run.cost);
    }

    #[test]
    fn closures_are_clusterers() {
        let sq = MetricSpace::squared_euclidean();
        let first = |_: &MetricSpace, d: &WeightedPointSet, _k: usize, _s: u64| CentroidSet::from_indices(d, &[0]);
        let q = first.cluster(&sq, &line(&[3.0, 4.0]), 1, 0).unwrap();
        assert_eq!(q.coords(), &[3.0]);
    }
}
