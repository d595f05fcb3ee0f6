use std::sync::Mutex;

use one2all::assign::cost;
use one2all::bench::median;
use one2all::data::gen_gmm;
use one2all::kmeanspp::run_trace;
use one2all::lloyd::{BaseClusterer, LloydClusterer};
use one2all::one2all::one2all_probs;
use one2all::wrapper::{self, certify, multi_sample_confirm, CertifyMode, RoundAction, WrapperConfig};
use one2all::{CentroidSet, CoordinatedSample, MetricSpace, WeightedPointSet};

fn sq() -> MetricSpace {
    MetricSpace::squared_euclidean()
}

#[test]
fn validation_estimates_track_exact_costs() {
    let data = gen_gmm(20_000, 4, 4, 1).unwrap();
    let x = &data.points;
    let eps = 0.2;
    let m = run_trace(&sq(), x, 8, 1).unwrap().centroids;
    let p = one2all_probs(&sq(), x, &m).unwrap().scaled(1.0 / (eps * eps));
    let sample = CoordinatedSample::draw(x.weights(), p, 3).unwrap();
    let trials = 1000;
    let mut close = 0;
    for t in 0..trials {
        let idx: Vec<usize> = (0..4).map(|j| (t * 7919 + j * 104_729) % x.len()).collect();
        let q = CentroidSet::from_indices(x, &idx).unwrap();
        let exact = certify(&sq(), x, &sample, &q, eps, CertifyMode::Exact).unwrap();
        let val = certify(&sq(), x, &sample, &q, eps, CertifyMode::Validation { seed: 10_000 + t as u64 }).unwrap();
        assert_eq!(exact.estimate, val.estimate);
        if ((val.v_q - exact.v_q) / exact.v_q).abs() <= 3.0 * eps {
            close += 1;
        }
    }
    assert!(close * 100 >= 99 * trials, "{close}/{trials}");
}

struct Recording {
    inner: LloydClusterer,
    seen: Mutex<Vec<CentroidSet>>,
}

impl BaseClusterer for Recording {
    fn cluster(&self, space: &MetricSpace, data: &WeightedPointSet, k: usize, seed: u64) -> one2all::Result<CentroidSet> {
        let q = self.inner.cluster(space, data, k, seed)?;
        self.seen.lock().unwrap().push(q.clone());
        Ok(q)
    }
}

#[test]
fn copies_return_the_cheapest_clustering() {
    let data = gen_gmm(10_000, 3, 4, 2).unwrap();
    let x = &data.points;
    let sample = CoordinatedSample::draw(x.weights(), vec![0.02; x.len()], 4).unwrap();
    let base = Recording { inner: LloydClusterer::default(), seen: Mutex::new(Vec::new()) };
    let (q, v) = multi_sample_confirm(&sq(), x, &sample, &base, 4, 3, 8).unwrap();
    let seen = base.seen.into_inner().unwrap();
    assert_eq!(seen.len(), 3);
    let costs: Vec<f64> = seen.iter().map(|c| cost(&sq(), x, c).unwrap()).collect();
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(v, min);
    assert_eq!(cost(&sq(), x, &q).unwrap(), min);
    assert!(multi_sample_confirm(&sq(), x, &sample, &LloydClusterer::default(), 4, 0, 8).is_err());
}

#[test]
fn more_copies_do_not_hurt_the_median() {
    let base = LloydClusterer { restarts: 1, lloyd_iters: 5 };
    let mut one = Vec::new();
    let mut five = Vec::new();
    for seed in 0..50 {
        let data = gen_gmm(8000, 5, 5, 100 + seed).unwrap();
        let x = &data.points;
        for (copies, out) in [(1, &mut one), (5, &mut five)] {
            let mut cfg = WrapperConfig::new(5, 0.3, seed);
            cfg.copies = copies;
            out.push(wrapper::run(&sq(), x, &base, &cfg).unwrap().cost / data.ground_truth_cost.unwrap());
        }
    }
    assert!(median(five.clone()) <= median(one.clone()), "{} vs {}", median(five), median(one));
}

#[test]
fn round_log_invariants() {
    let base = LloydClusterer::default();
    for seed in 0..12 {
        let data = gen_gmm(6000, 3, 3 + seed as usize % 3, 200 + seed).unwrap();
        let x = &data.points;
        let k = 3 + seed as usize % 3;
        let eps = [0.1, 0.2, 0.3][seed as usize % 3];
        let out = wrapper::run(&sq(), x, &base, &WrapperConfig::new(k, eps, seed)).unwrap();
        let rep = &out.report;
        assert_eq!(out.cost, cost(&sq(), x, &out.centroids).unwrap());
        assert!(out.cost <= rep.v_k);
        assert_eq!(rep.best_v, out.cost);
        let mut prev_r = 0.0;
        let mut prev_best = f64::INFINITY;
        for rec in &rep.log {
            assert!(rec.r >= prev_r, "r went down");
            assert!(rec.best_v <= prev_best, "best went up");
            prev_r = rec.r;
            prev_best = rec.best_v;
            if rec.action == RoundAction::Regrown && rec.r.is_finite() {
                assert!(rec.estimate > rec.target.unwrap());
            }
            if rec.action == RoundAction::Double {
                assert!(rec.estimate <= rec.target.unwrap());
            }
        }
        let last = rep.log.last().unwrap();
        match last.action {
            RoundAction::Certified => {
                assert!(rep.certified);
                assert!(rep.final_v_q <= (1.0 + eps) * rep.final_estimate);
                assert!(rep.final_v_q >= rep.v_m / rep.r_final);
            }
            RoundAction::Saturated => assert!(rep.certified && out.sample.is_saturated()),
            RoundAction::Exhausted => assert!(!rep.certified),
            other => panic!("unexpected final action {other:?}"),
        }
        assert_eq!(rep.final_sample_size, out.sample.len());
    }
}

#[test]
fn wrapper_is_deterministic() {
    let data = gen_gmm(5000, 3, 3, 7).unwrap();
    let cfg = WrapperConfig::new(3, 0.2, 11);
    let a = wrapper::run(&sq(), &data.points, &LloydClusterer::default(), &cfg).unwrap();
    let b = wrapper::run(&sq(), &data.points, &LloydClusterer::default(), &cfg).unwrap();
    assert_eq!(a.centroids, b.centroids);
    assert_eq!(a.report.log_jsonl(), b.report.log_jsonl());
}

#[test]
fn closures_work_as_base_clusterers() {
    let data = gen_gmm(3000, 2, 2, 8).unwrap();
    let seeding = |space: &MetricSpace, s: &WeightedPointSet, k: usize, seed: u64| Ok(run_trace(space, s, k, seed)?.centroids);
    let out = wrapper::run(&sq(), &data.points, &seeding, &WrapperConfig::new(2, 0.3, 1)).unwrap();
    assert_eq!(out.centroids.len(), 2);
}
