//! Adaptive clustering over coordinated samples.
//!
//! The base clusterer runs on a sample drawn at `min{1, r eps^-2 pi}`, where
//! `pi` are the one-to-all probabilities of the rough sweet-spot prefix of a
//! `2k`-step kmeans++ run. The result is checked against the full data; when
//! the sample was misleading, `r` grows and the sample grows with it under
//! the same randomization.

use std::sync::Arc;

use serde::Serialize;

use crate::assign::{check_compatible, cost_unchecked};
use crate::error::{Error, Result};
use crate::kmeanspp::run_trace;
use crate::lloyd::BaseClusterer;
use crate::one2all::{sweet_spot, One2AllProbabilities, SweetSpotMode};
use crate::par;
use crate::points::{CentroidSet, WeightedPointSet};
use crate::sampling::{estimate_cost, CoordinatedSample, Randomization};
use crate::seed::substream;
use crate::space::MetricSpace;

pub const DEFAULT_MAX_ROUNDS: usize = 40;

const STREAM_SEEDING: u64 = 0;
const STREAM_SAMPLE: u64 = 1;
const STREAM_ROUNDS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum CertifyMode {
    /// Exact cost over the full data.
    Exact,
    /// Estimate from an independent sample at the same probabilities.
    Validation { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct WrapperConfig {
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    pub max_rounds: usize,
    /// Independent samples clustered per round; the cheapest result wins.
    pub copies: usize,
    pub certify: CertifyMode,
    /// kmeans++ iterations; `None` means `2k`.
    pub ell: Option<usize>,
    /// Overrides the seed-derived randomization of the main sample.
    pub randomization: Option<Arc<Randomization>>,
}

impl WrapperConfig {
    pub fn new(k: usize, eps: f64, seed: u64) -> Self {
        Self {
            k,
            eps,
            seed,
            max_rounds: DEFAULT_MAX_ROUNDS,
            copies: 1,
            certify: CertifyMode::Exact,
            ell: None,
            randomization: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundAction {
    /// Both break conditions held.
    Certified,
    /// The sample was the whole data set.
    Saturated,
    /// The main test failed and `r` was raised.
    Grow,
    /// One doubling of `r` inside the growth loop.
    Double,
    /// The growth loop ended: the rejected clustering now estimates above
    /// the target.
    Regrown,
    /// No point was sampled.
    EmptySample,
    /// The round budget ran out.
    Exhausted,
}

/// One line of the round log. `r` is serialized as `null` once it is
/// infinite (every probability is 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub r: f64,
    pub sample_size: usize,
    pub expected_size: f64,
    pub estimate: f64,
    pub v_q: f64,
    pub best_v: f64,
    /// `min{(1 + eps) best_v, (1 - eps) v_q}` for growth-loop records.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    pub action: RoundAction,
}

#[derive(Debug, Clone, Serialize)]
pub struct WrapperReport {
    pub n: usize,
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    pub certify: CertifyMode,
    pub certified: bool,
    /// Chosen kmeans++ prefix length.
    pub sweet_spot: usize,
    pub v_m: f64,
    pub v_2k: f64,
    /// Cost of the first `k` kmeans++ centroids.
    pub v_k: f64,
    pub r_initial: f64,
    pub r_final: f64,
    pub rounds: usize,
    pub base_calls: usize,
    pub final_sample_size: usize,
    /// Estimate and cost of the last clustering tested.
    pub final_estimate: f64,
    pub final_v_q: f64,
    /// Exact cost of the returned clustering.
    pub best_v: f64,
    pub log: Vec<RoundRecord>,
}

impl WrapperReport {
    /// The round log as line-delimited JSON.
    pub fn log_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.log {
            out.push_str(&serde_json::to_string(rec).expect("round records serialize"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct WrapperOutcome {
    pub centroids: CentroidSet,
    pub cost: f64,
    pub report: WrapperReport,
    pub probabilities: One2AllProbabilities,
    /// The sample of the last round.
    pub sample: CoordinatedSample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certification {
    pub v_q: f64,
    pub estimate: f64,
    pub pass: bool,
}

/// Checks `V_Q <= (1 + eps) V(Q | S, w')` with `V_Q` computed per `mode`.
pub fn certify(
    space: &MetricSpace,
    points: &WeightedPointSet,
    sample: &CoordinatedSample,
    query: &CentroidSet,
    eps: f64,
    mode: CertifyMode,
) -> Result<Certification> {
    let estimate = estimate_cost(space, points, sample, query)?;
    let v_q = match mode {
        CertifyMode::Exact => cost_unchecked(space, points, query),
        CertifyMode::Validation { seed } => {
            let other = CoordinatedSample::draw(points.weights(), sample.probs().to_vec(), seed)?;
            estimate_cost(space, points, &other, query)?
        }
    };
    Ok(Certification { v_q, estimate, pass: v_q <= (1.0 + eps) * estimate })
}

/// Clusters `copies` samples at the probabilities of `sample` and returns the
/// result with the smallest exact cost together with that cost. The first
/// copy is `sample` itself; the others use fresh randomizations from `seed`.
pub fn multi_sample_confirm(
    space: &MetricSpace,
    points: &WeightedPointSet,
    sample: &CoordinatedSample,
    base: &dyn BaseClusterer,
    k: usize,
    copies: usize,
    seed: u64,
) -> Result<(CentroidSet, f64)> {
    if copies == 0 {
        return Err(Error::invalid("copies must be at least 1"));
    }
    let runs = par::map_jobs(copies, |c| -> Result<(CentroidSet, f64)> {
        let run_seed = substream(seed, c as u64);
        let drawn;
        let s = if c == 0 {
            sample
        } else {
            drawn = CoordinatedSample::draw(points.weights(), sample.probs().to_vec(), substream(run_seed, 1))?;
            &drawn
        };
        if s.is_empty() {
            return Err(Error::Empty("sample"));
        }
        let q = base.cluster(space, &s.to_weighted(points)?, k, run_seed)?;
        check_compatible(space, points, &q)?;
        let v = cost_unchecked(space, points, &q);
        Ok((q, v))
    });
    let mut best: Option<(CentroidSet, f64)> = None;
    let mut first_err = None;
    for run in runs {
        match run {
            Ok((q, v)) => {
                if best.as_ref().is_none_or(|b| v < b.1) {
                    best = Some((q, v));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one copy ran"))
}

/// Probabilities `min{1, factor * pi}`; an infinite factor gives all ones.
fn probs_at(pi: &[f64], factor: f64) -> Vec<f64> {
    if factor.is_infinite() {
        vec![1.0; pi.len()]
    } else {
        pi.iter().map(|&p| (factor * p).min(1.0)).collect()
    }
}

pub fn run(space: &MetricSpace, points: &WeightedPointSet, base: &dyn BaseClusterer, cfg: &WrapperConfig) -> Result<WrapperOutcome> {
    let n = points.len();
    let k = cfg.k;
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={n}")));
    }
    if !(cfg.eps > 0.0 && cfg.eps < 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1), got {}", cfg.eps)));
    }
    if cfg.max_rounds == 0 {
        return Err(Error::invalid("max_rounds must be at least 1"));
    }
    if cfg.copies == 0 {
        return Err(Error::invalid("copies must be at least 1"));
    }
    let eps2 = cfg.eps * cfg.eps;

    let ell = cfg.ell.unwrap_or(2 * k).min(n);
    if ell < k {
        return Err(Error::invalid(format!("ell = {ell} is smaller than k = {k}")));
    }
    let trace = run_trace(space, points, ell, substream(cfg.seed, STREAM_SEEDING))?;
    let (sweet, probs) = sweet_spot(space, points, &trace, SweetSpotMode::Rough)?;
    let v_m = probs.cost;
    let v_2k = *trace.prefix_costs.last().expect("non-empty trace");
    let k_len = k.min(trace.len());
    let v_k = trace.cost_at(k_len);
    let mut best_q = trace.prefix(k_len)?;
    let mut best_v = v_k;

    // r = v_M / v_2k; no residual cost means the data has few distinct points
    let mut r = if v_2k > 0.0 { v_m / v_2k } else { f64::INFINITY };
    let r_initial = r;
    let min_pi = probs.pi.iter().copied().fold(f64::INFINITY, f64::min);
    let saturates = |r: f64| r.is_infinite() || r * min_pi / eps2 >= 1.0;

    let u = match &cfg.randomization {
        Some(u) if u.len() != n => {
            return Err(Error::invalid(format!("randomization has {} variates for {n} points", u.len())));
        }
        Some(u) => u.clone(),
        None => Arc::new(Randomization::from_seed(substream(cfg.seed, STREAM_SAMPLE), n)),
    };
    let weights: Arc<[f64]> = points.weights().into();
    let draw = |r: f64| CoordinatedSample::with_randomization(u.clone(), weights.clone(), probs_at(&probs.pi, r / eps2));

    let mut log = Vec::new();
    let mut sample = draw(r)?;
    let mut certified = false;
    let mut base_calls = 0usize;
    let mut last = (f64::NAN, f64::NAN);
    let mut round = 0usize;
    while round < cfg.max_rounds {
        round += 1;
        if saturates(r) {
            r = f64::INFINITY;
        }
        let record = |action, estimate, v_q, best_v, sample: &CoordinatedSample, r| RoundRecord {
            round,
            r,
            sample_size: sample.len(),
            expected_size: sample.expected_size(),
            estimate,
            v_q,
            best_v,
            target: None,
            action,
        };
        if sample.is_empty() {
            log.push(record(RoundAction::EmptySample, 0.0, f64::NAN, best_v, &sample, r));
            r *= 2.0;
            sample = draw(r)?;
            continue;
        }
        let round_seed = substream(cfg.seed, STREAM_ROUNDS + round as u64);
        let (q, exact_v) = multi_sample_confirm(space, points, &sample, base, k, cfg.copies, round_seed)?;
        base_calls += cfg.copies;
        let cert = certify(space, points, &sample, &q, cfg.eps, match cfg.certify {
            CertifyMode::Exact => CertifyMode::Exact,
            CertifyMode::Validation { seed } => CertifyMode::Validation { seed: substream(seed, round as u64) },
        })?;
        let v_q = cert.v_q;
        if exact_v < best_v {
            best_v = exact_v;
            best_q = q.clone();
        }
        last = (cert.estimate, v_q);
        if r.is_infinite() {
            // the sample is the data set; nothing can be gained by growing it
            certified = true;
            log.push(record(RoundAction::Saturated, cert.estimate, v_q, best_v, &sample, r));
            break;
        }
        if cert.pass && v_q >= v_m / r {
            certified = true;
            log.push(record(RoundAction::Certified, cert.estimate, v_q, best_v, &sample, r));
            break;
        }
        log.push(record(RoundAction::Grow, cert.estimate, v_q, best_v, &sample, r));
        r *= (v_q / v_m).max(2.0);
        if best_v > 0.0 {
            // keep v_M / r below the best known cost
            r = r.max(v_m / best_v);
        }
        let target = ((1.0 + cfg.eps) * best_v).min((1.0 - cfg.eps) * v_q);
        loop {
            if saturates(r) {
                r = f64::INFINITY;
            }
            sample = draw(r)?;
            let estimate = estimate_cost(space, points, &sample, &q)?;
            let done = r.is_infinite() || estimate > target;
            let action = if done { RoundAction::Regrown } else { RoundAction::Double };
            log.push(RoundRecord { target: Some(target), ..record(action, estimate, v_q, best_v, &sample, r) });
            if done {
                break;
            }
            r *= 2.0;
        }
    }
    if !certified {
        log.push(RoundRecord {
            round,
            r,
            sample_size: sample.len(),
            expected_size: sample.expected_size(),
            estimate: last.0,
            v_q: last.1,
            best_v,
            target: None,
            action: RoundAction::Exhausted,
        });
    }

    let report = WrapperReport {
        n,
        k,
        eps: cfg.eps,
        seed: cfg.seed,
        certify: cfg.certify,
        certified,
        sweet_spot: sweet,
        v_m,
        v_2k,
        v_k,
        r_initial,
        r_final: r,
        rounds: round,
        base_calls,
        final_sample_size: sample.len(),
        final_estimate: last.0,
        final_v_q: last.1,
        best_v,
        log,
    };
    Ok(WrapperOutcome { centroids: best_q, cost: best_v, report, probabilities: probs, sample })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::cost;
    use crate::lloyd::LloydClusterer;

    fn blobs(per: usize, centers: &[f64], seed: u64) -> WeightedPointSet {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut coords = Vec::new();
        for &c in centers {
            for _ in 0..per {
                coords.push(c + normal.sample(&mut rng));
                coords.push(normal.sample(&mut rng));
            }
        }
        WeightedPointSet::unit(2, coords).unwrap()
    }

    #[test]
    fn small_data_saturates_in_one_round() {
        let sq = MetricSpace::squared_euclidean();
        let x = blobs(20, &[0.0, 50.0], 1);
        let out = run(&sq, &x, &LloydClusterer::default(), &WrapperConfig::new(2, 0.2, 3)).unwrap();
        assert!(out.report.certified);
        assert_eq!(out.report.rounds, 1);
        assert_eq!(out.report.final_sample_size, 40);
        assert_eq!(out.report.log[0].action, RoundAction::Saturated);
        assert!((out.report.final_estimate - out.report.final_v_q).abs() <= 1e-9 * out.report.final_v_q);
    }

    #[test]
    fn few_distinct_points_use_full_data() {
        let sq = MetricSpace::squared_euclidean();
        let x = WeightedPointSet::on_line(&[0.0, 0.0, 1.0, 1.0, 1.0, 7.0], vec![1.0; 6]).unwrap();
        let out = run(&sq, &x, &LloydClusterer::default(), &WrapperConfig::new(2, 0.2, 3)).unwrap();
        assert_eq!(out.report.v_2k, 0.0);
        assert!(out.report.r_initial.is_infinite());
        assert_eq!(out.report.final_sample_size, 6);
        assert!(out.report.certified);
    }

    #[test]
    fn best_cost_is_exact_and_below_seeding() {
        let sq = MetricSpace::squared_euclidean();
        let x = blobs(4000, &[0.0, 30.0, 60.0], 2);
        let out = run(&sq, &x, &LloydClusterer::default(), &WrapperConfig::new(3, 0.3, 5)).unwrap();
        let rep = &out.report;
        assert_eq!(out.cost, cost(&sq, &x, &out.centroids).unwrap());
        assert!(out.cost <= rep.v_k);
        if rep.certified {
            assert!(rep.final_v_q <= (1.0 + 0.3) * rep.final_estimate);
            assert!(rep.final_v_q >= rep.v_m / rep.r_final);
        }
        assert!(rep.final_sample_size < 12000);
        let mut prev = 0.0;
        for rec in &rep.log {
            assert!(rec.r >= prev);
            prev = rec.r;
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let sq = MetricSpace::squared_euclidean();
        let x = blobs(5, &[0.0], 1);
        let base = LloydClusterer::default();
        assert!(run(&sq, &x, &base, &WrapperConfig::new(0, 0.2, 1)).is_err());
        assert!(run(&sq, &x, &base, &WrapperConfig::new(6, 0.2, 1)).is_err());
        assert!(run(&sq, &x, &base, &WrapperConfig::new(2, 1.5, 1)).is_err());
        let mut cfg = WrapperConfig::new(2, 0.2, 1);
        cfg.max_rounds = 0;
        assert!(run(&sq, &x, &base, &cfg).is_err());
    }

    #[test]
    fn full_sample_always_certifies() {
        let sq = MetricSpace::squared_euclidean();
        let x = blobs(50, &[0.0, 9.0], 3);
        let s = CoordinatedSample::draw(x.weights(), vec![1.0; 100], 1).unwrap();
        let q = CentroidSet::from_rows(&[[100.0, 100.0]]).unwrap();
        for mode in [CertifyMode::Exact, CertifyMode::Validation { seed: 4 }] {
            let c = certify(&sq, &x, &s, &q, 0.01, mode).unwrap();
            assert!(c.pass);
        }
    }

    #[test]
    fn one_copy_is_one_base_run() {
        let sq = MetricSpace::squared_euclidean();
        let x = blobs(300, &[0.0, 20.0], 3);
        let s = CoordinatedSample::draw(x.weights(), vec![0.3; 600], 1).unwrap();
        let base = LloydClusterer::default();
        let (q, v) = multi_sample_confirm(&sq, &x, &s, &base, 2, 1, 9).unwrap();
        let direct = base.cluster(&sq, &s.to_weighted(&x).unwrap(), 2, substream(9, 0)).unwrap();
        assert_eq!(q, direct);
        assert_eq!(v, cost(&sq, &x, &direct).unwrap());
    }

    #[test]
    fn round_log_is_jsonl() {
        let sq = MetricSpace::squared_euclidean();
        let x = blobs(20, &[0.0, 50.0], 1);
        let out = run(&sq, &x, &LloydClusterer::default(), &WrapperConfig::new(2, 0.2, 3)).unwrap();
        let text = out.report.log_jsonl();
        assert_eq!(text.lines().count(), out.report.log.len());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["action"], "saturated");
        assert!(first["r"].is_null());
    }
}
