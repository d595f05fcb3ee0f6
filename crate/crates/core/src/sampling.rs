//! pps base probabilities, coordinated Poisson samples with a fixed per-point
//! randomization, and the inverse-probability cost estimator.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assign::{check_compatible, distances_unchecked};
use crate::error::{Error, Result};
use crate::par;
use crate::points::{CentroidSet, WeightedPointSet};
use crate::seed::substream;
use crate::space::MetricSpace;
use crate::sum::compensated_sum;

/// Largest family `mo_pps_bruteforce` will enumerate.
pub const MAX_ENUMERATED_SETS: u128 = 1_000_000;

/// pps base probabilities `psi_x = w_x d(x, Q) / V(Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PpsBase {
    pub psi: Vec<f64>,
    /// `V(Q | X, w)`.
    pub total: f64,
}

pub fn pps_base(space: &MetricSpace, points: &WeightedPointSet, query: &CentroidSet) -> Result<PpsBase> {
    check_compatible(space, points, query)?;
    let d = distances_unchecked(space, points, query);
    let contrib: Vec<f64> = points.weights().iter().zip(&d).map(|(w, d)| w * d).collect();
    let total = compensated_sum(contrib.iter().copied());
    if total <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    Ok(PpsBase { psi: contrib.into_iter().map(|c| c / total).collect(), total })
}

/// Multi-objective pps base probabilities over an enumerated family.
#[derive(Debug, Clone, PartialEq)]
pub struct MoPps {
    pub psi: Vec<f64>,
    /// `h = |psi|_1`.
    pub overhead: f64,
    /// Number of sets that contributed (zero-cost sets are exact and skipped).
    pub sets: usize,
    pub zero_cost_sets: usize,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Calls `f` with every `k`-subset of `0..n` in lexicographic order.
pub fn for_each_subset<F: FnMut(&[usize])>(n: usize, k: usize, mut f: F) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[pos] += 1;
        for j in pos + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Pointwise maximum of `psi^(Q)` over every `Q` made of `k` points of `X`.
/// This is an exhaustive test oracle for small instances.
pub fn mo_pps_bruteforce(space: &MetricSpace, points: &WeightedPointSet, k: usize) -> Result<MoPps> {
    mo_pps_bruteforce_above(space, points, k, 0.0)
}

/// As [`mo_pps_bruteforce`], restricted to sets with `V(Q) >= min_cost`.
pub fn mo_pps_bruteforce_above(space: &MetricSpace, points: &WeightedPointSet, k: usize, min_cost: f64) -> Result<MoPps> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("subset size {k} out of range 1..={n}")));
    }
    let count = binomial(n, k);
    if count > MAX_ENUMERATED_SETS {
        return Err(Error::TooManySubsets { count, limit: MAX_ENUMERATED_SETS });
    }
    let mut psi = vec![0.0; n];
    let (mut sets, mut zero) = (0, 0);
    let mut failure = None;
    for_each_subset(n, k, |subset| {
        if failure.is_some() {
            return;
        }
        let q = match CentroidSet::from_indices(points, subset) {
            Ok(q) => q,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        match pps_base(space, points, &q) {
            Ok(b) if b.total >= min_cost => {
                sets += 1;
                for (m, s) in psi.iter_mut().zip(&b.psi) {
                    *m = f64::max(*m, *s);
                }
            }
            Ok(_) => {}
            Err(Error::DegenerateDistribution) => zero += 1,
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let overhead = compensated_sum(psi.iter().copied());
    Ok(MoPps { psi, overhead, sets, zero_cost_sets: zero })
}

/// A fixed per-point uniform variate `u_x` in `(0, 1]`.
///
/// Seeded randomizations are counter based: `u_x` depends only on the seed
/// and `x`, so every sample drawn from the same seed is coordinated.
#[derive(Debug, Clone, PartialEq)]
pub struct Randomization {
    u: Vec<f64>,
    seed: Option<u64>,
}

impl Randomization {
    pub fn from_seed(seed: u64, n: usize) -> Self {
        // word x of the ChaCha stream for `seed` is a pure function of (seed, x)
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = (0..n).map(|_| unit_open_closed(rng.next_u64())).collect();
        Self { u, seed: Some(seed) }
    }

    /// An explicit randomization, e.g. an adversarial one in tests.
    pub fn from_values(u: Vec<f64>) -> Result<Self> {
        if let Some(bad) = u.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
            return Err(Error::invalid(format!("randomization values must lie in (0, 1], got {bad}")));
        }
        Ok(Self { u, seed: None })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.u
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

#[inline]
fn unit_open_closed(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// A Poisson sample `S = {x : u_x <= p_x}` with inverse-probability weights
/// `w'_x = w_x / p_x`. Redrawing with larger `p` under the same
/// randomization only adds members.
#[derive(Debug, Clone)]
pub struct CoordinatedSample {
    randomization: Arc<Randomization>,
    weights: Arc<[f64]>,
    probs: Vec<f64>,
    members: Vec<usize>,
    w_prime: Vec<f64>,
}

impl CoordinatedSample {
    /// Draws with `u` derived from `seed`.
    pub fn draw(weights: &[f64], probs: Vec<f64>, seed: u64) -> Result<Self> {
        let u = Arc::new(Randomization::from_seed(seed, probs.len()));
        Self::with_randomization(u, weights.into(), probs)
    }

    pub fn with_randomization(randomization: Arc<Randomization>, weights: Arc<[f64]>, probs: Vec<f64>) -> Result<Self> {
        if randomization.len() != probs.len() || weights.len() != probs.len() {
            return Err(Error::invalid(format!(
                "length mismatch: {} variates, {} weights, {} probabilities",
                randomization.len(),
                weights.len(),
                probs.len()
            )));
        }
        if let Some(bad) = probs.iter().find(|&&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid(format!("inclusion probability {bad} outside [0, 1]")));
        }
        let members: Vec<usize> =
            (0..probs.len()).filter(|&x| probs[x] > 0.0 && randomization.u[x] <= probs[x]).collect();
        let w_prime = members.iter().map(|&x| weights[x] / probs[x]).collect();
        Ok(Self { randomization, weights, probs, members, w_prime })
    }

    /// Redraws at new probabilities under the same randomization.
    pub fn resample(&self, probs: Vec<f64>) -> Result<Self> {
        Self::with_randomization(self.randomization.clone(), self.weights.clone(), probs)
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn w_prime(&self) -> &[f64] {
        &self.w_prime
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn randomization(&self) -> &Arc<Randomization> {
        &self.randomization
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `sum_x p_x`.
    pub fn expected_size(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    /// True when every point is included with probability one.
    pub fn is_saturated(&self) -> bool {
        self.probs.iter().all(|&p| p >= 1.0)
    }

    /// The sampled points with weights `w'`.
    pub fn to_weighted(&self, points: &WeightedPointSet) -> Result<WeightedPointSet> {
        if points.len() != self.probs.len() {
            return Err(Error::invalid("sample was drawn over a different point set"));
        }
        points.subset(&self.members, self.w_prime.clone())
    }
}

/// The inverse-probability estimate `V(Q | S, w')`. An empty sample gives 0;
/// check [`CoordinatedSample::is_empty`] to tell that case apart.
pub fn estimate_cost(space: &MetricSpace, points: &WeightedPointSet, sample: &CoordinatedSample, query: &CentroidSet) -> Result<f64> {
    if points.len() != sample.probs.len() {
        return Err(Error::invalid("sample was drawn over a different point set"));
    }
    check_compatible(space, points, query)?;
    let terms = par::map_range(sample.members.len(), |j| {
        let x = sample.members[j];
        sample.w_prime[j] * crate::assign::nearest(space, points.point(x), query).1
    });
    Ok(compensated_sum(terms))
}

/// Inverse-probability estimates of `V(Q)` from `draws` independent Poisson
/// samples at `probs` (each with its own randomization derived from `seed`).
pub fn repeated_estimates(
    space: &MetricSpace,
    points: &WeightedPointSet,
    probs: &[f64],
    query: &CentroidSet,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if probs.len() != points.len() {
        return Err(Error::invalid("one probability per point is required"));
    }
    check_compatible(space, points, query)?;
    let d = distances_unchecked(space, points, query);
    // terms with zero probability or zero contribution never enter an estimate
    let live: Vec<(usize, f64)> = (0..points.len())
        .filter(|&x| probs[x] > 0.0)
        .map(|x| (x, points.weight(x) * d[x] / probs[x]))
        .collect();
    Ok(par::map_jobs(draws, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, t as u64));
        let mut acc = crate::sum::CompensatedSum::new();
        let mut next = 0usize;
        for &(x, term) in &live {
            // keep the stream aligned with point indices so draws match `draw`
            while next < x {
                rng.next_u64();
                next += 1;
            }
            let u = unit_open_closed(rng.next_u64());
            next += 1;
            if u <= probs[x] {
                acc.add(term);
            }
        }
        acc.value()
    }))
}

/// Upper bound on `Pr[estimate >= V / alpha]` for weak pps sampling at
/// `p >= alpha eps^-2 * psi`, `alpha <= 1/2`:
/// `min{alpha / (1 - 2 alpha), exp(-(1 - alpha) ln(1/alpha) eps^-2 / 2)}`.
pub fn overestimate_bound(alpha: f64, eps: f64) -> f64 {
    let chernoff = (-(1.0 - alpha) * (1.0 / alpha).ln() / (eps * eps) / 2.0).exp();
    let markov = if alpha < 0.5 { alpha / (1.0 - 2.0 * alpha) } else { f64::INFINITY };
    chernoff.min(markov)
}

/// Chernoff upper-tail bound `Pr[estimate >= (1 + delta) V] <= exp(-delta ln(1 + delta) alpha eps^-2 / 2)`.
pub fn upper_tail_bound(delta: f64, alpha: f64, eps: f64) -> f64 {
    (-delta * (1.0 + delta).ln() * alpha / (eps * eps) / 2.0).exp()
}

/// Chernoff lower-tail bound `Pr[estimate <= (1 - delta) V] <= exp(-delta^2 alpha eps^-2 / 2)`.
pub fn lower_tail_bound(delta: f64, alpha: f64, eps: f64) -> f64 {
    (-delta * delta * alpha / (eps * eps) / 2.0).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationReport {
    pub alpha: f64,
    pub eps: f64,
    pub trials: usize,
    /// Estimates at or above `threshold_factor * V` count as failures.
    pub threshold_factor: f64,
    pub failures: usize,
    pub frequency: f64,
    pub bound: f64,
    /// Three binomial standard deviations at the bound.
    pub slack: f64,
    pub holds: bool,
    pub exact_cost: f64,
}

/// Monte Carlo check of the overestimation tail under weak pps sampling at
/// `p = min{1, alpha eps^-2 psi^(Q)}`.
///
/// For `alpha < 1` the event is `estimate >= V / alpha` and the bound is
/// [`overestimate_bound`] (or the Chernoff form when `alpha > 1/2`); for
/// `alpha = 1` the event is `estimate >= 2V`.
pub fn concentration_check(
    space: &MetricSpace,
    points: &WeightedPointSet,
    query: &CentroidSet,
    alpha: f64,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if eps.is_nan() || eps <= 0.0 || trials == 0 {
        return Err(Error::invalid("eps must be positive and trials at least 1"));
    }
    let base = pps_base(space, points, query)?;
    let probs = crate::one2all::cap_scale(alpha / (eps * eps), &base.psi);
    let (threshold_factor, bound) = if alpha < 1.0 {
        let b = if alpha <= 0.5 { overestimate_bound(alpha, eps) } else { upper_tail_bound(1.0 / alpha - 1.0, alpha, eps) };
        (1.0 / alpha, b)
    } else {
        (2.0, upper_tail_bound(1.0, 1.0, eps))
    };
    let estimates = repeated_estimates(space, points, &probs, query, trials, seed)?;
    let limit = threshold_factor * base.total;
    let failures = estimates.iter().filter(|&&e| e >= limit).count();
    let frequency = failures as f64 / trials as f64;
    let b = bound.min(1.0);
    let slack = 3.0 * (b * (1.0 - b) / trials as f64).sqrt();
    Ok(ConcentrationReport {
        alpha,
        eps,
        trials,
        threshold_factor,
        failures,
        frequency,
        bound,
        slack,
        holds: frequency <= bound + slack,
        exact_cost: base.total,
    })
}
