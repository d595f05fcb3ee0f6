//! Clustering-cost oracles.
//!
//! [`OracleState::build`] runs kmeans++ for `ell` iterations, picks the
//! prefix whose probabilities `min{1, max{1, v_i/C} eps^-2 pi^(M_i)}` give
//! the smallest expected sample, and draws one coordinated sample from them.
//! Queries are answered by the inverse-probability estimate over that sample.
//!
//! [`OracleState::feedback_query`] adds the feedback rule: a query whose
//! estimate does not exceed the supported threshold `C` is answered exactly,
//! and the sample is grown so that it supports costs down to half of it.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::assign::{check_compatible, cost_unchecked, nearest};
use crate::error::{Error, Result};
use crate::kmeanspp::run_trace;
use crate::one2all::{oracle_factor, sweet_spot, SweetSpotMode};
use crate::points::{CentroidSet, WeightedPointSet};
use crate::sampling::{CoordinatedSample, Randomization};
use crate::space::{MetricSpace, SpaceKind};
use crate::sum::compensated_sum;

const MAGIC: &[u8; 8] = b"O2AORACL";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Intended query size; the guarantees are phrased on cost, so queries of
    /// any size are accepted.
    pub k: usize,
    /// kmeans++ iterations.
    pub ell: usize,
    /// Supported cost threshold `C`.
    pub threshold: f64,
    pub eps: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct OracleState {
    space: MetricSpace,
    n: usize,
    dim: usize,
    k: usize,
    eps: f64,
    threshold: f64,
    seed: u64,
    prefix_len: usize,
    prefix_cost: f64,
    update_count: u64,
    /// One-to-all probabilities of the winning prefix.
    pi: Vec<f64>,
    /// Current inclusion probabilities.
    p: Vec<f64>,
    members: Vec<usize>,
    sample_coords: Vec<f64>,
    sample_weights: Vec<f64>,
}

impl OracleState {
    /// Builds a fixed oracle supporting costs of at least `cfg.threshold`.
    pub fn build(space: &MetricSpace, points: &WeightedPointSet, cfg: &OracleConfig) -> Result<Self> {
        validate(cfg.eps, cfg.ell, points)?;
        if !(cfg.threshold > 0.0 && cfg.threshold.is_finite()) {
            return Err(Error::invalid(format!("cost threshold must be positive, got {}", cfg.threshold)));
        }
        let trace = run_trace(space, points, cfg.ell, cfg.seed)?;
        Self::from_trace(space, points, cfg, &trace)
    }

    /// Feedback-oracle initialization: `ell = 2k` and `C = v_2k`.
    pub fn build_feedback(space: &MetricSpace, points: &WeightedPointSet, k: usize, eps: f64, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let ell = (2 * k).min(points.len());
        validate(eps, ell, points)?;
        let trace = run_trace(space, points, ell, seed)?;
        let v_last = *trace.prefix_costs.last().expect("non-empty trace");
        let cfg = OracleConfig { k, ell, threshold: v_last, eps, seed };
        if v_last == 0.0 {
            // at most 2k distinct points: keep everything, answers are exact
            return Self::assemble(space, points, &cfg, trace.len(), 0.0, vec![1.0; points.len()], vec![1.0; points.len()]);
        }
        Self::from_trace(space, points, &cfg, &trace)
    }

    fn from_trace(
        space: &MetricSpace,
        points: &WeightedPointSet,
        cfg: &OracleConfig,
        trace: &crate::kmeanspp::KmeansPPTrace,
    ) -> Result<Self> {
        let mode = SweetSpotMode::Exact { threshold: cfg.threshold, eps: cfg.eps };
        let (i, probs) = sweet_spot(space, points, trace, mode)?;
        let p = probs.scaled(oracle_factor(probs.cost, cfg.threshold, cfg.eps));
        Self::assemble(space, points, cfg, i, probs.cost, probs.pi, p)
    }

    fn assemble(
        space: &MetricSpace,
        points: &WeightedPointSet,
        cfg: &OracleConfig,
        prefix_len: usize,
        prefix_cost: f64,
        pi: Vec<f64>,
        p: Vec<f64>,
    ) -> Result<Self> {
        let sample = CoordinatedSample::draw(points.weights(), p, cfg.seed)?;
        let mut state = Self {
            space: space.clone(),
            n: points.len(),
            dim: points.dim(),
            k: cfg.k,
            eps: cfg.eps,
            threshold: cfg.threshold,
            seed: cfg.seed,
            prefix_len,
            prefix_cost,
            update_count: 0,
            pi,
            p: Vec::new(),
            members: Vec::new(),
            sample_coords: Vec::new(),
            sample_weights: Vec::new(),
        };
        state.install(points, sample);
        Ok(state)
    }

    fn install(&mut self, points: &WeightedPointSet, sample: CoordinatedSample) {
        self.sample_coords = sample.members().iter().flat_map(|&x| points.point(x).iter().copied()).collect();
        self.sample_weights = sample.w_prime().to_vec();
        self.members = sample.members().to_vec();
        self.p = sample.probs().to_vec();
    }

    /// The estimate `V(Q | S, w')`.
    pub fn query(&self, query: &CentroidSet) -> Result<f64> {
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: query.dim() });
        }
        self.space.check_points(query.coords())?;
        Ok(compensated_sum(
            self.sample_coords
                .chunks_exact(self.dim)
                .zip(&self.sample_weights)
                .map(|(x, w)| w * nearest(&self.space, x, query).1),
        ))
    }

    /// Answers with the estimate when it exceeds the threshold `C`.
    /// Otherwise computes the exact cost `V`, scales the probabilities by
    /// `max{2, 2C/V}` (capped at 1), lowers `C` to `min{V, C}/2`, and grows
    /// the sample under the same randomization. Returns the value and
    /// whether it is exact.
    pub fn feedback_query(&mut self, points: &WeightedPointSet, query: &CentroidSet) -> Result<(f64, bool)> {
        if points.len() != self.n || points.dim() != self.dim {
            return Err(Error::invalid("oracle was built over a different point set"));
        }
        let estimate = self.query(query)?;
        if estimate > self.threshold {
            return Ok((estimate, false));
        }
        check_compatible(&self.space, points, query)?;
        let exact = cost_unchecked(&self.space, points, query);
        if exact == 0.0 {
            // nothing to support: zero-cost queries are answered exactly
            return Ok((0.0, true));
        }
        let factor = (2.0 * self.threshold / exact).max(2.0);
        let grown: Vec<f64> = self.p.iter().map(|&p| (factor * p).min(1.0)).collect();
        let u = Arc::new(Randomization::from_seed(self.seed, self.n));
        let sample = CoordinatedSample::with_randomization(u, points.weights().into(), grown)?;
        self.install(points, sample);
        self.threshold = exact.min(self.threshold) / 2.0;
        self.update_count += 1;
        Ok((exact, true))
    }

    pub fn space(&self) -> &MetricSpace {
        &self.space
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length of the kmeans++ prefix the probabilities came from.
    pub fn prefix_len(&self) -> usize {
        self.prefix_len
    }

    /// `V(M_i)` of that prefix.
    pub fn prefix_cost(&self) -> f64 {
        self.prefix_cost
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn sample_size(&self) -> usize {
        self.members.len()
    }

    pub fn sample_weights(&self) -> &[f64] {
        &self.sample_weights
    }

    /// Writes the versioned binary format (little endian):
    ///
    /// ```text
    /// magic "O2AORACL" | version u32 | n d k u64 | eps C f64 | seed prefix_len u64
    /// | prefix_cost f64 | update_count u64 | power rho f64
    /// | pi[n] f64 | p[n] f64 | m u64 | members[m] u64 | coords[m*d] f64 | w'[m] f64
    /// ```
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let SpaceKind::EuclideanPower { p: power } = self.space.kind() else {
            return Err(Error::Unsupported("only Euclidean-power oracles can be serialized".into()));
        };
        out.write_all(MAGIC)?;
        out.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        for v in [self.n as u64, self.dim as u64, self.k as u64] {
            out.write_u64::<LittleEndian>(v)?;
        }
        out.write_f64::<LittleEndian>(self.eps)?;
        out.write_f64::<LittleEndian>(self.threshold)?;
        out.write_u64::<LittleEndian>(self.seed)?;
        out.write_u64::<LittleEndian>(self.prefix_len as u64)?;
        out.write_f64::<LittleEndian>(self.prefix_cost)?;
        out.write_u64::<LittleEndian>(self.update_count)?;
        out.write_f64::<LittleEndian>(power)?;
        out.write_f64::<LittleEndian>(self.space.rho())?;
        write_f64s(&mut out, &self.pi)?;
        write_f64s(&mut out, &self.p)?;
        out.write_u64::<LittleEndian>(self.members.len() as u64)?;
        for &m in &self.members {
            out.write_u64::<LittleEndian>(m as u64)?;
        }
        write_f64s(&mut out, &self.sample_coords)?;
        write_f64s(&mut out, &self.sample_weights)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format("not an oracle file (bad magic)".into()));
        }
        let version = input.read_u32::<LittleEndian>().map_err(truncated)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported oracle format version {version}")));
        }
        let n = read_len(&mut input)?;
        let dim = read_len(&mut input)?;
        let k = read_len(&mut input)?;
        let eps = input.read_f64::<LittleEndian>().map_err(truncated)?;
        let threshold = input.read_f64::<LittleEndian>().map_err(truncated)?;
        let seed = input.read_u64::<LittleEndian>().map_err(truncated)?;
        let prefix_len = read_len(&mut input)?;
        let prefix_cost = input.read_f64::<LittleEndian>().map_err(truncated)?;
        let update_count = input.read_u64::<LittleEndian>().map_err(truncated)?;
        let power = input.read_f64::<LittleEndian>().map_err(truncated)?;
        let rho = input.read_f64::<LittleEndian>().map_err(truncated)?;
        let space = MetricSpace::euclidean_power(power).map_err(|e| Error::Format(e.to_string()))?;
        if space.rho() != rho {
            return Err(Error::Format(format!("stored rho {rho} does not match power {power}")));
        }
        if dim == 0 {
            return Err(Error::Format("zero dimension".into()));
        }
        let pi = read_f64s(&mut input, n)?;
        let p = read_f64s(&mut input, n)?;
        let m = read_len(&mut input)?;
        if m > n {
            return Err(Error::Format(format!("{m} members for {n} points")));
        }
        let mut members = Vec::with_capacity(m);
        for _ in 0..m {
            members.push(read_len(&mut input)?);
        }
        let sample_coords = read_f64s(&mut input, m * dim)?;
        let sample_weights = read_f64s(&mut input, m)?;
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after oracle data".into()));
        }
        let u = Randomization::from_seed(seed, n);
        let expect: Vec<usize> = (0..n).filter(|&x| p[x] > 0.0 && u.values()[x] <= p[x]).collect();
        if expect != members {
            return Err(Error::Format("stored members do not match the stored probabilities and seed".into()));
        }
        Ok(Self {
            space,
            n,
            dim,
            k,
            eps,
            threshold,
            seed,
            prefix_len,
            prefix_cost,
            update_count,
            pi,
            p,
            members,
            sample_coords,
            sample_weights,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    /// Writes to a sibling temporary file and renames it over `path`, so an
    /// interrupted write never leaves a corrupt oracle behind.
    pub fn save_atomic(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        {
            let f = File::create(&tmp)?;
            let mut w = BufWriter::new(&f);
            self.write_to(&mut w)?;
            drop(w);
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn validate(eps: f64, ell: usize, points: &WeightedPointSet) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    if ell == 0 || ell > points.len() {
        return Err(Error::invalid(format!("ell = {ell} must lie in 1..={}", points.len())));
    }
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated oracle file".into())
    } else {
        Error::Io(e)
    }
}

fn read_len<R: Read>(input: &mut R) -> Result<usize> {
    let v = input.read_u64::<LittleEndian>().map_err(truncated)?;
    usize::try_from(v).map_err(|_| Error::Format(format!("length {v} does not fit in memory")))
}

fn write_f64s<W: Write>(out: &mut W, xs: &[f64]) -> Result<()> {
    for &x in xs {
        out.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_f64s<R: Read>(input: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut v = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        v.push(input.read_f64::<LittleEndian>().map_err(truncated)?);
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assign::cost;

    fn cloud(n: usize, seed: u64) -> WeightedPointSet {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let coords: Vec<f64> = (0..n * 2).map(|i| normal.sample(&mut rng) + if i % 4 < 2 { 0.0 } else { 8.0 }).collect();
        WeightedPointSet::unit(2, coords).unwrap()
    }

    #[test]
    fn saturated_oracle_is_exact() {
        let sq = MetricSpace::squared_euclidean();
        let x = cloud(40, 1);
        let cfg = OracleConfig { k: 2, ell: 3, threshold: 1e12, eps: 0.1, seed: 3 };
        let o = OracleState::build(&sq, &x, &cfg).unwrap();
        assert!(o.probabilities().iter().all(|&p| p == 1.0));
        assert_eq!(o.sample_size(), 40);
        let q = CentroidSet::from_rows(&[[0.5, 0.5], [7.0, 9.0]]).unwrap();
        let exact = cost(&sq, &x, &q).unwrap();
        assert!((o.query(&q).unwrap() - exact).abs() <= 1e-12 * exact);
    }

    #[test]
    fn probabilities_dominate_scaled_pi() {
        let sq = MetricSpace::squared_euclidean();
        let x = cloud(3000, 2);
        let cfg = OracleConfig { k: 2, ell: 4, threshold: 2000.0, eps: 0.3, seed: 5 };
        let o = OracleState::build(&sq, &x, &cfg).unwrap();
        let f = (o.prefix_cost() / cfg.threshold).max(1.0) / (cfg.eps * cfg.eps);
        for (p, pi) in o.probabilities().iter().zip(o.pi()) {
            assert!(*p >= (f * pi).min(1.0));
        }
        assert!(o.sample_size() < 3000);
    }

    #[test]
    fn rejects_bad_config() {
        let sq = MetricSpace::squared_euclidean();
        let x = cloud(10, 1);
        let mut cfg = OracleConfig { k: 2, ell: 3, threshold: 1.0, eps: 0.1, seed: 3 };
        cfg.threshold = 0.0;
        assert!(OracleState::build(&sq, &x, &cfg).is_err());
        cfg.threshold = 1.0;
        cfg.eps = 0.0;
        assert!(OracleState::build(&sq, &x, &cfg).is_err());
        cfg.eps = 0.1;
        cfg.ell = 11;
        assert!(OracleState::build(&sq, &x, &cfg).is_err());
    }

    #[test]
    fn query_dimension_is_checked() {
        let sq = MetricSpace::squared_euclidean();
        let x = cloud(50, 1);
        let o = OracleState::build(&sq, &x, &OracleConfig { k: 2, ell: 3, threshold: 10.0, eps: 0.5, seed: 1 }).unwrap();
        let bad = CentroidSet::from_rows(&[[0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(o.query(&bad), Err(Error::DimensionMismatch { expected: 2, got: 3 })));
    }

    #[test]
    fn few_distinct_points_feedback_oracle_is_exact() {
        let sq = MetricSpace::squared_euclidean();
        let x = WeightedPointSet::on_line(&[0.0, 0.0, 1.0, 1.0, 5.0], vec![1.0; 5]).unwrap();
        let mut o = OracleState::build_feedback(&sq, &x, 2, 0.1, 1).unwrap();
        assert_eq!(o.sample_size(), 5);
        let q = CentroidSet::on_line(&[0.0, 5.0]).unwrap();
        let (v, _) = o.feedback_query(&x, &q).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let sq = MetricSpace::squared_euclidean();
        let x = cloud(500, 4);
        let mut o = OracleState::build_feedback(&sq, &x, 2, 0.4, 9).unwrap();
        // force an update so the stored state is not the initial one
        let cheap = CentroidSet::from_rows(&[[0.0, 0.0], [8.0, 8.0], [0.0, 8.0], [8.0, 0.0]]).unwrap();
        o.feedback_query(&x, &cheap).unwrap();
        let mut buf = Vec::new();
        o.write_to(&mut buf).unwrap();
        let back = OracleState::read_from(&buf[..]).unwrap();
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.probabilities()), bits(o.probabilities()));
        assert_eq!(bits(back.pi()), bits(o.pi()));
        assert_eq!(back.members(), o.members());
        assert_eq!(back.threshold().to_bits(), o.threshold().to_bits());
        assert_eq!(back.update_count(), o.update_count());
        assert_eq!(back.query(&cheap).unwrap().to_bits(), o.query(&cheap).unwrap().to_bits());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let sq = MetricSpace::squared_euclidean();
        let x = cloud(3000, 4);
        let o = OracleState::build_feedback(&sq, &x, 2, 1.0, 9).unwrap();
        assert!(o.sample_size() < 3000);
        let mut buf = Vec::new();
        o.write_to(&mut buf).unwrap();
        assert!(matches!(OracleState::read_from(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(OracleState::read_from(&bad[..]), Err(Error::Format(_))));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(OracleState::read_from(&extra[..]), Err(Error::Format(_))));
        // seed no longer matches the member list
        let mut reseeded = buf;
        reseeded[12 + 24 + 16] ^= 1;
        assert!(OracleState::read_from(&reseeded[..]).is_err());
    }

    #[test]
    fn matrix_oracles_do_not_serialize() {
        let n = 4;
        let xs = [0.0f64, 1.0, 3.0, 6.0];
        let data = (0..n * n).map(|ij| (xs[ij / n] - xs[ij % n]).abs()).collect();
        let space = MetricSpace::precomputed(crate::space::DistanceMatrix::new(n, data).unwrap(), 1.0, 0).unwrap();
        let idx = WeightedPointSet::on_line(&[0.0, 1.0, 2.0, 3.0], vec![1.0; 4]).unwrap();
        let o = OracleState::build(&space, &idx, &OracleConfig { k: 1, ell: 2, threshold: 1.0, eps: 0.5, seed: 0 }).unwrap();
        assert!(matches!(o.write_to(Vec::new()), Err(Error::Unsupported(_))));
    }
}
