//! Benchmark runs: adaptive sample size against the worst-case coreset
//! bound, estimation error, and cost relative to the ground truth.

use std::io::{self, Write};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::assign::cost;
use crate::data::{gen_gmm_with_spacing, load_dataset, load_idx, DelimitedOptions, LabeledDataset, DEFAULT_SPACING};
use crate::error::{Error, Result};
use crate::kmeanspp::run_trace;
use crate::lloyd::LloydClusterer;
use crate::par;
use crate::sampling::repeated_estimates;
use crate::seed::substream;
use crate::space::MetricSpace;
use crate::sum::compensated_sum;
use crate::wrapper::{self, CertifyMode, WrapperConfig};

/// Redraws used for the estimation error.
pub const EST_ERR_DRAWS: usize = 30;

/// Worst-case coreset size
/// `min{n, 3000 k eps^-2 min{ln k ln n, min(n, d / eps)}}` with natural
/// logarithms and `ln k` read as `ln max(k, 2)`.
pub fn worst_case_size(n: usize, d: usize, k: usize, eps: f64) -> f64 {
    let n_f = n as f64;
    let logs = (k.max(2) as f64).ln() * n_f.ln();
    let dims = n_f.min(d as f64 / eps);
    n_f.min(3000.0 * k as f64 / (eps * eps) * logs.min(dims))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub data: Duration,
    pub cluster: Duration,
    pub est_err: Duration,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub dataset: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    pub sample_size: usize,
    pub adaptive_fraction: f64,
    pub worst_case_fraction: f64,
    pub gain: f64,
    pub est_err: f64,
    pub cost_ratio_final: Option<f64>,
    pub cost_ratio_seed: Option<f64>,
    pub sweet_spot: usize,
    pub certified: bool,
    pub rounds: usize,
    #[serde(skip)]
    pub times: PhaseTimes,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub base: LloydClusterer,
    pub max_rounds: usize,
    pub copies: usize,
    pub certify: CertifyMode,
    pub ell: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            base: LloydClusterer::default(),
            max_rounds: wrapper::DEFAULT_MAX_ROUNDS,
            copies: 1,
            certify: CertifyMode::Exact,
            ell: None,
        }
    }
}

/// Runs the wrapper on `data` under squared Euclidean cost and measures the
/// result.
pub fn run_cell(data: &LabeledDataset, k: usize, eps: f64, seed: u64, opts: &RunOptions) -> Result<RunReport> {
    let space = MetricSpace::squared_euclidean();
    let x = &data.points;
    let mut cfg = WrapperConfig::new(k, eps, seed);
    cfg.max_rounds = opts.max_rounds;
    cfg.copies = opts.copies;
    cfg.certify = opts.certify;
    cfg.ell = opts.ell;

    let start = Instant::now();
    let out = wrapper::run(&space, x, &opts.base, &cfg)?;
    let cluster = start.elapsed();

    let start = Instant::now();
    let v = cost(&space, x, &out.centroids)?;
    let draws = repeated_estimates(&space, x, out.sample.probs(), &out.centroids, EST_ERR_DRAWS, substream(seed, u64::MAX))?;
    let est_err = if v > 0.0 {
        (compensated_sum(draws.iter().map(|e| ((v - e) / v).powi(2))) / draws.len() as f64).sqrt()
    } else {
        0.0
    };
    let est_err_time = start.elapsed();

    let n = x.len();
    let adaptive = out.report.final_sample_size as f64 / n as f64;
    let worst = (worst_case_size(n, x.dim(), k, eps) / n as f64).min(1.0);
    let gt = data.ground_truth_cost.filter(|&c| c > 0.0);
    Ok(RunReport {
        dataset: data.meta.name.clone(),
        n,
        d: x.dim(),
        k,
        eps,
        seed,
        sample_size: out.report.final_sample_size,
        adaptive_fraction: adaptive,
        worst_case_fraction: worst,
        gain: worst / adaptive,
        est_err,
        cost_ratio_final: gt.map(|g| v / g),
        cost_ratio_seed: gt.map(|g| out.report.v_k / g),
        sweet_spot: out.report.sweet_spot,
        certified: out.report.certified,
        rounds: out.report.rounds,
        times: PhaseTimes { data: Duration::ZERO, cluster, est_err: est_err_time },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Gmm { n: usize, d: usize, k: usize, spacing: f64 },
    Delimited { path: PathBuf, opts: DelimitedOptions },
    Idx { images: PathBuf, labels: Option<PathBuf> },
}

impl DataSpec {
    /// Loads or generates the data for repetition seed `seed`. Files are the
    /// same for every repetition.
    pub fn materialize(&self, seed: u64) -> Result<LabeledDataset> {
        match self {
            DataSpec::Gmm { n, d, k, spacing } => gen_gmm_with_spacing(*n, *d, *k, seed, *spacing),
            DataSpec::Delimited { path, opts } => load_dataset(path, opts),
            DataSpec::Idx { images, labels } => load_idx(images, labels.as_deref()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub data: DataSpec,
    pub k: usize,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub cells: Vec<CellSpec>,
    pub reps: usize,
    pub seed: u64,
    pub opts: RunOptions,
}

/// Named grids. `table1` uses the full-size mixture, `table1-small` a tenth
/// of it.
pub fn preset(name: &str) -> Option<Vec<CellSpec>> {
    let gmm = |n| DataSpec::Gmm { n, d: 10, k: 5, spacing: DEFAULT_SPACING };
    let rows = |n| vec![CellSpec { data: gmm(n), k: 5, eps: 0.1 }, CellSpec { data: gmm(n), k: 5, eps: 0.2 }];
    match name {
        "table1" => Some(rows(500_000)),
        "table1-small" => Some(rows(50_000)),
        "smoke" => Some(vec![CellSpec { data: DataSpec::Gmm { n: 5000, d: 5, k: 3, spacing: DEFAULT_SPACING }, k: 3, eps: 0.3 }]),
        _ => None,
    }
}

pub const PRESETS: &[&str] = &["table1", "table1-small", "smoke"];

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub cell: usize,
    pub rep: usize,
    #[serde(flatten)]
    pub report: Option<RunReport>,
    pub error: Option<String>,
}

/// Medians over the successful repetitions of one cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub cell: usize,
    pub dataset: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub eps: f64,
    pub completed: usize,
    pub failed: usize,
    pub adaptive_fraction: f64,
    pub worst_case_fraction: f64,
    pub gain: f64,
    pub est_err: f64,
    pub cost_ratio_final: Option<f64>,
    pub cost_ratio_seed: Option<f64>,
    pub sweet_spot: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridResult {
    pub runs: Vec<RunOutcome>,
    pub summary: Vec<CellSummary>,
}

/// Runs every cell `reps` times. Cells run concurrently; a failed run is
/// recorded and the grid carries on.
pub fn run_grid(spec: &GridSpec) -> Result<GridResult> {
    if spec.reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    let per_cell = par::map_jobs(spec.cells.len(), |c| {
        let cell = &spec.cells[c];
        (0..spec.reps)
            .map(|rep| {
                let seed = substream(substream(spec.seed, c as u64), rep as u64);
                let start = Instant::now();
                let result = cell.data.materialize(seed).and_then(|data| {
                    let data_time = start.elapsed();
                    let mut r = run_cell(&data, cell.k, cell.eps, seed, &spec.opts)?;
                    r.times.data = data_time;
                    Ok(r)
                });
                match result {
                    Ok(r) => RunOutcome { cell: c, rep, report: Some(r), error: None },
                    Err(e) => RunOutcome { cell: c, rep, report: None, error: Some(e.to_string()) },
                }
            })
            .collect::<Vec<_>>()
    });
    let summary = per_cell.iter().enumerate().filter_map(|(c, runs)| summarize(c, &spec.cells[c], runs)).collect();
    Ok(GridResult { runs: per_cell.into_iter().flatten().collect(), summary })
}

fn summarize(cell: usize, spec: &CellSpec, runs: &[RunOutcome]) -> Option<CellSummary> {
    let ok: Vec<&RunReport> = runs.iter().filter_map(|r| r.report.as_ref()).collect();
    let first = ok.first()?;
    let med = |f: &dyn Fn(&RunReport) -> f64| median(ok.iter().map(|r| f(r)).collect());
    let med_opt = |f: &dyn Fn(&RunReport) -> Option<f64>| {
        let vals: Option<Vec<f64>> = ok.iter().map(|r| f(r)).collect();
        vals.map(median)
    };
    Some(CellSummary {
        cell,
        dataset: first.dataset.clone(),
        n: first.n,
        d: first.d,
        k: spec.k,
        eps: spec.eps,
        completed: ok.len(),
        failed: runs.len() - ok.len(),
        adaptive_fraction: med(&|r| r.adaptive_fraction),
        worst_case_fraction: med(&|r| r.worst_case_fraction),
        gain: med(&|r| r.gain),
        est_err: med(&|r| r.est_err),
        cost_ratio_final: med_opt(&|r| r.cost_ratio_final),
        cost_ratio_seed: med_opt(&|r| r.cost_ratio_seed),
        sweet_spot: med(&|r| r.sweet_spot as f64),
    })
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty(), "median of nothing");
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// One JSON object per run.
pub fn write_jsonl<W: Write>(result: &GridResult, mut out: W) -> io::Result<()> {
    for r in &result.runs {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Tab-separated summary, one row per cell.
pub fn write_summary<W: Write>(result: &GridResult, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "dataset\tn\td\tk\teps\truns\tadaptive\tworst_case\tgain\test_err\tcost_ratio\tkmeanspp_ratio\tsweet_spot"
    )?;
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    for s in &result.summary {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}/{}\t{:.4}\t{:.2}\t{:.1}\t{:.4}\t{}\t{}\t{:.1}",
            s.dataset,
            s.n,
            s.d,
            s.k,
            s.eps,
            s.completed,
            s.completed + s.failed,
            s.adaptive_fraction,
            s.worst_case_fraction,
            s.gain,
            s.est_err,
            opt(s.cost_ratio_final),
            opt(s.cost_ratio_seed),
            s.sweet_spot,
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrefixRow {
    pub i: usize,
    /// `v_i / V_ref`
    pub cost: f64,
    /// `i * v_i / V_ref`
    pub overhead: f64,
}

/// kmeans++ prefix costs normalized by the ground-truth cost, or by `v_1`
/// when there is none.
pub fn prefix_profile(data: &LabeledDataset, ell: usize, seed: u64) -> Result<Vec<PrefixRow>> {
    let space = MetricSpace::squared_euclidean();
    let trace = run_trace(&space, &data.points, ell.min(data.points.len()), seed)?;
    let reference = match data.ground_truth_cost {
        Some(g) if g > 0.0 => g,
        _ => trace.prefix_costs[0],
    };
    if reference <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    Ok(trace
        .prefix_costs
        .iter()
        .enumerate()
        .map(|(j, &v)| PrefixRow { i: j + 1, cost: v / reference, overhead: (j + 1) as f64 * v / reference })
        .collect())
}

/// Writes the two plot series as `i<TAB>value` lines.
pub fn write_profile<W: Write, V: Write>(rows: &[PrefixRow], mut cost_out: W, mut overhead_out: V) -> io::Result<()> {
    writeln!(cost_out, "i\tcost_ratio")?;
    writeln!(overhead_out, "i\toverhead")?;
    for r in rows {
        writeln!(cost_out, "{}\t{}", r.i, r.cost)?;
        writeln!(overhead_out, "{}\t{}", r.i, r.overhead)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worst_case_examples() {
        assert_eq!(worst_case_size(500_000, 10, 5, 0.1), 500_000.0);
        assert_eq!(worst_case_size(500_000, 10, 5, 0.2), 500_000.0);
        let tiny = worst_case_size(1_000_000_000, 2, 2, 1.0);
        assert!((tiny - 12000.0).abs() < 1e-6, "{tiny}");
        assert!((tiny / 1e9 - 1.2e-5).abs() < 1e-12);
        // k = 1 is read as k = 2 inside the logarithm
        assert_eq!(worst_case_size(1_000_000_000, 2, 1, 1.0), 6000.0);
    }

    #[test]
    fn medians() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn smoke_grid_is_deterministic() {
        let spec = GridSpec { cells: preset("smoke").unwrap(), reps: 1, seed: 4, opts: RunOptions::default() };
        let a = run_grid(&spec).unwrap();
        let b = run_grid(&spec).unwrap();
        let mut ja = Vec::new();
        let mut jb = Vec::new();
        write_jsonl(&a, &mut ja).unwrap();
        write_jsonl(&b, &mut jb).unwrap();
        assert_eq!(ja, jb);
        let r = a.runs[0].report.as_ref().unwrap();
        assert!((r.gain - r.worst_case_fraction / r.adaptive_fraction).abs() <= 1e-9 * r.gain);
        assert!(r.adaptive_fraction > 0.0 && r.adaptive_fraction <= 1.0);
        assert_eq!(r.adaptive_fraction * r.n as f64, r.sample_size as f64);
        let mut table = Vec::new();
        write_summary(&a, &mut table).unwrap();
        assert_eq!(String::from_utf8(table).unwrap().lines().count(), 2);
    }

    #[test]
    fn failed_cells_are_recorded() {
        let bad = CellSpec { data: DataSpec::Gmm { n: 10, d: 2, k: 2, spacing: 10.0 }, k: 20, eps: 0.2 };
        let spec = GridSpec { cells: vec![bad], reps: 2, seed: 1, opts: RunOptions::default() };
        let out = run_grid(&spec).unwrap();
        assert_eq!(out.runs.len(), 2);
        assert!(out.runs.iter().all(|r| r.error.is_some()));
        assert!(out.summary.is_empty());
    }

    #[test]
    fn profile_rows() {
        let data = crate::data::gen_gmm(2000, 3, 4, 2).unwrap();
        let rows = prefix_profile(&data, 8, 1).unwrap();
        assert_eq!(rows.len(), 8);
        for r in &rows {
            assert!((r.overhead - r.i as f64 * r.cost).abs() <= 1e-12 * r.overhead.max(1.0));
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_profile(&rows, &mut a, &mut b).unwrap();
        assert_eq!(String::from_utf8(a).unwrap().lines().count(), 9);
    }
}
