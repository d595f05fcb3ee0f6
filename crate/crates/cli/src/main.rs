use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use one2all::bench::{self, CellSpec, DataSpec, GridSpec, RunOptions};
use one2all::data::{self, DelimitedOptions, LabeledDataset};
use one2all::lloyd::LloydClusterer;
use one2all::oracle::{OracleConfig, OracleState};
use one2all::wrapper::{self, CertifyMode, WrapperConfig};
use one2all::{cost, Error, MetricSpace};

#[derive(Parser)]
#[command(name = "one2all", version, about = "One-to-all sampling, cost oracles and adaptive clustering")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "ONE2ALL_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,
    /// Print phase timings to standard error.
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Gaussian mixture with ground-truth centroids.
    Gen(GenArgs),
    /// Build a cost oracle and save it.
    OracleBuild(OracleBuildArgs),
    /// Answer cost queries from a saved oracle.
    OracleQuery(OracleQueryArgs),
    /// Cluster a data set with the adaptive sampling wrapper.
    Cluster(ClusterArgs),
    /// Run a benchmark grid.
    Bench(BenchArgs),
    /// Write kmeans++ prefix cost and overhead series for plotting.
    Figdata(FigdataArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Data file: native dump or delimited rows.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    delimiter: u8,
    /// The first row is a header.
    #[arg(long)]
    header: bool,
    /// Zero-based column holding point weights.
    #[arg(long)]
    weight_col: Option<usize>,
}

impl InputArgs {
    fn opts(&self) -> DelimitedOptions {
        DelimitedOptions { delimiter: self.delimiter, has_header: self.header, weight_column: self.weight_col }
    }

    fn load(&self) -> one2all::Result<LabeledDataset> {
        data::load_dataset(&self.input, &self.opts())
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = positive_usize)]
    n: usize,
    #[arg(long, value_parser = positive_usize)]
    d: usize,
    #[arg(long, value_parser = positive_usize)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Distance between consecutive means.
    #[arg(long = "delta-spacing", default_value_t = data::DEFAULT_SPACING, value_parser = positive_f64)]
    spacing: f64,
    /// Output file (standard output if absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleBuildArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = positive_usize)]
    k: usize,
    #[arg(long, value_parser = positive_f64)]
    eps: f64,
    /// kmeans++ iterations (default 2k).
    #[arg(long, value_parser = positive_usize)]
    ell: Option<usize>,
    /// Supported cost threshold. Without it the oracle starts in feedback
    /// mode with the threshold set to the cost of 2k kmeans++ centroids.
    #[arg(long, value_parser = positive_f64)]
    threshold: Option<f64>,
    /// Distance is Euclidean distance to this power.
    #[arg(long, default_value_t = 2.0, value_parser = positive_f64)]
    power: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleQueryArgs {
    #[arg(long)]
    oracle: PathBuf,
    /// Centroid file, one centroid per row. May be repeated.
    #[arg(long = "query", required = true)]
    queries: Vec<PathBuf>,
    /// Answer low-cost queries exactly and grow the oracle; needs --data.
    #[arg(long, requires = "data")]
    feedback: bool,
    /// The data the oracle was built from.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    delimiter: u8,
    #[arg(long)]
    header: bool,
    #[arg(long)]
    weight_col: Option<usize>,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = positive_usize)]
    k: usize,
    #[arg(long, value_parser = positive_f64)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = positive_usize)]
    ell: Option<usize>,
    #[arg(long, default_value_t = 5, value_parser = positive_usize)]
    restarts: usize,
    #[arg(long = "lloyd-iters", default_value_t = 20, value_parser = positive_usize)]
    lloyd_iters: usize,
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    copies: usize,
    #[arg(long = "max-rounds", default_value_t = wrapper::DEFAULT_MAX_ROUNDS, value_parser = positive_usize)]
    max_rounds: usize,
    /// Certify with an independent validation sample instead of exact costs.
    #[arg(long)]
    validation_seed: Option<u64>,
    /// Write the centroids here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the round log as JSON lines.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Named grid: table1, table1-small or smoke.
    #[arg(long)]
    preset: Option<String>,
    /// Custom cell: data file.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// IDX image file (adds a cell with k classes, default 10).
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    #[arg(long, value_parser = positive_usize)]
    k: Option<usize>,
    /// Accuracy for custom cells; may be repeated.
    #[arg(long = "eps", value_parser = positive_f64)]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    copies: usize,
    #[arg(long = "max-rounds", default_value_t = wrapper::DEFAULT_MAX_ROUNDS, value_parser = positive_usize)]
    max_rounds: usize,
    /// Per-run reports as JSON lines.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary table (standard output if absent).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct FigdataArgs {
    /// Data file; without it a mixture is generated from --n --d --k.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000, value_parser = positive_usize)]
    n: usize,
    #[arg(long, default_value_t = 10, value_parser = positive_usize)]
    d: usize,
    #[arg(long, default_value_t = 20, value_parser = positive_usize)]
    k: usize,
    /// Prefix length (default 2k).
    #[arg(long, value_parser = positive_usize)]
    ell: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes <prefix>_cost.tsv and <prefix>_overhead.tsv.
    #[arg(long)]
    out: PathBuf,
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "\\t" | "tab" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be a single ASCII character, got {s:?}")),
    }
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_data_error() {
            Failure::Data(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t as usize).build_global() {
            eprintln!("warning: could not configure threads: {e}");
        }
    }
    let timer = Timer { enabled: cli.timings, start: Instant::now() };
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::OracleBuild(a) => oracle_build(a),
        Command::OracleQuery(a) => oracle_query(a),
        Command::Cluster(a) => cluster(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Figdata(a) => figdata(a),
    };
    timer.report("total");
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

struct Timer {
    enabled: bool,
    start: Instant,
}

impl Timer {
    fn report(&self, what: &str) {
        if self.enabled {
            eprintln!("[time] {what}: {:.3}s", self.start.elapsed().as_secs_f64());
        }
    }
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn gen(a: &GenArgs) -> CliResult {
    if a.k > a.n {
        return Err(Failure::Usage(format!("--k {} exceeds --n {}", a.k, a.n)));
    }
    let data = data::gen_gmm_with_spacing(a.n, a.d, a.k, a.seed, a.spacing)?;
    data::write_dataset(&data, output(a.out.as_deref())?)?;
    Ok(())
}

fn oracle_build(a: &OracleBuildArgs) -> CliResult {
    let data = a.input.load()?;
    let space = MetricSpace::euclidean_power(a.power)?;
    let x = &data.points;
    let oracle = match a.threshold {
        Some(threshold) => {
            let ell = a.ell.unwrap_or(2 * a.k).min(x.len());
            OracleState::build(&space, x, &OracleConfig { k: a.k, ell, threshold, eps: a.eps, seed: a.seed })?
        }
        None => {
            if a.ell.is_some() {
                return Err(Failure::Usage("--ell needs --threshold; feedback oracles use 2k".into()));
            }
            OracleState::build_feedback(&space, x, a.k, a.eps, a.seed)?
        }
    };
    oracle.save_atomic(&a.out)?;
    let mut out = output(None)?;
    writeln!(out, "points\t{}", oracle.n())?;
    writeln!(out, "prefix\t{}", oracle.prefix_len())?;
    writeln!(out, "threshold\t{}", oracle.threshold())?;
    writeln!(out, "sample\t{}", oracle.sample_size())?;
    writeln!(out, "fraction\t{:.6}", oracle.sample_size() as f64 / oracle.n() as f64)?;
    out.flush()?;
    Ok(())
}

fn oracle_query(a: &OracleQueryArgs) -> CliResult {
    let mut oracle = OracleState::load(&a.oracle)?;
    let opts = DelimitedOptions { delimiter: a.delimiter, has_header: a.header, weight_column: a.weight_col };
    let data = match &a.data {
        Some(p) => Some(data::load_dataset(p, &opts)?),
        None => None,
    };
    let queries = a
        .queries
        .iter()
        .map(|p| data::load_centroids(p, &DelimitedOptions { weight_column: None, ..opts }))
        .collect::<one2all::Result<Vec<_>>>()?;
    let mut out = output(None)?;
    let mut updated = false;
    for (path, q) in a.queries.iter().zip(&queries) {
        if a.feedback {
            let x = &data.as_ref().expect("clap enforces --data").points;
            let before = oracle.update_count();
            let (v, exact) = oracle.feedback_query(x, q)?;
            updated |= oracle.update_count() > before;
            writeln!(out, "{}\t{}\t{}", path.display(), v, if exact { "exact" } else { "estimate" })?;
        } else {
            writeln!(out, "{}\t{}\testimate", path.display(), oracle.query(q)?)?;
        }
    }
    if updated {
        oracle.save_atomic(&a.oracle)?;
        writeln!(out, "# updates\t{}", oracle.update_count())?;
        writeln!(out, "# threshold\t{}", oracle.threshold())?;
    }
    out.flush()?;
    Ok(())
}

fn cluster(a: &ClusterArgs) -> CliResult {
    let data = a.input.load()?;
    let x = &data.points;
    if a.k > x.len() {
        return Err(Failure::Usage(format!("--k {} exceeds the {} points", a.k, x.len())));
    }
    let space = MetricSpace::squared_euclidean();
    let base = LloydClusterer { restarts: a.restarts, lloyd_iters: a.lloyd_iters };
    let mut cfg = WrapperConfig::new(a.k, a.eps, a.seed);
    cfg.copies = a.copies;
    cfg.max_rounds = a.max_rounds;
    cfg.ell = a.ell;
    if let Some(seed) = a.validation_seed {
        cfg.certify = CertifyMode::Validation { seed };
    }
    let out = wrapper::run(&space, x, &base, &cfg)?;
    if let Some(p) = &a.log {
        std::fs::write(p, out.report.log_jsonl())?;
    }
    let mut w = output(a.out.as_deref())?;
    data::write_centroids(&out.centroids, &mut w)?;
    w.flush()?;
    drop(w);
    let r = &out.report;
    let mut s = output(None)?;
    writeln!(s, "# certified\t{}", r.certified)?;
    writeln!(s, "# cost\t{}", out.cost)?;
    writeln!(s, "# kmeanspp_cost\t{}", r.v_k)?;
    if let Some(gt) = &data.ground_truth {
        let g = cost(&space, x, gt)?;
        if g > 0.0 {
            writeln!(s, "# ground_truth_ratio\t{:.6}", out.cost / g)?;
        }
    }
    writeln!(s, "# sample\t{}", r.final_sample_size)?;
    writeln!(s, "# fraction\t{:.6}", r.final_sample_size as f64 / x.len() as f64)?;
    writeln!(s, "# sweet_spot\t{}", r.sweet_spot)?;
    writeln!(s, "# rounds\t{}", r.rounds)?;
    s.flush()?;
    Ok(())
}

fn bench_cmd(a: &BenchArgs) -> CliResult {
    let mut cells = Vec::new();
    if let Some(name) = &a.preset {
        cells = bench::preset(name)
            .ok_or_else(|| Failure::Usage(format!("unknown preset {name:?}; known: {}", bench::PRESETS.join(", "))))?;
    }
    let custom = |data: DataSpec, default_k: Option<usize>| -> Result<Vec<CellSpec>, Failure> {
        let k = a.k.or(default_k).ok_or_else(|| Failure::Usage("--k is required for --in".into()))?;
        let eps = if a.eps.is_empty() { vec![0.2] } else { a.eps.clone() };
        Ok(eps.into_iter().map(|eps| CellSpec { data: data.clone(), k, eps }).collect())
    };
    if let Some(p) = &a.input {
        cells.extend(custom(DataSpec::Delimited { path: p.clone(), opts: DelimitedOptions::default() }, None)?);
    }
    if let Some(images) = &a.images {
        cells.extend(custom(DataSpec::Idx { images: images.clone(), labels: a.labels.clone() }, Some(10))?);
    }
    if cells.is_empty() {
        return Err(Failure::Usage("nothing to run: give --preset, --in or --images".into()));
    }
    let opts = RunOptions { copies: a.copies, max_rounds: a.max_rounds, ..RunOptions::default() };
    let result = bench::run_grid(&GridSpec { cells, reps: a.reps, seed: a.seed, opts })?;
    if let Some(p) = &a.out {
        let mut w = output(Some(p))?;
        bench::write_jsonl(&result, &mut w)?;
        w.flush()?;
    }
    let mut w = output(a.summary.as_deref())?;
    bench::write_summary(&result, &mut w)?;
    w.flush()?;
    for r in &result.runs {
        match (&r.report, &r.error) {
            (Some(rep), _) => eprintln!(
                "[time] cell {} rep {}: data {:.2}s cluster {:.2}s est_err {:.2}s",
                r.cell,
                r.rep,
                rep.times.data.as_secs_f64(),
                rep.times.cluster.as_secs_f64(),
                rep.times.est_err.as_secs_f64()
            ),
            (None, Some(e)) => eprintln!("cell {} rep {} failed: {e}", r.cell, r.rep),
            (None, None) => {}
        }
    }
    Ok(())
}

fn figdata(a: &FigdataArgs) -> CliResult {
    let data = match &a.input {
        Some(p) => data::load_dataset(p, &DelimitedOptions::default())?,
        None => {
            if a.k > a.n {
                return Err(Failure::Usage(format!("--k {} exceeds --n {}", a.k, a.n)));
            }
            data::gen_gmm(a.n, a.d, a.k, a.seed)?
        }
    };
    let ell = a.ell.unwrap_or(2 * a.k);
    let rows = bench::prefix_profile(&data, ell, a.seed)?;
    let prefix = a.out.to_string_lossy();
    let cost_path = format!("{prefix}_cost.tsv");
    let overhead_path = format!("{prefix}_overhead.tsv");
    let mut c = BufWriter::new(File::create(&cost_path)?);
    let mut o = BufWriter::new(File::create(&overhead_path)?);
    bench::write_profile(&rows, &mut c, &mut o)?;
    c.flush()?;
    o.flush()?;
    let best = rows.iter().min_by(|x, y| x.overhead.total_cmp(&y.overhead)).expect("non-empty profile");
    let mut out = output(None)?;
    writeln!(out, "sweet_spot\t{}", best.i)?;
    writeln!(out, "wrote\t{cost_path}\t{overhead_path}")?;
    out.flush()?;
    Ok(())
}
