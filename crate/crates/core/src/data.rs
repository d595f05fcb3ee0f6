//! Synthetic and file-backed data sets.
//!
//! Native dump format (comma separated, one point per row):
//!
//! ```text
//! # one2all-dataset v1 <n> <d> <k>
//! # weights: last-column        (only for weighted data)
//! # truth: 0,0,...              (one line per ground-truth centroid)
//! 1.5,-2,...
//! ```
//!
//! Any other delimited file is read with [`load_delimited`]; lines starting
//! with `#` are skipped there.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::assign::cost;
use crate::error::{Error, Result};
use crate::par;
use crate::points::{CentroidSet, WeightedPointSet};
use crate::seed::substream;
use crate::space::MetricSpace;

pub const DEFAULT_SPACING: f64 = 10.0;
const NATIVE_MAGIC: &str = "# one2all-dataset v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetMeta {
    pub name: String,
    pub n: usize,
    pub d: usize,
    /// Number of ground-truth centroids, 0 if there are none.
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub points: WeightedPointSet,
    pub ground_truth: Option<CentroidSet>,
    /// Squared Euclidean cost of the ground truth.
    pub ground_truth_cost: Option<f64>,
    /// Generating component or class of each point.
    pub labels: Option<Vec<u32>>,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, points: WeightedPointSet, ground_truth: Option<CentroidSet>, labels: Option<Vec<u32>>) -> Result<Self> {
        let ground_truth_cost = match &ground_truth {
            Some(gt) => Some(cost(&MetricSpace::squared_euclidean(), &points, gt)?),
            None => None,
        };
        if let Some(l) = &labels {
            if l.len() != points.len() {
                return Err(Error::Format(format!("{} labels for {} points", l.len(), points.len())));
            }
        }
        let meta = DatasetMeta {
            name: name.into(),
            n: points.len(),
            d: points.dim(),
            k: ground_truth.as_ref().map_or(0, CentroidSet::len),
        };
        Ok(Self { points, ground_truth, ground_truth_cost, labels, meta })
    }

    /// Ground-truth cost in an arbitrary space.
    pub fn ground_truth_cost_in(&self, space: &MetricSpace) -> Result<Option<f64>> {
        self.ground_truth.as_ref().map(|gt| cost(space, &self.points, gt)).transpose()
    }
}

/// [`gen_gmm_with_spacing`] with the default spacing.
pub fn gen_gmm(n: usize, d: usize, k: usize, seed: u64) -> Result<LabeledDataset> {
    gen_gmm_with_spacing(n, d, k, seed, DEFAULT_SPACING)
}

/// Mixture of `k` isotropic Gaussians with means `i * spacing * e_1`,
/// `i = 0..k`. Component `i` has standard deviation drawn uniformly from
/// `(0, spacing]` and `n / k` points, the first `n mod k` components one more.
pub fn gen_gmm_with_spacing(n: usize, d: usize, k: usize, seed: u64, spacing: f64) -> Result<LabeledDataset> {
    if k == 0 || n < k {
        return Err(Error::invalid(format!("need n >= k >= 1, got n = {n}, k = {k}")));
    }
    if d == 0 {
        return Err(Error::invalid("d must be at least 1"));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::invalid(format!("spacing must be positive, got {spacing}")));
    }
    let parts = par::map_jobs(k, |c| {
        let size = n / k + usize::from(c < n % k);
        let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, c as u64));
        let sigma = spacing * (1.0 - rng.random::<f64>());
        let mut coords = Vec::with_capacity(size * d);
        for _ in 0..size {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                coords.push(if j == 0 { c as f64 * spacing } else { 0.0 } + sigma * z);
            }
        }
        (coords, size)
    });
    let mut coords = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for (c, (part, size)) in parts.into_iter().enumerate() {
        coords.extend(part);
        labels.extend(std::iter::repeat_n(c as u32, size));
    }
    let mut means = vec![0.0; k * d];
    for c in 0..k {
        means[c * d] = c as f64 * spacing;
    }
    let points = WeightedPointSet::unit(d, coords)?;
    let gt = CentroidSet::new(d, means)?;
    LabeledDataset::new(format!("gmm-n{n}-d{d}-k{k}-s{seed}"), points, Some(gt), Some(labels))
}

/// Standard deviations used by [`gen_gmm_with_spacing`] for each component.
pub fn gmm_sigmas(k: usize, seed: u64, spacing: f64) -> Vec<f64> {
    (0..k)
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, c as u64));
            spacing * (1.0 - rng.random::<f64>())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelimitedOptions {
    pub delimiter: u8,
    pub has_header: bool,
    /// Zero-based column holding point weights.
    pub weight_column: Option<usize>,
}

impl Default for DelimitedOptions {
    fn default() -> Self {
        Self { delimiter: b',', has_header: false, weight_column: None }
    }
}

pub fn load_delimited(path: impl AsRef<Path>, opts: &DelimitedOptions) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let points = read_delimited(File::open(path)?, opts)?;
    LabeledDataset::new(stem(path), points, None, None)
}

/// Parses rows of numbers. Errors carry the 1-based line number.
pub fn read_delimited<R: Read>(input: R, opts: &DelimitedOptions) -> Result<WeightedPointSet> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(opts.has_header)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    let mut width = None;
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => Error::Parse { row, message: format!("{other:?}") },
            }
        })?;
        if !more {
            break;
        }
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse { row, message: format!("expected {w} columns, found {}", record.len()) });
            }
            Some(_) => {}
        }
        let mut weight = 1.0;
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Parse { row, message: format!("column {}: not a number: {cell:?}", j + 1) })?;
            if !v.is_finite() {
                return Err(Error::Parse { row, message: format!("column {}: non-finite value", j + 1) });
            }
            if Some(j) == opts.weight_column {
                if v <= 0.0 {
                    return Err(Error::Parse { row, message: format!("weight must be positive, got {v}") });
                }
                weight = v;
            } else {
                coords.push(v);
            }
        }
        weights.push(weight);
    }
    let Some(width) = width else {
        return Err(Error::Empty("data file has no rows"));
    };
    let dim = match opts.weight_column {
        Some(c) if c >= width => {
            return Err(Error::Parse { row: 1, message: format!("weight column {c} out of range for {width} columns") });
        }
        Some(_) => width - 1,
        None => width,
    };
    if dim == 0 {
        return Err(Error::Parse { row: 1, message: "no coordinate columns".into() });
    }
    WeightedPointSet::new(dim, coords, weights)
}

/// Reads a native dump, or any delimited file when the native header is
/// absent.
pub fn load_dataset(path: impl AsRef<Path>, opts: &DelimitedOptions) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    read_dataset(&text, stem(path), opts)
}

pub fn read_dataset(text: &str, name: String, opts: &DelimitedOptions) -> Result<LabeledDataset> {
    let Some(first) = text.lines().next().filter(|l| l.starts_with(NATIVE_MAGIC)) else {
        let points = read_delimited(text.as_bytes(), opts)?;
        return LabeledDataset::new(name, points, None, None);
    };
    let fields: Vec<usize> = first[NATIVE_MAGIC.len()..]
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::Parse { row: 1, message: format!("bad header field {s:?}") }))
        .collect::<Result<_>>()?;
    let [n, d, k] = fields[..] else {
        return Err(Error::Parse { row: 1, message: "header needs n d k".into() });
    };
    let mut weighted = false;
    let mut truth = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if let Some(rest) = line.strip_prefix("# truth:") {
            for cell in rest.split(',') {
                truth.push(cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                    row: i + 1,
                    message: format!("bad ground-truth value {cell:?}"),
                })?);
            }
        } else if line.trim() == "# weights: last-column" {
            weighted = true;
        } else if !line.starts_with('#') {
            break;
        }
    }
    let row_opts = DelimitedOptions { delimiter: b',', has_header: false, weight_column: weighted.then_some(d) };
    let points = read_delimited(text.as_bytes(), &row_opts)?;
    if points.len() != n || points.dim() != d {
        return Err(Error::Format(format!(
            "header says {n} points in {d} dimensions, found {} in {}",
            points.len(),
            points.dim()
        )));
    }
    let gt = if truth.is_empty() {
        None
    } else {
        if truth.len() != k * d {
            return Err(Error::Format(format!("expected {k} ground-truth rows of dimension {d}")));
        }
        Some(CentroidSet::new(d, truth)?)
    };
    LabeledDataset::new(name, points, gt, None)
}

/// Writes the native dump. Values use the shortest representation that
/// parses back to the same bits.
pub fn write_dataset<W: Write>(data: &LabeledDataset, out: W) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    let p = &data.points;
    let k = data.ground_truth.as_ref().map_or(0, CentroidSet::len);
    writeln!(out, "{NATIVE_MAGIC} {} {} {k}", p.len(), p.dim())?;
    let weighted = p.weights().iter().any(|&w| w != 1.0);
    if weighted {
        writeln!(out, "# weights: last-column")?;
    }
    if let Some(gt) = &data.ground_truth {
        for c in gt.iter() {
            write!(out, "# truth: ")?;
            write_row(&mut out, c, None)?;
        }
    }
    for i in 0..p.len() {
        write_row(&mut out, p.point(i), weighted.then(|| p.weight(i)))?;
    }
    out.flush()
}

pub fn save_dataset(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(data, File::create(path)?)?;
    Ok(())
}

/// One centroid per row, comma separated.
pub fn write_centroids<W: Write>(centroids: &CentroidSet, out: W) -> io::Result<()> {
    let mut out = BufWriter::new(out);
    for c in centroids.iter() {
        write_row(&mut out, c, None)?;
    }
    out.flush()
}

pub fn load_centroids(path: impl AsRef<Path>, opts: &DelimitedOptions) -> Result<CentroidSet> {
    let rows = read_delimited(File::open(path)?, &DelimitedOptions { weight_column: None, ..*opts })?;
    CentroidSet::new(rows.dim(), rows.coords().to_vec())
}

fn write_row<W: Write>(out: &mut W, row: &[f64], weight: Option<f64>) -> io::Result<()> {
    for (j, v) in row.iter().chain(weight.as_ref()).enumerate() {
        if j > 0 {
            out.write_all(b",")?;
        }
        write!(out, "{v}")?;
    }
    out.write_all(b"\n")
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Reads IDX image files (and optionally labels). Pixels stay in `[0, 255]`.
/// With labels, the ground truth is the mean image of each class present.
pub fn load_idx(images: impl AsRef<Path>, labels: Option<&Path>) -> Result<LabeledDataset> {
    let images = images.as_ref();
    let img = BufReader::new(File::open(images)?);
    let lab = labels.map(File::open).transpose()?.map(BufReader::new);
    read_idx(img, lab, stem(images))
}

pub fn read_idx<R: BufRead, L: BufRead>(mut images: R, labels: Option<L>, name: String) -> Result<LabeledDataset> {
    let magic = images.read_u32::<BigEndian>().map_err(idx_eof)?;
    if magic != IDX_IMAGES {
        return Err(Error::Format(format!("bad IDX image magic {magic:#010x}")));
    }
    let count = images.read_u32::<BigEndian>().map_err(idx_eof)? as usize;
    let rows = images.read_u32::<BigEndian>().map_err(idx_eof)? as usize;
    let cols = images.read_u32::<BigEndian>().map_err(idx_eof)? as usize;
    let d = rows * cols;
    if count == 0 || d == 0 {
        return Err(Error::Format("IDX file holds no pixels".into()));
    }
    let mut pixels = vec![0u8; count * d];
    images.read_exact(&mut pixels).map_err(idx_eof)?;
    let coords: Vec<f64> = pixels.iter().map(|&b| f64::from(b)).collect();
    let points = WeightedPointSet::unit(d, coords)?;

    let Some(mut labels) = labels else {
        return LabeledDataset::new(name, points, None, None);
    };
    let magic = labels.read_u32::<BigEndian>().map_err(idx_eof)?;
    if magic != IDX_LABELS {
        return Err(Error::Format(format!("bad IDX label magic {magic:#010x}")));
    }
    let lcount = labels.read_u32::<BigEndian>().map_err(idx_eof)? as usize;
    if lcount != count {
        return Err(Error::Format(format!("{count} images but {lcount} labels")));
    }
    let mut raw = vec![0u8; count];
    labels.read_exact(&mut raw).map_err(idx_eof)?;

    let classes = usize::from(*raw.iter().max().expect("count > 0")) + 1;
    let mut sums = vec![0.0; classes * d];
    let mut sizes = vec![0usize; classes];
    for (i, &l) in raw.iter().enumerate() {
        let l = usize::from(l);
        sizes[l] += 1;
        for (s, &x) in sums[l * d..(l + 1) * d].iter_mut().zip(points.point(i)) {
            *s += x;
        }
    }
    let mut means = Vec::new();
    for c in (0..classes).filter(|&c| sizes[c] > 0) {
        means.extend(sums[c * d..(c + 1) * d].iter().map(|s| s / sizes[c] as f64));
    }
    let gt = CentroidSet::new(d, means)?;
    LabeledDataset::new(name, points, Some(gt), Some(raw.into_iter().map(u32::from).collect()))
}

fn idx_eof(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("truncated IDX file".into())
    } else {
        Error::Io(e)
    }
}
