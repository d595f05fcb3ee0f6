//! wasm-bindgen bindings for the browser demo in `www/`.
//!
//! Everything works on a two-dimensional Gaussian mixture held by [`Demo`].
//! Point coordinates cross the boundary as flat `[x0, y0, x1, y1, ...]`
//! arrays.

use serde_json::json;
use wasm_bindgen::prelude::*;

use one2all::kmeanspp::{run_trace, KmeansPPTrace};
use one2all::lloyd::LloydClusterer;
use one2all::one2all::{rough_sweet_spot, One2AllProbabilities};
use one2all::sampling::CoordinatedSample;
use one2all::wrapper::{self, WrapperConfig};
use one2all::{data, one2all_probs, LabeledDataset, MetricSpace};

fn msg(e: one2all::Error) -> String {
    e.to_string()
}

#[wasm_bindgen]
pub struct Demo {
    data: LabeledDataset,
    space: MetricSpace,
    trace: KmeansPPTrace,
    seed: u64,
}

#[wasm_bindgen]
impl Demo {
    /// `n` points from `k` Gaussians; kmeans++ runs for `ell` steps.
    #[wasm_bindgen(constructor)]
    pub fn new(n: usize, k: usize, ell: usize, seed: u32) -> Result<Demo, String> {
        let seed = u64::from(seed);
        let data = data::gen_gmm(n, 2, k, seed).map_err(msg)?;
        let space = MetricSpace::squared_euclidean();
        let trace = run_trace(&space, &data.points, ell.clamp(1, n), seed).map_err(msg)?;
        Ok(Demo { data, space, trace, seed })
    }

    pub fn len(&self) -> usize {
        self.data.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.points.is_empty()
    }

    pub fn points(&self) -> Vec<f64> {
        self.data.points.coords().to_vec()
    }

    /// Number of kmeans++ centroids available.
    pub fn prefixes(&self) -> usize {
        self.trace.len()
    }

    /// `i * v_i` for every prefix length `i`.
    pub fn prefix_scores(&self) -> Vec<f64> {
        self.trace.prefix_costs.iter().enumerate().map(|(j, v)| (j + 1) as f64 * v).collect()
    }

    pub fn sweet_spot(&self) -> usize {
        rough_sweet_spot(&self.trace.prefix_costs)
    }

    /// The first `prefix` kmeans++ centroids.
    pub fn centroids(&self, prefix: usize) -> Result<Vec<f64>, String> {
        Ok(self.trace.prefix(prefix).map_err(msg)?.coords().to_vec())
    }

    /// One-to-all probabilities of the first `prefix` centroids.
    pub fn probabilities(&self, prefix: usize) -> Result<Vec<f64>, String> {
        Ok(self.probs(prefix)?.pi)
    }

    /// Indices sampled at `min{1, factor * pi}`. The randomization is fixed,
    /// so raising `factor` only ever adds points.
    pub fn sample(&self, prefix: usize, factor: f64) -> Result<Vec<u32>, String> {
        if factor.is_nan() || factor < 0.0 {
            return Err(format!("factor must be non-negative, got {factor}"));
        }
        let p = self.probs(prefix)?.scaled(factor);
        let s = CoordinatedSample::draw(self.data.points.weights(), p, self.seed ^ 0x5a5a).map_err(msg)?;
        Ok(s.members().iter().map(|&i| i as u32).collect())
    }

    /// Runs the adaptive wrapper and returns a JSON object with the
    /// centroids, the exact cost, the final sample and the round log.
    pub fn cluster(&self, k: usize, eps: f64) -> Result<String, String> {
        let base = LloydClusterer::default();
        let out = wrapper::run(&self.space, &self.data.points, &base, &WrapperConfig::new(k, eps, self.seed)).map_err(msg)?;
        let value = json!({
            "centroids": out.centroids.coords(),
            "cost": out.cost,
            "groundTruthCost": self.data.ground_truth_cost,
            "sample": out.sample.members(),
            "report": out.report,
        });
        Ok(value.to_string())
    }
}

impl Demo {
    fn probs(&self, prefix: usize) -> Result<One2AllProbabilities, String> {
        let m = self.trace.prefix(prefix).map_err(msg)?;
        one2all_probs(&self.space, &self.data.points, &m).map_err(msg)
    }
}
