//! Clustering-cost oracles and adaptive clustering over small weighted samples.
//!
//! The building block is a single set of "one-to-all" sampling probabilities,
//! computed from one centroid set `M` (a kmeans++ prefix), that simultaneously
//! dominates the probability-proportional-to-size distributions of every other
//! centroid set whose cost is not far below `V(M)`. A Poisson sample drawn from
//! them, with inverse-probability weights, estimates the clustering cost of any
//! such query with per-query concentration guarantees.
//!
//! On top of that sit [`oracle`], a cost oracle that grows its sample when it
//! sees evidence of cheaper clusterings, and [`wrapper`], which runs any base
//! clusterer on adaptively sized samples and certifies the result against the
//! full data.

pub mod assign;
pub mod bench;
pub mod data;
pub mod error;
pub mod kmeanspp;
pub mod lloyd;
pub mod one2all;
pub mod oracle;
mod par;
pub mod points;
pub mod sampling;
pub mod seed;
pub mod space;
pub mod sum;
pub mod wrapper;

pub use assign::{assign, cost, Assignment};
pub use bench::{worst_case_size, RunReport};
pub use data::{gen_gmm, LabeledDataset};
pub use error::{Error, Result};
pub use kmeanspp::{run_trace, KmeansPPTrace};
pub use lloyd::{base_cluster, lloyd_step, BaseClusterer, BaseClustererConfig, LloydClusterer};
pub use one2all::{one2all_probs, sweet_spot, verify_dominance, weighted_median, One2AllProbabilities, SweetSpotMode};
pub use oracle::{OracleConfig, OracleState};
pub use points::{CentroidSet, WeightedPointSet};
pub use sampling::{estimate_cost, pps_base, CoordinatedSample, PpsBase, Randomization};
pub use space::{DistanceMatrix, MetricSpace, SpaceKind};
pub use wrapper::{certify, multi_sample_confirm, run as run_wrapper, CertifyMode, WrapperConfig, WrapperOutcome, WrapperReport};

