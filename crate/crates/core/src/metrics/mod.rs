//! Embedding-domain distances: Fréchet distance between Gaussian fits (FAD),
//! its infinite-sample extrapolation, and the scaled unbiased MMD with an RBF
//! kernel.

mod frechet;
mod linalg;
mod mmd;

use serde::{Deserialize, Serialize};

pub use frechet::{
    default_subsample_sizes, fad, fad_infinity, fad_infinity_fit, fad_with, frechet_from_stats,
    frechet_from_stats_with, FadConfig, FadInfinityConfig, FadInfinityFit,
    NEGATIVE_CLAMP_LIMIT,
};
pub use linalg::{matrix_sqrt_psd, PSD_CLAMP_REL};
pub use mmd::{
    median_heuristic_bandwidth, mmd_scaled, pairwise_sq_dists, rbf_kernel, sigma_sweep,
    Bandwidth, PairDistances, RbfKernelConfig, DEFAULT_ALPHA, FIXED_SIGMA_SWEEP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Fad,
    FadInfinity,
    MmdScaled,
}

/// Outcome of one distance computation.
///
/// `fad` values are the squared Fréchet distance and never negative;
/// `mmd_scaled` values come from an unbiased estimator and may be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub value: f64,
    pub metric: Metric,
    pub sigma_used: Option<f64>,
    pub n_frames_x: usize,
    pub n_frames_y: usize,
}
