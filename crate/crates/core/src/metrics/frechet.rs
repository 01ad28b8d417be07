use nalgebra::{DMatrix, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::matrix_sqrt_psd;
use super::{DistanceResult, Metric};
use crate::embedding::{compute_stats, EmbeddingSet, GaussianStats};
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, map_indexed};

/// Rounding can push a Fréchet distance slightly below zero; values down to
/// `-NEGATIVE_CLAMP_LIMIT` are reported as 0, anything lower is an error.
pub const NEGATIVE_CLAMP_LIMIT: f64 = 1e-6;

const SVD_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FadConfig {
    /// Ridge `ε` added to both covariances as `ε·I`. Zero leaves scores untouched.
    #[serde(default)]
    pub ridge: f64,
}

pub fn frechet_from_stats(sx: &GaussianStats, sy: &GaussianStats) -> Result<DistanceResult> {
    frechet_from_stats_with(sx, sy, &FadConfig::default())
}

/// `‖μx − μy‖² + tr(Σx + Σy − 2·(Σx Σy)^½)`.
///
/// The cross term `tr (√Σx · Σy · √Σx)^½` equals the sum of singular values
/// of `√Σy · √Σx`. Taking singular values of the product directly avoids
/// forming `√Σx · Σy · √Σx`, whose small eigenvalues are lost to rounding at
/// the squared condition number.
pub fn frechet_from_stats_with(
    sx: &GaussianStats,
    sy: &GaussianStats,
    cfg: &FadConfig,
) -> Result<DistanceResult> {
    if sx.dim() != sy.dim() {
        return Err(Error::Shape(format!(
            "statistics have dims {} and {}",
            sx.dim(),
            sy.dim()
        )));
    }
    if !(cfg.ridge >= 0.0 && cfg.ridge.is_finite()) {
        return Err(Error::Config(format!("ridge must be >= 0, got {}", cfg.ridge)));
    }
    let d = sx.dim();
    let (cov_x, cov_y) = if cfg.ridge > 0.0 {
        let r = DMatrix::<f64>::identity(d, d) * cfg.ridge;
        (&sx.cov + &r, &sy.cov + &r)
    } else {
        (sx.cov.clone(), sy.cov.clone())
    };

    let mean_term = (&sx.mean - &sy.mean).norm_squared();
    let root_x = matrix_sqrt_psd(&cov_x)?;
    let root_y = matrix_sqrt_psd(&cov_y)?;
    let cross = nuclear_norm(&root_y * &root_x)?;

    let value = mean_term + cov_x.trace() + cov_y.trace() - 2.0 * cross;
    let value = if value >= 0.0 {
        value
    } else if value >= -NEGATIVE_CLAMP_LIMIT {
        0.0
    } else {
        return Err(Error::Numerical(format!(
            "Fréchet distance evaluated to {value:e}"
        )));
    };
    Ok(DistanceResult {
        value,
        metric: Metric::Fad,
        sigma_used: None,
        n_frames_x: sx.n_frames,
        n_frames_y: sy.n_frames,
    })
}

fn nuclear_norm(m: DMatrix<f64>) -> Result<f64> {
    let svd = SVD::try_new(m, false, false, f64::EPSILON, SVD_MAX_ITER)
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
    Ok(svd.singular_values.iter().sum())
}

fn check_dims(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "{} has dim {}, {} has dim {}",
            x.source_id(),
            x.dim(),
            y.source_id(),
            y.dim()
        )));
    }
    Ok(())
}

/// Squared Fréchet distance between Gaussian fits of two embedding sets.
pub fn fad(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<DistanceResult> {
    fad_with(x, y, &FadConfig::default())
}

pub fn fad_with(x: &EmbeddingSet, y: &EmbeddingSet, cfg: &FadConfig) -> Result<DistanceResult> {
    check_dims(x, y)?;
    frechet_from_stats_with(&compute_stats(x)?, &compute_stats(y)?, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadInfinityConfig {
    /// Subsample sizes drawn from `y`; empty means [`default_subsample_sizes`].
    #[serde(default)]
    pub sizes: Vec<usize>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fad: FadConfig,
}

fn default_draws() -> usize {
    10
}

impl Default for FadInfinityConfig {
    fn default() -> Self {
        Self {
            sizes: Vec::new(),
            draws: default_draws(),
            seed: 0,
            fad: FadConfig::default(),
        }
    }
}

/// Five log-spaced sizes from `max(2, n/10)` up to `n`.
pub fn default_subsample_sizes(n: usize) -> Vec<usize> {
    let lo = (n / 10).max(2) as f64;
    let hi = n as f64;
    let mut sizes: Vec<usize> = (0..5)
        .map(|k| (lo * (hi / lo).powf(k as f64 / 4.0)).round() as usize)
        .map(|s| s.clamp(2, n.max(2)))
        .collect();
    sizes.dedup();
    sizes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadInfinityFit {
    pub result: DistanceResult,
    /// `(subsample size, mean FAD over draws)` in increasing size order.
    pub points: Vec<(usize, f64)>,
    pub slope: f64,
}

/// FAD extrapolated to an infinite test sample: the intercept of an ordinary
/// least-squares fit of mean FAD against `1/size`.
pub fn fad_infinity(
    x: &EmbeddingSet,
    y: &EmbeddingSet,
    cfg: &FadInfinityConfig,
) -> Result<DistanceResult> {
    fad_infinity_fit(x, y, cfg).map(|f| f.result)
}

pub fn fad_infinity_fit(
    x: &EmbeddingSet,
    y: &EmbeddingSet,
    cfg: &FadInfinityConfig,
) -> Result<FadInfinityFit> {
    check_dims(x, y)?;
    let n_y = y.n_frames();
    let mut sizes = if cfg.sizes.is_empty() {
        default_subsample_sizes(n_y)
    } else {
        cfg.sizes.clone()
    };
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::Config(format!(
            "FAD-infinity needs at least 3 distinct subsample sizes, got {sizes:?}"
        )));
    }
    if let Some(&bad) = sizes.iter().find(|&&s| s < 2 || s > n_y) {
        return Err(Error::Config(format!(
            "subsample size {bad} outside [2, {n_y}]"
        )));
    }
    if cfg.draws == 0 {
        return Err(Error::Config("FAD-infinity needs at least one draw".into()));
    }

    let stats_x = compute_stats(x)?;
    let draws = cfg.draws;
    let jobs = sizes.len() * draws;
    let per_job = map_indexed(jobs, |job| -> Result<f64> {
        let size = sizes[job / draws];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, job as u64));
        let mut idx = rand::seq::index::sample(&mut rng, n_y, size).into_vec();
        idx.sort_unstable();
        let sub = y.select_rows(&idx)?;
        Ok(frechet_from_stats_with(&stats_x, &compute_stats(&sub)?, &cfg.fad)?.value)
    });
    let per_job = per_job.into_iter().collect::<Result<Vec<_>>>()?;
    let points: Vec<(usize, f64)> = sizes
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let vals = &per_job[k * draws..(k + 1) * draws];
            (s, vals.iter().sum::<f64>() / draws as f64)
        })
        .collect();

    let xs: Vec<f64> = points.iter().map(|&(s, _)| 1.0 / s as f64).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, v)| v).collect();
    let (slope, intercept) = ols(&xs, &ys);
    Ok(FadInfinityFit {
        result: DistanceResult {
            value: intercept,
            metric: Metric::FadInfinity,
            sigma_used: None,
            n_frames_x: x.n_frames(),
            n_frames_y: n_y,
        },
        points,
        slope,
    })
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
