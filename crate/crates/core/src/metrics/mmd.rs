use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DistanceResult, Metric};
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::numeric::{exact_sum, map_indexed};

/// Default MMD scale factor `α`.
pub const DEFAULT_ALPHA: f64 = 1000.0;

/// Fixed bandwidths of the standard σ sweep.
pub const FIXED_SIGMA_SWEEP: [f64; 5] = [1.0, 10.0, 100.0, 1000.0, 10000.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "bandwidth_mode", content = "sigma", rename_all = "snake_case")]
pub enum Bandwidth {
    /// σ = median pairwise Euclidean distance over the pooled frames.
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfKernelConfig {
    #[serde(flatten)]
    pub bandwidth: Bandwidth,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Optional cap on frames per set (evenly strided) before the O(n²) sums.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_cap: Option<usize>,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl Default for RbfKernelConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::MedianHeuristic,
            alpha: DEFAULT_ALPHA,
            frame_cap: None,
        }
    }
}

impl RbfKernelConfig {
    pub fn fixed(sigma: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed(sigma),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(s) = self.bandwidth {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("fixed sigma must be > 0, got {s}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.frame_cap == Some(0) {
            return Err(Error::Config("frame cap must be positive".into()));
        }
        Ok(())
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// `exp(−‖a − b‖² / (2σ²))`.
pub fn rbf_kernel(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * sigma * sigma)).exp()
}

fn check_dims(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "{} has dim {}, {} has dim {}",
            a.source_id(),
            a.dim(),
            b.source_id(),
            b.dim()
        )));
    }
    Ok(())
}

/// Dense matrix of squared Euclidean distances, `D[i][j] = ‖a_i − b_j‖²`.
pub fn pairwise_sq_dists(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<DMatrix<f64>> {
    check_dims(a, b)?;
    let rows = map_indexed(a.n_frames(), |i| {
        let ai = a.row(i);
        b.rows().map(|bj| sq_dist(ai, bj).max(0.0)).collect::<Vec<_>>()
    });
    Ok(DMatrix::from_fn(a.n_frames(), b.n_frames(), |i, j| rows[i][j]))
}

/// Squared distances for every distinct pair of the pooled frames of `x` and `y`.
#[derive(Debug, Clone)]
pub struct PairDistances {
    /// `i < j` within `x`, row-major over `i`.
    pub xx: Vec<f64>,
    /// `i < j` within `y`.
    pub yy: Vec<f64>,
    /// All `(i, j)` across `x × y`.
    pub xy: Vec<f64>,
    pub n: usize,
    pub m: usize,
}

fn upper_triangle(s: &EmbeddingSet) -> Vec<f64> {
    map_indexed(s.n_frames(), |i| {
        let si = s.row(i);
        (i + 1..s.n_frames())
            .map(|j| sq_dist(si, s.row(j)))
            .collect::<Vec<_>>()
    })
    .concat()
}

impl PairDistances {
    pub fn new(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<Self> {
        check_dims(x, y)?;
        let xy = map_indexed(x.n_frames(), |i| {
            let xi = x.row(i);
            y.rows().map(|yj| sq_dist(xi, yj)).collect::<Vec<_>>()
        })
        .concat();
        Ok(Self {
            xx: upper_triangle(x),
            yy: upper_triangle(y),
            xy,
            n: x.n_frames(),
            m: y.n_frames(),
        })
    }

    /// Median Euclidean distance over all pooled pairs, falling back to the
    /// mean when the median is zero.
    pub fn median_distance(&self) -> Result<f64> {
        let mut d: Vec<f64> = self
            .xx
            .iter()
            .chain(&self.yy)
            .chain(&self.xy)
            .map(|v| v.sqrt())
            .collect();
        if d.is_empty() {
            return Err(Error::InsufficientSamples {
                set: "pooled frames".into(),
                needed: 2,
                got: self.n + self.m,
            });
        }
        let len = d.len();
        let mid = len / 2;
        let (lower, upper_mid, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
        let upper_mid = *upper_mid;
        let median = if len % 2 == 1 {
            upper_mid
        } else {
            let lower_mid = lower.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            0.5 * (lower_mid + upper_mid)
        };
        if median > 0.0 {
            return Ok(median);
        }
        let mean = exact_sum(d.iter().copied()) / len as f64;
        if mean > 0.0 {
            Ok(mean)
        } else {
            Err(Error::DegenerateBandwidth)
        }
    }

    /// Unscaled unbiased MMD² estimate for bandwidth `sigma`.
    pub fn mmd2_unbiased(&self, sigma: f64) -> Result<f64> {
        if self.n < 2 || self.m < 2 {
            let (set, got) = if self.n < 2 { ("x", self.n) } else { ("y", self.m) };
            return Err(Error::InsufficientSamples {
                set: set.into(),
                needed: 2,
                got,
            });
        }
        let gamma = 1.0 / (2.0 * sigma * sigma);
        let ksum = |v: &[f64]| -> f64 { v.iter().map(|d| (-d * gamma).exp()).sum() };
        let (n, m) = (self.n as f64, self.m as f64);
        // Pair lists hold i < j only; each off-diagonal pair counts twice.
        let kxx = 2.0 * ksum(&self.xx);
        let kyy = 2.0 * ksum(&self.yy);
        let kxy = ksum(&self.xy);
        Ok(kxx / (n * (n - 1.0)) + kyy / (m * (m - 1.0)) - 2.0 * kxy / (n * m))
    }
}

/// Median of Euclidean distances over all distinct pairs of the pooled set `x ∪ y`.
pub fn median_heuristic_bandwidth(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<f64> {
    PairDistances::new(x, y)?.median_distance()
}

fn prepare(
    x: &EmbeddingSet,
    y: &EmbeddingSet,
    k: &RbfKernelConfig,
) -> Result<(PairDistances, usize, usize)> {
    k.validate()?;
    check_dims(x, y)?;
    let (x, y) = match k.frame_cap {
        Some(cap) => (x.cap_frames(cap)?, y.cap_frames(cap)?),
        None => (x.clone(), y.clone()),
    };
    for s in [&x, &y] {
        if s.n_frames() < 2 {
            return Err(Error::InsufficientSamples {
                set: s.source_id().to_string(),
                needed: 2,
                got: s.n_frames(),
            });
        }
    }
    let (n, m) = (x.n_frames(), y.n_frames());
    Ok((PairDistances::new(&x, &y)?, n, m))
}

fn result(value: f64, sigma: f64, n: usize, m: usize) -> DistanceResult {
    DistanceResult {
        value,
        metric: Metric::MmdScaled,
        sigma_used: Some(sigma),
        n_frames_x: n,
        n_frames_y: m,
    }
}

/// `α · MMD²_u(x, y)` with an RBF kernel. The estimator is unbiased, so the
/// value can be negative; it is never clamped.
pub fn mmd_scaled(x: &EmbeddingSet, y: &EmbeddingSet, k: &RbfKernelConfig) -> Result<DistanceResult> {
    let (pd, n, m) = prepare(x, y, k)?;
    let sigma = match k.bandwidth {
        Bandwidth::Fixed(s) => s,
        Bandwidth::MedianHeuristic => pd.median_distance()?,
    };
    Ok(result(k.alpha * pd.mmd2_unbiased(sigma)?, sigma, n, m))
}

/// Evaluates the median-heuristic bandwidth followed by each fixed `sigma`,
/// reusing one set of pairwise distances.
pub fn sigma_sweep(
    x: &EmbeddingSet,
    y: &EmbeddingSet,
    sigmas: &[f64],
    alpha: f64,
    frame_cap: Option<usize>,
) -> Result<Vec<DistanceResult>> {
    let base = RbfKernelConfig {
        bandwidth: Bandwidth::MedianHeuristic,
        alpha,
        frame_cap,
    };
    for &s in sigmas {
        RbfKernelConfig {
            bandwidth: Bandwidth::Fixed(s),
            ..base.clone()
        }
        .validate()?;
    }
    let (pd, n, m) = prepare(x, y, &base)?;
    let median = pd.median_distance()?;
    std::iter::once(median)
        .chain(sigmas.iter().copied())
        .map(|s| Ok(result(alpha * pd.mmd2_unbiased(s)?, s, n, m)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, pts: &[f64]) -> EmbeddingSet {
        EmbeddingSet::new(id, pts.to_vec(), pts.len(), 1).unwrap()
    }

    #[test]
    fn two_point_negative_example() {
        let x = line("x", &[0.0, 2.0]);
        let r = mmd_scaled(&x, &x, &RbfKernelConfig::fixed(1.0)).unwrap();
        let expected = 1000.0 * ((-2.0f64).exp() - 1.0);
        assert!((r.value - expected).abs() < 1e-9);
        assert!((r.value + 864.66).abs() < 0.01);
        assert_eq!(r.sigma_used, Some(1.0));
    }

    #[test]
    fn median_of_four_points() {
        let x = line("x", &[0.0, 2.0]);
        let y = line("y", &[0.0, 2.0]);
        assert_eq!(median_heuristic_bandwidth(&x, &y).unwrap(), 2.0);
    }

    #[test]
    fn median_two_points() {
        let x = line("x", &[1.0]);
        let y = line("y", &[6.0]);
        assert_eq!(median_heuristic_bandwidth(&x, &y).unwrap(), 5.0);
    }

    #[test]
    fn median_falls_back_to_mean() {
        // Pooled {0,0,0,0,1}: six zero distances and four ones, median 0, mean 0.4.
        let x = line("x", &[0.0, 0.0, 0.0]);
        let y = line("y", &[0.0, 1.0]);
        assert!((median_heuristic_bandwidth(&x, &y).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn degenerate_bandwidth() {
        let x = line("x", &[3.0, 3.0]);
        assert!(matches!(
            median_heuristic_bandwidth(&x, &x),
            Err(Error::DegenerateBandwidth)
        ));
        assert!(matches!(
            mmd_scaled(&x, &x, &RbfKernelConfig::default()),
            Err(Error::DegenerateBandwidth)
        ));
    }

    #[test]
    fn zero_sigma_is_config_error() {
        let x = line("x", &[0.0, 2.0]);
        assert!(matches!(
            mmd_scaled(&x, &x, &RbfKernelConfig::fixed(0.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn needs_two_frames_each() {
        let x = line("x", &[0.0, 2.0]);
        let y = line("y", &[1.0]);
        assert!(matches!(
            mmd_scaled(&x, &y, &RbfKernelConfig::fixed(1.0)),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn pairwise_examples() {
        let a = line("a", &[0.0, 3.0]);
        let d = pairwise_sq_dists(&a, &a).unwrap();
        assert_eq!(d, DMatrix::from_row_slice(2, 2, &[0.0, 9.0, 9.0, 0.0]));
        let e = EmbeddingSet::from_rows("e", &[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let d = pairwise_sq_dists(&e, &e).unwrap();
        assert_eq!(d[(0, 1)], 2.0);
        assert_eq!(d[(1, 0)], 2.0);
        let f = EmbeddingSet::from_rows("f", &[[1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(pairwise_sq_dists(&e, &f), Err(Error::Shape(_))));
    }

    #[test]
    fn kernel_bounds() {
        assert_eq!(rbf_kernel(&[1.5, -2.0], &[1.5, -2.0], 0.1), 1.0);
        let k = rbf_kernel(&[0.0], &[1.0], 1.0);
        assert!(k > 0.0 && k < 1.0);
    }

    #[test]
    fn sweep_reports_each_sigma() {
        let x = line("x", &[0.0, 0.5, 1.0, 1.5]);
        let y = line("y", &[0.2, 0.9, 1.7]);
        let r = sigma_sweep(&x, &y, &FIXED_SIGMA_SWEEP, DEFAULT_ALPHA, None).unwrap();
        assert_eq!(r.len(), 6);
        let used: Vec<f64> = r.iter().skip(1).map(|d| d.sigma_used.unwrap()).collect();
        assert_eq!(used, FIXED_SIGMA_SWEEP.to_vec());
        assert!(r.iter().all(|d| d.value.is_finite()));
        let median = median_heuristic_bandwidth(&x, &y).unwrap();
        assert_eq!(r[0].sigma_used, Some(median));
    }

    #[test]
    fn config_serde_shape() {
        let fixed = serde_json::to_value(RbfKernelConfig::fixed(10.0)).unwrap();
        assert_eq!(fixed["bandwidth_mode"], "fixed");
        assert_eq!(fixed["sigma"], 10.0);
        assert_eq!(fixed["alpha"], 1000.0);
        let med: RbfKernelConfig =
            serde_json::from_str(r#"{"bandwidth_mode":"median_heuristic"}"#).unwrap();
        assert_eq!(med, RbfKernelConfig::default());
    }
}
