//! Plain Rust behind the browser bindings, so it can be tested natively.

use audiodist::mel::{log_mel, MelConfig};
use audiodist::metrics::{fad, mmd_scaled, sigma_sweep, DEFAULT_ALPHA, FIXED_SIGMA_SWEEP};
use audiodist::tonal::{synthesize, TonalSynthConfig};
use audiodist::{EmbeddingSet, RbfKernelConfig, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Display resolution of the spectrogram; coarser than the embedding default.
pub const DEMO_N_MELS: usize = 64;

/// Largest cloud the page may request. The MMD sums are quadratic.
pub const MAX_CLOUD_POINTS: usize = 2000;

#[derive(Debug, Clone, Serialize)]
pub struct TonalView {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
    /// Frame-major, `n_frames × n_mels`.
    pub log_mel: Vec<f64>,
    pub n_frames: usize,
    pub n_mels: usize,
    pub n_events: usize,
    pub fundamentals: Vec<f64>,
}

pub fn render_tonal(seed: u64, duration: f64, event_rate: f64) -> Result<TonalView> {
    let cfg = TonalSynthConfig {
        duration,
        event_rate,
        ..TonalSynthConfig::default()
    };
    cfg.validate()?;
    let (events, audio) = synthesize(&cfg, seed)?;
    let mel_cfg = MelConfig {
        n_mels: DEMO_N_MELS,
        ..MelConfig::for_sample_rate(cfg.sample_rate)
    };
    let m = log_mel(&audio, &mel_cfg)?;
    // nalgebra is column-major; the transpose's storage is frame-major.
    let t = m.transpose();
    Ok(TonalView {
        sample_rate: cfg.sample_rate,
        n_frames: m.nrows(),
        n_mels: m.ncols(),
        log_mel: t.as_slice().to_vec(),
        n_events: events.len(),
        fundamentals: events.iter().map(|e| e.f0).collect(),
        samples: audio.samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct CloudParams {
    pub n: usize,
    pub dim: usize,
    /// Offset added to every coordinate of the test cloud.
    pub shift: f64,
    /// Standard deviation of the test cloud; the reference has 1.
    pub scale: f64,
    pub seed: u64,
}

impl CloudParams {
    /// FAD between the two generating Gaussians:
    /// `dim · shift² + dim · (1 − scale)²`.
    pub fn population_fad(&self) -> f64 {
        let d = self.dim as f64;
        d * self.shift.powi(2) + d * (1.0 - self.scale).powi(2)
    }
}

pub fn gaussian_clouds(p: &CloudParams) -> Result<(EmbeddingSet, EmbeddingSet)> {
    if p.n < 2 || p.n > MAX_CLOUD_POINTS || p.dim == 0 || p.scale.is_nan() || p.scale <= 0.0 || !p.shift.is_finite() {
        return Err(audiodist::Error::Config(format!(
            "need 2 <= n <= {MAX_CLOUD_POINTS}, dim >= 1, scale > 0 and finite shift"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut draw = |mu: f64, sd: f64| -> Vec<f64> {
        (0..p.n * p.dim)
            .map(|_| mu + sd * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect::<Vec<f64>>()
    };
    let x = draw(0.0, 1.0);
    let y = draw(p.shift, p.scale);
    Ok((
        EmbeddingSet::new("reference", x, p.n, p.dim)?,
        EmbeddingSet::new("test", y, p.n, p.dim)?,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct CloudDistances {
    pub fad: f64,
    pub population_fad: f64,
    pub mmd: f64,
    pub sigma: f64,
    /// First two coordinates of each cloud, interleaved x, y.
    pub preview_ref: Vec<f64>,
    pub preview_test: Vec<f64>,
}

fn preview(e: &EmbeddingSet) -> Vec<f64> {
    e.rows()
        .flat_map(|r| [r[0], r.get(1).copied().unwrap_or(0.0)])
        .collect()
}

pub fn cloud_distances(p: &CloudParams) -> Result<CloudDistances> {
    let (x, y) = gaussian_clouds(p)?;
    let f = fad(&x, &y)?;
    let m = mmd_scaled(&x, &y, &RbfKernelConfig::default())?;
    Ok(CloudDistances {
        fad: f.value,
        population_fad: p.population_fad(),
        mmd: m.value,
        sigma: m.sigma_used.unwrap_or(f64::NAN),
        preview_ref: preview(&x),
        preview_test: preview(&y),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub sigma: f64,
    pub median: bool,
    pub mmd: f64,
}

/// Median-heuristic bandwidth first, then the fixed sweep.
pub fn cloud_sweep(p: &CloudParams) -> Result<Vec<SweepPoint>> {
    let (x, y) = gaussian_clouds(p)?;
    let results = sigma_sweep(&x, &y, &FIXED_SIGMA_SWEEP, DEFAULT_ALPHA, None)?;
    Ok(results
        .into_iter()
        .enumerate()
        .map(|(i, r)| SweepPoint {
            sigma: r.sigma_used.unwrap_or(f64::NAN),
            median: i == 0,
            mmd: r.value,
        })
        .collect())
}
