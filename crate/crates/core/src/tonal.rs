//! Synthetic tonal excerpts and balanced training batches.
//!
//! An excerpt is a sum of struck, exponentially decaying harmonic tones.
//! Event counts are Poisson with mean `event_rate · duration`, onsets are
//! uniform over the excerpt, and fundamentals and decay constants are drawn
//! log-uniformly. Frequency evolves through a sinusoidal vibrato.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mel::AudioBuffer;
use crate::numeric::{derive_seed, map_indexed};

/// Peak level applied when a rendered excerpt would exceed full scale.
pub const NORMALIZE_PEAK_DBFS: f64 = -1.0;

/// Envelope level below which an event stops being rendered.
const ENVELOPE_CUTOFF: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TonalSynthConfig {
    pub sample_rate: u32,
    /// Seconds.
    pub duration: f64,
    /// Mean events per second.
    pub event_rate: f64,
    /// Fundamental range in Hz.
    pub f_range: [f64; 2],
    /// Per-event peak level range in dBFS.
    pub level_range_db: [f64; 2],
    /// Exponential decay constant range in seconds.
    pub decay_range: [f64; 2],
    pub partials_max: usize,
    /// Attenuation of each successive partial in dB.
    pub partial_rolloff_db: f64,
    pub vibrato_depth_cents: [f64; 2],
    pub vibrato_rate_hz: [f64; 2],
    pub seed: u64,
}

impl Default for TonalSynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 48_000,
            duration: 1.0,
            event_rate: 6.0,
            f_range: [200.0, 8000.0],
            level_range_db: [-24.0, -6.0],
            decay_range: [0.05, 1.0],
            partials_max: 8,
            partial_rolloff_db: 6.0,
            vibrato_depth_cents: [0.0, 50.0],
            vibrato_rate_hz: [4.0, 7.0],
            seed: 0,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], min_allowed: f64, strict: bool) -> Result<()> {
    let lower_ok = if strict { r[0] > min_allowed } else { r[0] >= min_allowed };
    if !(r[0].is_finite() && r[1].is_finite() && lower_ok && r[0] <= r[1]) {
        return Err(Error::Config(format!(
            "{name} must satisfy {min_allowed} {} min <= max, got [{}, {}]",
            if strict { "<" } else { "<=" },
            r[0],
            r[1]
        )));
    }
    Ok(())
}

impl TonalSynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!("duration must be > 0, got {}", self.duration)));
        }
        if !(self.event_rate > 0.0 && self.event_rate.is_finite()) {
            return Err(Error::Config(format!(
                "event rate must be > 0, got {}",
                self.event_rate
            )));
        }
        check_range("f_range", self.f_range, 0.0, true)?;
        check_range("level_range_db", self.level_range_db, f64::NEG_INFINITY, false)?;
        check_range("decay_range", self.decay_range, 0.0, true)?;
        check_range("vibrato_depth_cents", self.vibrato_depth_cents, 0.0, false)?;
        check_range("vibrato_rate_hz", self.vibrato_rate_hz, 0.0, false)?;
        if self.partials_max == 0 {
            return Err(Error::Config("partials_max must be at least 1".into()));
        }
        if !(self.partial_rolloff_db >= 0.0 && self.partial_rolloff_db.is_finite()) {
            return Err(Error::Config("partial_rolloff_db must be >= 0".into()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.sample_rate as f64).round() as usize
    }

    pub fn expected_events(&self) -> f64 {
        self.event_rate * self.duration
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vibrato {
    pub depth_cents: f64,
    pub rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TonalEventSpec {
    /// Seconds from excerpt start.
    pub onset: f64,
    pub f0: f64,
    pub peak_db: f64,
    pub decay_tau: f64,
    /// Linear gain of harmonic `p + 1`.
    pub partial_amps: Vec<f64>,
    pub vibrato: Vibrato,
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

fn log_uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        (rng.random_range(r[0].ln()..r[1].ln())).exp()
    }
}

/// Draws the event list for one excerpt. Zero events is a valid outcome.
pub fn sample_events(c: &TonalSynthConfig, rng_seed: u64) -> Result<Vec<TonalEventSpec>> {
    c.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let poisson = Poisson::new(c.expected_events())
        .map_err(|e| Error::Config(format!("event density: {e}")))?;
    let count = poisson.sample(&mut rng) as usize;
    let gain = 10f64.powf(-c.partial_rolloff_db / 20.0);
    Ok((0..count)
        .map(|_| {
            let onset = rng.random::<f64>() * c.duration;
            let f0 = log_uniform(&mut rng, c.f_range);
            let peak_db = uniform(&mut rng, c.level_range_db);
            let decay_tau = log_uniform(&mut rng, c.decay_range);
            let n_partials = rng.random_range(1..=c.partials_max);
            let partial_amps = (0..n_partials).map(|p| gain.powi(p as i32)).collect();
            let vibrato = Vibrato {
                depth_cents: uniform(&mut rng, c.vibrato_depth_cents),
                rate_hz: uniform(&mut rng, c.vibrato_rate_hz),
            };
            TonalEventSpec {
                onset,
                f0,
                peak_db,
                decay_tau,
                partial_amps,
                vibrato,
            }
        })
        .collect())
}

/// Renders events into a mono buffer of `duration` seconds.
///
/// Each partial starts at a cosine peak (a struck onset) and decays as
/// `exp(-(t - onset)/decay_tau)`. Partials whose highest instantaneous
/// frequency reaches Nyquist are dropped. The output is scaled to
/// [`NORMALIZE_PEAK_DBFS`] only when its peak would exceed 1.0.
pub fn render_excerpt(events: &[TonalEventSpec], c: &TonalSynthConfig) -> Result<AudioBuffer> {
    c.validate()?;
    let sr = c.sample_rate as f64;
    let nyquist = sr / 2.0;
    let n = c.n_samples();
    let mut out = vec![0.0f64; n];
    for ev in events {
        let amp = 10f64.powf(ev.peak_db / 20.0);
        let start = ((ev.onset * sr).ceil().max(0.0) as usize).min(n);
        let vib_max = 2f64.powf(ev.vibrato.depth_cents / 1200.0);
        for (p, &g) in ev.partial_amps.iter().enumerate() {
            let harmonic = ev.f0 * (p + 1) as f64;
            if harmonic * vib_max >= nyquist {
                continue;
            }
            let mut phase = 0.0f64;
            for (i, y) in out.iter_mut().enumerate().skip(start) {
                let t = i as f64 / sr - ev.onset;
                let env = (-t / ev.decay_tau).exp();
                if env < ENVELOPE_CUTOFF {
                    break;
                }
                *y += amp * g * env * phase.cos();
                let cents =
                    ev.vibrato.depth_cents * (2.0 * PI * ev.vibrato.rate_hz * t).sin();
                let f = harmonic * 2f64.powf(cents / 1200.0);
                phase = (phase + 2.0 * PI * f / sr) % (2.0 * PI);
            }
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        let scale = 10f64.powf(NORMALIZE_PEAK_DBFS / 20.0) / peak;
        out.iter_mut().for_each(|v| *v *= scale);
    }
    AudioBuffer::new(out.into_iter().map(|v| v as f32).collect(), c.sample_rate)
}

/// Samples and renders the excerpt for `seed`.
pub fn synthesize(c: &TonalSynthConfig, seed: u64) -> Result<(Vec<TonalEventSpec>, AudioBuffer)> {
    let events = sample_events(c, seed)?;
    let audio = render_excerpt(&events, c)?;
    Ok((events, audio))
}

/// Renders `count` excerpts; excerpt `i` uses seed `derive_seed(seed, i)`.
pub fn synthesize_many(
    c: &TonalSynthConfig,
    seed: u64,
    count: usize,
) -> Result<Vec<(u64, Vec<TonalEventSpec>, AudioBuffer)>> {
    c.validate()?;
    map_indexed(count, |i| {
        let s = derive_seed(seed, i as u64);
        synthesize(c, s).map(|(ev, audio)| (s, ev, audio))
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BatchEntry {
    Real { source: PathBuf },
    Tonal { seed: u64 },
}

impl BatchEntry {
    pub fn is_tonal(&self) -> bool {
        matches!(self, BatchEntry::Tonal { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub batch_size: usize,
    pub tonal_fraction: f64,
    pub entries: Vec<BatchEntry>,
    /// Set when the real pool was smaller than the number of real slots.
    pub with_replacement: bool,
    pub seed: u64,
}

impl BatchManifest {
    pub fn tonal_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_tonal()).count()
    }
}

/// Number of tonal slots: `batch_size · fraction`, rounded half away from zero.
pub fn tonal_slots(batch_size: usize, tonal_fraction: f64) -> usize {
    (batch_size as f64 * tonal_fraction).round() as usize
}

/// Builds one mini-batch with a fixed share of synthetic tonal excerpts.
pub fn compose_batch(
    real_pool: &[PathBuf],
    c: &TonalSynthConfig,
    batch_size: usize,
    tonal_fraction: f64,
    rng_seed: u64,
) -> Result<BatchManifest> {
    c.validate()?;
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&tonal_fraction) {
        return Err(Error::Config(format!(
            "tonal fraction must be in [0, 1], got {tonal_fraction}"
        )));
    }
    let n_tonal = tonal_slots(batch_size, tonal_fraction);
    let n_real = batch_size - n_tonal;
    if n_real > 0 && real_pool.is_empty() {
        return Err(Error::Config(
            "real-audio pool is empty but the batch needs real entries".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut entries: Vec<BatchEntry> = (0..n_tonal)
        .map(|_| BatchEntry::Tonal {
            seed: rng.next_u64(),
        })
        .collect();
    let with_replacement = n_real > real_pool.len();
    if with_replacement {
        for _ in 0..n_real {
            let i = rng.random_range(0..real_pool.len());
            entries.push(BatchEntry::Real {
                source: real_pool[i].clone(),
            });
        }
    } else {
        for i in rand::seq::index::sample(&mut rng, real_pool.len(), n_real) {
            entries.push(BatchEntry::Real {
                source: real_pool[i].clone(),
            });
        }
    }
    entries.shuffle(&mut rng);
    Ok(BatchManifest {
        batch_size,
        tonal_fraction,
        entries,
        with_replacement,
        seed: rng_seed,
    })
}

/// Writes manifests as JSON lines, one batch per line.
pub fn write_batches_jsonl<W: Write>(mut w: W, batches: &[BatchManifest]) -> Result<()> {
    for b in batches {
        serde_json::to_writer(&mut w, b)?;
        w.write_all(b"\n")
            .map_err(|e| Error::Format(format!("writing batch manifest: {e}")))?;
    }
    Ok(())
}

pub fn read_batches_jsonl<R: BufRead>(r: R) -> Result<Vec<BatchManifest>> {
    r.lines()
        .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
        .map(|l| {
            let l = l.map_err(|e| Error::Format(format!("reading batch manifest: {e}")))?;
            Ok(serde_json::from_str(&l)?)
        })
        .collect()
}
