//! Log-mel reference embeddings and Mel-loss.
//!
//! Frames are Hann-windowed without padding, so a buffer of `len` samples
//! yields `(len - n_fft) / hop + 1` frames. The filterbank uses the HTK mel
//! scale `m = 2595·log10(1 + f/700)` with unit-peak triangles applied to
//! magnitude spectra.

#[cfg(feature = "wav")]
pub mod wav;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::numeric::map_indexed;

/// FFT sizes summed by [`multi_scale_mel_loss`].
pub const MULTI_SCALE_FFT_SIZES: [usize; 3] = [512, 1024, 2048];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self::for_sample_rate(48_000)
    }
}

impl MelConfig {
    /// Single-scale defaults (2048/512, 128 bands, full band) at `sample_rate`.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        Self {
            sample_rate,
            n_fft: 2048,
            hop: 512,
            n_mels: 128,
            f_min: 0.0,
            f_max: sample_rate as f64 / 2.0,
            log_floor: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        let fail = |msg: String| Err(Error::Config(msg));
        if self.sample_rate == 0 {
            return fail("sample rate must be positive".into());
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return fail(format!("n_fft must be a power of two >= 2, got {}", self.n_fft));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return fail(format!("hop must be in [1, n_fft], got {}", self.hop));
        }
        if self.n_mels == 0 {
            return fail("n_mels must be at least 1".into());
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyquist) {
            return fail(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got [{}, {}]",
                self.f_min, self.f_max
            ));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return fail(format!("log_floor must be > 0, got {}", self.log_floor));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.n_fft {
            0
        } else {
            (len - self.n_fft) / self.hop + 1
        }
    }
}

/// Mono audio at a known sample rate. Samples are nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Validation(format!("non-finite audio sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Triangular mel filterbank, `n_mels × (n_fft/2 + 1)`.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: DMatrix<f64>,
}

impl MelFilterbank {
    pub fn new(c: &MelConfig) -> Result<Self> {
        c.validate()?;
        let n_bins = c.n_bins();
        let bin_hz = c.sample_rate as f64 / c.n_fft as f64;
        let (m_lo, m_hi) = (hz_to_mel(c.f_min), hz_to_mel(c.f_max));
        let edges: Vec<f64> = (0..c.n_mels + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (c.n_mels + 1) as f64))
            .collect();
        let mut weights = DMatrix::zeros(c.n_mels, n_bins);
        for m in 0..c.n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = if f > lo && f <= mid {
                    (f - lo) / (mid - lo)
                } else if f > mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                weights[(m, k)] = w;
            }
            // Bands narrower than one FFT bin would otherwise be empty.
            if weights.row(m).iter().all(|&w| w == 0.0) {
                let k = ((mid / bin_hz).round() as usize).min(n_bins - 1);
                weights[(m, k)] = 1.0;
            }
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }
}

fn check_rate(a: &AudioBuffer, c: &MelConfig) -> Result<()> {
    if a.sample_rate != c.sample_rate {
        return Err(Error::Config(format!(
            "audio is {} Hz but config expects {} Hz; resample before analysis",
            a.sample_rate, c.sample_rate
        )));
    }
    Ok(())
}

/// Magnitude spectra of Hann-windowed frames, `frames × (n_fft/2 + 1)`.
pub fn stft_magnitude(a: &AudioBuffer, c: &MelConfig) -> Result<DMatrix<f64>> {
    c.validate()?;
    check_rate(a, c)?;
    if a.len() < c.n_fft {
        return Err(Error::TooShort {
            len: a.len(),
            needed: c.n_fft,
        });
    }
    let n_frames = c.frame_count(a.len());
    let n_bins = c.n_bins();
    let window = hann_window(c.n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(c.n_fft);
    let frames = map_indexed(n_frames, |t| {
        let start = t * c.hop;
        let mut buf: Vec<Complex<f64>> = a.samples[start..start + c.n_fft]
            .iter()
            .zip(&window)
            .map(|(&s, &w)| Complex::new(s as f64 * w, 0.0))
            .collect();
        fft.process(&mut buf);
        buf[..n_bins].iter().map(|z| z.norm()).collect::<Vec<_>>()
    });
    Ok(DMatrix::from_fn(n_frames, n_bins, |t, k| frames[t][k]))
}

/// `ln(mel + log_floor)`, `frames × n_mels`.
pub fn log_mel(a: &AudioBuffer, c: &MelConfig) -> Result<DMatrix<f64>> {
    let mag = stft_magnitude(a, c)?;
    let fb = MelFilterbank::new(c)?;
    let mel = mag * fb.weights().transpose();
    Ok(mel.map(|v| (v + c.log_floor).ln()))
}

/// One embedding vector of dim `n_mels` per STFT frame.
pub fn mel_embed(a: &AudioBuffer, c: &MelConfig) -> Result<EmbeddingSet> {
    let lm = log_mel(a, c)?;
    let (n, d) = lm.shape();
    let data: Vec<f64> = lm.transpose().as_slice().to_vec();
    EmbeddingSet::new("log-mel", data, n, d)
}

fn check_pair(a: &AudioBuffer, b: &AudioBuffer) -> Result<()> {
    if a.len() != b.len() || a.sample_rate != b.sample_rate {
        return Err(Error::Shape(format!(
            "Mel-loss needs equal buffers, got {} samples @ {} Hz vs {} samples @ {} Hz",
            a.len(),
            a.sample_rate,
            b.len(),
            b.sample_rate
        )));
    }
    Ok(())
}

/// Mean absolute difference between the log-mel matrices of `a` and `b`.
pub fn mel_loss(a: &AudioBuffer, b: &AudioBuffer, c: &MelConfig) -> Result<f64> {
    check_pair(a, b)?;
    let la = log_mel(a, c)?;
    let lb = log_mel(b, c)?;
    Ok((la - lb).abs().mean())
}

/// Sum of single-scale Mel-losses over `n_fft` sizes, each with `hop = n_fft/4`.
pub fn multi_scale_mel_loss(
    a: &AudioBuffer,
    b: &AudioBuffer,
    base: &MelConfig,
    n_ffts: &[usize],
) -> Result<f64> {
    if n_ffts.is_empty() {
        return Err(Error::Config("no FFT sizes for multi-scale Mel-loss".into()));
    }
    n_ffts
        .iter()
        .map(|&n_fft| {
            let c = MelConfig {
                n_fft,
                hop: (n_fft / 4).max(1),
                ..base.clone()
            };
            mel_loss(a, b, &c)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> MelConfig {
        MelConfig {
            sample_rate: 16_000,
            n_fft: 512,
            hop: 128,
            n_mels: 40,
            f_min: 0.0,
            f_max: 8000.0,
            log_floor: 1e-5,
        }
    }

    fn sine(freq: f64, len: usize, sr: u32, amp: f64) -> AudioBuffer {
        let s = (0..len)
            .map(|i| (amp * (2.0 * PI * freq * i as f64 / sr as f64).sin()) as f32)
            .collect();
        AudioBuffer::new(s, sr).unwrap()
    }

    fn noise(len: usize, sr: u32, amp: f64, seed: u64) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..len)
            .map(|_| (amp * rng.random_range(-1.0..1.0)) as f32)
            .collect();
        AudioBuffer::new(s, sr).unwrap()
    }

    #[test]
    fn bin_centered_sine_peaks_at_bin() {
        let c = small();
        let k = 37;
        let f = k as f64 * c.sample_rate as f64 / c.n_fft as f64;
        let mag = stft_magnitude(&sine(f, 4000, c.sample_rate, 0.5), &c).unwrap();
        assert_eq!(mag.nrows(), (4000 - 512) / 128 + 1);
        for row in mag.row_iter() {
            assert_eq!(row.transpose().iamax(), k);
        }
    }

    #[test]
    fn silence_is_zero() {
        let c = small();
        let mag = stft_magnitude(&AudioBuffer::silence(1000, 16_000), &c).unwrap();
        assert!(mag.iter().all(|&v| v == 0.0));
        let e = mel_embed(&AudioBuffer::silence(1000, 16_000), &c).unwrap();
        assert!(e.as_slice().iter().all(|&v| v == c.log_floor.ln()));
        assert_eq!(e.dim(), c.n_mels);
    }

    #[test]
    fn parseval() {
        let c = small();
        let a = noise(c.n_fft, c.sample_rate, 0.5, 3);
        let mag = stft_magnitude(&a, &c).unwrap();
        let w = hann_window(c.n_fft);
        let energy: f64 = a.samples.iter().zip(&w).map(|(&s, &w)| (s as f64 * w).powi(2)).sum();
        let half = c.n_fft / 2;
        let spec: f64 = (0..=half)
            .map(|k| {
                let p = mag[(0, k)].powi(2);
                if k == 0 || k == half {
                    p
                } else {
                    2.0 * p
                }
            })
            .sum::<f64>()
            / c.n_fft as f64;
        assert!((spec - energy).abs() / energy < 1e-6);
    }

    #[test]
    fn too_short_and_wrong_rate() {
        let c = small();
        assert!(matches!(
            stft_magnitude(&AudioBuffer::silence(100, 16_000), &c),
            Err(Error::TooShort { len: 100, needed: 512 })
        ));
        assert!(matches!(
            stft_magnitude(&AudioBuffer::silence(1000, 44_100), &c),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn filterbank_rows_cover_band() {
        for c in [small(), MelConfig::default(), MelConfig { n_fft: 512, hop: 128, ..MelConfig::default() }] {
            let fb = MelFilterbank::new(&c).unwrap();
            let w = fb.weights();
            assert_eq!(w.shape(), (c.n_mels, c.n_bins()));
            for row in w.row_iter() {
                assert!(row.sum() > 0.0);
            }
            let bin_hz = c.sample_rate as f64 / c.n_fft as f64;
            let first = w.row(0).iter().position(|&v| v > 0.0).unwrap() as f64 * bin_hz;
            let last = w.row(c.n_mels - 1).iter().rposition(|&v| v > 0.0).unwrap() as f64 * bin_hz;
            assert!(first >= c.f_min && first <= c.f_min + 2.0 * bin_hz.max(50.0));
            assert!(last <= c.f_max && last >= c.f_max - 0.2 * c.f_max);
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            MelConfig { n_fft: 1000, ..small() },
            MelConfig { hop: 0, ..small() },
            MelConfig { hop: 1024, ..small() },
            MelConfig { n_mels: 0, ..small() },
            MelConfig { f_min: 9000.0, ..small() },
            MelConfig { f_max: 9000.0, ..small() },
            MelConfig { log_floor: 0.0, ..small() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn mel_loss_examples() {
        let c = small();
        let a = sine(1000.0, 4000, 16_000, 0.5);
        assert_eq!(mel_loss(&a, &a, &c).unwrap(), 0.0);

        let silent = AudioBuffer::silence(4000, 16_000);
        let floor = c.log_floor.ln();
        let lm = log_mel(&a, &c).unwrap();
        let expected = lm.iter().map(|v| (v - floor).abs()).sum::<f64>() / lm.len() as f64;
        assert!((mel_loss(&a, &silent, &c).unwrap() - expected).abs() < 1e-12);

        let b = noise(4000, 16_000, 0.2, 9);
        assert_eq!(mel_loss(&a, &b, &c).unwrap(), mel_loss(&b, &a, &c).unwrap());

        let short = AudioBuffer::silence(3000, 16_000);
        assert!(matches!(mel_loss(&a, &short, &c), Err(Error::Shape(_))));
    }

    #[test]
    fn multi_scale_is_sum_of_scales() {
        let base = small();
        let a = sine(440.0, 8000, 16_000, 0.5);
        let b = noise(8000, 16_000, 0.1, 1);
        let total = multi_scale_mel_loss(&a, &b, &base, &MULTI_SCALE_FFT_SIZES).unwrap();
        let parts: f64 = MULTI_SCALE_FFT_SIZES
            .iter()
            .map(|&n| mel_loss(&a, &b, &MelConfig { n_fft: n, hop: n / 4, ..base.clone() }).unwrap())
            .sum();
        assert!((total - parts).abs() < 1e-12);
    }

    #[test]
    fn doubling_amplitude_keeps_frames() {
        let c = small();
        let a = sine(1000.0, 6000, 16_000, 0.3);
        let b = sine(1000.0, 6000, 16_000, 0.6);
        let ea = mel_embed(&a, &c).unwrap();
        let eb = mel_embed(&b, &c).unwrap();
        assert_eq!(ea.n_frames(), eb.n_frames());
        // Bands carrying the tone shift by ln 2.
        let fb = MelFilterbank::new(&c).unwrap();
        let band = fb.weights().column(32).iamax();
        let shift = eb.row(0)[band] - ea.row(0)[band];
        assert!((shift - 2f64.ln()).abs() < 1e-3, "{shift}");
    }
}
