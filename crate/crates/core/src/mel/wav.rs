//! WAV reading (PCM 16/24-bit, IEEE float32) and writing.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use super::AudioBuffer;
use crate::error::{Error, Result};

/// How multi-channel input is reduced to mono.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSelect {
    #[default]
    Downmix,
    Channel(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavFormat {
    #[default]
    Float32,
    Pcm16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WavInfo {
    pub channels: u16,
    pub bits_per_sample: u16,
    pub downmixed: bool,
}

pub fn read_wav(path: &Path, select: ChannelSelect) -> Result<(AudioBuffer, WavInfo)> {
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / (1u32 << (bits - 1)) as f32;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()?
        }
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "{}: unsupported WAV encoding {fmt:?} {bits}-bit",
                path.display()
            )))
        }
    };
    let ch = spec.channels as usize;
    let samples: Vec<f32> = match select {
        _ if ch == 1 => interleaved,
        ChannelSelect::Downmix => interleaved
            .chunks_exact(ch)
            .map(|f| f.iter().sum::<f32>() / ch as f32)
            .collect(),
        ChannelSelect::Channel(c) if (c as usize) < ch => interleaved
            .chunks_exact(ch)
            .map(|f| f[c as usize])
            .collect(),
        ChannelSelect::Channel(c) => {
            return Err(Error::Config(format!(
                "{}: channel {c} requested but file has {ch}",
                path.display()
            )))
        }
    };
    let info = WavInfo {
        channels: spec.channels,
        bits_per_sample: spec.bits_per_sample,
        downmixed: ch > 1 && select == ChannelSelect::Downmix,
    };
    Ok((AudioBuffer::new(samples, spec.sample_rate)?, info))
}

pub fn write_wav(path: &Path, audio: &AudioBuffer, format: WavFormat) -> Result<()> {
    let (bits, sample_format) = match format {
        WavFormat::Float32 => (32, SampleFormat::Float),
        WavFormat::Pcm16 => (16, SampleFormat::Int),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: bits,
        sample_format,
    };
    let mut w = WavWriter::create(path, spec)?;
    match format {
        WavFormat::Float32 => {
            for &s in &audio.samples {
                w.write_sample(s)?;
            }
        }
        WavFormat::Pcm16 => {
            for &s in &audio.samples {
                w.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
            }
        }
    }
    w.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let a = AudioBuffer::new(vec![0.0, 0.25, -0.7, 1.0, 1e-7], 48_000).unwrap();
        write_wav(&p, &a, WavFormat::Float32).unwrap();
        let (b, info) = read_wav(&p, ChannelSelect::Downmix).unwrap();
        assert_eq!(a, b);
        assert_eq!(info.channels, 1);
        assert!(!info.downmixed);
    }

    #[test]
    fn pcm16_round_trip_within_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let a = AudioBuffer::new(vec![0.0, 0.5, -0.5, 0.999], 16_000).unwrap();
        write_wav(&p, &a, WavFormat::Pcm16).unwrap();
        let (b, info) = read_wav(&p, ChannelSelect::Downmix).unwrap();
        assert_eq!(info.bits_per_sample, 16);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x - y).abs() < 1.0 / 32768.0 + 1e-6);
        }
    }

    fn stereo(path: &Path, bits: u16) {
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: bits,
            sample_format: SampleFormat::Int,
        };
        let full = (1i32 << (bits - 1)) - 1;
        let mut w = WavWriter::create(path, spec).unwrap();
        for _ in 0..4 {
            w.write_sample(full / 2).unwrap();
            w.write_sample(0i32).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn stereo_downmix_and_channel_select() {
        let dir = tempfile::tempdir().unwrap();
        for bits in [16, 24] {
            let p = dir.path().join(format!("s{bits}.wav"));
            stereo(&p, bits);
            let (mix, info) = read_wav(&p, ChannelSelect::Downmix).unwrap();
            assert!(info.downmixed);
            assert!((mix.samples[0] - 0.25).abs() < 1e-4);
            let (left, info) = read_wav(&p, ChannelSelect::Channel(0)).unwrap();
            assert!(!info.downmixed);
            assert!((left.samples[0] - 0.5).abs() < 1e-4);
            let (right, _) = read_wav(&p, ChannelSelect::Channel(1)).unwrap();
            assert_eq!(right.samples[0], 0.0);
            assert!(matches!(
                read_wav(&p, ChannelSelect::Channel(2)),
                Err(Error::Config(_))
            ));
        }
    }
}
