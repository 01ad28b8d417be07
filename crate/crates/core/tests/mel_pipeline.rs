mod common;

use audiodist::fad;
use audiodist::mel::{
    log_mel, mel_embed, mel_loss, stft_magnitude, AudioBuffer, MelConfig, MelFilterbank,
};
use audiodist::tonal::{synthesize, TonalSynthConfig};
use rand::Rng;
use rand_distr::StandardNormal;

fn clean_excerpt() -> AudioBuffer {
    let c = TonalSynthConfig {
        duration: 3.0,
        ..Default::default()
    };
    synthesize(&c, 5).unwrap().1
}

fn with_noise(a: &AudioBuffer, amp: f64, seed: u64) -> AudioBuffer {
    let mut r = common::rng(seed);
    let samples = a
        .samples
        .iter()
        .map(|&s| (s as f64 + amp * r.sample::<f64, _>(StandardNormal)) as f32)
        .collect();
    AudioBuffer::new(samples, a.sample_rate).unwrap()
}

#[test]
fn fad_grows_with_noise_level() {
    let c = MelConfig::default();
    let clean = clean_excerpt();
    let reference = mel_embed(&clean, &c).unwrap();
    let dists: Vec<f64> = [0.001, 0.01, 0.1]
        .iter()
        .map(|&amp| {
            let noisy = mel_embed(&with_noise(&clean, amp, 9), &c).unwrap();
            fad(&reference, &noisy).unwrap().value
        })
        .collect();
    assert!(dists[0] < dists[1] && dists[1] < dists[2], "{dists:?}");
}

#[test]
fn identical_signals_have_zero_fad() {
    let c = MelConfig::default();
    let a = clean_excerpt();
    let e1 = mel_embed(&a, &c).unwrap();
    let e2 = mel_embed(&a.clone(), &c).unwrap();
    let v = fad(&e1, &e2).unwrap().value;
    assert!(v <= 1e-9, "{v}");
}

#[test]
fn frame_count_and_dim() {
    for (n_fft, hop, n_mels, len) in [(2048, 512, 128, 48_000), (512, 128, 40, 4000), (1024, 1024, 64, 1024)] {
        let c = MelConfig {
            n_fft,
            hop,
            n_mels,
            ..MelConfig::default()
        };
        let a = with_noise(&AudioBuffer::silence(len, 48_000), 0.1, 1);
        let e = mel_embed(&a, &c).unwrap();
        assert_eq!(e.dim(), n_mels);
        assert_eq!(e.n_frames(), (len - n_fft) / hop + 1);
    }
}

#[test]
fn silence_frames_sit_at_log_floor() {
    let c = MelConfig::default();
    let e = mel_embed(&AudioBuffer::silence(10_000, 48_000), &c).unwrap();
    let floor = c.log_floor.ln();
    assert!(e.as_slice().iter().all(|&v| v == floor));
}

#[test]
fn mel_loss_against_silence_is_distance_to_floor() {
    let c = MelConfig::default();
    let a = clean_excerpt();
    let silent = AudioBuffer::silence(a.len(), a.sample_rate);
    let lm = log_mel(&a, &c).unwrap();
    let floor = c.log_floor.ln();
    let expected = lm.iter().map(|v| (v - floor).abs()).sum::<f64>() / lm.len() as f64;
    let got = mel_loss(&a, &silent, &c).unwrap();
    assert!((got - expected).abs() < 1e-12);
    assert_eq!(mel_loss(&silent, &a, &c).unwrap(), got);
    assert_eq!(mel_loss(&a, &a, &c).unwrap(), 0.0);
}

#[test]
fn filterbank_gains_explain_amplitude_scaling() {
    // Doubling the input doubles every mel energy, so in bands well above
    // the floor the log-mel value moves by ln 2.
    let c = MelConfig::default();
    let a = clean_excerpt();
    let doubled = AudioBuffer::new(a.samples.iter().map(|s| s * 2.0).collect(), a.sample_rate).unwrap();
    let la = log_mel(&a, &c).unwrap();
    let lb = log_mel(&doubled, &c).unwrap();
    assert_eq!(la.shape(), lb.shape());
    let floor = c.log_floor.ln();
    let mut checked = 0;
    for (x, y) in la.iter().zip(lb.iter()) {
        if *x > floor + 8.0 {
            assert!((y - x - 2f64.ln()).abs() < 1e-3, "{x} -> {y}");
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn filterbank_rows_are_positive() {
    let fb = MelFilterbank::new(&MelConfig::default()).unwrap();
    for r in fb.weights().row_iter() {
        assert!(r.sum() > 0.0);
    }
}

#[test]
fn stft_shape() {
    let c = MelConfig::default();
    let a = clean_excerpt();
    let s = stft_magnitude(&a, &c).unwrap();
    assert_eq!(s.ncols(), 1025);
    assert_eq!(s.nrows(), c.frame_count(a.len()));
}

#[cfg(feature = "wav")]
#[test]
fn wav_round_trip_through_pipeline() {
    use audiodist::mel::wav::{read_wav, write_wav, ChannelSelect, WavFormat};
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.wav");
    let a = clean_excerpt();
    write_wav(&p, &a, WavFormat::Float32).unwrap();
    let (b, info) = read_wav(&p, ChannelSelect::Downmix).unwrap();
    assert_eq!(info.channels, 1);
    assert_eq!(a, b);
}
