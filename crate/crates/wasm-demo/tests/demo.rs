use audiodist_wasm::demo::{cloud_distances, cloud_sweep, gaussian_clouds, render_tonal, CloudParams, DEMO_N_MELS};

fn params(shift: f64, scale: f64) -> CloudParams {
    CloudParams {
        n: 1500,
        dim: 3,
        shift,
        scale,
        seed: 4,
    }
}

#[test]
fn tonal_view_shapes() {
    let v = render_tonal(7, 1.0, 6.0).unwrap();
    assert_eq!(v.samples.len(), 48_000);
    assert_eq!(v.n_mels, DEMO_N_MELS);
    assert_eq!(v.n_frames, (48_000 - 2048) / 512 + 1);
    assert_eq!(v.log_mel.len(), v.n_frames * v.n_mels);
    assert_eq!(v.fundamentals.len(), v.n_events);
    assert!(v.samples.iter().all(|s| s.abs() <= 1.0));
    assert_eq!(render_tonal(7, 1.0, 6.0).unwrap().samples, v.samples);
}

#[test]
fn tonal_spectrogram_is_frame_major() {
    // With one event there is a clear onset: the frame energy before it is at the floor.
    let v = render_tonal(1, 2.0, 0.6).unwrap();
    let floor = (1e-5f64).ln();
    let frame_max = |t: usize| {
        v.log_mel[t * v.n_mels..(t + 1) * v.n_mels]
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max)
    };
    let loud = (0..v.n_frames).filter(|&t| frame_max(t) > floor + 1.0).count();
    if v.n_events > 0 {
        assert!(loud > 0);
    } else {
        assert_eq!(loud, 0);
    }
}

#[test]
fn tonal_rejects_bad_input() {
    assert!(render_tonal(0, 0.0, 6.0).is_err());
    assert!(render_tonal(0, 1.0, -1.0).is_err());
}

#[test]
fn cloud_fad_tracks_population_value() {
    let p = params(1.0, 2.0);
    let d = cloud_distances(&p).unwrap();
    assert_eq!(p.population_fad(), 6.0);
    assert!((d.fad - 6.0).abs() < 0.5, "{}", d.fad);
    assert!(d.mmd > 0.0 && d.sigma > 0.0);
    assert_eq!(d.preview_ref.len(), 2 * p.n);

    let same = cloud_distances(&params(0.0, 1.0)).unwrap();
    assert!(same.fad < 0.05, "{}", same.fad);
    assert!(same.mmd.abs() < d.mmd / 10.0);
}

#[test]
fn one_dimensional_preview_pads_with_zero() {
    let p = CloudParams { dim: 1, ..params(0.5, 1.0) };
    let d = cloud_distances(&p).unwrap();
    assert!(d.preview_ref.iter().skip(1).step_by(2).all(|&v| v == 0.0));
}

#[test]
fn clouds_validate_params() {
    assert!(gaussian_clouds(&CloudParams { n: 1, ..params(0.0, 1.0) }).is_err());
    assert!(gaussian_clouds(&CloudParams { n: 100_000, ..params(0.0, 1.0) }).is_err());
    assert!(gaussian_clouds(&params(0.0, 0.0)).is_err());
    assert!(gaussian_clouds(&CloudParams { dim: 0, ..params(0.0, 1.0) }).is_err());
}

#[test]
fn sweep_starts_at_median_and_decays() {
    let s = cloud_sweep(&params(1.0, 1.0)).unwrap();
    assert_eq!(s.len(), 6);
    assert!(s[0].median && s[1..].iter().all(|p| !p.median));
    assert_eq!(s[1].sigma, 1.0);
    let tail: Vec<f64> = s[1..].iter().map(|p| p.mmd).collect();
    assert!(tail.windows(2).all(|w| w[1] < w[0]), "{tail:?}");
}
