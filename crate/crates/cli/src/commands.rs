use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use audiodist::embedding::{load_path, save_embeddings, Dtype};
use audiodist::eval::report::to_canonical_json;
use audiodist::eval::{
    emit_report, load_manifest, run_eval, Aggregation, EvalOptions, Filter, MetricConfig,
    MetricSpec, ReportFormat,
};
use audiodist::mel::wav::{read_wav, write_wav, ChannelSelect, WavFormat};
use audiodist::mel::{mel_embed, MelConfig};
use audiodist::metrics::{
    default_subsample_sizes, fad_infinity, fad_with, mmd_scaled, sigma_sweep, Bandwidth,
    DistanceResult, FadConfig, FadInfinityConfig, RbfKernelConfig, FIXED_SIGMA_SWEEP,
};
use audiodist::numeric::derive_seed;
use audiodist::tonal::{compose_batch, synthesize_many, write_batches_jsonl, TonalEventSpec, TonalSynthConfig};

use crate::runconfig::{self, RunConfig};
use crate::{BatchArgs, DistArgs, DistMetric, DtypeArg, EmbedArgs, EvalArgs, FormatArg, SigmaMode, SynthArgs};

/// A problem with how the command was invoked.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for usage and configuration errors, 1 for everything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(audiodist::Error::Config(_)) = cause.downcast_ref::<audiodist::Error>() {
            return 2;
        }
    }
    1
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Mel settings from a config file and flags; unset fields take defaults
/// for each file's sample rate.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MelOverrides {
    sample_rate: Option<u32>,
    n_fft: Option<usize>,
    hop: Option<usize>,
    n_mels: Option<usize>,
    f_min: Option<f64>,
    f_max: Option<f64>,
    log_floor: Option<f64>,
}

impl MelOverrides {
    fn resolve(&self, file_rate: u32) -> MelConfig {
        let mut c = MelConfig::for_sample_rate(self.sample_rate.unwrap_or(file_rate));
        c.n_fft = self.n_fft.unwrap_or(c.n_fft);
        c.hop = self.hop.unwrap_or(c.hop);
        c.n_mels = self.n_mels.unwrap_or(c.n_mels);
        c.f_min = self.f_min.unwrap_or(c.f_min);
        c.f_max = self.f_max.unwrap_or(c.f_max);
        c.log_floor = self.log_floor.unwrap_or(c.log_floor);
        c
    }
}

#[derive(Serialize)]
struct EmbeddedFile {
    input: PathBuf,
    output: Option<PathBuf>,
    mel: Option<MelConfig>,
    n_frames: Option<usize>,
    error: Option<String>,
}

#[derive(Serialize)]
struct EmbedParams<'a> {
    mel: &'a MelOverrides,
    channel: Option<u16>,
    dtype: &'static str,
    out: &'a Path,
    files: Vec<EmbeddedFile>,
}

fn embed_one(
    path: &Path,
    out: &Path,
    mel: &MelOverrides,
    select: ChannelSelect,
    dtype: Dtype,
) -> Result<(PathBuf, MelConfig, usize)> {
    let (audio, info) = read_wav(path, select)?;
    if info.downmixed {
        log::warn!("{}: {} channels downmixed to mono", path.display(), info.channels);
    }
    let c = mel.resolve(audio.sample_rate);
    let mut set = mel_embed(&audio, &c)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "embedding".into());
    set = set.with_source_id(stem.clone());
    let target = out.join(format!("{stem}.npy"));
    save_embeddings(&target, &set, dtype)?;
    Ok((target, c, set.n_frames()))
}

pub fn embed(a: &EmbedArgs, threads: Option<usize>) -> Result<()> {
    let mut mel: MelOverrides = match &a.config {
        Some(p) => runconfig::load(p)?,
        None => MelOverrides::default(),
    };
    mel.sample_rate = a.sample_rate.or(mel.sample_rate);
    mel.n_fft = a.n_fft.or(mel.n_fft);
    mel.hop = a.hop.or(mel.hop);
    mel.n_mels = a.n_mels.or(mel.n_mels);
    mel.f_min = a.f_min.or(mel.f_min);
    mel.f_max = a.f_max.or(mel.f_max);
    mel.log_floor = a.log_floor.or(mel.log_floor);
    if let Some(sr) = mel.sample_rate {
        mel.resolve(sr).validate()?;
    }

    let mut inputs = Vec::new();
    for p in &a.inputs {
        if p.is_dir() {
            let found = wav_files(p)?;
            if found.is_empty() {
                return Err(usage(format!("no .wav files in {}", p.display())));
            }
            inputs.extend(found);
        } else {
            inputs.push(p.clone());
        }
    }
    create_dir(&a.out)?;

    let select = match a.channel {
        Some(ch) => ChannelSelect::Channel(ch),
        None => ChannelSelect::Downmix,
    };
    let dtype = match a.dtype {
        DtypeArg::F32 => Dtype::F32,
        DtypeArg::F64 => Dtype::F64,
    };
    let mut files = Vec::new();
    for input in &inputs {
        match embed_one(input, &a.out, &mel, select, dtype) {
            Ok((output, c, n)) => files.push(EmbeddedFile {
                input: input.clone(),
                output: Some(output),
                mel: Some(c),
                n_frames: Some(n),
                error: None,
            }),
            Err(e) => {
                log::warn!("skipping {}: {}", input.display(), crate::describe(&e));
                files.push(EmbeddedFile {
                    input: input.clone(),
                    output: None,
                    mel: None,
                    n_frames: None,
                    error: Some(crate::describe(&e)),
                });
            }
        }
    }
    let skipped = files.iter().filter(|f| f.error.is_some()).count();
    let total = files.len();
    let params = EmbedParams {
        mel: &mel,
        channel: a.channel,
        dtype: match a.dtype {
            DtypeArg::F32 => "f32",
            DtypeArg::F64 => "f64",
        },
        out: &a.out,
        files,
    };
    RunConfig::new("embed", threads, params).write(&a.out.join(runconfig::FILE_NAME))?;
    if skipped > 0 {
        bail!("{skipped} of {total} files skipped");
    }
    Ok(())
}

#[derive(Serialize)]
struct DistParams<'a> {
    reference: &'a Path,
    test: &'a Path,
    metric: MetricConfig,
    sweep: Option<&'a [f64]>,
}

#[derive(Serialize)]
struct DistOutput<'a> {
    #[serde(flatten)]
    result: &'a DistanceResult,
    run: RunConfig<'a, DistParams<'a>>,
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    results: &'a [DistanceResult],
    run: RunConfig<'a, DistParams<'a>>,
}

pub fn dist(a: &DistArgs, threads: Option<usize>) -> Result<()> {
    let kernel = || -> Result<RbfKernelConfig> {
        let bandwidth = match (a.sigma_mode, a.sigma) {
            (SigmaMode::Median, None) => Bandwidth::MedianHeuristic,
            (SigmaMode::Median, Some(_)) => {
                return Err(usage("--sigma needs --sigma-mode fixed"));
            }
            (SigmaMode::Fixed, Some(s)) => Bandwidth::Fixed(s),
            (SigmaMode::Fixed, None) => return Err(usage("--sigma-mode fixed needs --sigma")),
        };
        let k = RbfKernelConfig {
            bandwidth,
            alpha: a.alpha,
            frame_cap: a.frame_cap,
        };
        k.validate()?;
        Ok(k)
    };
    if a.sweep && a.metric != DistMetric::Mmd {
        return Err(usage("--sweep applies to --metric mmd only"));
    }
    let fad_cfg = FadConfig { ridge: a.ridge };

    let x = load_path(&a.reference, a.dim)?;
    let y = load_path(&a.test, a.dim)?;

    let mut stdout = std::io::stdout().lock();
    if a.sweep {
        let k = kernel()?;
        let results = sigma_sweep(&x, &y, &FIXED_SIGMA_SWEEP, k.alpha, k.frame_cap)?;
        let out = SweepOutput {
            results: &results,
            run: RunConfig::new(
                "dist",
                threads,
                DistParams {
                    reference: &a.reference,
                    test: &a.test,
                    metric: MetricConfig::Mmd(k),
                    sweep: Some(&FIXED_SIGMA_SWEEP),
                },
            ),
        };
        writeln!(stdout, "{}", to_canonical_json(&out)?)?;
        return Ok(());
    }

    let metric = match a.metric {
        DistMetric::Fad => MetricConfig::Fad(fad_cfg),
        DistMetric::FadInf => MetricConfig::FadInfinity(FadInfinityConfig {
            sizes: if a.sizes.is_empty() {
                default_subsample_sizes(y.n_frames())
            } else {
                a.sizes.clone()
            },
            draws: a.draws,
            seed: a.seed,
            fad: fad_cfg,
        }),
        DistMetric::Mmd => MetricConfig::Mmd(kernel()?),
    };
    let result = match &metric {
        MetricConfig::Fad(c) => fad_with(&x, &y, c)?,
        MetricConfig::FadInfinity(c) => fad_infinity(&x, &y, c)?,
        MetricConfig::Mmd(k) => mmd_scaled(&x, &y, k)?,
    };
    let out = DistOutput {
        result: &result,
        run: RunConfig::new(
            "dist",
            threads,
            DistParams {
                reference: &a.reference,
                test: &a.test,
                metric,
                sweep: None,
            },
        ),
    };
    writeln!(stdout, "{}", to_canonical_json(&out)?)?;
    Ok(())
}

#[derive(Serialize)]
struct EventLine<'a> {
    index: usize,
    seed: u64,
    file: String,
    n_events: usize,
    events: &'a [TonalEventSpec],
}

#[derive(Serialize)]
struct SynthParams<'a> {
    synth: &'a TonalSynthConfig,
    count: usize,
    format: &'static str,
    out: &'a Path,
}

pub fn synth(a: &SynthArgs, threads: Option<usize>) -> Result<()> {
    let mut c: TonalSynthConfig = match &a.config {
        Some(p) => runconfig::load(p)?,
        None => TonalSynthConfig::default(),
    };
    if let Some(s) = a.seed {
        c.seed = s;
    }
    c.validate()?;
    create_dir(&a.out)?;

    let format = if a.pcm16 { WavFormat::Pcm16 } else { WavFormat::Float32 };
    let rendered = synthesize_many(&c, c.seed, a.count)?;
    let events_path = a.out.join("events.jsonl");
    let mut events = BufWriter::new(
        File::create(&events_path).with_context(|| format!("creating {}", events_path.display()))?,
    );
    for (i, (seed, ev, audio)) in rendered.iter().enumerate() {
        let name = format!("tonal_{i:04}.wav");
        write_wav(&a.out.join(&name), audio, format)?;
        let line = EventLine {
            index: i,
            seed: *seed,
            file: name,
            n_events: ev.len(),
            events: ev,
        };
        writeln!(events, "{}", serde_json::to_string(&line)?)?;
    }
    events.flush()?;
    let params = SynthParams {
        synth: &c,
        count: a.count,
        format: if a.pcm16 { "pcm16" } else { "float32" },
        out: &a.out,
    };
    RunConfig::new("synth", threads, params).write(&a.out.join(runconfig::FILE_NAME))
}

fn read_pool(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        return wav_files(path);
    }
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(PathBuf::from)
        .collect())
}

#[derive(Serialize)]
struct BatchParams<'a> {
    pool: Option<&'a Path>,
    pool_size: usize,
    synth: &'a TonalSynthConfig,
    batch_size: usize,
    tonal_fraction: f64,
    batches: usize,
    seed: u64,
    out: &'a Path,
}

/// `batches.jsonl` → `batches.run_config.json`.
fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "batches".into());
    out.with_file_name(format!("{stem}.{}", runconfig::FILE_NAME))
}

pub fn batch(a: &BatchArgs, threads: Option<usize>) -> Result<()> {
    let c: TonalSynthConfig = match &a.config {
        Some(p) => runconfig::load(p)?,
        None => TonalSynthConfig::default(),
    };
    let pool = match &a.pool {
        Some(p) => read_pool(p)?,
        None => Vec::new(),
    };
    let manifests = (0..a.batches)
        .map(|k| compose_batch(&pool, &c, a.batch_size, a.tonal_fraction, derive_seed(a.seed, k as u64)))
        .collect::<audiodist::Result<Vec<_>>>()?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let f = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut w = BufWriter::new(f);
    write_batches_jsonl(&mut w, &manifests)?;
    w.flush()?;
    let params = BatchParams {
        pool: a.pool.as_deref(),
        pool_size: pool.len(),
        synth: &c,
        batch_size: a.batch_size,
        tonal_fraction: a.tonal_fraction,
        batches: a.batches,
        seed: a.seed,
        out: &a.out,
    };
    RunConfig::new("batch", threads, params).write(&sidecar_path(&a.out))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsFile {
    metrics: Vec<MetricSpec>,
}

fn parse_metric(s: &str) -> Result<Vec<MetricSpec>> {
    let one = |c: MetricConfig| Ok(vec![MetricSpec::new(c)]);
    match s {
        "fad" => one(MetricConfig::Fad(FadConfig::default())),
        "fad-inf" => one(MetricConfig::FadInfinity(FadInfinityConfig::default())),
        "mmd" => one(MetricConfig::Mmd(RbfKernelConfig::default())),
        "sweep" => Ok(std::iter::once(RbfKernelConfig::default())
            .chain(FIXED_SIGMA_SWEEP.iter().map(|&s| RbfKernelConfig::fixed(s)))
            .map(|k| MetricSpec::new(MetricConfig::Mmd(k)))
            .collect()),
        _ => match s.strip_prefix("mmd:").map(str::parse::<f64>) {
            Some(Ok(sigma)) => {
                let k = RbfKernelConfig::fixed(sigma);
                k.validate()?;
                one(MetricConfig::Mmd(k))
            }
            _ => Err(usage(format!(
                "unknown metric '{s}' (expected fad, fad-inf, mmd, mmd:<sigma> or sweep)"
            ))),
        },
    }
}

#[derive(Serialize)]
struct EvalParams<'a> {
    manifest: &'a Path,
    scores: Option<&'a Path>,
    metrics: &'a [MetricSpec],
    options: EvalOptions,
    out: &'a Path,
    files: Vec<String>,
}

pub fn eval(a: &EvalArgs, threads: Option<usize>) -> Result<()> {
    let mut metrics = Vec::new();
    if let Some(p) = &a.metrics_config {
        metrics.extend(runconfig::load::<MetricsFile>(p)?.metrics);
    }
    for m in &a.metrics {
        metrics.extend(parse_metric(m)?);
    }
    if metrics.is_empty() {
        metrics.extend(parse_metric("fad")?);
        metrics.extend(parse_metric("mmd")?);
    }
    for spec in &metrics {
        if let MetricConfig::Mmd(k) = &spec.config {
            k.validate()?;
        }
    }

    let mut manifest = load_manifest(&a.manifest)?;
    if let Some(p) = &a.scores {
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        let n = manifest.merge_scores_csv(f)?;
        log::info!("merged {n} scores from {}", p.display());
    }
    let options = EvalOptions {
        include_hidden_reference: a.include_hidden_ref,
        aggregation: if a.per_condition {
            Aggregation::PerCondition
        } else {
            Aggregation::Pooled
        },
    };
    let report = run_eval(&manifest, &metrics, &options)?;

    create_dir(&a.out)?;
    let mut files = Vec::new();
    for f in &a.formats {
        let format = match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Svg => ReportFormat::SvgScatter,
        };
        files.extend(emit_report(&report, format, &a.out)?);
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{:<16} {:<16} {:>8} {:>8} {:>4}", "metric", "filter", "R_p", "R_s", "n")?;
    for r in &report.rows {
        let filter = match r.filter {
            Filter::All => "all",
            Filter::WithoutLowpass => "without_lowpass",
        };
        writeln!(
            stdout,
            "{:<16} {:<16} {:>8.4} {:>8.4} {:>4}",
            r.metric, filter, r.r_pearson, r.r_spearman, r.n_points
        )?;
    }
    if report.n_pairs_failed > 0 {
        writeln!(stdout, "{} pair(s) skipped; see report.json", report.n_pairs_failed)?;
    }
    let params = EvalParams {
        manifest: &a.manifest,
        scores: a.scores.as_deref(),
        metrics: &metrics,
        options,
        out: &a.out,
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    RunConfig::new("eval", threads, params).write(&a.out.join(runconfig::FILE_NAME))
}
