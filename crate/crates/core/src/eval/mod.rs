//! Correlating embedding-domain distances with MUSHRA scores.
//!
//! [`run_eval`] computes one distance per (item, condition) pair and metric,
//! then Pearson and Spearman correlations against the subjective scores, once
//! over all conditions and once with lowpass anchors removed. Correlations
//! are stored signed (a good distance correlates negatively with quality)
//! together with their absolute values.

pub mod correlation;
pub mod manifest;
pub mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::embedding::{load_embeddings, EmbeddingSet};
use crate::error::{Error, Result};
use crate::metrics::{
    fad_infinity, fad_with, mmd_scaled, Bandwidth, DistanceResult, FadConfig, FadInfinityConfig,
    RbfKernelConfig,
};
use crate::numeric::{exact_sum, map_indexed};

pub use correlation::{fractional_ranks, pearson, spearman};
pub use manifest::{load_manifest, Condition, ContentClass, EvalManifest, Item, ScoredPair};
pub use report::{emit_report, ReportFormat};

/// Largest tolerated share of failed pairs.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum MetricConfig {
    Fad(FadConfig),
    FadInfinity(FadInfinityConfig),
    Mmd(RbfKernelConfig),
}

impl MetricConfig {
    pub fn default_label(&self) -> String {
        match self {
            MetricConfig::Fad(_) => "fad".into(),
            MetricConfig::FadInfinity(_) => "fad_inf".into(),
            MetricConfig::Mmd(k) => match k.bandwidth {
                Bandwidth::MedianHeuristic => "mmd_median".into(),
                Bandwidth::Fixed(s) => format!("mmd_sigma{s}"),
            },
        }
    }

    pub fn compute(&self, x: &EmbeddingSet, y: &EmbeddingSet) -> Result<DistanceResult> {
        match self {
            MetricConfig::Fad(c) => fad_with(x, y, c),
            MetricConfig::FadInfinity(c) => fad_infinity(x, y, c),
            MetricConfig::Mmd(k) => mmd_scaled(x, y, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub label: String,
    pub config: MetricConfig,
}

impl MetricSpec {
    pub fn new(config: MetricConfig) -> Self {
        Self {
            label: config.default_label(),
            config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Every (item, condition) pair is one point.
    #[default]
    Pooled,
    /// Distances and scores are averaged per condition first.
    PerCondition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    All,
    WithoutLowpass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub include_hidden_reference: bool,
    pub aggregation: Aggregation,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            include_hidden_reference: false,
            aggregation: Aggregation::Pooled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub metric: String,
    pub embedding_label: String,
    pub filter: Filter,
    pub r_pearson: f64,
    pub r_spearman: f64,
    pub abs_r_pearson: f64,
    pub abs_r_spearman: f64,
    pub n_points: usize,
}

/// One (item, condition, metric) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub item_id: String,
    pub condition_id: String,
    pub metric: String,
    pub mushra_score: f64,
    pub is_lowpass_anchor: bool,
    pub is_hidden_reference: bool,
    pub distance: Option<f64>,
    pub sigma_used: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub schema_version: u32,
    pub embedding_label: String,
    pub options: EvalOptions,
    pub metrics: Vec<MetricSpec>,
    pub rows: Vec<CorrelationRow>,
    pub pairs: Vec<PairDistance>,
    pub n_pairs_failed: usize,
}

impl CorrelationReport {
    pub fn row(&self, metric: &str, filter: Filter) -> Option<&CorrelationRow> {
        self.rows.iter().find(|r| r.metric == metric && r.filter == filter)
    }

    /// Pairs of `metric` that produced a distance.
    pub fn surviving(&self, metric: &str) -> impl Iterator<Item = &PairDistance> {
        let metric = metric.to_string();
        self.pairs
            .iter()
            .filter(move |p| p.metric == metric && p.distance.is_some())
    }
}

type Loaded = std::result::Result<EmbeddingSet, String>;

fn load_all(paths: &BTreeSet<PathBuf>) -> BTreeMap<PathBuf, Loaded> {
    let list: Vec<&PathBuf> = paths.iter().collect();
    let loaded = map_indexed(list.len(), |i| {
        load_embeddings(list[i], None).map_err(|e| e.to_string())
    });
    list.into_iter().cloned().zip(loaded).collect()
}

/// Correlates `(condition, distance, score)` points.
fn correlate(pairs: &[(&str, f64, f64)], agg: Aggregation) -> Result<(f64, f64, usize)> {
    let (d, s): (Vec<f64>, Vec<f64>) = match agg {
        Aggregation::Pooled => pairs.iter().map(|&(_, d, s)| (d, s)).unzip(),
        Aggregation::PerCondition => {
            let mut by_cond: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for &(c, dist, score) in pairs {
                let e = by_cond.entry(c).or_default();
                e.0.push(dist);
                e.1.push(score);
            }
            by_cond
                .values()
                .map(|(d, s)| {
                    let n = d.len() as f64;
                    (exact_sum(d.iter().copied()) / n, exact_sum(s.iter().copied()) / n)
                })
                .unzip()
        }
    };
    Ok((pearson(&d, &s)?, spearman(&d, &s)?, d.len()))
}

/// Computes every metric for every scored pair and correlates with MUSHRA.
///
/// A pair whose embeddings cannot be loaded or whose distance fails is
/// recorded with its error and left out; more than 10% failed pairs is an
/// error. Hidden references are excluded unless requested.
pub fn run_eval(
    m: &EvalManifest,
    metrics: &[MetricSpec],
    opts: &EvalOptions,
) -> Result<CorrelationReport> {
    m.validate()?;
    m.require_scores()?;
    if metrics.is_empty() {
        return Err(Error::Config("no metrics requested".into()));
    }
    let mut labels = BTreeSet::new();
    for spec in metrics {
        if !labels.insert(spec.label.as_str()) {
            return Err(Error::Config(format!("duplicate metric label '{}'", spec.label)));
        }
    }

    // Sorted so the report does not depend on manifest order.
    let mut selected: Vec<(&ScoredPair, &Condition)> = m
        .pairs
        .iter()
        .map(|p| (p, m.condition(&p.condition_id).expect("validated")))
        .filter(|(_, c)| opts.include_hidden_reference || !c.is_hidden_reference)
        .collect();
    selected.sort_by(|a, b| {
        (&a.0.item_id, &a.0.condition_id).cmp(&(&b.0.item_id, &b.0.condition_id))
    });
    if selected.is_empty() {
        return Err(Error::EmptyInput("no pairs to evaluate".into()));
    }

    let paths: BTreeSet<PathBuf> = selected
        .iter()
        .flat_map(|(p, _)| [p.ref_embedding_path.clone(), p.test_embedding_path.clone()])
        .collect();
    let loaded = load_all(&paths);
    let domain_dim = loaded.values().find_map(|l| l.as_ref().ok().map(|e| e.dim()));

    let per_pair: Vec<Vec<PairDistance>> = map_indexed(selected.len(), |i| {
        let (pair, cond) = selected[i];
        let sets = (|| -> std::result::Result<(&EmbeddingSet, &EmbeddingSet), String> {
            let x = loaded[&pair.ref_embedding_path].as_ref().map_err(Clone::clone)?;
            let y = loaded[&pair.test_embedding_path].as_ref().map_err(Clone::clone)?;
            for s in [x, y] {
                if Some(s.dim()) != domain_dim {
                    return Err(format!(
                        "{} has dim {}, domain '{}' uses {}",
                        s.source_id(),
                        s.dim(),
                        m.embedding_label,
                        domain_dim.unwrap_or(0)
                    ));
                }
            }
            Ok((x, y))
        })();
        metrics
            .iter()
            .map(|spec| {
                let outcome = sets
                    .clone()
                    .and_then(|(x, y)| spec.config.compute(x, y).map_err(|e| e.to_string()));
                let (distance, sigma_used, error) = match outcome {
                    Ok(r) => (Some(r.value), r.sigma_used, None),
                    Err(e) => (None, None, Some(e)),
                };
                PairDistance {
                    item_id: pair.item_id.clone(),
                    condition_id: pair.condition_id.clone(),
                    metric: spec.label.clone(),
                    mushra_score: pair.mushra_score.expect("scores required"),
                    is_lowpass_anchor: cond.is_lowpass_anchor,
                    is_hidden_reference: cond.is_hidden_reference,
                    distance,
                    sigma_used,
                    error,
                }
            })
            .collect()
    });

    let total = per_pair.len();
    let failed = per_pair
        .iter()
        .filter(|row| row.iter().any(|p| p.error.is_some()))
        .count();
    for row in &per_pair {
        if let Some(p) = row.iter().find(|p| p.error.is_some()) {
            log::warn!(
                "pair ({}, {}) skipped: {}",
                p.item_id,
                p.condition_id,
                p.error.as_deref().unwrap_or_default()
            );
        }
    }
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }
    let pairs: Vec<PairDistance> = per_pair.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for spec in metrics {
        for filter in [Filter::All, Filter::WithoutLowpass] {
            let kept: Vec<(&str, f64, f64)> = pairs
                .iter()
                .filter(|p| p.metric == spec.label)
                .filter(|p| filter == Filter::All || !p.is_lowpass_anchor)
                .filter_map(|p| p.distance.map(|d| (p.condition_id.as_str(), d, p.mushra_score)))
                .collect();
            let (rp, rs, n) = correlate(&kept, opts.aggregation).map_err(|e| match e {
                Error::UndefinedCorrelation(msg) => Error::UndefinedCorrelation(format!(
                    "metric '{}', filter {filter:?}: {msg}",
                    spec.label
                )),
                other => other,
            })?;
            rows.push(CorrelationRow {
                metric: spec.label.clone(),
                embedding_label: m.embedding_label.clone(),
                filter,
                r_pearson: rp,
                r_spearman: rs,
                abs_r_pearson: rp.abs(),
                abs_r_spearman: rs.abs(),
                n_points: n,
            });
        }
    }

    Ok(CorrelationReport {
        schema_version: crate::SCHEMA_VERSION,
        embedding_label: m.embedding_label.clone(),
        options: *opts,
        metrics: metrics.to_vec(),
        rows,
        pairs,
        n_pairs_failed: failed,
    })
}
