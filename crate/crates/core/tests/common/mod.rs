#![allow(dead_code)]

use audiodist::EmbeddingSet;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n × dim` i.i.d. N(mean, sd²) frames.
pub fn gaussian_set(id: &str, n: usize, dim: usize, mean: f64, sd: f64, seed: u64) -> EmbeddingSet {
    let mut r = rng(seed);
    let data = (0..n * dim)
        .map(|_| mean + sd * r.sample::<f64, _>(StandardNormal))
        .collect();
    EmbeddingSet::new(id, data, n, dim).unwrap()
}

pub fn uniform_set(id: &str, n: usize, dim: usize, scale: f64, seed: u64) -> EmbeddingSet {
    let mut r = rng(seed);
    let data = (0..n * dim).map(|_| scale * r.random_range(-1.0..1.0)).collect();
    EmbeddingSet::new(id, data, n, dim).unwrap()
}

/// `Bᵀ B` with `B` of shape `rank × dim`, so the result has rank ≤ `rank`.
pub fn random_psd(dim: usize, rank: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let b = DMatrix::from_fn(rank, dim, |_, _| r.sample::<f64, _>(StandardNormal));
    let m = b.transpose() * b;
    (&m + m.transpose()) * 0.5
}

/// Direct evaluation of the unbiased MMD² sums with a triple loop.
pub fn naive_mmd_scaled(x: &EmbeddingSet, y: &EmbeddingSet, sigma: f64, alpha: f64) -> f64 {
    let k = |a: &[f64], b: &[f64]| {
        let mut d2 = 0.0;
        for t in 0..a.len() {
            d2 += (a[t] - b[t]) * (a[t] - b[t]);
        }
        (-d2 / (2.0 * sigma * sigma)).exp()
    };
    let (n, m) = (x.n_frames(), y.n_frames());
    let mut kxx = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                kxx += k(x.row(i), x.row(j));
            }
        }
    }
    let mut kyy = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                kyy += k(y.row(i), y.row(j));
            }
        }
    }
    let mut kxy = 0.0;
    for i in 0..n {
        for j in 0..m {
            kxy += k(x.row(i), y.row(j));
        }
    }
    let (nf, mf) = (n as f64, m as f64);
    alpha * (kxx / (nf * (nf - 1.0)) + kyy / (mf * (mf - 1.0)) - 2.0 * kxy / (nf * mf))
}

/// Median of Euclidean distances over all distinct pairs of the pooled rows,
/// by full sort.
pub fn brute_force_median(x: &EmbeddingSet, y: &EmbeddingSet) -> f64 {
    let rows: Vec<&[f64]> = x.rows().chain(y.rows()).collect();
    let mut d = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let s: f64 = rows[i].iter().zip(rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(s.sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    }
}

/// Scalar closed form `(μ₁−μ₂)² + (√s₁−√s₂)²`.
pub fn scalar_frechet(mu1: f64, s1: f64, mu2: f64, s2: f64) -> f64 {
    (mu1 - mu2).powi(2) + (s1.sqrt() - s2.sqrt()).powi(2)
}

/// One scored pair of a synthetic listening test.
pub struct SynthPair {
    pub item: String,
    pub condition: String,
    pub lowpass: bool,
    pub hidden: bool,
    pub score: f64,
    /// Target Fréchet distance between the pair's embeddings.
    pub distance: f64,
}

/// Writes 1-D embeddings whose FAD equals each pair's target distance (the
/// test frames are the reference frames shifted by √distance) and returns a
/// manifest over them.
pub fn synthetic_manifest(dir: &std::path::Path, pairs: &[SynthPair]) -> audiodist::eval::EvalManifest {
    use audiodist::embedding::{save_embeddings, Dtype};
    use serde_json::json;
    let base = [0.0, 1.0, 2.0, 3.0];
    let mut items = std::collections::BTreeSet::new();
    let mut conds = std::collections::BTreeMap::new();
    let mut rows = Vec::new();
    for p in pairs {
        let ref_path = dir.join(format!("ref_{}.npy", p.item));
        if items.insert(p.item.clone()) {
            let e = EmbeddingSet::new(&p.item, base.to_vec(), 4, 1).unwrap();
            save_embeddings(&ref_path, &e, Dtype::F64).unwrap();
        }
        conds.insert(p.condition.clone(), (p.lowpass, p.hidden));
        let t = p.distance.sqrt();
        let test_path = dir.join(format!("test_{}_{}.npy", p.item, p.condition));
        let e = EmbeddingSet::new("t", base.iter().map(|v| v + t).collect(), 4, 1).unwrap();
        save_embeddings(&test_path, &e, Dtype::F64).unwrap();
        rows.push(json!({
            "item_id": p.item, "condition_id": p.condition,
            "ref_embedding_path": ref_path, "test_embedding_path": test_path,
            "mushra_score": p.score,
        }));
    }
    let doc = json!({
        "embedding_label": "synthetic",
        "items": items.iter().map(|i| json!({"item_id": i, "content_class": "music"})).collect::<Vec<_>>(),
        "conditions": conds.iter().map(|(c, (lp, hid))| json!({
            "condition_id": c, "codec_label": c, "is_lowpass_anchor": lp, "is_hidden_reference": hid,
        })).collect::<Vec<_>>(),
        "pairs": rows,
    });
    serde_json::from_value(doc).unwrap()
}

/// `items × conditions` grid; the condition named `lp` is a lowpass anchor
/// and `ref` a hidden reference. Scores spread over (0, 100].
pub fn grid_pairs(n_items: usize, conditions: &[&str], f: impl Fn(f64) -> f64) -> Vec<SynthPair> {
    let mut out = Vec::new();
    for i in 0..n_items {
        for (k, c) in conditions.iter().enumerate() {
            let score = if *c == "ref" {
                100.0
            } else {
                10.0 + 80.0 * ((i * conditions.len() + k) as f64 * 0.618).fract()
            };
            out.push(SynthPair {
                item: format!("item{i}"),
                condition: c.to_string(),
                lowpass: *c == "lp",
                hidden: *c == "ref",
                score,
                distance: f(score),
            });
        }
    }
    out
}
