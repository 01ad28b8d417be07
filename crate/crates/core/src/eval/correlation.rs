use crate::error::{Error, Result};
use crate::numeric::exact_sum;

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "correlation inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 3 points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("correlation input is not finite".into()));
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    // Exact sums make the result independent of point order.
    let n = x.len() as f64;
    let mx = exact_sum(x.iter().copied()) / n;
    let my = exact_sum(y.iter().copied()) / n;
    let dx: Vec<f64> = x.iter().map(|a| a - mx).collect();
    let dy: Vec<f64> = y.iter().map(|b| b - my).collect();
    let sxy = exact_sum(dx.iter().zip(&dy).map(|(a, b)| a * b));
    let sxx = exact_sum(dx.iter().map(|a| a * a));
    let syy = exact_sum(dy.iter().map(|b| b * b));
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("input is constant".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based fractional ranks; tied values share the mean of their positions.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}
