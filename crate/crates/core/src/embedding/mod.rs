//! Embedding matrices, their Gaussian summaries, and on-disk storage.
//!
//! An [`EmbeddingSet`] is a `frames × dim` matrix of embedding vectors for one
//! signal or a whole corpus. A corpus on disk is a directory holding one
//! `<signal_id>.npy` file per signal.

pub mod npy;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::ExactSum;

pub use npy::Dtype;

/// Denominator offset used for the sample covariance (`n - COVARIANCE_DDOF`).
pub const COVARIANCE_DDOF: usize = 1;

/// Relative tolerance for treating a covariance matrix as symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// A `n_frames × dim` matrix of finite embedding coordinates, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    data: Vec<f64>,
    n_frames: usize,
    dim: usize,
    source_id: String,
}

impl EmbeddingSet {
    pub fn new(
        source_id: impl Into<String>,
        data: Vec<f64>,
        n_frames: usize,
        dim: usize,
    ) -> Result<Self> {
        if n_frames == 0 || dim == 0 {
            return Err(Error::Shape(format!(
                "embedding set must be at least 1x1, got {n_frames}x{dim}"
            )));
        }
        if data.len() != n_frames * dim {
            return Err(Error::Shape(format!(
                "{n_frames}x{dim} set needs {} values, got {}",
                n_frames * dim,
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: idx / dim,
                col: idx % dim,
                value: data[idx],
            });
        }
        Ok(Self {
            data,
            n_frames,
            dim,
            source_id: source_id.into(),
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(source_id: impl Into<String>, rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Shape(format!(
                    "row {i} has length {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(source_id, data, rows.len(), dim)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    /// Row-major backing storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// New set made of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("row selection is empty".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.n_frames {
                return Err(Error::Shape(format!(
                    "row {i} out of range for {} frames",
                    self.n_frames
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            data,
            n_frames: indices.len(),
            dim: self.dim,
            source_id: self.source_id.clone(),
        })
    }

    /// Keeps at most `cap` frames, taken at evenly spaced positions.
    pub fn cap_frames(&self, cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(Error::Config("frame cap must be positive".into()));
        }
        if self.n_frames <= cap {
            return Ok(self.clone());
        }
        let idx: Vec<usize> = (0..cap).map(|k| k * self.n_frames / cap).collect();
        self.select_rows(&idx)
    }
}

/// Mean vector and covariance matrix of an embedding set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n_frames: usize,
}

impl GaussianStats {
    /// Builds statistics from explicit parameters. The covariance must be
    /// square, match the mean, and be symmetric to [`SYMMETRY_TOLERANCE`]
    /// (relative); it is stored symmetrized.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, n_frames: usize) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Shape(format!(
                "mean of length {d} with {}x{} covariance",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("statistics contain non-finite values".into()));
        }
        check_symmetric(&cov)?;
        Ok(Self {
            mean,
            cov: symmetrize(&cov),
            n_frames,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax();
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Validation(format!(
            "matrix is not symmetric (max asymmetry {asym:e}, scale {scale:e})"
        )));
    }
    Ok(())
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Mean and unbiased sample covariance (denominator `n - 1`).
pub fn compute_stats(e: &EmbeddingSet) -> Result<GaussianStats> {
    compute_stats_with_ddof(e, COVARIANCE_DDOF)
}

/// Mean and sample covariance with denominator `n - ddof`.
///
/// The mean uses correctly rounded summation, so it is independent of frame
/// order. Accumulation is always in f64.
pub fn compute_stats_with_ddof(e: &EmbeddingSet, ddof: usize) -> Result<GaussianStats> {
    let n = e.n_frames();
    let needed = ddof.max(1) + 1;
    if n < needed {
        return Err(Error::InsufficientSamples {
            set: e.source_id().to_string(),
            needed,
            got: n,
        });
    }
    let d = e.dim();
    let mut sums = vec![ExactSum::new(); d];
    for row in e.rows() {
        for (acc, &v) in sums.iter_mut().zip(row) {
            acc.add(v);
        }
    }
    let mean = DVector::from_iterator(d, sums.iter().map(|s| s.value() / n as f64));

    let centered = DMatrix::from_fn(n, d, |i, j| e.row(i)[j] - mean[j]);
    let cov = centered.tr_mul(&centered) / (n - ddof) as f64;
    Ok(GaussianStats {
        mean,
        cov: symmetrize(&cov),
        n_frames: n,
    })
}

/// Stacks frames of all sets in input order.
pub fn concat(sets: &[EmbeddingSet]) -> Result<EmbeddingSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::EmptyInput("no embedding sets to concatenate".into()))?;
    let dim = first.dim();
    let mut data = Vec::with_capacity(sets.iter().map(|s| s.data.len()).sum());
    for s in sets {
        if s.dim() != dim {
            return Err(Error::Shape(format!(
                "cannot concatenate dim {} ({}) with dim {dim} ({})",
                s.dim(),
                s.source_id(),
                first.source_id()
            )));
        }
        data.extend_from_slice(&s.data);
    }
    let n = data.len() / dim;
    let id = if sets.len() == 1 {
        first.source_id.clone()
    } else {
        format!("{}+{}", first.source_id, sets.len() - 1)
    };
    Ok(EmbeddingSet {
        data,
        n_frames: n,
        dim,
        source_id: id,
    })
}

/// Loads one array file. A 1-D array of length `d` becomes a `1 × d` set.
pub fn load_embeddings(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let arr = npy::read_npy(BufReader::new(file))?;
    let (n, d) = match arr.shape.as_slice() {
        [d] => (1, *d),
        [n, d] => (*n, *d),
        other => {
            return Err(Error::Format(format!(
                "{}: expected a 1-D or 2-D array, found shape {other:?}",
                path.display()
            )))
        }
    };
    if let Some(exp) = expected_dim {
        if exp != d {
            return Err(Error::Shape(format!(
                "{}: dim {d} does not match expected {exp}",
                path.display()
            )));
        }
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EmbeddingSet::new(id, arr.data, n, d)
}

pub fn save_embeddings(path: &Path, set: &EmbeddingSet, dtype: Dtype) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    npy::write_npy(
        BufWriter::new(file),
        &[set.n_frames(), set.dim()],
        set.as_slice(),
        dtype,
    )
}

/// Loads every `*.npy` file of a directory (sorted by file name) and stacks them.
pub fn load_corpus(dir: &Path, expected_dim: Option<usize>) -> Result<EmbeddingSet> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "npy"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!("no .npy files in {}", dir.display())));
    }
    let mut dim = expected_dim;
    let mut sets = Vec::with_capacity(paths.len());
    for p in &paths {
        let s = load_embeddings(p, dim)?;
        dim = Some(s.dim());
        sets.push(s);
    }
    let id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(concat(&sets)?.with_source_id(id))
}

/// Loads a single file, or a directory as a concatenated corpus.
pub fn load_path(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingSet> {
    if path.is_dir() {
        load_corpus(path, expected_dim)
    } else {
        load_embeddings(path, expected_dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn set(rows: &[&[f64]]) -> EmbeddingSet {
        EmbeddingSet::from_rows("t", rows).unwrap()
    }

    #[test]
    fn stats_scalar_pair() {
        let s = compute_stats(&set(&[&[0.0], &[2.0]])).unwrap();
        assert_eq!(s.mean[0], 1.0);
        assert_eq!(s.cov[(0, 0)], 2.0);
    }

    #[test]
    fn stats_identical_frames() {
        let v = [0.25, -3.0, 7.5];
        let e = set(&[&v, &v, &v, &v]);
        let s = compute_stats(&e).unwrap();
        assert_eq!(s.mean.as_slice(), &v);
        assert!(s.cov.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn stats_cross() {
        let e = set(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0], &[0.0, -1.0]]);
        let s = compute_stats(&e).unwrap();
        assert_eq!(s.mean.as_slice(), &[0.0, 0.0]);
        assert_abs_diff_eq!(s.cov[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.cov[(1, 1)], 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(s.cov[(0, 1)], 0.0);
    }

    #[test]
    fn stats_biased_variant() {
        let s = compute_stats_with_ddof(&set(&[&[0.0], &[2.0]]), 0).unwrap();
        assert_eq!(s.cov[(0, 0)], 1.0);
    }

    #[test]
    fn stats_needs_two_frames() {
        let err = compute_stats(&set(&[&[1.0, 2.0]])).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { got: 1, .. }));
    }

    #[test]
    fn concat_shapes() {
        let a = EmbeddingSet::new("a", vec![0.0; 80], 10, 8).unwrap();
        let b = EmbeddingSet::new("b", vec![1.0; 40], 5, 8).unwrap();
        let c = concat(&[a.clone(), b]).unwrap();
        assert_eq!((c.n_frames(), c.dim()), (15, 8));
        assert_eq!(c.row(10), &[1.0; 8]);

        assert!(matches!(concat(&[]), Err(Error::EmptyInput(_))));
        let x = EmbeddingSet::new("x", vec![0.0; 24], 3, 8).unwrap();
        let y = EmbeddingSet::new("y", vec![0.0; 27], 3, 9).unwrap();
        assert!(matches!(concat(&[x, y]), Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_non_finite() {
        let mut data = vec![0.0; 40];
        data[3 * 8 + 7] = f64::NAN;
        let err = EmbeddingSet::new("n", data, 5, 8).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 3, col: 7, .. }));
        assert!(err.to_string().contains("row 3"));
    }

    #[test]
    fn explicit_stats_must_be_symmetric() {
        let mean = DVector::from_vec(vec![0.0, 0.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            GaussianStats::new(mean, cov, 10),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn cap_frames_is_even_stride() {
        let e = EmbeddingSet::new("c", (0..10).map(f64::from).collect(), 10, 1).unwrap();
        let c = e.cap_frames(5).unwrap();
        assert_eq!(c.as_slice(), &[0.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(e.cap_frames(20).unwrap(), e);
    }
}
