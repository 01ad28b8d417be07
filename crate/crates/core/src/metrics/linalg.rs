use nalgebra::{DMatrix, SymmetricEigen};

use crate::embedding::{check_symmetric, symmetrize};
use crate::error::{Error, Result};

/// Eigenvalues below `-PSD_CLAMP_REL * λ_max` mark a matrix as not PSD;
/// negative eigenvalues above that are rounding noise and clamp to 0.
pub const PSD_CLAMP_REL: f64 = 1e-8;

const EIGEN_EPS: f64 = f64::EPSILON;
const EIGEN_MAX_ITER: usize = 10_000;

/// Symmetric eigendecomposition, failing instead of looping forever.
pub(crate) fn sym_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))
}

/// Eigenvalues of a symmetric matrix with rounding-level negatives clamped to 0.
pub(crate) fn clamped_eigenvalues(values: &[f64]) -> Result<Vec<f64>> {
    let lambda_max = values.iter().cloned().fold(0.0f64, f64::max);
    let floor = -PSD_CLAMP_REL * lambda_max;
    values
        .iter()
        .map(|&v| {
            if v >= 0.0 {
                Ok(v)
            } else if v >= floor {
                Ok(0.0)
            } else {
                Err(Error::Validation(format!(
                    "matrix is not positive semidefinite (eigenvalue {v:e}, largest {lambda_max:e})"
                )))
            }
        })
        .collect()
}

/// Principal square root of a symmetric positive semidefinite matrix.
///
/// Computed as `V · diag(√λ) · Vᵀ` from the symmetric eigendecomposition.
pub fn matrix_sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "matrix square root needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    check_symmetric(m)?;
    let eig = sym_eigen(&symmetrize(m))?;
    let roots: Vec<f64> = clamped_eigenvalues(eig.eigenvalues.as_slice())?
        .into_iter()
        .map(f64::sqrt)
        .collect();
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, r) in roots.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*r);
    }
    Ok(symmetrize(&(scaled * v.transpose())))
}
