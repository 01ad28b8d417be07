//! Perceptual audio quality measurement in embedding space.
//!
//! * [`embedding`]: embedding matrices, Gaussian statistics, NPY storage
//! * [`metrics`]: FAD, FAD∞, and scaled unbiased MMD with an RBF kernel
//! * [`mel`]: log-mel reference embeddings, Mel-loss, WAV I/O
//! * [`tonal`]: synthetic tonal excerpts and balanced training batches
//! * [`eval`]: correlation of distances with MUSHRA scores
//!
//! ```no_run
//! use audiodist::embedding::load_embeddings;
//! use audiodist::{fad, mmd_scaled, RbfKernelConfig};
//!
//! # fn main() -> audiodist::Result<()> {
//! let x = load_embeddings("ref.npy".as_ref(), None)?;
//! let y = load_embeddings("test.npy".as_ref(), Some(x.dim()))?;
//! let f = fad(&x, &y)?.value;
//! let m = mmd_scaled(&x, &y, &RbfKernelConfig::default())?;
//! println!("FAD {f:.4}  MMD {:.4} (sigma {:?})", m.value, m.sigma_used);
//! # Ok(())
//! # }
//! ```

pub mod embedding;
pub mod error;
pub mod eval;
pub mod mel;
pub mod metrics;
pub mod numeric;
pub mod tonal;

pub use embedding::{compute_stats, concat, EmbeddingSet, GaussianStats};
pub use error::{Error, Result};
pub use metrics::{fad, mmd_scaled, DistanceResult, Metric, RbfKernelConfig};

/// Version of the manifest, report and batch JSON layouts.
pub const SCHEMA_VERSION: u32 = 1;
