//! Quantitative singular value decompositions and dominated splittings of
//! finite-dimensional linear cocycles, with certified bounds.
//!
//! Normed spaces are `R^n` with an `l^p` norm or the Euclidean (Hilbert)
//! norm. Hilbert mode is the exact path; `l^p` quantities that require a
//! non-convex supremum are reported as brackets `[lower, upper]`.

pub mod certify;
pub mod cocycle;
pub mod ensembles;
pub mod error;
pub mod exterior;
pub mod linalg;
pub mod multilinear;
pub mod norms;
pub mod oracle;
pub mod splitting;
pub mod subspace_geometry;
pub mod svd_split;

pub use error::{Error, Result};
pub use norms::NormSpec;
pub use subspace_geometry::Subspace;
