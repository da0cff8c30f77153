//! Numerical laboratory for the weighted quadratic variation of
//! trifractional Brownian motion and n-th order fractional Brownian motion.
//!
//! The crate covers closed-form covariances ([`process`]), exact increment
//! covariances and their Isserlis moments ([`increments`], [`bounds`]),
//! exact and quadrature-based path simulation ([`simulate`]), quadratic
//! variation statistics and the self-similarity estimator ([`qvar`]), and
//! the `qvarlab` command-line experiments ([`experiment`]).

pub mod bounds;
pub mod error;
pub mod experiment;
pub mod guards;
pub mod increments;
pub mod linalg;
pub mod process;
pub mod qvar;
pub mod simulate;
pub mod special;
pub mod sum;

pub use error::{Error, Result};
pub use guards::Guards;
pub use increments::{
    double_sequence, double_sequence_entry, exact_moments, phi, phi_matrix, CrossIncrementMatrix, DoubleSequenceTable,
    DyadicGrid, MomentPair, WeightScheme,
};
pub use process::{
    mixed_partial_cov_tri, psi_asymptotic_coeff, AsymptoticCoeff, ProcessKind, ProcessSpec,
};
pub use qvar::{
    classify_convergence, estimate_hk, estimate_hk_exact_proxy, weighted_qv, Classification,
    HkEstimate, QvSweepResult,
};
pub use simulate::{simulate_increments, simulate_lei_nualart, PathEnsemble, QuadratureSpec};
