//! Numerical laboratory for linear-quantized massive MIMO downlink precoding.
//!
//! Three models of the received signal are provided: the original
//! channel model `y = eta H q(P s) + n`, a statistically equivalent
//! model driven by Gaussian vectors and Householder reflections, and the
//! scalar asymptotic model. On top of these sit SINR/SEP estimators, the
//! explicit stability bounds and tail cascades, and solvers for the
//! asymptotic and finite-dimensional SINR maximization problems.

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod models;
pub mod optimizer;
pub mod quantizer;
pub mod spectral;
pub mod stats;
pub mod stochastic;

pub use error::{QprecError, Result};
pub use num_complex::Complex64;

/// Dense complex column vector.
pub type ComplexVector = nalgebra::DVector<Complex64>;
/// Dense complex matrix.
pub type ComplexMatrix = nalgebra::DMatrix<Complex64>;
