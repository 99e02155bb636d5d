//! Numerical laboratory for a rough volatility model driven by the
//! Riemann-Liouville kernel K(t, s) = (t - s)^(H - 1/2), H in (0, 1/2].
//!
//! The crate provides, in dependency order:
//!
//! - [`kernel`]: kernel evaluation and the weighted kernel integrals behind
//!   every covariance and scaling computation;
//! - [`gaussian`]: exact joint sampling of the Volterra process together with
//!   its driving Brownian increments via Cholesky factorization;
//! - [`model`]: volatility and payoff specifications with analytic
//!   derivatives and growth metadata;
//! - [`moments`]: closed-form Gaussian moments and the analytic weak-error
//!   evaluator for quadratic payoffs;
//! - [`scheme`]: left-point Euler discretization of the log-price on exact
//!   volatility samples, including coupled coarse/fine evaluation;
//! - [`rates`]: weak and strong convergence-rate experiments with noise-gated
//!   log-log regression;
//! - [`ppde`]: Monte Carlo estimators for the path-dependent PDE solution,
//!   its pathwise derivatives, and the PPDE residual;
//! - [`telescope`]: the telescopic decomposition check connecting the weak
//!   error to time-integrated second derivatives.
//!
//! Everything stochastic draws from seeded per-path ChaCha streams ([`rng`]),
//! so all results are reproducible bit for bit regardless of batching or
//! thread count.

pub mod error;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod quad;
pub mod ppde;
pub mod rng;
pub mod rates;
pub mod scheme;
pub mod telescope;
pub mod gaussian;

pub use error::{Error, Result};
pub use grid::{RefineMap, UniformGrid};
pub use kernel::KernelSpec;
