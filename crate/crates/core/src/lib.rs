//! Karhunen-Loeve decompositions of Gaussian processes by the Nystrom method,
//! optimal functional quantizers built on them, and quantization-based
//! stratified Monte-Carlo for option pricing in the fractional Black-Scholes
//! model.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`nystrom`] and [`fbm`] discretize the covariance eigenproblem
//!    `int_0^T Gamma(t,s) f(s) ds = lambda f(t)` with a quadrature rule,
//!    solve the symmetrized matrix problem ([`eigh`]) and sharpen the
//!    results by Richardson-Romberg extrapolation.
//! 2. [`quantizer`] turns the leading eigenmodes into functional quantizers:
//!    Newton-optimized one-dimensional Gaussian codebooks combined through a
//!    blind product-decomposition search, or a multivariate Lloyd codebook.
//! 3. [`strat`] uses the product quantizer cells as Monte-Carlo strata with
//!    exact conditional-Gaussian sampling, and [`pricing`] prices vanilla and
//!    discrete barrier options in the fractional Black-Scholes model on top
//!    of it.

pub mod eigh;
pub mod error;
pub mod expansion;
pub mod fbm;
pub mod gaussian;
pub mod kernels;
pub mod nystrom;
pub mod pricing;
pub mod quadrature;
pub mod quantizer;
pub mod stats;
pub mod strat;

pub use error::{Error, Result};
