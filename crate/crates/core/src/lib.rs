//! Simulation and empirical verification toolkit for Markov chains driven
//! by an exogenous stationary environment.
//!
//! The chain `Y` follows `P(Y_t in A | X, Y_{t-1}, ...) = P_{X_{t-1}}(Y_{t-1}, A)`
//! for a family of kernels selected by the environment `X`. The crate
//! provides:
//!
//! - seeded, window-consistent environment realizations ([`environment`]);
//! - kernel families with drift and minorization data ([`kernel`]) and the
//!   autoregressive example models that produce them ([`models`]);
//! - numerical checks of the drift / contraction conditions and Lyapunov
//!   exponents of random matrix products ([`conditions`]);
//! - extraction of good times at which the environment keeps the drift
//!   products and the minorization floor under simultaneous control
//!   ([`goodtimes`]);
//! - the three-branch coupling construction, coalescence statistics and
//!   return-time moment checks ([`coupling`]);
//! - backward-iteration approximation of the randomly invariant laws, the
//!   stationary path sampler and the law of large numbers ([`stationary`]);
//! - exact finite-state oracles validating all of the above ([`oracle`]).
//!
//! All randomness flows through splittable counter-based streams
//! ([`stream`]), so every estimate is reproducible bit-for-bit and
//! independent of thread count.

pub mod conditions;
pub mod coupling;
pub mod environment;
pub mod error;
pub mod expr;
pub mod goodtimes;
pub mod kernel;
pub mod models;
pub mod oracle;
pub mod stationary;
pub mod stats;
pub mod stream;

pub use environment::{EnvPoint, EnvWindowId, EnvironmentRealization, EnvironmentSpec};
pub use error::{CoreError, Result};
pub use kernel::{DriftSpec, KernelFamily, MinorizationSpec, State, StateSpace};
pub use models::ModelBundle;
pub use oracle::DistributionVector;
pub use stats::Estimate;
pub use stream::StreamKey;
