//! Derivative estimation for function-valued parameters identified by moment
//! conditions.
//!
//! Many estimands in applied statistics are *functions* θ_o(u) of an index u —
//! quantile-regression coefficients indexed by the quantile level,
//! distribution-regression coefficients indexed by the response threshold —
//! and are defined pointwise by a moment condition E[m(Z, θ, u)] = 0.  This
//! crate estimates the **derivative of the parameter with respect to the
//! index**, θ_o^u(u) = ∂θ_o(u)/∂u, via the implicit-function representation
//!
//! ```text
//! θ̂^u(u) = − M̂^θ(u)⁻¹ · M̂^u(u),
//! ```
//!
//! where M̂^θ and M̂^u are kernel-smoothed estimates of the two partial
//! derivatives of the moment function.  The derivative is the gateway to a
//! family of downstream objects: conditional densities and density-quantiles,
//! sparsity-based (Powell-type) variance estimates, auction valuation
//! quantiles, and quantile partial effects.
//!
//! # Modules
//!
//! * [`kernel`] — kernel families, the pseudo-kernel K̄, truncated moments,
//!   and the bias/variance constants built from them.
//! * [`quad`] — adaptive Gauss–Kronrod quadrature, the numeric oracle behind
//!   population-level targets.
//! * [`data`] — dataset container and CSV loading.
//! * [`qr`] — quantile-regression fits (interior-point) and coefficient
//!   processes.
//! * [`dr`] — distribution-regression (logit link) fits and processes.
//! * [`deriv`] — the derivative engine: smoothed moment Jacobians M̂^θ and
//!   index derivatives M̂^u, their assembly into θ̂^u, and variance
//!   estimators.
//! * [`apps`] — downstream estimators built on θ̂ and θ̂^u.
//! * [`competitors`] — alternative derivative estimators used as benchmarks.
//! * [`mc`] — data-generating process, population oracles, and the Monte
//!   Carlo study harness.
//!
//! The `momderiv` binary wraps these modules in a command-line interface; the
//! `examples/` directory shows one worked end-to-end use per capability.

pub mod apps;
pub mod competitors;
pub mod data;
pub mod deriv;
pub mod dr;
pub mod kernel;
pub mod mc;
pub mod qr;
pub mod quad;

pub use data::{Dataset, IndexInterval};
pub use deriv::{DerivEstimate, MomentJacobian, MomentUDeriv};
pub use kernel::{KernelConstants, KernelFamily, KernelSpec};
pub use qr::{CoefEstimate, CoefProcess};

/// Crate-wide error type.
///
/// Operational failures (bad input data, ill-conditioned linear algebra,
/// solver breakdown, I/O) are reported through this enum; contract violations
/// by the *caller* (e.g. a cut fraction outside its documented domain) panic
/// instead.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data fails validation: shape mismatch, non-finite entries,
    /// rank-deficient design, and similar.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// An argument lies outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An iterative solver exhausted its iteration budget without meeting the
    /// convergence criterion.
    #[error("{what} did not converge within {iterations} iterations")]
    NoConvergence {
        /// Human-readable name of the computation that failed.
        what: String,
        /// Iterations consumed before giving up.
        iterations: usize,
    },

    /// A matrix that must be inverted is singular or numerically too
    /// ill-conditioned to trust.
    #[error("singular or ill-conditioned matrix in {0}")]
    IllConditioned(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// CSV parse or serialization failure.
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
