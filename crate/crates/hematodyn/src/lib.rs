//! Analysis and simulation of a two-compartment blood stem cell model with a
//! cell-cycle delay.
//!
//! The state is the pair `(S, N)` of total and nonproliferating stem cell
//! populations. Nonproliferating cells enter the proliferating phase at a
//! per-capita rate `beta(S)` that decreases with the total population, divide
//! after a lag of `tau` days, and both compartments die at rate `delta`.
//!
//! The crate is organized around four concerns:
//!
//! - [`model`]: the introduction rate, parameters, steady states, and
//!   admissible initial histories;
//! - [`chareq`]: the delay-dependent characteristic equation of the linearized
//!   system: crossing delays, crossing frequencies, transversality signs, and
//!   the assembled stability chart;
//! - [`dde`]: a fixed-step method-of-steps integrator with dense output;
//! - [`analysis`]: trajectory post-processing (convergence/oscillation
//!   classification, period estimation, a decay monitor, positivity audit).
//!
//! The [`cli`] module backs the `hematodyn` binary, which exposes the above as
//! subcommands emitting CSV and JSON.

pub mod analysis;
pub mod chareq;
pub mod cli;
pub mod dde;
pub mod model;

mod numeric;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The positive steady state does not exist for the given parameters.
    #[error("no positive steady state: {0}")]
    NoPositiveSteadyState(String),

    /// Invalid configuration (construction-time or CLI-level).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The integrator produced a non-finite or absurdly large state. The model
    /// is dissipative, so this signals a bug or inadmissible inputs.
    #[error("numerical blow-up at t = {t} days")]
    Blowup { t: f64 },

    /// A state component went negative beyond roundoff tolerance, violating
    /// the nonnegativity guarantee for nonnegative histories.
    #[error("state became negative ({value:e}) at t = {t} days")]
    NegativeState { t: f64, value: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
