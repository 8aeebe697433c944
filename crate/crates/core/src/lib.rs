//! Simulation and analysis toolkit for averaged three-phase DC/AC converters.
//!
//! The crate models a two-level voltage-source converter behind an RLC output
//! filter in the power-invariant αβ frame, together with the grid-forming
//! controller families built on top of it: classical inner-loop cascades,
//! droop references, virtual oscillators, and the DC-voltage matching
//! controller that renders the converter structurally equivalent to a
//! synchronous machine. Closed-form steady-state theory, passivity audits,
//! and Lyapunov/internal-model certificates live in [`analysis`].

pub mod analysis;
pub mod classic;
pub mod frames;
pub mod matching;
pub mod network;
pub mod outer;
pub mod plant;
pub mod scenario;
pub mod sim;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("state diverged (non-finite) at t = {t_last_valid} s")]
    Divergence { t_last_valid: f64 },

    #[error("singular operation: {0}")]
    Singular(String),

    #[error("solver did not converge: best residual {residual}")]
    SolverNoConvergence { residual: f64 },

    #[error("signal amplitude below threshold; estimate undefined")]
    AmplitudeUndefined,

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
