//! Loss-tolerant phase error estimation for quantum key distribution with
//! imperfect sources.
//!
//! The crate recovers the detection statistics of states that were never
//! sent ("virtual" states) from the statistics of the states that were, by
//! solving small linear systems over the Pauli transmission coefficients of
//! Bob's effective measurement. On top of that it carries:
//!
//! - [`qstate`]: qubit states, Pauli/Bloch algebra, phase-encoded source
//!   states with modulation errors, and virtual-state ensembles.
//! - [`estimator`]: the linear solves for three-state, four-state and
//!   measurement-device-independent protocols, and the phase error rates.
//! - [`channel`]: the analytic fiber/detector model for phase-randomized weak
//!   coherent pulses in the infinite-decoy limit.
//! - [`keyrate`]: binary entropy, the asymptotic key rate, intensity
//!   optimization and distance sweeps.
//! - [`montecarlo`]: an event-level i.i.d. simulator against arbitrary Kraus
//!   channels and POVMs.
//! - [`config`] and [`cli`]: the command-line front end used by the
//!   `losstol` binary.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimator;
pub mod keyrate;
mod linalg;
pub mod montecarlo;
pub mod qstate;

pub use error::{Error, Result};
