//! Simulation and classification stack for measurement-only brickwork circuits.
//!
//! The crate is organized around the data flow of the tool:
//!
//! * [`sim`] — exact statevector simulation of the weak-measurement circuit,
//!   trajectory sampling and entanglement diagnostics,
//! * [`tensor`] — a small dense-tensor engine with reverse-mode differentiation
//!   and an Adam optimizer,
//! * [`model`] — the CNN+attention set classifier and the MLP baseline,
//! * [`train`] — labeled pools and the two training protocols,
//! * [`eval`] — ensemble voting, accuracy statistics and phase-diagram
//!   reconstruction,
//! * [`io`] — binary dataset/checkpoint formats and run manifests,
//! * [`svg`] — static figure emission,
//! * [`cli`] — the `mipt` command-line surface.

pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod rng;
pub mod sim;
pub mod svg;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
