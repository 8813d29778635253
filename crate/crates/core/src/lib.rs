//! Simulator and numerical-analysis toolkit for a prepare-and-measure QKD
//! protocol that carries each logical qubit on a two-photon phase-flip
//! error-rejection code.
//!
//! The crate is organized around the protocol's data path:
//!
//! * [`pauli`] — phase-free Pauli algebra, error distributions, seeded
//!   random streams.
//! * [`code`] — the two-qubit code: encoding, the parity acceptance rule,
//!   residual errors, and the induced transform on error distributions.
//! * [`postprocess`] — classical post-processing: parity-pair and
//!   parity-pooling purification steps, feasibility bounds for the final
//!   pooling step, CSS key rates, and the bounded schedule search.
//! * [`threshold`] — certified noise thresholds along channel families,
//!   with and without the code-level decode stage.
//! * [`montecarlo`] — bit-level protocol simulation with channel noise,
//!   attacks, rate estimation, abort policy and key accounting.
//! * [`optics`] — a polarization-optics model of the transmitter and
//!   receiver, used to check the abstract decode semantics against raw
//!   two-photon amplitude propagation.
//! * [`cli`] — the `qpfer` command-line tool built from the above.

pub mod cli;
pub mod code;
pub mod error;
pub mod montecarlo;
pub mod optics;
pub mod pauli;
pub mod postprocess;
pub mod threshold;

pub use code::{
    bob_decode_outcome, decoded_distribution, encode, parity_survives, residual_error,
    residual_flips, Basis, CodeState, DecodeOutcome, JointError, LogicalState, ProtocolVariant,
};
pub use error::{Error, Result};
pub use pauli::{ErrorDistribution, PauliOp, RngStream};
