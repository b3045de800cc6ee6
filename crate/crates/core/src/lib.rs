//! Numerics for decoupling by random two-qubit circuits.
//!
//! The crate is organised around the objects that appear when the second
//! moment of a random circuit is written in the Pauli basis:
//!
//! * [`pauli`] - bit-packed Pauli strings, the state space of the string chain.
//! * [`weight_chain`] - the birth-death chain on Pauli weights, exact powering,
//!   hitting times and the accelerated walk.
//! * [`string_chain`] - the full chain on Pauli strings, its weight-preserving
//!   and weight-changing parts, the two-phase sampler and the support
//!   intersection chain.
//! * [`gambler`] - hitting probabilities for walks with site-dependent drift.
//! * [`circuit`] - sequential random circuits, greedy leveling and coverage.
//! * [`decoupler`] - a dense density-matrix engine for a handful of qubits.
//! * [`stats`] - seeded per-trial streams and mergeable accumulators shared by
//!   every Monte Carlo routine.
//!
//! Every Monte Carlo entry point takes a master seed. Trial `i` draws from its
//! own ChaCha8 stream (`seed`, stream `i`), so results do not depend on how
//! trials are scheduled across threads.

pub mod circuit;
pub mod decoupler;
pub mod error;
pub mod gambler;
pub mod pauli;
pub mod stats;
pub mod string_chain;
pub mod weight_chain;

pub use error::{Error, Result};
pub use pauli::PauliString;
