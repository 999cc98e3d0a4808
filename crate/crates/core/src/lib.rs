//! Simulator for a password lock built on dark states of atoms in an optical
//! cavity.
//!
//! The secret key is a pairing of `N` two-level atoms; the lock's public
//! state is the product of dark singlets over that pairing. A password is
//! checked by moving its pairs, one at a time, into a second cavity while
//! detectors listen for photons.
//!
//! Modules, bottom-up:
//! - [`state`]: basis indexing, excitation sectors and state vectors.
//! - [`hamiltonian`]: Tavis-Cummings Hamiltonian and unitary evolution.
//! - [`dark`]: collective lowering operator, dark states, singlet keys.
//! - [`prep`]: Stark-jump singlet preparation and its yield.
//! - [`protocol`]: two-cavity password verification.
//! - [`security`]: key-space counting and false accept/reject estimates.

pub mod dark;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod operator;
pub mod prep;
pub mod protocol;
pub mod rng;
pub mod security;
pub mod state;

pub use error::{Error, Result};
