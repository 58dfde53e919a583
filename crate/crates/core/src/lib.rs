//! Calogero-Moser systems and their sl(N) top counterparts: exact Lax operators,
//! gauge degenerations, Hamiltonian extraction and numerical verification.

pub mod error;
pub mod scalar;
pub mod glpoly;
pub mod zseries;
pub mod linalg;
pub mod lax;
pub mod elliptic;
pub mod invariants;
pub mod rational_limit;
pub mod verify;
pub mod cli;

pub use error::{Error, Result};
