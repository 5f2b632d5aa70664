//! Integer factoring through period finding: classical and quantum-style
//! variants of Pollard's rho, Shor's algorithm and its extension, with an
//! exact classical backend and an amplitude-exact circuit simulator.

pub mod algorithms;
pub mod arith;
pub mod collisions;
pub mod decimal;
pub mod error;
pub mod par;
pub mod quantum_sim;
pub mod sequences;
pub mod verify;

pub use arith::{Natural, PrimePower, Residue};
pub use error::{Error, Result};
pub use par::Execution;
