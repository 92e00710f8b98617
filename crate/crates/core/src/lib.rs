//! Numerical workbench for hamiltonization, second quantization, the
//! quantization hierarchy and the eclectic reduction of k-local Hamiltonians.

pub mod eclectic;
pub mod error;
pub mod fock;
pub mod hamiltonization;
pub mod hierarchy;
pub mod hilbert;
pub mod hspec;
pub mod open;
pub mod random;
pub mod report;
pub mod verify;

pub use error::{Error, Result};
pub use hilbert::{Operator, SpaceShape, StateVector, C64};
