pub mod autodiff;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod locking;
pub mod memory;
pub mod real;
pub mod ssm;
pub mod splat;
pub mod symplectic;
pub mod training;

pub use error::{Error, Result};
