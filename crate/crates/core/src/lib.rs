//! Pure entangled PEPS that are separable with respect to restricted local
//! state spaces, and the local hidden variable sampler they admit.

pub mod basis;
pub mod config;
pub mod decomposition;
pub mod dual;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod oracle;
pub mod peps;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
