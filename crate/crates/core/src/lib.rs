pub mod basis;
pub mod beat;
pub mod error;
pub mod experiment;
pub mod format;
pub mod hamiltonian;
pub mod params;
pub mod perturbation;
pub mod sem;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use params::{ModelKind, ModelParams};
