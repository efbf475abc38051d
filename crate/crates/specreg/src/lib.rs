pub mod cli;
pub mod error;
pub mod estimators;
pub mod filters;
pub mod inference;
pub mod io;
pub mod simulation;
pub mod solvers;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
