//! Two-dimensional immersed-boundary fluid-structure solvers.

pub mod assembly;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod mesh;
pub mod output;
pub mod schemes;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
