//! Pseudo-spectral diagnostics for conservation of energy and helicity in
//! ideal incompressible flow on the periodic torus.

pub mod error;
pub mod fft;
pub mod field;
pub mod fields;
pub mod fit;
pub mod flux;
pub mod grid;
pub mod mollify;
pub mod norms;
pub mod ops;
pub mod partition;
pub mod serde_ext;
pub mod solver;
pub mod tfld;
pub mod verify;

pub use error::{Error, Result};
pub use field::TorusField;
pub use grid::TorusGrid;
