//! Numerical toolkit for a population structured by space and a phenotypic
//! trait under an environmental cline: principal eigenvalues deciding
//! extinction versus invasion, the minimal wave speed, travelling-wave
//! profiles through a box-problem homotopy, fast waves bracketed by
//! sub/supersolutions, and time-dependent runs measuring spreading and
//! extinction rates.

pub mod discretize;
pub mod eigen;
pub mod error;
pub mod linalg;
pub mod model;
pub mod simulate;
pub mod waves;

pub use error::{Error, Result};
