//! Finite-precision Fourier analysis for spectral neural operators.
//!
//! * [`precision`]: number systems and the rounding map.
//! * [`grid`]: hypercube discretizations and sampled fields.
//! * [`spectral`]: forward/inverse transforms under a precision system.
//! * [`error_lab`]: discretization and precision error functionals and bounds.
//! * [`contract`]: einsum parsing, pairwise contraction planning and execution.
//! * [`fno`]: a toy spectral-convolution layer trained at desk scale.

pub mod contract;
pub mod error;
pub mod error_lab;
pub mod fno;
pub mod grid;
pub mod precision;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result, Stage};
pub use grid::{build_grid, sample, Grid, ScalarField, TestFunction};
pub use precision::PrecisionSystem;
pub use spectral::{FreqIndex, ModeMask, Spectrum};
