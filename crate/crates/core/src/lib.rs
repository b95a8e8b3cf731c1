//! Numerical laboratory for the Muskat problem with equal viscosities.
//!
//! The crate evolves the graph `x -> f(x, t)` of the interface between two
//! fluids of densities `rho1` (above) and `rho2` (below) in a porous medium,
//! in one and two horizontal dimensions, and checks the decay estimates
//! that hold for the stable configuration `rho2 > rho1`.

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod kernels;
pub mod muskat1d;
pub mod muskat2d;
pub mod spectral;
pub mod summation;
pub mod timestepping;

pub use error::{MuskatError, Result};
pub use field::{norms, Extremum, Field, Norms, PhysParams, Regime, ScalarField1D, ScalarField2D};
pub use grid::{make_grid, make_grid_2d, DomainKind, Grid, Grid1D, Grid2D};
pub use spectral::{
    derivative, derivative_2d, inverse_transform, inverse_transform_2d, lambda_op, linear_evolve,
    riesz, transform, transform_2d, Spectrum1D, Spectrum2D,
};
