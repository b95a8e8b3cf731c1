//! Shared fixtures for the benchmarks.

use muskat_core::{Grid1D, Grid2D, ScalarField1D, ScalarField2D};

pub fn profile_1d(n: usize) -> ScalarField1D {
    let g = Grid1D::torus(n).expect("valid grid");
    ScalarField1D::from_fn(g, |x| 0.3 * x.cos() + 0.1 * (2.0 * x).sin()).expect("finite")
}

pub fn profile_2d(n: usize) -> ScalarField2D {
    let g = Grid2D::torus(n, n).expect("valid grid");
    ScalarField2D::from_fn(g, |x, y| 0.2 * x.cos() * y.cos() + 0.05 * (x + 2.0 * y).sin())
        .expect("finite")
}
