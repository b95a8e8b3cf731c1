//! Sampled interface heights and physical parameters.

use crate::error::{MuskatError, Result};
use crate::grid::{Grid, Grid1D, Grid2D};
use crate::summation;

/// Interface height `f` sampled on a grid. Samples are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<G: Grid> {
    grid: G,
    samples: Vec<f64>,
}

pub type ScalarField1D = Field<Grid1D>;
pub type ScalarField2D = Field<Grid2D>;

pub(crate) fn check_finite(samples: &[f64]) -> Result<()> {
    match samples.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(MuskatError::NonFinite {
            index,
            value: samples[index],
        }),
        None => Ok(()),
    }
}

impl<G: Grid> Field<G> {
    pub fn new(grid: G, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(MuskatError::Config(format!(
                "field has {} samples but the grid has {} nodes",
                samples.len(),
                grid.len()
            )));
        }
        check_finite(&samples)?;
        Ok(Self { grid, samples })
    }

    /// Skips the finiteness scan; callers guarantee the invariant or check it later.
    pub(crate) fn from_raw(grid: G, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), grid.len());
        Self { grid, samples }
    }

    pub fn zeros(grid: G) -> Self {
        Self::from_raw(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: G, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn grid(&self) -> &G {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.samples.iter().map(|&v| f(v)).collect())
    }

    /// `self + scale * other`, samplewise.
    pub fn axpy(&self, scale: f64, other: &Self) -> Self {
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a + scale * b)
            .collect();
        Self::from_raw(self.grid, samples)
    }

    pub fn scaled(&self, scale: f64) -> Self {
        Self::from_raw(self.grid, self.samples.iter().map(|v| scale * v).collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn linf(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        summation::sum(&self.samples) / self.samples.len() as f64
    }

    /// Lowest-index maximum; `tie` is set when another node attains the same value.
    pub fn argmax(&self) -> Extremum {
        extremum(&self.samples, |a, b| a > b)
    }

    /// Lowest-index minimum, with the same tie convention as [`Field::argmax`].
    pub fn argmin(&self) -> Extremum {
        extremum(&self.samples, |a, b| a < b)
    }

    pub fn is_constant(&self) -> bool {
        let first = self.samples[0];
        self.samples.iter().all(|&v| v == first)
    }
}

/// Location and value of a grid extremum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub index: usize,
    pub value: f64,
    pub tie: bool,
}

fn extremum(samples: &[f64], better: impl Fn(f64, f64) -> bool) -> Extremum {
    let mut index = 0;
    let mut value = samples[0];
    let mut tie = false;
    for (i, &v) in samples.iter().enumerate().skip(1) {
        if better(v, value) {
            index = i;
            value = v;
            tie = false;
        } else if v == value {
            tie = true;
        }
    }
    Extremum { index, value, tie }
}

impl ScalarField1D {
    /// Samples `f(x_j)` at the grid coordinates.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, (0..grid.n()).map(|j| f(grid.coordinate(j))).collect())
    }

    /// Periodic shift by whole nodes: `result[j] = self[j - shift]`.
    pub fn shift_nodes(&self, shift: isize) -> Self {
        let n = self.len() as isize;
        let samples = (0..n)
            .map(|j| self.samples[(j - shift).rem_euclid(n) as usize])
            .collect();
        Self::from_raw(*self.grid(), samples)
    }

    /// `result(x) = self(-x)` on the node set.
    pub fn reflect(&self) -> Self {
        let n = self.len();
        let samples = (0..n).map(|j| self.samples[(n - j) % n]).collect();
        Self::from_raw(*self.grid(), samples)
    }
}

impl ScalarField2D {
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut samples = Vec::with_capacity(grid.n1() * grid.n2());
        for i1 in 0..grid.n1() {
            for i2 in 0..grid.n2() {
                let (x1, x2) = grid.coordinate(i1, i2);
                samples.push(f(x1, x2));
            }
        }
        Self::new(grid, samples)
    }

    /// Extends a 1-D profile constantly along axis 2.
    pub fn extend_along_axis2(profile: &ScalarField1D, grid: Grid2D) -> Result<Self> {
        if profile.len() != grid.n1() {
            return Err(MuskatError::Config(format!(
                "profile has {} samples but axis 1 has {}",
                profile.len(),
                grid.n1()
            )));
        }
        let samples = profile
            .samples()
            .iter()
            .flat_map(|&v| std::iter::repeat(v).take(grid.n2()))
            .collect();
        Ok(Self::from_raw(grid, samples))
    }

    /// Swaps the two axes (square grids only).
    pub fn transpose(&self) -> Result<Self> {
        let g = *self.grid();
        if g.n1() != g.n2() || g.length1() != g.length2() {
            return Err(MuskatError::Config("transpose needs a square grid".into()));
        }
        let n = g.n1();
        let mut samples = vec![0.0; n * n];
        for i1 in 0..n {
            for i2 in 0..n {
                samples[i2 * n + i1] = self.samples()[i1 * n + i2];
            }
        }
        Ok(Self::from_raw(g, samples))
    }

    pub fn at(&self, i1: usize, i2: usize) -> f64 {
        self.samples()[self.grid().index(i1, i2)]
    }
}

/// Stability class of a density configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Denser fluid below.
    Stable,
    /// Denser fluid above.
    Unstable,
    /// Equal densities; the interface does not move.
    Degenerate,
}

/// Fluid densities above (`rho1`) and below (`rho2`) the interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    rho1: f64,
    rho2: f64,
}

impl PhysParams {
    pub fn new(rho1: f64, rho2: f64) -> Result<Self> {
        for (name, v) in [("rho1", rho1), ("rho2", rho2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MuskatError::Config(format!(
                    "{name} must be a nonnegative finite density, got {v}"
                )));
            }
        }
        Ok(Self { rho1, rho2 })
    }

    /// Parameters with the given density jump `rho2 - rho1`, the lighter
    /// fluid at density zero.
    pub fn with_jump(rho_bar: f64) -> Result<Self> {
        if rho_bar >= 0.0 {
            Self::new(0.0, rho_bar)
        } else {
            Self::new(-rho_bar, 0.0)
        }
    }

    pub fn rho1(&self) -> f64 {
        self.rho1
    }
    pub fn rho2(&self) -> f64 {
        self.rho2
    }

    /// Density jump `rho2 - rho1`.
    pub fn rho_bar(&self) -> f64 {
        self.rho2 - self.rho1
    }

    pub fn regime(&self) -> Regime {
        let jump = self.rho_bar();
        if jump > 0.0 {
            Regime::Stable
        } else if jump < 0.0 {
            Regime::Unstable
        } else {
            Regime::Degenerate
        }
    }
}

/// Summary norms of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub linf: f64,
    pub l1: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub max_slope: f64,
}

/// Grid extrema, refined-quadrature `L1` norm, mean and maximal slope.
pub fn norms<G: Grid>(field: &Field<G>) -> Norms {
    let grid = field.grid();
    let s = field.samples();
    let max = field.argmax().value;
    let min = field.argmin().value;
    Norms {
        linf: max.abs().max(min.abs()),
        l1: grid.abs_integral(s),
        mean: field.mean(),
        min,
        max,
        max_slope: grid.max_slope(s),
    }
}
