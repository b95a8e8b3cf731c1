//! Uniform sampling grids.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{MuskatError, Result};
use crate::spectral;

/// Which continuous domain a grid discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    /// Periodic interval (or torus) of the given length.
    PeriodicTorus,
    /// The real line, windowed to a box of the given width. Fields must
    /// decay towards the box edges; the box is periodically embedded.
    TruncatedLine,
}

impl DomainKind {
    pub fn name(self) -> &'static str {
        match self {
            DomainKind::PeriodicTorus => "periodic",
            DomainKind::TruncatedLine => "line",
        }
    }
}

/// Minimum box width for a truncated line.
pub const MIN_LINE_LENGTH: f64 = 4.0 * PI;

/// Absolute size a truncated-line field may reach in the outer boundary band.
pub const LINE_DECAY_TOLERANCE: f64 = 1e-8;

/// Fraction of the box, at each edge, where the decay tolerance is enforced.
pub const LINE_DECAY_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    n: usize,
    length: f64,
    spacing: f64,
    kind: DomainKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    n1: usize,
    n2: usize,
    length1: f64,
    length2: f64,
    spacing1: f64,
    spacing2: f64,
}

fn check_axis(n: usize, length: f64) -> Result<()> {
    if n < 8 {
        return Err(MuskatError::Config(format!(
            "grid needs at least 8 samples per axis, got {n}"
        )));
    }
    if n % 2 != 0 {
        return Err(MuskatError::Config(format!(
            "grid sample count must be even, got {n}"
        )));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(MuskatError::Config(format!(
            "grid length must be positive and finite, got {length}"
        )));
    }
    Ok(())
}

/// Builds a 1-D grid; node `j` sits at `j * length / n`.
pub fn make_grid(n: usize, length: f64, kind: DomainKind) -> Result<Grid1D> {
    check_axis(n, length)?;
    if kind == DomainKind::TruncatedLine && length < MIN_LINE_LENGTH {
        return Err(MuskatError::Config(format!(
            "truncated-line box must be at least 4*pi wide, got {length}"
        )));
    }
    Ok(Grid1D {
        n,
        length,
        spacing: length / n as f64,
        kind,
    })
}

/// Builds a doubly periodic 2-D grid, row-major with axis 2 contiguous.
pub fn make_grid_2d(n1: usize, n2: usize, length1: f64, length2: f64) -> Result<Grid2D> {
    check_axis(n1, length1)?;
    check_axis(n2, length2)?;
    Ok(Grid2D {
        n1,
        n2,
        length1,
        length2,
        spacing1: length1 / n1 as f64,
        spacing2: length2 / n2 as f64,
    })
}

impl Grid1D {
    /// Periodic grid on `[0, 2pi)`.
    pub fn torus(n: usize) -> Result<Self> {
        make_grid(n, 2.0 * PI, DomainKind::PeriodicTorus)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    /// Physical coordinate of node `j`.
    ///
    /// On a truncated line the box is centred on the origin, so nodes past
    /// the midpoint map to negative coordinates (same point modulo the box).
    pub fn coordinate(&self, j: usize) -> f64 {
        match self.kind {
            DomainKind::PeriodicTorus => j as f64 * self.spacing,
            DomainKind::TruncatedLine => {
                if j < self.n / 2 {
                    j as f64 * self.spacing
                } else {
                    (j as f64 - self.n as f64) * self.spacing
                }
            }
        }
    }

    /// Angular wavenumber of FFT slot `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        2.0 * PI * signed_index(j, self.n) as f64 / self.length
    }
}

impl Grid2D {
    /// Doubly periodic grid on `[0, 2pi)^2`.
    pub fn torus(n1: usize, n2: usize) -> Result<Self> {
        make_grid_2d(n1, n2, 2.0 * PI, 2.0 * PI)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }
    pub fn n2(&self) -> usize {
        self.n2
    }
    pub fn length1(&self) -> f64 {
        self.length1
    }
    pub fn length2(&self) -> f64 {
        self.length2
    }
    pub fn spacing1(&self) -> f64 {
        self.spacing1
    }
    pub fn spacing2(&self) -> f64 {
        self.spacing2
    }

    #[inline]
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n2 + i2
    }

    pub fn coordinate(&self, i1: usize, i2: usize) -> (f64, f64) {
        (i1 as f64 * self.spacing1, i2 as f64 * self.spacing2)
    }

    pub fn wavenumber1(&self, j: usize) -> f64 {
        2.0 * PI * signed_index(j, self.n1) as f64 / self.length1
    }
    pub fn wavenumber2(&self, j: usize) -> f64 {
        2.0 * PI * signed_index(j, self.n2) as f64 / self.length2
    }
}

/// Maps an FFT slot to its signed integer wavenumber; the Nyquist slot maps
/// to `+n/2`.
pub fn signed_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Behaviour shared by the 1-D and 2-D grids, used by the time integrators
/// and the diagnostics.
pub trait Grid: Clone + Copy + PartialEq + fmt::Debug + Send + Sync + 'static {
    fn len(&self) -> usize;
    fn cell_volume(&self) -> f64;
    fn kind(&self) -> DomainKind;
    fn min_spacing(&self) -> f64;
    /// Largest `|xi|` carried by the grid.
    fn max_wavenumber(&self) -> f64;
    /// Applies a Fourier multiplier depending only on `|xi|`.
    fn apply_isotropic<M: Fn(f64) -> f64>(&self, samples: &[f64], multiplier: M) -> Vec<f64>;
    /// Sup norm of the first derivative (1-D) or of the gradient (2-D).
    fn max_slope(&self, samples: &[f64]) -> f64;
    /// Energy fraction carried by the top third of the resolved modes.
    fn spectrum_tail(&self, samples: &[f64]) -> f64;
    /// `int |f|` evaluated on a spectrally refined grid.
    fn abs_integral(&self, samples: &[f64]) -> f64;
}

impl Grid for Grid1D {
    fn len(&self) -> usize {
        self.n
    }
    fn cell_volume(&self) -> f64 {
        self.spacing
    }
    fn kind(&self) -> DomainKind {
        self.kind
    }
    fn min_spacing(&self) -> f64 {
        self.spacing
    }
    fn max_wavenumber(&self) -> f64 {
        PI / self.spacing
    }
    fn apply_isotropic<M: Fn(f64) -> f64>(&self, samples: &[f64], multiplier: M) -> Vec<f64> {
        spectral::apply_isotropic_1d(self, samples, multiplier)
    }
    fn max_slope(&self, samples: &[f64]) -> f64 {
        spectral::derivative_samples_1d(self, samples, 1)
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
    fn spectrum_tail(&self, samples: &[f64]) -> f64 {
        spectral::spectrum_tail_1d(self, samples)
    }
    fn abs_integral(&self, samples: &[f64]) -> f64 {
        spectral::abs_integral_1d(self, samples)
    }
}

impl Grid for Grid2D {
    fn len(&self) -> usize {
        self.n1 * self.n2
    }
    fn cell_volume(&self) -> f64 {
        self.spacing1 * self.spacing2
    }
    fn kind(&self) -> DomainKind {
        DomainKind::PeriodicTorus
    }
    fn min_spacing(&self) -> f64 {
        self.spacing1.min(self.spacing2)
    }
    fn max_wavenumber(&self) -> f64 {
        (PI / self.spacing1).hypot(PI / self.spacing2)
    }
    fn apply_isotropic<M: Fn(f64) -> f64>(&self, samples: &[f64], multiplier: M) -> Vec<f64> {
        spectral::apply_isotropic_2d(self, samples, multiplier)
    }
    fn max_slope(&self, samples: &[f64]) -> f64 {
        let g1 = spectral::derivative_samples_2d(self, samples, 0, 1);
        let g2 = spectral::derivative_samples_2d(self, samples, 1, 1);
        g1.iter()
            .zip(&g2)
            .fold(0.0, |m, (a, b)| m.max(a.hypot(*b)))
    }
    fn spectrum_tail(&self, samples: &[f64]) -> f64 {
        spectral::spectrum_tail_2d(self, samples)
    }
    fn abs_integral(&self, samples: &[f64]) -> f64 {
        spectral::abs_integral_2d(self, samples)
    }
}
