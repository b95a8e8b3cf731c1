//! Closed forms for periodic image sums of the contour-equation kernels.
//!
//! For a period `L` and `s = 2 pi / L`, every sum below runs over the
//! images `alpha + L k`, `k` in the integers, taken symmetrically in `k`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{MuskatError, Result};

/// `sum_k (alpha + 2 pi k) / ((alpha + 2 pi k)^2 + d^2)`, which equals
/// `(1/2) sin(alpha) / (cosh d - cos alpha)`.
///
/// The denominator is evaluated as `2 (sinh^2(d/2) + sin^2(alpha/2))` to
/// avoid cancellation near the origin.
pub fn periodized_kernel(alpha: f64, d: f64) -> Result<f64> {
    if alpha == 0.0 && d == 0.0 {
        return Err(MuskatError::Domain(
            "periodized kernel is singular at alpha = d = 0".into(),
        ));
    }
    Ok(ImageSums::new(2.0 * PI).cot(alpha, d))
}

/// Image sums for an arbitrary period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSums {
    period: f64,
    s: f64,
}

impl ImageSums {
    pub fn new(period: f64) -> Self {
        Self {
            period,
            s: 2.0 * PI / period,
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    #[inline]
    fn denom(&self, alpha: f64, d: f64) -> f64 {
        let a = (0.5 * self.s * d).sinh();
        let b = (0.5 * self.s * alpha).sin();
        a * a + b * b
    }

    /// `sum_k a_k / (a_k^2 + d^2)` with `a_k = alpha + L k`.
    #[inline]
    pub fn cot(&self, alpha: f64, d: f64) -> f64 {
        0.25 * self.s * (self.s * alpha).sin() / self.denom(alpha, d)
    }

    /// `sum_k d / (a_k^2 + d^2)`.
    #[inline]
    pub fn height(&self, alpha: f64, d: f64) -> f64 {
        0.25 * self.s * (self.s * d).sinh() / self.denom(alpha, d)
    }

    /// `sum_k 1 / (a_k + i d)^2`.
    #[inline]
    pub fn inverse_square(&self, alpha: f64, d: f64) -> Complex64 {
        let z = Complex64::new(0.5 * self.s * alpha, 0.5 * self.s * d);
        let sz = z.sin();
        Complex64::new(0.25 * self.s * self.s, 0.0) / (sz * sz)
    }

    /// `sum_k arctan(d / a_k)`, principal branch; `alpha` must not be a
    /// multiple of the period.
    #[inline]
    pub fn arctan(&self, alpha: f64, d: f64) -> f64 {
        let half = 0.5 * self.s * alpha;
        ((0.5 * self.s * d).tanh() * half.cos() / half.sin()).atan()
    }
}
