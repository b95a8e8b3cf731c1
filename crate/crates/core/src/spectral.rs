//! Discrete Fourier machinery: transforms, multipliers, `Lambda`, Riesz
//! transforms and the exact linear evolution.
//!
//! Coefficients are normalized so that `f(x_j) = sum_k fhat(k) exp(i k x_j)`,
//! i.e. the forward transform carries the `1/n` factor.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{MuskatError, Result};
use crate::field::{Field, ScalarField1D, ScalarField2D};
use crate::grid::{
    signed_index, DomainKind, Grid, Grid1D, Grid2D, LINE_DECAY_BAND, LINE_DECAY_TOLERANCE,
};
use crate::summation::CompensatedSum;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

fn to_complex(samples: &[f64]) -> Vec<Complex64> {
    samples.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

fn forward_1d(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len();
    let mut buf = to_complex(samples);
    plan(n, false).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

fn inverse_1d(mut coeffs: Vec<Complex64>) -> Vec<f64> {
    let n = coeffs.len();
    plan(n, true).process(&mut coeffs);
    coeffs.into_iter().map(|c| c.re).collect()
}

/// In-place 2-D FFT of a row-major `n1 x n2` array (axis 2 contiguous).
fn fft_2d(data: &mut [Complex64], n1: usize, n2: usize, inverse: bool) {
    plan(n2, inverse).process(data);
    let col = plan(n1, inverse);
    let mut buf = vec![Complex64::new(0.0, 0.0); n1];
    for i2 in 0..n2 {
        for i1 in 0..n1 {
            buf[i1] = data[i1 * n2 + i2];
        }
        col.process(&mut buf);
        for i1 in 0..n1 {
            data[i1 * n2 + i2] = buf[i1];
        }
    }
}

fn forward_2d(grid: &Grid2D, samples: &[f64]) -> Vec<Complex64> {
    let mut buf = to_complex(samples);
    fft_2d(&mut buf, grid.n1(), grid.n2(), false);
    let scale = 1.0 / samples.len() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

fn inverse_2d(grid: &Grid2D, mut coeffs: Vec<Complex64>) -> Vec<f64> {
    fft_2d(&mut coeffs, grid.n1(), grid.n2(), true);
    coeffs.into_iter().map(|c| c.re).collect()
}

/// `(i xi)^order`, with the Nyquist slot dropped for odd orders so that the
/// result stays real.
fn derivative_factor(xi: f64, order: u32, nyquist: bool) -> Complex64 {
    if order == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if nyquist && order % 2 == 1 {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(0.0, xi).powu(order)
}

/// Applies a per-slot complex multiplier to a 1-D sample vector.
pub fn apply_multiplier_1d(samples: &[f64], multiplier: impl Fn(usize) -> Complex64) -> Vec<f64> {
    let mut coeffs = forward_1d(samples);
    for (j, c) in coeffs.iter_mut().enumerate() {
        *c *= multiplier(j);
    }
    inverse_1d(coeffs)
}

/// Applies a per-slot complex multiplier to a row-major 2-D sample vector.
pub fn apply_multiplier_2d(
    grid: &Grid2D,
    samples: &[f64],
    multiplier: impl Fn(usize, usize) -> Complex64,
) -> Vec<f64> {
    let mut coeffs = forward_2d(grid, samples);
    let n2 = grid.n2();
    for (idx, c) in coeffs.iter_mut().enumerate() {
        *c *= multiplier(idx / n2, idx % n2);
    }
    inverse_2d(grid, coeffs)
}

pub fn apply_isotropic_1d(grid: &Grid1D, samples: &[f64], m: impl Fn(f64) -> f64) -> Vec<f64> {
    apply_multiplier_1d(samples, |j| Complex64::new(m(grid.wavenumber(j).abs()), 0.0))
}

pub fn apply_isotropic_2d(grid: &Grid2D, samples: &[f64], m: impl Fn(f64) -> f64) -> Vec<f64> {
    apply_multiplier_2d(grid, samples, |j1, j2| {
        Complex64::new(m(grid.wavenumber1(j1).hypot(grid.wavenumber2(j2))), 0.0)
    })
}

pub fn derivative_samples_1d(grid: &Grid1D, samples: &[f64], order: u32) -> Vec<f64> {
    if order == 0 {
        return samples.to_vec();
    }
    let n = grid.n();
    apply_multiplier_1d(samples, |j| {
        derivative_factor(grid.wavenumber(j), order, j == n / 2)
    })
}

/// Mixed partial `d^o1/dx1^o1 d^o2/dx2^o2`.
pub fn mixed_derivative_samples_2d(grid: &Grid2D, samples: &[f64], o1: u32, o2: u32) -> Vec<f64> {
    if o1 == 0 && o2 == 0 {
        return samples.to_vec();
    }
    let (h1, h2) = (grid.n1() / 2, grid.n2() / 2);
    apply_multiplier_2d(grid, samples, |j1, j2| {
        derivative_factor(grid.wavenumber1(j1), o1, j1 == h1)
            * derivative_factor(grid.wavenumber2(j2), o2, j2 == h2)
    })
}

/// Derivative of order `order` along `axis` (0 or 1).
pub fn derivative_samples_2d(grid: &Grid2D, samples: &[f64], axis: usize, order: u32) -> Vec<f64> {
    match axis {
        0 => mixed_derivative_samples_2d(grid, samples, order, 0),
        _ => mixed_derivative_samples_2d(grid, samples, 0, order),
    }
}

/// Samples of `x -> f(x + offset)`, by spectral interpolation.
pub fn translate_samples_1d(grid: &Grid1D, samples: &[f64], offset: f64) -> Vec<f64> {
    let n = grid.n();
    apply_multiplier_1d(samples, |j| {
        if j == n / 2 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::from_polar(1.0, grid.wavenumber(j) * offset)
        }
    })
}

/// Samples of `x -> f(x + offset)` on a 2-D grid.
pub fn translate_samples_2d(grid: &Grid2D, samples: &[f64], offset: (f64, f64)) -> Vec<f64> {
    let (h1, h2) = (grid.n1() / 2, grid.n2() / 2);
    apply_multiplier_2d(grid, samples, |j1, j2| {
        if j1 == h1 || j2 == h2 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::from_polar(
                1.0,
                grid.wavenumber1(j1) * offset.0 + grid.wavenumber2(j2) * offset.1,
            )
        }
    })
}

fn tail_fraction(energy: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut total = CompensatedSum::new();
    let mut tail = CompensatedSum::new();
    for (radius, e) in energy {
        if radius == 0.0 {
            continue;
        }
        total.add(e);
        if radius > 2.0 / 3.0 {
            tail.add(e);
        }
    }
    let total = total.value();
    if total > 0.0 {
        (tail.value() / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Fraction of the non-mean spectral energy carried by modes with
/// `|k| > (2/3) * n/2`.
pub fn spectrum_tail_1d(grid: &Grid1D, samples: &[f64]) -> f64 {
    let n = grid.n();
    let half = (n / 2) as f64;
    let coeffs = forward_1d(samples);
    tail_fraction(
        coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| (signed_index(j, n).unsigned_abs() as f64 / half, c.norm_sqr())),
    )
}

/// 2-D analogue of [`spectrum_tail_1d`], using the larger of the two
/// normalized per-axis wavenumbers as the mode radius.
pub fn spectrum_tail_2d(grid: &Grid2D, samples: &[f64]) -> f64 {
    let (n1, n2) = (grid.n1(), grid.n2());
    let coeffs = forward_2d(grid, samples);
    tail_fraction(coeffs.iter().enumerate().map(|(idx, c)| {
        let r1 = signed_index(idx / n2, n1).unsigned_abs() as f64 / (n1 / 2) as f64;
        let r2 = signed_index(idx % n2, n2).unsigned_abs() as f64 / (n2 / 2) as f64;
        (r1.max(r2), c.norm_sqr())
    }))
}

/// Spectral refinement factor used by [`abs_integral_1d`].
pub const L1_REFINEMENT_1D: usize = 32;
/// Per-axis refinement factor used by [`abs_integral_2d`].
pub const L1_REFINEMENT_2D: usize = 4;

/// Zero-pads a length-`n` spectrum to length `m`, splitting the Nyquist
/// coefficient between `+-n/2`.
fn pad_spectrum(coeffs: &[Complex64], m: usize) -> Vec<Complex64> {
    let n = coeffs.len();
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    for (j, &c) in coeffs.iter().enumerate() {
        let k = signed_index(j, n);
        if j == n / 2 {
            out[n / 2] += 0.5 * c;
            out[m - n / 2] += 0.5 * c;
        } else {
            out[k.rem_euclid(m as i64) as usize] = c;
        }
    }
    out
}

/// `int |f|` over the period, evaluated on the trigonometric interpolant
/// resampled at `L1_REFINEMENT_1D` times the grid resolution.
pub fn abs_integral_1d(grid: &Grid1D, samples: &[f64]) -> f64 {
    let m = grid.n() * L1_REFINEMENT_1D;
    let fine = inverse_1d(pad_spectrum(&forward_1d(samples), m));
    let mut acc = CompensatedSum::new();
    acc.extend(fine.iter().map(|v| v.abs()));
    acc.value() * grid.length() / m as f64
}

pub fn abs_integral_2d(grid: &Grid2D, samples: &[f64]) -> f64 {
    let (n1, n2) = (grid.n1(), grid.n2());
    let r = L1_REFINEMENT_2D;
    let (m1, m2) = (n1 * r, n2 * r);
    let coeffs = forward_2d(grid, samples);
    // Pad axis 2 per row, then axis 1 per column.
    let mut rows = Vec::with_capacity(n1 * m2);
    for i1 in 0..n1 {
        rows.extend(pad_spectrum(&coeffs[i1 * n2..(i1 + 1) * n2], m2));
    }
    let mut fine = vec![Complex64::new(0.0, 0.0); m1 * m2];
    let mut col = vec![Complex64::new(0.0, 0.0); n1];
    for i2 in 0..m2 {
        for i1 in 0..n1 {
            col[i1] = rows[i1 * m2 + i2];
        }
        for (i1, c) in pad_spectrum(&col, m1).into_iter().enumerate() {
            fine[i1 * m2 + i2] = c;
        }
    }
    fft_2d(&mut fine, m1, m2, true);
    let mut acc = CompensatedSum::new();
    acc.extend(fine.iter().map(|c| c.re.abs()));
    acc.value() * grid.length1() * grid.length2() / (m1 * m2) as f64
}

/// Fails unless a truncated-line field is below the decay tolerance in the
/// outer band of the box. Periodic fields always pass.
pub fn check_line_decay(field: &ScalarField1D) -> Result<()> {
    let grid = field.grid();
    if grid.kind() != DomainKind::TruncatedLine {
        return Ok(());
    }
    let edge = (0.5 - LINE_DECAY_BAND) * grid.length();
    for (j, &v) in field.samples().iter().enumerate() {
        let x = grid.coordinate(j);
        if x.abs() >= edge - 1e-12 * grid.length() && v.abs() > LINE_DECAY_TOLERANCE {
            return Err(MuskatError::Domain(format!(
                "field is {v:e} at x = {x}, inside the boundary band of the truncated line"
            )));
        }
    }
    Ok(())
}

/// Fourier coefficients of a 1-D field.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum1D {
    grid: Grid1D,
    coeffs: Vec<Complex64>,
}

impl Spectrum1D {
    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// Coefficients in FFT slot order.
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of integer mode `k`, zero outside the resolved band.
    pub fn mode(&self, k: i64) -> Complex64 {
        let n = self.grid.n() as i64;
        if k.abs() > n / 2 {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[k.rem_euclid(n) as usize]
    }

    /// `sum |fhat|^2`, which equals the grid mean of `f^2`.
    pub fn energy(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        acc.extend(self.coeffs.iter().map(|c| c.norm_sqr()));
        acc.value()
    }
}

/// Fourier coefficients of a 2-D field, row-major in slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D {
    grid: Grid2D,
    coeffs: Vec<Complex64>,
}

impl Spectrum2D {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn mode(&self, k1: i64, k2: i64) -> Complex64 {
        let (n1, n2) = (self.grid.n1() as i64, self.grid.n2() as i64);
        if k1.abs() > n1 / 2 || k2.abs() > n2 / 2 {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[(k1.rem_euclid(n1) * n2 + k2.rem_euclid(n2)) as usize]
    }

    pub fn energy(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        acc.extend(self.coeffs.iter().map(|c| c.norm_sqr()));
        acc.value()
    }

    /// Evaluates the trigonometric interpolant at an arbitrary point.
    /// Nyquist slots are dropped, matching the translation operators.
    pub fn evaluate(&self, x1: f64, x2: f64) -> f64 {
        let g = &self.grid;
        let (n1, n2) = (g.n1(), g.n2());
        let mut acc = CompensatedSum::new();
        for j1 in 0..n1 {
            if j1 == n1 / 2 {
                continue;
            }
            for j2 in 0..n2 {
                if j2 == n2 / 2 {
                    continue;
                }
                let phase = g.wavenumber1(j1) * x1 + g.wavenumber2(j2) * x2;
                let c = self.coeffs[j1 * n2 + j2];
                acc.add(c.re * phase.cos() - c.im * phase.sin());
            }
        }
        acc.value()
    }
}

pub fn transform(field: &ScalarField1D) -> Spectrum1D {
    Spectrum1D {
        grid: *field.grid(),
        coeffs: forward_1d(field.samples()),
    }
}

pub fn inverse_transform(spectrum: &Spectrum1D) -> Result<ScalarField1D> {
    Field::new(spectrum.grid, inverse_1d(spectrum.coeffs.clone()))
}

pub fn transform_2d(field: &ScalarField2D) -> Spectrum2D {
    Spectrum2D {
        grid: *field.grid(),
        coeffs: forward_2d(field.grid(), field.samples()),
    }
}

pub fn inverse_transform_2d(spectrum: &Spectrum2D) -> Result<ScalarField2D> {
    Field::new(spectrum.grid, inverse_2d(&spectrum.grid, spectrum.coeffs.clone()))
}

/// Spectral derivative of a 1-D field. Truncated-line fields must satisfy
/// the boundary decay contract.
pub fn derivative(field: &ScalarField1D, order: u32) -> Result<ScalarField1D> {
    check_line_decay(field)?;
    Ok(Field::from_raw(
        *field.grid(),
        derivative_samples_1d(field.grid(), field.samples(), order),
    ))
}

/// Spectral derivative of a 2-D field along `axis` (0 or 1).
pub fn derivative_2d(field: &ScalarField2D, axis: usize, order: u32) -> Result<ScalarField2D> {
    if axis > 1 {
        return Err(MuskatError::Config(format!("axis must be 0 or 1, got {axis}")));
    }
    Ok(Field::from_raw(
        *field.grid(),
        derivative_samples_2d(field.grid(), field.samples(), axis, order),
    ))
}

/// `Lambda f`, the Fourier multiplier `|xi|`.
pub fn lambda_op<G: Grid>(field: &Field<G>) -> Field<G> {
    Field::from_raw(
        *field.grid(),
        field.grid().apply_isotropic(field.samples(), |k| k),
    )
}

/// Riesz transform along `axis`, multiplier `-i xi_axis / |xi|`.
pub fn riesz(field: &ScalarField2D, axis: usize) -> Result<ScalarField2D> {
    if axis > 1 {
        return Err(MuskatError::Config(format!("axis must be 0 or 1, got {axis}")));
    }
    let g = *field.grid();
    let (h1, h2) = (g.n1() / 2, g.n2() / 2);
    let samples = apply_multiplier_2d(&g, field.samples(), |j1, j2| {
        let (xi1, xi2) = (g.wavenumber1(j1), g.wavenumber2(j2));
        let r = xi1.hypot(xi2);
        let (xi, nyq) = if axis == 0 { (xi1, j1 == h1) } else { (xi2, j2 == h2) };
        if r == 0.0 || nyq {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, -xi / r)
        }
    });
    Ok(Field::from_raw(g, samples))
}

/// Exact solution of the linearized equation `f_t = -(rho_bar/2) Lambda f`.
pub fn linear_evolve<G: Grid>(f0: &Field<G>, t: f64, rho_bar: f64) -> Result<Field<G>> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(MuskatError::Config(format!("time must be nonnegative, got {t}")));
    }
    if f0.grid().kind() != DomainKind::PeriodicTorus {
        return Err(MuskatError::Unsupported(
            "linear evolution needs a periodic grid".into(),
        ));
    }
    if t == 0.0 || rho_bar == 0.0 {
        return Ok(f0.clone());
    }
    let rate = -0.5 * rho_bar * t;
    Field::new(
        *f0.grid(),
        f0.grid().apply_isotropic(f0.samples(), |k| (rate * k).exp()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn torus(n: usize) -> Grid1D {
        Grid1D::torus(n).unwrap()
    }

    #[test]
    fn single_cosine_mode() {
        let f = ScalarField1D::from_fn(torus(64), |x| (3.0 * x).cos()).unwrap();
        let s = transform(&f);
        assert!((s.mode(3) - Complex64::new(0.5, 0.0)).norm() < 1e-12);
        assert!((s.mode(-3) - Complex64::new(0.5, 0.0)).norm() < 1e-12);
        for k in -32i64..=32 {
            if k.abs() != 3 {
                assert!(s.mode(k).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_examples() {
        let g = torus(64);
        for k in 1..=16 {
            let kf = k as f64;
            let f = ScalarField1D::from_fn(g, |x| (kf * x).cos()).unwrap();
            let d = derivative(&f, 1).unwrap();
            let e = ScalarField1D::from_fn(g, |x| -kf * (kf * x).sin()).unwrap();
            assert!(d.max_abs_diff(&e) < 1e-10, "k = {k}");
        }
        let c = Field::constant(g, 2.5).unwrap();
        assert!(derivative(&c, 1).unwrap().linf() < 1e-13);
        let f = ScalarField1D::from_fn(g, |x| (2.0 * x).sin()).unwrap();
        let e = ScalarField1D::from_fn(g, |x| -4.0 * (2.0 * x).sin()).unwrap();
        assert!(derivative(&f, 2).unwrap().max_abs_diff(&e) < 1e-12);
    }

    #[test]
    fn derivative_rejects_non_decaying_line_field() {
        let g = make_grid(64, 4.0 * PI, DomainKind::TruncatedLine).unwrap();
        let f = ScalarField1D::from_fn(g, |x| (0.5 * x).cos()).unwrap();
        assert!(matches!(derivative(&f, 1), Err(MuskatError::Domain(_))));
        let b = ScalarField1D::from_fn(g, |x| (-x * x).exp()).unwrap();
        assert!(derivative(&b, 1).is_ok());
    }

    #[test]
    fn lambda_examples() {
        let g = torus(64);
        let f = ScalarField1D::from_fn(g, |x| x.sin() + (2.0 * x).cos()).unwrap();
        let e = ScalarField1D::from_fn(g, |x| x.sin() + 2.0 * (2.0 * x).cos()).unwrap();
        assert!(lambda_op(&f).max_abs_diff(&e) < 1e-12);
        assert!(lambda_op(&Field::constant(g, 3.0).unwrap()).linf() < 1e-13);
        for k in 1..8 {
            let kf = k as f64;
            let f = ScalarField1D::from_fn(g, |x| (kf * x).cos()).unwrap();
            let e = ScalarField1D::from_fn(g, |x| kf * (kf * x).cos()).unwrap();
            assert!(lambda_op(&f).max_abs_diff(&e) < 1e-12);
        }
    }

    #[test]
    fn riesz_single_mode() {
        let g = Grid2D::torus(16, 16).unwrap();
        let f = ScalarField2D::from_fn(g, |x1, _| x1.cos()).unwrap();
        let e = ScalarField2D::from_fn(g, |x1, _| x1.sin()).unwrap();
        assert!(riesz(&f, 0).unwrap().max_abs_diff(&e) < 1e-13);
        assert!(riesz(&f, 1).unwrap().linf() < 1e-13);
        let c = Field::constant(g, 1.0).unwrap();
        assert!(riesz(&c, 0).unwrap().linf() < 1e-15);
    }

    #[test]
    fn linear_evolve_examples() {
        let g = torus(64);
        let f = ScalarField1D::from_fn(g, f64::cos).unwrap();
        let out = linear_evolve(&f, 2.0, 1.0).unwrap();
        let e = f.scaled((-1.0f64).exp());
        assert!(out.max_abs_diff(&e) < 1e-14);
        assert_eq!(linear_evolve(&f, 0.0, 1.0).unwrap(), f);
        // Backward diffusion amplifies roundoff in the top modes; keep n small.
        let f2 = ScalarField1D::from_fn(torus(16), |x| (2.0 * x).cos()).unwrap();
        let out = linear_evolve(&f2, 1.0, -1.0).unwrap();
        assert!(out.max_abs_diff(&f2.scaled(1f64.exp())) < 1e-13);
        assert!(linear_evolve(&f, -1.0, 1.0).is_err());
    }

    #[test]
    fn refined_l1_of_cosine_in_2d() {
        // int |cos x1| over the torus is 4 * 2pi.
        let g = Grid2D::torus(32, 16).unwrap();
        let f = ScalarField2D::from_fn(g, |x1, _| x1.cos()).unwrap();
        let v = abs_integral_2d(&g, f.samples());
        assert!((v / (8.0 * PI) - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn spectrum_tail_examples() {
        let g = torus(48);
        let low = ScalarField1D::from_fn(g, |x| 1.0 + x.cos()).unwrap();
        assert!(spectrum_tail_1d(&g, low.samples()) < 1e-28);
        let high = ScalarField1D::from_fn(g, |x| (20.0 * x).cos()).unwrap();
        assert!((spectrum_tail_1d(&g, high.samples()) - 1.0).abs() < 1e-12);
        assert_eq!(spectrum_tail_1d(&g, &[0.0; 48]), 0.0);
    }

    #[test]
    fn translation_matches_shifted_function() {
        let g = torus(64);
        let f = ScalarField1D::from_fn(g, |x| (x.sin()).exp()).unwrap();
        let t = translate_samples_1d(&g, f.samples(), 0.3);
        let e = ScalarField1D::from_fn(g, |x| ((x + 0.3).sin()).exp()).unwrap();
        let err = t.iter().zip(e.samples()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-12);
    }

    fn band_limited_1d(amps: &[(f64, f64)]) -> ScalarField1D {
        ScalarField1D::from_fn(torus(64), |x| {
            amps.iter()
                .enumerate()
                .map(|(k, (a, p))| a * ((k as f64 + 1.0) * x + p).cos())
                .sum()
        })
        .unwrap()
    }

    fn band_limited_2d(amps: &[(f64, f64)]) -> ScalarField2D {
        let g = Grid2D::torus(32, 32).unwrap();
        ScalarField2D::from_fn(g, |x1, x2| {
            amps.iter()
                .enumerate()
                .map(|(i, (a, p))| {
                    let k1 = (i % 5) as f64 - 2.0;
                    let k2 = (i / 5) as f64;
                    a * (k1 * x1 + k2 * x2 + p).cos()
                })
                .sum()
        })
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn round_trip(samples in prop::collection::vec(-1e3f64..1e3, 64)) {
            let f = Field::new(torus(64), samples).unwrap();
            let back = inverse_transform(&transform(&f)).unwrap();
            prop_assert!(back.max_abs_diff(&f) < 1e-12 * 1e3);
        }

        #[test]
        fn parseval(amps in prop::collection::vec((-1.0f64..1.0, 0.0f64..6.3), 1..10)) {
            let f = band_limited_1d(&amps);
            let mean_sq = crate::summation::sum_iter(f.samples().iter().map(|v| v * v)) / 64.0;
            prop_assert!((transform(&f).energy() - mean_sq).abs() < 1e-12);
        }

        #[test]
        fn riesz_gradient_identity(amps in prop::collection::vec((-1.0f64..1.0, 0.0f64..6.3), 1..15)) {
            let f = band_limited_2d(&amps);
            let lhs = lambda_op(&f);
            let r1 = riesz(&derivative_2d(&f, 0, 1).unwrap(), 0).unwrap();
            let r2 = riesz(&derivative_2d(&f, 1, 1).unwrap(), 1).unwrap();
            let rhs = r1.axpy(1.0, &r2);
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
        }

        #[test]
        fn semigroup(amps in prop::collection::vec((-1.0f64..1.0, 0.0f64..6.3), 1..10),
                     s in 0.0f64..2.0, t in 0.0f64..2.0) {
            let f = band_limited_1d(&amps);
            let a = linear_evolve(&linear_evolve(&f, s, 1.0).unwrap(), t, 1.0).unwrap();
            let b = linear_evolve(&f, s + t, 1.0).unwrap();
            prop_assert!(a.max_abs_diff(&b) <= 1e-12 * f.linf().max(1e-300) + 1e-15);
        }

        #[test]
        fn evolution_is_sup_norm_contractive(amps in prop::collection::vec((-1.0f64..1.0, 0.0f64..6.3), 1..10)) {
            let f = band_limited_1d(&amps);
            let mut prev = f.linf();
            for i in 1..=20 {
                let cur = linear_evolve(&f, 0.1 * i as f64, 1.0).unwrap().linf();
                prop_assert!(cur <= prev + 1e-10);
                prev = cur;
            }
        }

        #[test]
        fn evolution_keeps_mean(c in -5.0f64..5.0, amps in prop::collection::vec((-1.0f64..1.0, 0.0f64..6.3), 1..10)) {
            let f = band_limited_1d(&amps).map(|v| v + c).unwrap();
            let g = linear_evolve(&f, 1.3, 1.0).unwrap();
            let drift = (transform(&g).mode(0) - transform(&f).mode(0)).norm();
            prop_assert!(drift <= 1e-15 * (1.0 + c.abs()) * 8.0);
        }
    }
}
