//! Right-hand side of the two-dimensional contour equation
//!
//! ```text
//! f_t(x) = (rho_bar / 4 pi) PV int (grad f(x) - grad f(x - y)) . y / (|y|^2 + (f(x) - f(x - y))^2)^{3/2} dy
//! ```
//!
//! on a doubly periodic grid, plus the off-interface velocity and the
//! extremum identity.
//!
//! The integral over the plane is approximated by the trapezoid rule on
//! the lattice of grid offsets inside `(2 m + 1)` periods per axis, `m`
//! being the number of image layers. By default the part that is linear
//! in `f` (kernel `|y|^-3`), whose far field converges slowly, is taken
//! out and applied exactly as `-(1/2) Lambda f`; only the remainder is
//! summed on the lattice. The `y = 0` cell is either dropped or
//! integrated in polar coordinates from a third-order Taylor expansion.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{MuskatError, Result};
use crate::field::{Field, PhysParams, ScalarField1D, ScalarField2D};
use crate::grid::{make_grid_2d, DomainKind, Grid, Grid2D};
use crate::muskat1d::{rhs_periodic, ExtremumValue, Quadrature1DConfig};
use crate::spectral::{self, mixed_derivative_samples_2d};
use crate::summation::CompensatedSum;

/// Largest per-axis resolution accepted without `allow_large_grid`.
pub const LARGE_GRID_THRESHOLD: usize = 96;
/// Cap on `image_layers`.
pub const MAX_IMAGE_LAYERS: usize = 4;
/// Floor on `polar_patch_rings`.
pub const MIN_PATCH_RINGS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SingularCell {
    /// Omit the `y = 0` node.
    #[default]
    PunctureCell,
    /// Integrate the local Taylor expansion over the cell in polar
    /// coordinates.
    PolarPatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature2DConfig {
    /// Image shells beyond the centred period on each side.
    pub image_layers: usize,
    pub singular_cell: SingularCell,
    /// Radial Gauss points of the polar patch (angular points are twice this per sector).
    pub polar_patch_rings: usize,
    /// Apply the `|y|^-3` part exactly through `Lambda`.
    pub subtract_linear: bool,
    /// Lift the cost guard on grids finer than [`LARGE_GRID_THRESHOLD`].
    pub allow_large_grid: bool,
}

impl Default for Quadrature2DConfig {
    fn default() -> Self {
        Self {
            image_layers: 1,
            singular_cell: SingularCell::PunctureCell,
            polar_patch_rings: 8,
            subtract_linear: true,
            allow_large_grid: false,
        }
    }
}

impl Quadrature2DConfig {
    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        if self.image_layers > MAX_IMAGE_LAYERS {
            return Err(MuskatError::Config(format!(
                "image_layers is capped at {MAX_IMAGE_LAYERS}, got {}",
                self.image_layers
            )));
        }
        if self.polar_patch_rings < MIN_PATCH_RINGS {
            return Err(MuskatError::Config(format!(
                "polar_patch_rings must be at least {MIN_PATCH_RINGS}, got {}",
                self.polar_patch_rings
            )));
        }
        if !self.allow_large_grid
            && (grid.n1() > LARGE_GRID_THRESHOLD || grid.n2() > LARGE_GRID_THRESHOLD)
        {
            return Err(MuskatError::Config(format!(
                "{}x{} exceeds {LARGE_GRID_THRESHOLD} per axis; set allow_large_grid to proceed",
                grid.n1(),
                grid.n2()
            )));
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if m == 0 { 1.0 } else { p1 };
            dp = m as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct PatchNode {
    c: f64,
    s: f64,
    r: f64,
    /// Angular times radial weight; the polar Jacobian is folded into the integrand.
    w: f64,
}

fn polar_patch_nodes(h1: f64, h2: f64, rings: usize) -> Vec<PatchNode> {
    let radial = gauss_legendre(rings);
    let angular = gauss_legendre(2 * rings);
    let corner = h2.atan2(h1);
    let sectors = [
        (-corner, corner),
        (corner, PI - corner),
        (PI - corner, PI + corner),
        (PI + corner, 2.0 * PI - corner),
    ];
    let mut nodes = Vec::new();
    for (a, b) in sectors {
        for &(ta, wa) in &angular {
            let theta = 0.5 * (a + b) + 0.5 * (b - a) * ta;
            let (s, c) = theta.sin_cos();
            let edge = (0.5 * h1 / c.abs()).min(0.5 * h2 / s.abs());
            for &(tr, wr) in &radial {
                nodes.push(PatchNode {
                    c,
                    s,
                    r: 0.5 * edge * (1.0 + tr),
                    w: 0.5 * (b - a) * wa * 0.5 * edge * wr,
                });
            }
        }
    }
    nodes
}

#[derive(Debug, Clone, Copy, Default)]
struct Offset {
    y1: f64,
    y2: f64,
    /// Trapezoid weight times cell area; zero at the origin.
    w: f64,
    inv_r2: f64,
    inv_r3: f64,
}

/// Precomputed lattice and index tables for one grid and configuration.
#[derive(Debug, Clone)]
pub struct Rhs2DPlan {
    grid: Grid2D,
    cfg: Quadrature2DConfig,
    k1: usize,
    k2: usize,
    offsets: Vec<Offset>,
    /// `row_base[i1 * k1 + a] = ((i1 - dj1) mod n1) * n2`.
    row_base: Vec<usize>,
    /// `col[i2 * k2 + b] = (i2 - dj2) mod n2`.
    col: Vec<usize>,
    patch: Vec<PatchNode>,
}

impl Rhs2DPlan {
    pub fn new(grid: Grid2D, cfg: Quadrature2DConfig) -> Result<Self> {
        cfg.validate(&grid)?;
        let (n1, n2) = (grid.n1(), grid.n2());
        let (h1, h2) = (grid.spacing1(), grid.spacing2());
        let span = 2 * cfg.image_layers + 1;
        let (j1, j2) = ((span * n1 / 2) as isize, (span * n2 / 2) as isize);
        let (k1, k2) = ((2 * j1 + 1) as usize, (2 * j2 + 1) as usize);
        let area = h1 * h2;
        let mut offsets = Vec::with_capacity(k1 * k2);
        for a in -j1..=j1 {
            let wa = if a.abs() == j1 { 0.5 } else { 1.0 };
            for b in -j2..=j2 {
                let wb = if b.abs() == j2 { 0.5 } else { 1.0 };
                let (y1, y2) = (a as f64 * h1, b as f64 * h2);
                let r2 = y1 * y1 + y2 * y2;
                offsets.push(if a == 0 && b == 0 {
                    Offset::default()
                } else {
                    Offset {
                        y1,
                        y2,
                        w: wa * wb * area,
                        inv_r2: 1.0 / r2,
                        inv_r3: 1.0 / (r2 * r2.sqrt()),
                    }
                });
            }
        }
        let wrap = |i: usize, d: isize, n: usize| (i as isize - d).rem_euclid(n as isize) as usize;
        let mut row_base = Vec::with_capacity(n1 * k1);
        for i1 in 0..n1 {
            for a in -j1..=j1 {
                row_base.push(wrap(i1, a, n1) * n2);
            }
        }
        let mut col = Vec::with_capacity(n2 * k2);
        for i2 in 0..n2 {
            for b in -j2..=j2 {
                col.push(wrap(i2, b, n2));
            }
        }
        let patch = match cfg.singular_cell {
            SingularCell::PolarPatch => polar_patch_nodes(h1, h2, cfg.polar_patch_rings),
            SingularCell::PunctureCell => Vec::new(),
        };
        Ok(Self {
            grid,
            cfg,
            k1,
            k2,
            offsets,
            row_base,
            col,
            patch,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn config(&self) -> &Quadrature2DConfig {
        &self.cfg
    }

    /// Number of lattice terms per output node.
    pub fn lattice_size(&self) -> usize {
        self.offsets.len()
    }

    /// Lattice sum `sum_y w term(m, offset)` for the output node `(i1, i2)`.
    #[inline(always)]
    fn lattice_sum(&self, i1: usize, i2: usize, mut term: impl FnMut(usize, &Offset) -> f64) -> f64 {
        let mut acc = CompensatedSum::new();
        let cols = &self.col[i2 * self.k2..(i2 + 1) * self.k2];
        for a in 0..self.k1 {
            let base = self.row_base[i1 * self.k1 + a];
            let row = &self.offsets[a * self.k2..(a + 1) * self.k2];
            for (o, &c) in row.iter().zip(cols) {
                if o.w != 0.0 {
                    acc.add(o.w * term(base + c, o));
                }
            }
        }
        acc.value()
    }

    fn check_field(&self, f: &ScalarField2D) -> Result<()> {
        if *f.grid() != self.grid {
            return Err(MuskatError::Config(
                "field grid differs from the quadrature plan grid".into(),
            ));
        }
        Ok(())
    }

    /// The bracketed integral (without `rho_bar / 4 pi`) and, when the
    /// linear part is subtracted, without `-(1/2) Lambda f`.
    fn integral(&self, f: &ScalarField2D) -> Vec<f64> {
        let g = &self.grid;
        let s = f.samples();
        let d = Derivatives::new(g, s, !self.patch.is_empty());
        let n2 = g.n2();
        let subtract = self.cfg.subtract_linear;
        (0..s.len())
            .into_par_iter()
            .map(|i| {
                let (i1, i2) = (i / n2, i % n2);
                let (fi, g1i, g2i) = (s[i], d.g1[i], d.g2[i]);
                let lattice = self.lattice_sum(i1, i2, |m, o| {
                    let dg = (g1i - d.g1[m]) * o.y1 + (g2i - d.g2[m]) * o.y2;
                    let df = fi - s[m];
                    dg * if subtract {
                        kernel_excess(df * df * o.inv_r2) * o.inv_r3
                    } else {
                        let q = 1.0 / (o.inv_r2.recip() + df * df);
                        q * q.sqrt()
                    }
                });
                lattice + self.patch_integral(&d, i, subtract, false)
            })
            .collect()
    }

    /// Polar integral over the `y = 0` cell of the Taylor-expanded integrand.
    /// `at_extremum` evaluates the height form used by the extremum identity.
    fn patch_integral(&self, d: &Derivatives, i: usize, subtract: bool, at_extremum: bool) -> f64 {
        if self.patch.is_empty() {
            return 0.0;
        }
        let (g1, g2) = if at_extremum { (0.0, 0.0) } else { (d.g1[i], d.g2[i]) };
        let (h11, h12, h22) = (d.h11[i], d.h12[i], d.h22[i]);
        let (t111, t112, t122, t222) = (d.t111[i], d.t112[i], d.t122[i], d.t222[i]);
        let mut acc = CompensatedSum::new();
        for p in &self.patch {
            let (c, s, r) = (p.c, p.s, p.r);
            let quad = h11 * c * c + 2.0 * h12 * c * s + h22 * s * s;
            let cubic =
                t111 * c * c * c + 3.0 * t112 * c * c * s + 3.0 * t122 * c * s * s + t222 * s * s * s;
            // delta / r along the ray.
            let u = g1 * c + g2 * s - 0.5 * r * quad + r * r / 6.0 * cubic;
            let bracket = if subtract {
                kernel_excess(u * u)
            } else {
                let q = 1.0 / (1.0 + u * u);
                q * q.sqrt()
            };
            let weight = if at_extremum {
                // delta r^-3 times the Jacobian r, with delta / r^2 = -quad/2 + r cubic / 6.
                -0.5 * quad + r / 6.0 * cubic
            } else {
                quad - 0.5 * r * cubic
            };
            acc.add(p.w * weight * bracket);
        }
        acc.value()
    }
}

/// `(1 + t)^{-3/2} - 1`, without cancellation for small `t`.
#[inline(always)]
fn kernel_excess(t: f64) -> f64 {
    let s = (1.0 + t).sqrt();
    let inv = 1.0 / (s * (1.0 + s));
    let a = (1.0 + s) * inv;
    -t * inv * (a * a + a + 1.0)
}

struct Derivatives {
    g1: Vec<f64>,
    g2: Vec<f64>,
    h11: Vec<f64>,
    h12: Vec<f64>,
    h22: Vec<f64>,
    t111: Vec<f64>,
    t112: Vec<f64>,
    t122: Vec<f64>,
    t222: Vec<f64>,
}

impl Derivatives {
    fn new(g: &Grid2D, s: &[f64], higher: bool) -> Self {
        let d = |o1, o2| mixed_derivative_samples_2d(g, s, o1, o2);
        let none = Vec::new;
        Self {
            g1: d(1, 0),
            g2: d(0, 1),
            h11: if higher { d(2, 0) } else { none() },
            h12: if higher { d(1, 1) } else { none() },
            h22: if higher { d(0, 2) } else { none() },
            t111: if higher { d(3, 0) } else { none() },
            t112: if higher { d(2, 1) } else { none() },
            t122: if higher { d(1, 2) } else { none() },
            t222: if higher { d(0, 3) } else { none() },
        }
    }
}

fn half_lambda(f: &ScalarField2D) -> Vec<f64> {
    f.grid().apply_isotropic(f.samples(), |k| 0.5 * k)
}

/// Right-hand side with a prebuilt plan.
pub fn rhs_2d_with_plan(
    f: &ScalarField2D,
    params: &PhysParams,
    plan: &Rhs2DPlan,
) -> Result<ScalarField2D> {
    plan.check_field(f)?;
    let rho_bar = params.rho_bar();
    if rho_bar == 0.0 {
        return Ok(Field::zeros(*f.grid()));
    }
    let c = 1.0 / (4.0 * PI);
    let integral = plan.integral(f);
    let samples = if plan.cfg.subtract_linear {
        let half = half_lambda(f);
        integral
            .iter()
            .zip(&half)
            .map(|(s, l)| rho_bar * (c * s - l))
            .collect()
    } else {
        integral.iter().map(|s| rho_bar * (c * s)).collect()
    };
    Field::new(*f.grid(), samples)
}

/// Right-hand side on a periodic 2-D grid.
pub fn rhs_2d(
    f: &ScalarField2D,
    params: &PhysParams,
    cfg: &Quadrature2DConfig,
) -> Result<ScalarField2D> {
    let plan = Rhs2DPlan::new(*f.grid(), *cfg)?;
    rhs_2d_with_plan(f, params, &plan)
}

/// Outcome of the one-dimensional reduction check.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    /// `max |rhs_2d(F) - rhs_1d(f)|` with `F(x1, x2) = f(x1)`.
    pub l_inf_gap: f64,
    pub rhs_1d: ScalarField1D,
    pub rhs_2d: ScalarField2D,
}

/// Extends `f1d` constantly in `x2` on an `n x n` grid with equal periods
/// and compares the two right-hand sides.
pub fn reduce_consistency(
    f1d: &ScalarField1D,
    params: &PhysParams,
    cfg2d: &Quadrature2DConfig,
    cfg1d: &Quadrature1DConfig,
) -> Result<ReductionReport> {
    let g1 = f1d.grid();
    if g1.kind() != DomainKind::PeriodicTorus {
        return Err(MuskatError::Config(
            "reduction check needs a periodic 1-D grid".into(),
        ));
    }
    let g2 = make_grid_2d(g1.n(), g1.n(), g1.length(), g1.length())?;
    let f2d = ScalarField2D::extend_along_axis2(f1d, g2)?;
    let r1 = rhs_periodic(f1d, params, cfg1d)?;
    let r2 = rhs_2d(&f2d, params, cfg2d)?;
    let n2 = g2.n2();
    let gap = r2
        .samples()
        .iter()
        .enumerate()
        .fold(0.0f64, |m, (i, v)| m.max((v - r1.samples()[i / n2]).abs()));
    Ok(ReductionReport {
        l_inf_gap: gap,
        rhs_1d: r1,
        rhs_2d: r2,
    })
}

/// `J_1 = -(rho_bar / 4 pi) int (M - f(x_t - y)) / (|y|^2 + (M - f(x_t - y))^2)^{3/2} dy`
/// at the grid argmax `x_t`, `M = f(x_t)`.
pub fn rhs_2d_at_extremum(
    f: &ScalarField2D,
    params: &PhysParams,
    cfg: &Quadrature2DConfig,
) -> Result<ExtremumValue> {
    let ext = f.argmax();
    if f.is_constant() || params.rho_bar() == 0.0 {
        return Ok(ExtremumValue {
            index: ext.index,
            value: 0.0,
            tie: ext.tie,
        });
    }
    let plan = Rhs2DPlan::new(*f.grid(), *cfg)?;
    let g = f.grid();
    let s = f.samples();
    let i = ext.index;
    let (i1, i2) = (i / g.n2(), i % g.n2());
    let subtract = cfg.subtract_linear;
    let lattice = plan.lattice_sum(i1, i2, |m, o| {
        let df = s[i] - s[m];
        df * if subtract {
            kernel_excess(df * df * o.inv_r2) * o.inv_r3
        } else {
            let q = 1.0 / (o.inv_r2.recip() + df * df);
            q * q.sqrt()
        }
    });
    let patch = if plan.patch.is_empty() {
        0.0
    } else {
        let d = Derivatives::new(g, s, true);
        plan.patch_integral(&d, i, subtract, true)
    };
    let rho_bar = params.rho_bar();
    let c = 1.0 / (4.0 * PI);
    let value = if subtract {
        let half = half_lambda(f)[i];
        rho_bar * (-half - c * (lattice + patch))
    } else {
        -rho_bar * (c * (lattice + patch))
    };
    Ok(ExtremumValue {
        index: i,
        value,
        tie: ext.tie,
    })
}

/// Velocity of the fluid at an off-interface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocitySample {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

/// Velocity `v = -(rho_bar / 4 pi) int (y1, y2, grad f(x - y) . y) / (|y|^2 + (x3 - f(x - y))^2)^{3/2} dy`
/// at each point, which must lie more than one grid spacing away from the
/// interface vertically.
///
/// The field is translated spectrally so that `(x1, x2)` falls on a node.
/// The third component subtracts the flat-sheet control variate with
/// kernel `(|y|^2 + c^2)^{-3/2}`, `c = |x3 - f(x1, x2)|`, whose integral is
/// `2 pi sum fhat(xi) |xi| exp(-c |xi|) exp(i xi . x)`.
pub fn velocity_field(
    f: &ScalarField2D,
    params: &PhysParams,
    points: &[[f64; 3]],
    cfg: &Quadrature2DConfig,
) -> Result<Vec<VelocitySample>> {
    let g = *f.grid();
    let plan = Rhs2DPlan::new(g, *cfg)?;
    let spectrum = spectral::transform_2d(f);
    let spacing = g.min_spacing();
    let mut out = Vec::with_capacity(points.len());
    for (k, p) in points.iter().enumerate() {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(MuskatError::Config(format!("point {k} is not finite")));
        }
        let height = spectrum.evaluate(p[0], p[1]);
        let c = (p[2] - height).abs();
        if c <= spacing {
            return Err(MuskatError::Precondition(format!(
                "point {k} ({}, {}, {}) is within one grid spacing of the interface (f = {height})",
                p[0], p[1], p[2]
            )));
        }
        let velocity = if params.rho_bar() == 0.0 {
            [0.0; 3]
        } else {
            velocity_at(f, &plan, p, c, params.rho_bar())
        };
        out.push(VelocitySample {
            position: *p,
            velocity,
        });
    }
    Ok(out)
}

fn velocity_at(f: &ScalarField2D, plan: &Rhs2DPlan, p: &[f64; 3], c: f64, rho_bar: f64) -> [f64; 3] {
    let g = plan.grid;
    let (n1, n2) = (g.n1(), g.n2());
    let (h1, h2) = (g.spacing1(), g.spacing2());
    let q1 = (p[0] / h1).round();
    let q2 = (p[1] / h2).round();
    let shift = (p[0] - q1 * h1, p[1] - q2 * h2);
    let i1 = (q1 as i64).rem_euclid(n1 as i64) as usize;
    let i2 = (q2 as i64).rem_euclid(n2 as i64) as usize;
    let s = spectral::translate_samples_2d(&g, f.samples(), shift);
    let d1 = spectral::derivative_samples_2d(&g, &s, 0, 1);
    let d2 = spectral::derivative_samples_2d(&g, &s, 1, 1);
    let x3 = p[2];
    let kernel = |o: &Offset, height: f64| {
        let q = 1.0 / (o.inv_r2.recip() + height * height);
        q * q.sqrt()
    };
    let v1 = plan.lattice_sum(i1, i2, |m, o| o.y1 * kernel(o, x3 - s[m]));
    let v2 = plan.lattice_sum(i1, i2, |m, o| o.y2 * kernel(o, x3 - s[m]));
    let rem3 = plan.lattice_sum(i1, i2, |m, o| {
        let slope = d1[m] * o.y1 + d2[m] * o.y2;
        let h = x3 - s[m];
        slope * (kernel(o, h) - kernel(o, c))
    });
    let exact = 2.0 * PI * g.apply_isotropic(&s, |k| k * (-c * k).exp())[i1 * n2 + i2];
    let scale = -rho_bar / (4.0 * PI);
    [scale * v1, scale * v2, scale * (exact + rem3)]
}

/// Parses query points, one `x1 x2 x3` triple per line; blank lines and
/// `#` comments are skipped.
pub fn parse_points(text: &str) -> Result<Vec<[f64; 3]>> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<&str> = line.split_whitespace().collect();
        if values.len() != 3 {
            return Err(MuskatError::Config(format!(
                "line {}: expected three coordinates, found {}",
                lineno + 1,
                values.len()
            )));
        }
        let mut p = [0.0; 3];
        for (slot, v) in p.iter_mut().zip(&values) {
            *slot = v.parse().map_err(|_| {
                MuskatError::Config(format!("line {}: cannot parse '{v}' as a number", lineno + 1))
            })?;
        }
        points.push(p);
    }
    Ok(points)
}

/// One `x1 x2 x3 v1 v2 v3` line per sample.
pub fn format_samples(samples: &[VelocitySample]) -> String {
    let mut out = String::new();
    for s in samples {
        let [x1, x2, x3] = s.position;
        let [v1, v2, v3] = s.velocity;
        out.push_str(&format!(
            "{x1:.16e} {x2:.16e} {x3:.16e} {v1:.16e} {v2:.16e} {v3:.16e}\n"
        ));
    }
    out
}

/// The two-dimensional contour equation as a time-integrable system.
#[derive(Debug, Clone)]
pub struct Muskat2D {
    pub params: PhysParams,
    plan: Arc<Rhs2DPlan>,
}

impl Muskat2D {
    pub fn new(grid: Grid2D, params: PhysParams, cfg: Quadrature2DConfig) -> Result<Self> {
        Ok(Self {
            params,
            plan: Arc::new(Rhs2DPlan::new(grid, cfg)?),
        })
    }

    pub fn plan(&self) -> &Rhs2DPlan {
        &self.plan
    }

    pub fn evaluate(&self, f: &ScalarField2D) -> Result<ScalarField2D> {
        rhs_2d_with_plan(f, &self.params, &self.plan)
    }

    /// `rhs + (rho_bar / 2) Lambda f`.
    pub fn remainder(&self, f: &ScalarField2D) -> Result<ScalarField2D> {
        let rho_bar = self.params.rho_bar();
        if !self.plan.cfg.subtract_linear || rho_bar == 0.0 {
            let r = self.evaluate(f)?;
            let half = half_lambda(f);
            return Field::new(
                *f.grid(),
                r.samples()
                    .iter()
                    .zip(&half)
                    .map(|(a, b)| a + rho_bar * b)
                    .collect(),
            );
        }
        self.plan.check_field(f)?;
        let c = 1.0 / (4.0 * PI);
        Field::new(
            *f.grid(),
            self.plan.integral(f).into_iter().map(|s| rho_bar * (c * s)).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stable() -> PhysParams {
        PhysParams::new(0.0, 1.0).unwrap()
    }

    fn grid(n: usize) -> Grid2D {
        Grid2D::torus(n, n).unwrap()
    }

    fn patch_cfg(layers: usize) -> Quadrature2DConfig {
        Quadrature2DConfig {
            image_layers: layers,
            singular_cell: SingularCell::PolarPatch,
            ..Quadrature2DConfig::default()
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(6);
        let sum: f64 = rule.iter().map(|(x, w)| w * x.powi(10)).sum();
        assert!((sum - 2.0 / 11.0).abs() < 1e-14);
        assert!((rule.iter().map(|r| r.1).sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn polar_patch_covers_the_cell() {
        // Area: int r dr dtheta over the cell equals h1 h2.
        let nodes = polar_patch_nodes(0.3, 0.2, 8);
        let area: f64 = nodes.iter().map(|p| p.w * p.r).sum();
        assert!((area - 0.06).abs() < 1e-12);
        // int x^2 dA = h2 h1^3 / 12.
        let m2: f64 = nodes.iter().map(|p| p.w * p.r * (p.r * p.c).powi(2)).sum();
        assert!((m2 - 0.2 * 0.027 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn kernel_excess_is_accurate() {
        for t in [1e-12, 1e-6, 0.1, 1.0, 50.0] {
            let direct = (1.0f64 + t).powf(-1.5) - 1.0;
            let via = kernel_excess(t);
            assert!((via - direct).abs() <= 1e-15 + 1e-12 * direct.abs());
        }
        assert!((kernel_excess(1e-12) / -1.5e-12 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn config_guards() {
        let g = grid(16);
        let mut c = Quadrature2DConfig::default();
        c.image_layers = 5;
        assert!(c.validate(&g).is_err());
        c.image_layers = 1;
        c.polar_patch_rings = 3;
        assert!(c.validate(&g).is_err());
        let big = Grid2D::torus(128, 16).unwrap();
        assert!(Quadrature2DConfig::default().validate(&big).is_err());
        let ok = Quadrature2DConfig {
            allow_large_grid: true,
            ..Default::default()
        };
        assert!(ok.validate(&big).is_ok());
    }

    #[test]
    fn constants_do_not_move() {
        for v in [0.0, 0.4] {
            let f = Field::constant(grid(16), v).unwrap();
            for cfg in [patch_cfg(1), Quadrature2DConfig::default()] {
                assert_eq!(rhs_2d(&f, &stable(), &cfg).unwrap().linf(), 0.0);
            }
        }
    }

    #[test]
    fn single_mode_matches_linear_multiplier() {
        let eps = 1e-5;
        for (k1, k2) in [(1.0, 0.0), (1.0, 1.0), (2.0, 1.0)] {
            let f = ScalarField2D::from_fn(grid(32), |x1, x2| eps * (k1 * x1 + k2 * x2).cos()).unwrap();
            let lin = f.scaled(-0.5 * f64::hypot(k1, k2));
            let r = rhs_2d(&f, &stable(), &patch_cfg(1)).unwrap();
            assert!(r.max_abs_diff(&lin) / lin.linf() < 1e-2);
        }
    }

    #[test]
    fn raw_scheme_singular_cell_error_is_first_order() {
        // Linear regime: PunctureCell minus PolarPatch is the cell integral, O(h).
        let eps = 1e-5;
        let gap = |n: usize| {
            let f = ScalarField2D::from_fn(grid(n), |x1, x2| eps * (x1 + x2).cos()).unwrap();
            let raw = |cell| Quadrature2DConfig {
                image_layers: 0,
                singular_cell: cell,
                subtract_linear: false,
                ..Default::default()
            };
            let a = rhs_2d(&f, &stable(), &raw(SingularCell::PunctureCell)).unwrap();
            let b = rhs_2d(&f, &stable(), &raw(SingularCell::PolarPatch)).unwrap();
            a.max_abs_diff(&b)
        };
        let ratio = gap(16) / gap(32);
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn jump_scaling_and_axis_symmetry() {
        let f = ScalarField2D::from_fn(grid(16), |x1, x2| {
            0.2 * x1.cos() * x2.cos() + 0.1 * (x1 + 2.0 * x2).sin()
        })
        .unwrap();
        let cfg = patch_cfg(0);
        let one = rhs_2d(&f, &stable(), &cfg).unwrap();
        let two = rhs_2d(&f, &PhysParams::with_jump(2.0).unwrap(), &cfg).unwrap();
        assert_eq!(two, one.scaled(2.0));
        let swapped = rhs_2d(&f.transpose().unwrap(), &stable(), &cfg).unwrap();
        assert!(swapped.max_abs_diff(&one.transpose().unwrap()) < 1e-10);
        assert!(one.mean().abs() < 1e-6);
        let shifted = rhs_2d(&f.map(|v| v + 0.7).unwrap(), &stable(), &cfg).unwrap();
        assert!(shifted.max_abs_diff(&one) < 1e-12);
    }

    #[test]
    fn reduction_gap_is_small() {
        let f = ScalarField1D::from_fn(crate::grid::Grid1D::torus(32).unwrap(), |x| 0.2 * x.cos()).unwrap();
        let rep = reduce_consistency(&f, &stable(), &patch_cfg(1), &Quadrature1DConfig::default()).unwrap();
        assert!(rep.l_inf_gap < 1e-2, "{}", rep.l_inf_gap);
        let zero = Field::zeros(crate::grid::Grid1D::torus(16).unwrap());
        let rep = reduce_consistency(&zero, &stable(), &patch_cfg(0), &Quadrature1DConfig::default()).unwrap();
        assert_eq!(rep.l_inf_gap, 0.0);
    }

    #[test]
    fn extremum_identity() {
        let f = ScalarField2D::from_fn(grid(32), |x1, x2| 0.2 * x1.cos() * x2.cos() + 0.05 * (2.0 * x1).cos())
            .unwrap();
        let cfg = patch_cfg(1);
        let j1 = rhs_2d_at_extremum(&f, &stable(), &cfg).unwrap();
        let r = rhs_2d(&f, &stable(), &cfg).unwrap();
        assert!(j1.value <= 1e-12);
        assert!((j1.value - r.samples()[j1.index]).abs() < 1e-2 * j1.value.abs());
        let raw = Quadrature2DConfig {
            subtract_linear: false,
            image_layers: 2,
            ..cfg
        };
        assert!(rhs_2d_at_extremum(&f, &stable(), &raw).unwrap().value <= 1e-12);
        let c = rhs_2d_at_extremum(&Field::constant(grid(16), 1.0).unwrap(), &stable(), &cfg).unwrap();
        assert_eq!((c.value, c.tie), (0.0, true));
    }

    #[test]
    fn velocity_vanishes_for_flat_interface() {
        let f = Field::zeros(grid(16));
        let pts = [[0.3, 1.1, 0.9], [2.0, -1.0, -2.5]];
        for s in velocity_field(&f, &stable(), &pts, &patch_cfg(1)).unwrap() {
            assert!(s.velocity.iter().all(|v| v.abs() < 1e-14), "{:?}", s.velocity);
        }
    }

    #[test]
    fn velocity_rejects_points_on_the_interface() {
        let f = ScalarField2D::from_fn(grid(16), |x1, _| 0.1 * x1.cos()).unwrap();
        let err = velocity_field(&f, &stable(), &[[0.0, 0.0, 0.1]], &patch_cfg(0));
        assert!(matches!(err, Err(MuskatError::Precondition(_))));
    }

    #[test]
    fn velocity_decays_away_from_interface() {
        let f = ScalarField2D::from_fn(grid(32), |x1, _| 0.1 * x1.cos()).unwrap();
        let pts: Vec<[f64; 3]> = (2..=8).map(|z| [0.0, 0.0, z as f64]).collect();
        let v = velocity_field(&f, &stable(), &pts, &patch_cfg(1)).unwrap();
        let mags: Vec<f64> = v
            .iter()
            .map(|s| s.velocity.iter().map(|c| c * c).sum::<f64>().sqrt())
            .collect();
        assert!(mags.windows(2).all(|w| w[1] < w[0]), "{mags:?}");
    }

    #[test]
    fn normal_velocity_matches_rhs_at_crest() {
        let g = grid(64);
        let f = ScalarField2D::from_fn(g, |x1, _| 0.1 * x1.cos()).unwrap();
        let cfg = patch_cfg(1);
        let r = rhs_2d(&f, &stable(), &cfg).unwrap().samples()[0];
        let h = g.min_spacing();
        let at = |eta: f64| {
            velocity_field(&f, &stable(), &[[0.0, 0.0, 0.1 + eta]], &cfg).unwrap()[0].velocity[2]
        };
        // Remove the O(offset) vertical variation by extrapolating to the sheet.
        let v = 2.0 * at(1.5 * h) - at(3.0 * h);
        assert!((v - r).abs() < 5e-2 * r.abs(), "{v} vs {r}");
    }

    #[test]
    fn points_round_trip_format() {
        let pts = parse_points("# header\n0 1 2\n\n3.5 -1 1e-3  # tail\n").unwrap();
        assert_eq!(pts, vec![[0.0, 1.0, 2.0], [3.5, -1.0, 1e-3]]);
        assert!(parse_points("1 2\n").is_err());
        assert!(parse_points("1 2 x\n").is_err());
        let line = format_samples(&[VelocitySample {
            position: [0.0, 1.0, 2.0],
            velocity: [0.5, 0.0, -1.0],
        }]);
        let fields: Vec<f64> = line.split_whitespace().map(|v| v.parse().unwrap()).collect();
        assert_eq!(fields, vec![0.0, 1.0, 2.0, 0.5, 0.0, -1.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn mean_is_conserved(a in -0.3f64..0.3, b in -0.3f64..0.3, p in 0.0f64..6.3) {
            let f = ScalarField2D::from_fn(grid(16), |x1, x2| a * (x1 + p).cos() * x2.cos() + b * (x2 - p).sin()).unwrap();
            let r = rhs_2d(&f, &stable(), &patch_cfg(0)).unwrap();
            prop_assert!(r.mean().abs() < 1e-6);
        }
    }
}
