//! Per-step observation, decay fits and pass/fail verdicts for the
//! maximum principle, the decay estimates and the slope bound.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{MuskatError, Result};
use crate::field::{norms, Field};
use crate::grid::Grid;

/// Diagnostics of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSeriesRecord {
    pub t: f64,
    pub linf: f64,
    pub l1: f64,
    pub mean: f64,
    pub fmax: f64,
    pub fmin: f64,
    pub max_slope: f64,
    pub argmax_index: usize,
    /// Energy fraction in the top third of the resolved modes.
    pub spectrum_tail: f64,
}

pub fn observe<G: Grid>(state: &Field<G>, t: f64) -> TimeSeriesRecord {
    let n = norms(state);
    TimeSeriesRecord {
        t,
        linf: n.linf,
        l1: n.l1,
        mean: n.mean,
        fmax: n.max,
        fmin: n.min,
        max_slope: n.max_slope,
        argmax_index: state.argmax().index,
        spectrum_tail: state.grid().spectrum_tail(state.samples()),
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub check_name: String,
    pub pass: bool,
    pub measured: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub notes: String,
}

impl Verdict {
    /// `CHECK <name> PASS|FAIL measured=<v> bound=<b> tol=<t>`.
    pub fn report_line(&self) -> String {
        format!(
            "CHECK {} {} measured={:.6e} bound={:.6e} tol={:.3e}",
            self.check_name,
            if self.pass { "PASS" } else { "FAIL" },
            self.measured,
            self.bound,
            self.tolerance
        )
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.report_line())?;
        if !self.notes.is_empty() {
            write!(f, " # {}", self.notes)?;
        }
        Ok(())
    }
}

/// Largest value of `n` scanned when maximizing over the proof parameter.
pub const CONSTANT_SCAN_LIMIT: u32 = 1_000_000;

/// Decay constants from the initial norms and the density jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub c_prop32: f64,
    pub c_prop33: f64,
    pub c_prop42: f64,
    pub c_prop43: f64,
}

impl BoundConstants {
    pub fn new(linf0: f64, l1_0: f64, rho_bar: f64) -> Self {
        let m2 = 4.0 * linf0 * linf0;
        let scan = |term: &dyn Fn(f64) -> f64| {
            (1..=CONSTANT_SCAN_LIMIT).fold(0.0f64, |best, n| best.max(term(n as f64)))
        };
        let c32 = scan(&|n| (2.0 * n * PI) / (2.0 * PI * (n * n * PI * PI + m2)));
        let c42 = scan(&|n| {
            let a = n * PI;
            (2.0 * a).powi(2) / (4.0 * PI * (2.0 * a * a + m2).powf(1.5))
        });
        let l = linf0;
        let c33 = if l1_0 > 0.0 {
            l1_0 / (8.0 * PI * (l1_0 * l1_0 + 2.0 * l1_0 * l * l + 2.0 * l.powi(4)))
        } else {
            0.0
        };
        let c43 = 0.125 / (1.0 + 2.0 * l1_0 / PI + 4.0 * l.powi(3)).powf(1.5);
        Self {
            c_prop32: rho_bar * c32,
            c_prop33: rho_bar * c33,
            c_prop42: rho_bar * c42,
            c_prop43: rho_bar * c43,
        }
    }

    pub fn from_record(r: &TimeSeriesRecord, rho_bar: f64) -> Self {
        Self::new(r.linf, r.l1, rho_bar)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentialBound {
    Prop3_2,
    Prop4_2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgebraicBound {
    Prop3_3,
    Prop4_3,
}

/// Default per-step tolerance of [`check_max_principle`].
pub const MAX_PRINCIPLE_TOLERANCE: f64 = 1e-9;
/// Largest initial mean accepted by [`check_exponential_bound`].
pub const MEAN_ZERO_TOLERANCE: f64 = 1e-10;
/// Required gap below slope one at `t = 0` for [`check_slope_bound`].
pub const SLOPE_MARGIN: f64 = 1e-3;
/// Per-step tolerance on slope increases in [`check_slope_bound`].
pub const SLOPE_TOLERANCE: f64 = 1e-6;

fn nonempty(series: &[TimeSeriesRecord]) -> Result<&TimeSeriesRecord> {
    series
        .first()
        .ok_or_else(|| MuskatError::DegenerateSeries("empty series".into()))
}

fn max_rise(values: impl Iterator<Item = f64>) -> f64 {
    let mut prev: Option<f64> = None;
    let mut worst = f64::NEG_INFINITY;
    for v in values {
        if let Some(p) = prev {
            worst = worst.max(v - p);
        }
        prev = Some(v);
    }
    worst
}

/// `||f||_inf`, the maximum and minus the minimum are each nonincreasing
/// within `tolerance` per step, and `||f||_inf` never exceeds its initial
/// value by more than `tolerance`. `measured` is the worst violation
/// (negative when every sequence strictly decreases).
pub fn check_max_principle(series: &[TimeSeriesRecord], tolerance: f64) -> Result<Verdict> {
    let first = nonempty(series)?;
    let linf_rise = max_rise(series.iter().map(|r| r.linf));
    let max_rise_ = max_rise(series.iter().map(|r| r.fmax));
    let min_drop = max_rise(series.iter().map(|r| -r.fmin));
    let excess = series
        .iter()
        .map(|r| r.linf - first.linf)
        .fold(f64::NEG_INFINITY, f64::max);
    let measured = if series.len() < 2 {
        0.0
    } else {
        linf_rise.max(max_rise_).max(min_drop).max(excess)
    };
    Ok(Verdict {
        check_name: "max_principle".into(),
        pass: measured <= tolerance,
        measured,
        bound: 0.0,
        tolerance,
        notes: format!(
            "linf rise {linf_rise:.3e}, max rise {max_rise_:.3e}, min drop {min_drop:.3e}"
        ),
    })
}

/// `linf(t) <= linf(0) exp(-c t) (1 + tolerance)` at every record.
/// `measured` is the largest ratio `linf(t) / (linf(0) exp(-c t))`.
pub fn check_exponential_bound(
    series: &[TimeSeriesRecord],
    constants: &BoundConstants,
    which: ExponentialBound,
    tolerance: f64,
) -> Result<Verdict> {
    let first = nonempty(series)?;
    if first.mean.abs() >= MEAN_ZERO_TOLERANCE {
        return Err(MuskatError::Precondition(format!(
            "exponential decay needs mean-zero data, initial mean is {:e}",
            first.mean
        )));
    }
    let (name, c) = match which {
        ExponentialBound::Prop3_2 => ("exp_bound_1d", constants.c_prop32),
        ExponentialBound::Prop4_2 => ("exp_bound_2d", constants.c_prop42),
    };
    let ratio = worst_ratio(series, |t| first.linf * (-c * t).exp());
    Ok(Verdict {
        check_name: name.into(),
        pass: ratio <= 1.0 + tolerance,
        measured: ratio,
        bound: 1.0,
        tolerance,
        notes: format!("c = {c:.6e}"),
    })
}

fn worst_ratio(series: &[TimeSeriesRecord], bound: impl Fn(f64) -> f64) -> f64 {
    series.iter().fold(0.0f64, |m, r| {
        let b = bound(r.t);
        if r.linf == 0.0 {
            m
        } else if b > 0.0 {
            m.max(r.linf / b)
        } else {
            f64::INFINITY
        }
    })
}

/// Algebraic decay for sign-definite data:
/// `linf(0) / (1 + c t)` with `c = c_prop33`, or `linf(0) / (1 + c' t)^2`
/// with `c' = c_prop43 sqrt(linf(0)) / 2`, the integral of
/// `y' <= -c_prop43 y^{3/2}`.
pub fn check_algebraic_bound(
    series: &[TimeSeriesRecord],
    constants: &BoundConstants,
    which: AlgebraicBound,
    tolerance: f64,
) -> Result<Verdict> {
    let first = nonempty(series)?;
    if first.fmin < 0.0 && first.fmax > 0.0 {
        return Err(MuskatError::Precondition(format!(
            "algebraic decay needs sign-definite data, initial range is [{:e}, {:e}]",
            first.fmin, first.fmax
        )));
    }
    let y0 = first.linf;
    let (name, c, ratio) = match which {
        AlgebraicBound::Prop3_3 => {
            let c = constants.c_prop33;
            ("alg_bound_1d", c, worst_ratio(series, |t| y0 / (1.0 + c * t)))
        }
        AlgebraicBound::Prop4_3 => {
            let c = 0.5 * constants.c_prop43 * y0.sqrt();
            ("alg_bound_2d", c, worst_ratio(series, |t| y0 / (1.0 + c * t).powi(2)))
        }
    };
    Ok(Verdict {
        check_name: name.into(),
        pass: ratio <= 1.0 + tolerance,
        measured: ratio,
        bound: 1.0,
        tolerance,
        notes: format!("c = {c:.6e}"),
    })
}

/// `max_slope < 1` throughout and nonincreasing within [`SLOPE_TOLERANCE`].
/// `measured` is the largest slope seen.
pub fn check_slope_bound(series: &[TimeSeriesRecord]) -> Result<Verdict> {
    let first = nonempty(series)?;
    if first.max_slope > 1.0 - SLOPE_MARGIN {
        return Err(MuskatError::Precondition(format!(
            "initial slope {} is not below 1 - {SLOPE_MARGIN}",
            first.max_slope
        )));
    }
    let peak = series.iter().map(|r| r.max_slope).fold(0.0, f64::max);
    let rise = if series.len() < 2 {
        0.0
    } else {
        max_rise(series.iter().map(|r| r.max_slope))
    };
    let crossing = series.iter().find(|r| r.max_slope >= 1.0).map(|r| r.t);
    let notes = match crossing {
        Some(t) => format!("slope reaches 1 at t = {t}; largest rise {rise:.3e}"),
        None => format!("largest rise {rise:.3e}"),
    };
    Ok(Verdict {
        check_name: "slope_bound".into(),
        pass: peak < 1.0 && rise <= SLOPE_TOLERANCE,
        measured: peak,
        bound: 1.0,
        tolerance: SLOPE_TOLERANCE,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// `y = y0 exp(-r t)`; reports `r`.
    Exponential,
    /// `y = y0 / (1 + c t)`; reports `c`.
    AlgebraicP1,
    /// `y = y0 / (1 + c t)^2`; reports `c`.
    AlgebraicP2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Rate for the exponential model, constant `c` for the algebraic ones.
    pub value: f64,
    /// Coefficient of determination of the linearized fit.
    pub quality: f64,
}

/// Minimum number of samples for [`fit_decay`].
pub const MIN_FIT_SAMPLES: usize = 10;

/// Fits `linf(t)` from a series; see [`fit_decay_samples`].
pub fn fit_decay(series: &[TimeSeriesRecord], model: DecayModel) -> Result<DecayFit> {
    let t: Vec<f64> = series.iter().map(|r| r.t).collect();
    let y: Vec<f64> = series.iter().map(|r| r.linf).collect();
    fit_decay_samples(&t, &y, model)
}

/// Least-squares fit of the linearized model: `log y`, `1/y` or
/// `1/sqrt(y)` against `t`.
pub fn fit_decay_samples(t: &[f64], y: &[f64], model: DecayModel) -> Result<DecayFit> {
    if t.len() != y.len() || t.len() < MIN_FIT_SAMPLES {
        return Err(MuskatError::DegenerateSeries(format!(
            "need at least {MIN_FIT_SAMPLES} paired samples, got {}",
            t.len().min(y.len())
        )));
    }
    if let Some(v) = y.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(MuskatError::DegenerateSeries(format!(
            "decay fits need positive values, found {v}"
        )));
    }
    let z: Vec<f64> = y
        .iter()
        .map(|&v| match model {
            DecayModel::Exponential => v.ln(),
            DecayModel::AlgebraicP1 => 1.0 / v,
            DecayModel::AlgebraicP2 => 1.0 / v.sqrt(),
        })
        .collect();
    let (slope, intercept, r2) = linear_fit(t, &z)?;
    let value = match model {
        DecayModel::Exponential => -slope,
        _ => slope / intercept,
    };
    Ok(DecayFit { value, quality: r2 })
}

fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    use crate::summation::sum_iter;
    let n = x.len() as f64;
    let mx = sum_iter(x.iter().copied()) / n;
    let my = sum_iter(y.iter().copied()) / n;
    let sxx = sum_iter(x.iter().map(|v| (v - mx) * (v - mx)));
    if sxx == 0.0 {
        return Err(MuskatError::DegenerateSeries(
            "all samples share one time".into(),
        ));
    }
    let sxy = sum_iter(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let syy = sum_iter(y.iter().map(|v| (v - my) * (v - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        let sse = sum_iter(
            x.iter()
                .zip(y)
                .map(|(a, b)| (b - intercept - slope * a).powi(2)),
        );
        1.0 - sse / syy
    };
    Ok((slope, intercept, r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField1D;
    use crate::grid::Grid1D;
    use crate::spectral::linear_evolve;
    use proptest::prelude::*;

    fn rec(t: f64, linf: f64) -> TimeSeriesRecord {
        TimeSeriesRecord {
            t,
            linf,
            l1: 0.0,
            mean: 0.0,
            fmax: linf,
            fmin: -linf,
            max_slope: 0.5 * linf,
            argmax_index: 0,
            spectrum_tail: 0.0,
        }
    }

    fn series(f: impl Fn(f64) -> f64, n: usize, dt: f64) -> Vec<TimeSeriesRecord> {
        (0..n).map(|k| rec(k as f64 * dt, f(k as f64 * dt))).collect()
    }

    #[test]
    fn observe_examples() {
        let g = Grid1D::torus(128).unwrap();
        let zero = observe(&ScalarField1D::from_fn(g, |_| 0.0).unwrap(), 0.0);
        assert_eq!((zero.linf, zero.l1, zero.mean, zero.max_slope), (0.0, 0.0, 0.0, 0.0));
        let s = observe(&ScalarField1D::from_fn(g, |x| 0.9 * x.sin()).unwrap(), 1.0);
        assert!((s.max_slope - 0.9).abs() < 1e-10 && s.mean.abs() < 1e-15);
        assert!((s.linf - 0.9).abs() < 1e-3);
        let c = observe(&ScalarField1D::from_fn(g, |x| 0.1 + 0.2 * x.cos()).unwrap(), 0.0);
        assert!((c.fmax - 0.3).abs() < 1e-15 && (c.fmin + 0.1).abs() < 1e-15);
        assert!((c.linf - 0.3).abs() < 1e-15 && (c.mean - 0.1).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&c.spectrum_tail));
    }

    #[test]
    fn report_line_format() {
        let v = check_max_principle(&series(|t| 1.0 - t, 5, 0.1), 1e-9).unwrap();
        let line = v.report_line();
        assert!(line.starts_with("CHECK max_principle PASS measured="));
        assert!(line.contains(" bound=") && line.contains(" tol="));
    }

    #[test]
    fn max_principle_tolerance_semantics() {
        assert!(check_max_principle(&series(|t| (-t).exp(), 20, 0.1), 1e-9).unwrap().pass);
        let mut s = series(|t| 1.0 - 0.01 * t, 10, 1.0);
        s[5].linf += 1e-10 + 0.01;
        s[5].fmax = s[5].linf;
        s[5].fmin = -s[5].linf;
        // An uptick of 1e-10 over the previous record.
        s[5].linf = s[4].linf + 1e-10;
        s[5].fmax = s[5].linf;
        s[5].fmin = -s[5].linf;
        assert!(check_max_principle(&s, 1e-9).unwrap().pass);
        s[5].linf = s[4].linf + 1e-3;
        s[5].fmax = s[5].linf;
        s[5].fmin = -s[5].linf;
        let v = check_max_principle(&s, 1e-9).unwrap();
        assert!(!v.pass);
        assert!((v.measured - 1e-3).abs() < 1e-12);
        assert!(check_max_principle(&[], 1e-9).is_err());
    }

    #[test]
    fn c_prop32_for_small_cosine() {
        // Oracle: the n = 1 term of the proof formula dominates for 4 ||f||^2 < pi^2.
        let c = BoundConstants::new(0.1, 0.4, 1.0);
        let expected = 1.0 / (PI * PI + 0.04);
        assert!((c.c_prop32 - expected).abs() < 1e-15);
        assert!((c.c_prop32 - 0.100912).abs() < 1e-6);
    }

    #[test]
    fn constants_scale_with_jump() {
        let a = BoundConstants::new(0.3, 1.2, 1.0);
        let b = BoundConstants::new(0.3, 1.2, 2.5);
        assert!((b.c_prop42 - 2.5 * a.c_prop42).abs() < 1e-15);
        assert!((b.c_prop43 - 2.5 * a.c_prop43).abs() < 1e-15);
    }

    #[test]
    fn exponential_bound_examples() {
        let g = Grid1D::torus(64).unwrap();
        let f0 = ScalarField1D::from_fn(g, |x| 0.1 * x.cos()).unwrap();
        let recs: Vec<_> = (0..=50)
            .map(|k| observe(&linear_evolve(&f0, 0.1 * k as f64, 1.0).unwrap(), 0.1 * k as f64))
            .collect();
        let c = BoundConstants::from_record(&recs[0], 1.0);
        let v = check_exponential_bound(&recs, &c, ExponentialBound::Prop3_2, 0.01).unwrap();
        assert!(v.pass, "{v}");
        let flat = series(|_| 0.1, 10, 0.5);
        assert!(!check_exponential_bound(&flat, &c, ExponentialBound::Prop3_2, 0.01).unwrap().pass);
        let mut shifted = recs.clone();
        shifted[0].mean = 1e-3;
        assert!(check_exponential_bound(&shifted, &c, ExponentialBound::Prop3_2, 0.01).is_err());
    }

    #[test]
    fn algebraic_bound_examples() {
        let mut s = series(|t| 1.0 / (1.0 + t), 20, 0.5);
        for r in &mut s {
            r.fmin = 0.0;
        }
        let c = BoundConstants {
            c_prop32: 0.0,
            c_prop33: 0.8,
            c_prop42: 0.0,
            c_prop43: 0.0,
        };
        assert!(check_algebraic_bound(&s, &c, AlgebraicBound::Prop3_3, 1e-12).unwrap().pass);
        let zero = series(|_| 0.0, 3, 1.0);
        assert!(check_algebraic_bound(&zero, &c, AlgebraicBound::Prop3_3, 0.0).unwrap().pass);
        let mixed = series(|_| 1.0, 3, 1.0);
        assert!(check_algebraic_bound(&mixed, &c, AlgebraicBound::Prop3_3, 0.0).is_err());
    }

    #[test]
    fn slope_bound_examples() {
        let ok = series(|t| 1.8 * (-t).exp(), 10, 0.1);
        assert!(check_slope_bound(&ok).unwrap().pass);
        let zero = series(|_| 0.0, 3, 0.1);
        assert!(check_slope_bound(&zero).unwrap().pass);
        let steep = series(|t| 1.8 * (0.5 * t).exp(), 20, 0.1);
        let v = check_slope_bound(&steep).unwrap();
        assert!(!v.pass && v.notes.contains("reaches 1"));
        let start = series(|_| 2.0, 3, 0.1);
        assert!(check_slope_bound(&start).is_err());
    }

    #[test]
    fn fit_examples() {
        let e = fit_decay(&series(|t| (-0.5 * t).exp(), 30, 0.2), DecayModel::Exponential).unwrap();
        assert!((e.value - 0.5).abs() < 1e-6 && e.quality > 0.999999);
        let a = fit_decay(&series(|t| 1.0 / (1.0 + 2.0 * t), 30, 0.2), DecayModel::AlgebraicP1).unwrap();
        assert!((a.value - 2.0).abs() < 1e-4);
        let b = fit_decay(&series(|t| (1.0 + 0.3 * t).powi(-2), 30, 0.2), DecayModel::AlgebraicP2).unwrap();
        assert!((b.value - 0.3).abs() < 1e-10);
        assert!(fit_decay(&series(|t| t, 5, 1.0), DecayModel::Exponential).is_err());
        assert!(fit_decay(&series(|_| 0.0, 20, 1.0), DecayModel::Exponential).is_err());
    }

    #[test]
    fn fit_of_linear_evolution() {
        let g = Grid1D::torus(64).unwrap();
        let f0 = ScalarField1D::from_fn(g, f64::cos).unwrap();
        let recs: Vec<_> = (0..20)
            .map(|k| observe(&linear_evolve(&f0, 0.25 * k as f64, 1.0).unwrap(), 0.25 * k as f64))
            .collect();
        let fit = fit_decay(&recs, DecayModel::Exponential).unwrap();
        assert!((fit.value - 0.5).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn c_prop32_decreases_with_amplitude(a in 0.01f64..3.0, b in 0.01f64..3.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-6);
            let c_lo = BoundConstants::new(lo, 1.0, 1.0).c_prop32;
            let c_hi = BoundConstants::new(hi, 1.0, 1.0).c_prop32;
            prop_assert!(c_hi < c_lo);
        }

        #[test]
        fn observe_is_idempotent(amp in -2.0f64..2.0, k in 1u32..6) {
            let g = Grid1D::torus(32).unwrap();
            let f = ScalarField1D::from_fn(g, |x| amp * (k as f64 * x).sin()).unwrap();
            prop_assert_eq!(observe(&f, 0.3), observe(&f, 0.3));
        }
    }
}
