//! Explicit RK4 and integrating-factor (Lawson) RK4 time stepping.

use crate::diagnostics::{observe, TimeSeriesRecord};
use crate::error::{MuskatError, Result};
use crate::field::{Field, ScalarField1D, ScalarField2D};
use crate::grid::{DomainKind, Grid};
use crate::muskat1d::Muskat1D;
use crate::muskat2d::Muskat2D;

/// Negative-real-axis stability interval of classical RK4.
pub const RK4_REAL_STABILITY: f64 = 2.785;

/// A system `f_t = rhs(f)` whose linearization is `-(rho_bar / 2) Lambda f`.
pub trait Dynamics<G: Grid>: Sync {
    fn rho_bar(&self) -> f64;

    fn rhs(&self, state: &Field<G>) -> Result<Field<G>>;

    /// `rhs(f) + (rho_bar / 2) Lambda f`.
    fn remainder(&self, state: &Field<G>) -> Result<Field<G>> {
        let r = self.rhs(state)?;
        let half = 0.5 * self.rho_bar();
        let lam = state.grid().apply_isotropic(state.samples(), |k| half * k);
        Field::new(
            *state.grid(),
            r.samples().iter().zip(&lam).map(|(a, b)| a + b).collect(),
        )
    }
}

/// The linearized equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub rho_bar: f64,
}

impl<G: Grid> Dynamics<G> for Linear {
    fn rho_bar(&self) -> f64 {
        self.rho_bar
    }
    fn rhs(&self, state: &Field<G>) -> Result<Field<G>> {
        let c = -0.5 * self.rho_bar;
        Field::new(
            *state.grid(),
            state.grid().apply_isotropic(state.samples(), |k| c * k),
        )
    }
    fn remainder(&self, state: &Field<G>) -> Result<Field<G>> {
        Ok(Field::zeros(*state.grid()))
    }
}

impl Dynamics<crate::grid::Grid1D> for Muskat1D {
    fn rho_bar(&self) -> f64 {
        self.params.rho_bar()
    }
    fn rhs(&self, state: &ScalarField1D) -> Result<ScalarField1D> {
        self.evaluate(state)
    }
}

impl Dynamics<crate::grid::Grid2D> for Muskat2D {
    fn rho_bar(&self) -> f64 {
        self.params.rho_bar()
    }
    fn rhs(&self, state: &ScalarField2D) -> Result<ScalarField2D> {
        self.evaluate(state)
    }
    fn remainder(&self, state: &ScalarField2D) -> Result<ScalarField2D> {
        Muskat2D::remainder(self, state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    /// Sized from the stiffest linear mode; see [`StepControl::resolve_dt`].
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub dt: TimeStep,
    pub cfl_safety: f64,
    pub t_end: f64,
    pub max_steps: usize,
    /// Stop with [`Termination::BlowupGuard`] once the maximal slope exceeds this.
    pub blowup_slope: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt: TimeStep::Auto,
            cfl_safety: 0.5,
            t_end: 1.0,
            max_steps: 1_000_000,
            blowup_slope: 10.0,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(MuskatError::Config(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(MuskatError::Config(format!(
                "t_end must be nonnegative, got {}",
                self.t_end
            )));
        }
        if let TimeStep::Fixed(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(MuskatError::Config(format!("dt must be positive, got {dt}")));
            }
        }
        if !(self.blowup_slope > 0.0) {
            return Err(MuskatError::Config("blowup_slope must be positive".into()));
        }
        Ok(())
    }

    /// `cfl_safety * 2.785 * 2 / (|rho_bar| xi_max)`, which in one dimension
    /// is `cfl_safety * 2.785 * 2 * spacing / (pi |rho_bar|)`; for
    /// `rho_bar = 0` it is `t_end / max(1, max_steps)`.
    pub fn resolve_dt<G: Grid>(&self, grid: &G, rho_bar: f64) -> f64 {
        match self.dt {
            TimeStep::Fixed(dt) => dt,
            TimeStep::Auto if rho_bar == 0.0 => self.t_end / self.max_steps.max(1) as f64,
            TimeStep::Auto => {
                self.cfl_safety * RK4_REAL_STABILITY * 2.0 / (rho_bar.abs() * grid.max_wavenumber())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeScheme {
    Rk4,
    /// RK4 on `exp(rho_bar Lambda t / 2) f`, advancing the linear part exactly.
    IntegratingFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Completed,
    BlowupGuard,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<G: Grid> {
    pub times: Vec<f64>,
    pub states: Vec<Field<G>>,
    pub records: Vec<TimeSeriesRecord>,
    pub termination: Termination,
    /// Nominal step size (the final step may be shorter).
    pub dt: f64,
}

impl<G: Grid> Trajectory<G> {
    pub fn final_state(&self) -> &Field<G> {
        self.states.last().expect("trajectories hold the initial state")
    }
}

fn stage_error(stage: usize, err: MuskatError) -> MuskatError {
    MuskatError::Integration {
        step: 0,
        time: 0.0,
        stage,
        reason: err.to_string(),
    }
}

fn finite<G: Grid>(f: Field<G>, stage: usize) -> Result<Field<G>> {
    Field::new(*f.grid(), f.into_samples()).map_err(|e| stage_error(stage, e))
}

/// One classical RK4 step. Non-finite stage values are reported with the
/// stage number (1 to 4, 5 for the combination).
pub fn step_rk4<G: Grid>(
    state: &Field<G>,
    rhs: impl Fn(&Field<G>) -> Result<Field<G>>,
    dt: f64,
) -> Result<Field<G>> {
    if !(dt > 0.0) {
        return Err(MuskatError::Config(format!("dt must be positive, got {dt}")));
    }
    let eval = |f: &Field<G>, stage| rhs(f).map_err(|e| stage_error(stage, e));
    let k1 = eval(state, 1)?;
    let k2 = eval(&finite(state.axpy(0.5 * dt, &k1), 2)?, 2)?;
    let k3 = eval(&finite(state.axpy(0.5 * dt, &k2), 3)?, 3)?;
    let k4 = eval(&finite(state.axpy(dt, &k3), 4)?, 4)?;
    let samples = (0..state.len())
        .map(|i| {
            let s = k1.samples()[i] + 2.0 * k2.samples()[i] + 2.0 * k3.samples()[i] + k4.samples()[i];
            state.samples()[i] + dt / 6.0 * s
        })
        .collect();
    Field::new(*state.grid(), samples).map_err(|e| stage_error(5, e))
}

/// One Lawson RK4 step: with `E(t) = exp(-(rho_bar/2) |xi| t)` and the
/// nonlinear remainder `N`,
///
/// ```text
/// u2 = E(dt/2) (u + dt/2 N(u)),  u3 = E(dt/2) u + dt/2 N(u2),
/// u4 = E(dt) u + dt E(dt/2) N(u3),
/// u' = E(dt) u + dt/6 (E(dt) N(u) + 2 E(dt/2) (N(u2) + N(u3)) + N(u4)).
/// ```
pub fn step_integrating_factor<G: Grid>(
    state: &Field<G>,
    remainder: impl Fn(&Field<G>) -> Result<Field<G>>,
    rho_bar: f64,
    dt: f64,
) -> Result<Field<G>> {
    if state.grid().kind() != DomainKind::PeriodicTorus {
        return Err(MuskatError::Unsupported(
            "the integrating-factor scheme needs a periodic grid".into(),
        ));
    }
    if !(dt > 0.0) {
        return Err(MuskatError::Config(format!("dt must be positive, got {dt}")));
    }
    let grid = *state.grid();
    let decay = |f: &Field<G>, t: f64| -> Field<G> {
        if rho_bar == 0.0 {
            return f.clone();
        }
        let c = -0.5 * rho_bar * t;
        Field::from_raw(grid, grid.apply_isotropic(f.samples(), |k| (c * k).exp()))
    };
    let eval = |f: &Field<G>, stage| remainder(f).map_err(|e| stage_error(stage, e));
    let half = 0.5 * dt;
    let k1 = eval(state, 1)?;
    let u2 = finite(decay(&state.axpy(half, &k1), half), 2)?;
    let k2 = eval(&u2, 2)?;
    let eu_half = decay(state, half);
    let u3 = finite(eu_half.axpy(half, &k2), 3)?;
    let k3 = eval(&u3, 3)?;
    let eu = decay(state, dt);
    let u4 = finite(eu.axpy(dt, &decay(&k3, half)), 4)?;
    let k4 = eval(&u4, 4)?;
    let mid = decay(&k2.axpy(1.0, &k3), half);
    let ek1 = decay(&k1, dt);
    let samples = (0..state.len())
        .map(|i| {
            let s = ek1.samples()[i] + 2.0 * mid.samples()[i] + k4.samples()[i];
            eu.samples()[i] + dt / 6.0 * s
        })
        .collect();
    Field::new(grid, samples).map_err(|e| stage_error(5, e))
}

/// Advances `f0` to `control.t_end`, recording every step. The observer is
/// called with each record, starting with the initial one.
pub fn integrate<G: Grid, D: Dynamics<G>>(
    f0: &Field<G>,
    dynamics: &D,
    control: &StepControl,
    scheme: TimeScheme,
    mut observer: impl FnMut(&TimeSeriesRecord),
) -> Result<Trajectory<G>> {
    control.validate()?;
    if scheme == TimeScheme::IntegratingFactor && f0.grid().kind() != DomainKind::PeriodicTorus {
        return Err(MuskatError::Unsupported(
            "the integrating-factor scheme needs a periodic grid".into(),
        ));
    }
    let rho_bar = dynamics.rho_bar();
    let dt = control.resolve_dt(f0.grid(), rho_bar);
    let first = observe(f0, 0.0);
    observer(&first);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![f0.clone()],
        records: vec![first],
        termination: Termination::Completed,
        dt,
    };
    if control.t_end == 0.0 {
        return Ok(traj);
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(MuskatError::Config(format!("resolved dt {dt} is not positive")));
    }
    let mut t = 0.0;
    let mut state = f0.clone();
    let mut step = 0usize;
    while t < control.t_end {
        if step == control.max_steps {
            traj.termination = Termination::StepLimit;
            break;
        }
        let remaining = control.t_end - t;
        let h = if remaining <= dt * (1.0 + 1e-9) { remaining } else { dt };
        let next = match scheme {
            TimeScheme::Rk4 => step_rk4(&state, |f| dynamics.rhs(f), h),
            TimeScheme::IntegratingFactor => {
                step_integrating_factor(&state, |f| dynamics.remainder(f), rho_bar, h)
            }
        };
        state = next.map_err(|e| match e {
            MuskatError::Integration { stage, reason, .. } => MuskatError::Integration {
                step: step + 1,
                time: t,
                stage,
                reason,
            },
            other => other,
        })?;
        step += 1;
        t = if h == remaining { control.t_end } else { t + h };
        let rec = observe(&state, t);
        observer(&rec);
        let blowup = rec.max_slope > control.blowup_slope;
        traj.times.push(t);
        traj.states.push(state.clone());
        traj.records.push(rec);
        if blowup {
            traj.termination = Termination::BlowupGuard;
            break;
        }
    }
    Ok(traj)
}
