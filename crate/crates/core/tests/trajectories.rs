use muskat_core::diagnostics::{check_max_principle, fit_decay, DecayModel, MAX_PRINCIPLE_TOLERANCE};
use muskat_core::muskat1d::{rhs_at_extremum, Muskat1D, Quadrature1DConfig};
use muskat_core::muskat2d::{Muskat2D, Quadrature2DConfig};
use muskat_core::timestepping::{
    integrate, step_rk4, Dynamics, Linear, StepControl, Termination, TimeScheme, TimeStep,
};
use muskat_core::{linear_evolve, Grid1D, Grid2D, PhysParams, ScalarField1D, ScalarField2D};

fn cosine(n: usize, amp: f64) -> ScalarField1D {
    ScalarField1D::from_fn(Grid1D::torus(n).unwrap(), |x| amp * x.cos()).unwrap()
}

fn stable() -> Muskat1D {
    Muskat1D::new(PhysParams::with_jump(1.0).unwrap(), Quadrature1DConfig::default())
}

fn control(t_end: f64) -> StepControl {
    StepControl {
        t_end,
        ..StepControl::default()
    }
}

#[test]
fn stable_run_completes_and_keeps_its_mean() {
    let f0 = ScalarField1D::from_fn(Grid1D::torus(256).unwrap(), |x| {
        0.2 + 0.3 * x.cos() + 0.05 * (2.0 * x).sin()
    })
    .unwrap();
    let traj = integrate(&f0, &stable(), &control(5.0), TimeScheme::IntegratingFactor, |_| {}).unwrap();
    assert_eq!(traj.termination, Termination::Completed);
    assert_eq!(*traj.times.last().unwrap(), 5.0);
    assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(traj.times.len(), traj.states.len());
    let m0 = traj.records[0].mean;
    let drift = traj.records.iter().fold(0.0f64, |m, r| m.max((r.mean - m0).abs()));
    assert!(drift < 1e-10, "{drift}");
    let v = check_max_principle(&traj.records, MAX_PRINCIPLE_TOLERANCE).unwrap();
    assert!(v.pass, "{v}");
}

#[test]
fn reruns_are_bit_identical() {
    let f0 = cosine(128, 0.3);
    let run = || integrate(&f0, &stable(), &control(0.5), TimeScheme::Rk4, |_| {}).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.states, b.states);
    assert_eq!(a.records, b.records);
}

#[test]
fn observer_sees_every_record() {
    let f0 = cosine(64, 0.3);
    let mut seen = Vec::new();
    let traj = integrate(&f0, &stable(), &control(0.3), TimeScheme::Rk4, |r| seen.push(*r)).unwrap();
    assert_eq!(seen, traj.records);
}

#[test]
fn rk4_self_convergence_order() {
    // Richardson self-convergence: order = log2(|u_h - u_h/2| / |u_h/2 - u_h/4|).
    let f0 = cosine(64, 0.3);
    let dynamics = stable();
    let solve = |steps: usize| {
        let dt = 0.1 / steps as f64;
        let mut u = f0.clone();
        for _ in 0..steps {
            u = step_rk4(&u, |f| dynamics.rhs(f), dt).unwrap();
        }
        u
    };
    let (u1, u2, u3) = (solve(2), solve(4), solve(8));
    let order = (u1.max_abs_diff(&u2) / u2.max_abs_diff(&u3)).log2();
    assert!(order >= 3.8, "{order}");
}

#[test]
fn integrating_factor_is_exact_for_the_linear_problem() {
    let g = Grid1D::torus(64).unwrap();
    let f0 = ScalarField1D::from_fn(g, |x| x.cos() + 0.3 * (5.0 * x).sin() - 0.1 * (17.0 * x).cos()).unwrap();
    let c = StepControl {
        dt: TimeStep::Fixed(0.7),
        ..control(3.5)
    };
    let traj = integrate(&f0, &Linear { rho_bar: 1.0 }, &c, TimeScheme::IntegratingFactor, |_| {}).unwrap();
    let exact = linear_evolve(&f0, 3.5, 1.0).unwrap();
    assert!(traj.final_state().max_abs_diff(&exact) < 1e-12);
}

#[test]
fn integrating_factor_tolerates_larger_steps() {
    let f0 = cosine(128, 0.3);
    let dynamics = stable();
    let explicit = control(1.0).resolve_dt(f0.grid(), 1.0) / 0.5;
    let c = StepControl {
        dt: TimeStep::Fixed(4.0 * explicit),
        ..control(1.0)
    };
    let traj = integrate(&f0, &dynamics, &c, TimeScheme::IntegratingFactor, |_| {}).unwrap();
    let last = traj.records.last().unwrap();
    eprintln!("integrating factor at 4x the explicit bound: linf(1) = {}", last.linf);
    assert!(last.linf.is_finite());
}

#[test]
fn unstable_run_hits_the_blowup_guard() {
    let g = Grid1D::torus(64).unwrap();
    let f0 = ScalarField1D::from_fn(g, |x| 1e-3 * x.cos() + 1e-4 * (5.0 * x).cos()).unwrap();
    let dynamics = Muskat1D::new(PhysParams::new(2.0, 1.0).unwrap(), Quadrature1DConfig::default());
    let traj = integrate(&f0, &dynamics, &control(20.0), TimeScheme::Rk4, |_| {}).unwrap();
    assert_eq!(traj.termination, Termination::BlowupGuard);
    let t_stop = *traj.times.last().unwrap();
    assert!(t_stop < 20.0);
    // The linear solution stays below the guard slope until well past the early window.
    let early = traj.times.iter().position(|&t| t >= 1.0).unwrap();
    let lin = linear_evolve(&f0, traj.times[early], -1.0).unwrap();
    let rel = traj.states[early].max_abs_diff(&lin) / lin.linf();
    assert!(rel < 1e-2, "{rel}");
}

#[test]
fn extremum_derivative_matches_the_identity() {
    let f0 = ScalarField1D::from_fn(Grid1D::torus(256).unwrap(), |x| 0.3 * x.cos() + 0.1 * (3.0 * x).cos()).unwrap();
    let dynamics = stable();
    let traj = integrate(&f0, &dynamics, &control(1.0), TimeScheme::Rk4, |_| {}).unwrap();
    let dt = traj.dt;
    for k in 0..traj.records.len() - 1 {
        let h = traj.times[k + 1] - traj.times[k];
        let slope = (traj.records[k + 1].fmax - traj.records[k].fmax) / h;
        let identity = rhs_at_extremum(&traj.states[k], &dynamics.params, &dynamics.quadrature).unwrap();
        assert!(identity.value <= 1e-12);
        // First-order difference of a smooth maximum: O(dt) with a generous constant.
        assert!((slope - identity.value).abs() < 0.5 * dt + 1e-6, "step {k}: {slope} {}", identity.value);
    }
}

#[test]
fn linear_decay_fit() {
    let f0 = cosine(64, 1.0);
    let c = StepControl {
        dt: TimeStep::Fixed(0.25),
        ..control(5.0)
    };
    let traj = integrate(&f0, &Linear { rho_bar: 1.0 }, &c, TimeScheme::IntegratingFactor, |_| {}).unwrap();
    let fit = fit_decay(&traj.records, DecayModel::Exponential).unwrap();
    assert!((fit.value - 0.5).abs() < 1e-4, "{}", fit.value);
    assert!(fit.quality > 0.999999);
}

#[test]
fn two_dimensional_run_keeps_mean_and_maximum() {
    let g = Grid2D::torus(32, 32).unwrap();
    let f0 = ScalarField2D::from_fn(g, |x, y| 0.1 + 0.2 * x.cos() * y.cos()).unwrap();
    let dynamics = Muskat2D::new(g, PhysParams::with_jump(1.0).unwrap(), Quadrature2DConfig::default()).unwrap();
    let traj = integrate(&f0, &dynamics, &control(0.3), TimeScheme::IntegratingFactor, |_| {}).unwrap();
    assert_eq!(traj.termination, Termination::Completed);
    let m0 = traj.records[0].mean;
    assert!(traj.records.iter().all(|r| (r.mean - m0).abs() < 1e-10));
    let v = check_max_principle(&traj.records, 1e-6).unwrap();
    assert!(v.pass, "{v}");
}
