//! Named scenarios, their runs and the files they write.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use muskat_core::diagnostics::{
    check_algebraic_bound, check_exponential_bound, check_max_principle, check_slope_bound, fit_decay,
    fit_decay_samples, AlgebraicBound, BoundConstants, DecayModel, ExponentialBound, TimeSeriesRecord,
    Verdict, MAX_PRINCIPLE_TOLERANCE,
};
use muskat_core::muskat1d::{slope_rhs, Muskat1D, Quadrature1DConfig};
use muskat_core::muskat2d::{
    format_samples, reduce_consistency, velocity_field, Muskat2D, Quadrature2DConfig, VelocitySample,
};
use muskat_core::timestepping::{integrate, StepControl, Termination, TimeScheme, TimeStep, Trajectory};
use muskat_core::{
    derivative, make_grid, transform, DomainKind, Grid, Grid1D, Grid2D, ScalarField1D,
    ScalarField2D,
};

use crate::config::{GridConfig, InitialCondition, Mode, OutputConfig, RunConfig};
use crate::error::{LabError, Result};

/// Default output directory when neither `--out`, `output.dir` nor
/// `MUSKAT_LAB_OUT` is given.
pub const DEFAULT_OUTPUT_DIR: &str = "muskat-out";
pub const OUTPUT_ENV: &str = "MUSKAT_LAB_OUT";

/// Slack of the 2-D maximum-principle check.
pub const MAX_PRINCIPLE_TOLERANCE_2D: f64 = 1e-6;
/// Relative slack of the exponential bound in 1-D and 2-D.
pub const EXP_SLACK_1D: f64 = 0.01;
pub const EXP_SLACK_2D: f64 = 0.05;
/// Relative slack of the algebraic bounds.
pub const ALG_SLACK_1D: f64 = 0.05;
pub const ALG_SLACK_2D: f64 = 0.1;
/// Smallest acceptable fitted decay rate for mean-zero 1-D data.
pub const MIN_FITTED_RATE_1D: f64 = 0.45;
/// Largest allowed drift of the L1 norm on the line.
pub const L1_DRIFT_TOLERANCE: f64 = 1e-5;
/// Largest allowed value of `N_2` at the slope maximum.
pub const N2_TOLERANCE: f64 = 1e-10;
/// Records with `linf` below this feed the growth-rate fit.
pub const GROWTH_WINDOW_LINF: f64 = 1e-2;
pub const GROWTH_RATE_TOLERANCE: f64 = 0.05;
pub const REDUCTION_GAP_BOUND: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    StableDecay1D,
    PeriodicMeanZeroDecay1D,
    LineNonnegDecay1D,
    SlopeBound1D,
    UnstableGrowth1D,
    StableDecay2D,
    PeriodicMeanZeroDecay2D,
    LineNonnegDecay2D,
    ReductionCheck,
    VelocityProbe,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::StableDecay1D,
        Scenario::PeriodicMeanZeroDecay1D,
        Scenario::LineNonnegDecay1D,
        Scenario::SlopeBound1D,
        Scenario::UnstableGrowth1D,
        Scenario::StableDecay2D,
        Scenario::PeriodicMeanZeroDecay2D,
        Scenario::LineNonnegDecay2D,
        Scenario::ReductionCheck,
        Scenario::VelocityProbe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::StableDecay1D => "stable_decay_1d",
            Scenario::PeriodicMeanZeroDecay1D => "periodic_meanzero_decay_1d",
            Scenario::LineNonnegDecay1D => "line_nonneg_decay_1d",
            Scenario::SlopeBound1D => "slope_bound_1d",
            Scenario::UnstableGrowth1D => "unstable_growth_1d",
            Scenario::StableDecay2D => "stable_decay_2d",
            Scenario::PeriodicMeanZeroDecay2D => "periodic_meanzero_decay_2d",
            Scenario::LineNonnegDecay2D => "line_nonneg_decay_2d",
            Scenario::ReductionCheck => "reduction_check",
            Scenario::VelocityProbe => "velocity_probe",
        }
    }

    /// Fully populated defaults of the preset.
    pub fn preset(self) -> RunConfig {
        let torus = |n: usize| GridConfig {
            n,
            n2: n,
            length: 2.0 * PI,
            length2: 2.0 * PI,
            kind: DomainKind::PeriodicTorus,
        };
        let mode = |k: i64, amplitude: f64, phase: f64| Mode { k: [k, 0], amplitude, phase };
        let mode2 = |k1: i64, k2: i64, amplitude: f64| Mode { k: [k1, k2], amplitude, phase: 0.0 };
        let control = |t_end: f64| StepControl {
            t_end,
            ..StepControl::default()
        };
        let mut cfg = RunConfig {
            scenario: self,
            dimension: 1,
            grid: torus(256),
            rho1: 0.0,
            rho2: 1.0,
            initial: InitialCondition::Modes(vec![mode(1, 0.3, 0.0)]),
            control: control(5.0),
            scheme: TimeScheme::IntegratingFactor,
            quadrature_1d: Quadrature1DConfig::default(),
            quadrature_2d: Quadrature2DConfig::default(),
            output: OutputConfig { dir: None, stride: 1 },
            probe_points: Vec::new(),
        };
        match self {
            Scenario::StableDecay1D => {}
            Scenario::PeriodicMeanZeroDecay1D => {
                cfg.initial = InitialCondition::Modes(vec![mode(1, 0.1, 0.0)]);
            }
            Scenario::LineNonnegDecay1D => {
                cfg.grid = GridConfig {
                    n: 4096,
                    n2: 4096,
                    length: 80.0 * PI,
                    length2: 80.0 * PI,
                    kind: DomainKind::TruncatedLine,
                };
                cfg.initial = InitialCondition::Bump {
                    center: [0.0, 0.0],
                    width: 3.0,
                    height: 1.0,
                };
                cfg.control = control(10.0);
                cfg.scheme = TimeScheme::Rk4;
                cfg.output.stride = 4;
            }
            Scenario::SlopeBound1D => {
                cfg.grid = torus(512);
                cfg.initial = InitialCondition::Modes(vec![mode(1, 0.9, -0.5 * PI)]);
                cfg.output.stride = 10;
            }
            Scenario::UnstableGrowth1D => {
                cfg.grid = torus(64);
                cfg.rho1 = 2.0;
                cfg.rho2 = 1.0;
                cfg.initial = InitialCondition::Modes(vec![mode(1, 1e-3, 0.0)]);
                cfg.control = control(20.0);
                cfg.scheme = TimeScheme::Rk4;
            }
            Scenario::StableDecay2D | Scenario::PeriodicMeanZeroDecay2D => {
                cfg.dimension = 2;
                cfg.grid = torus(64);
                cfg.initial = InitialCondition::Modes(vec![mode2(1, 1, 0.1), mode2(1, -1, 0.1)]);
                cfg.control = control(1.0);
            }
            Scenario::LineNonnegDecay2D => {
                cfg.dimension = 2;
                cfg.grid = GridConfig {
                    n: 96,
                    n2: 96,
                    length: 16.0 * PI,
                    length2: 16.0 * PI,
                    kind: DomainKind::PeriodicTorus,
                };
                cfg.initial = InitialCondition::Bump {
                    center: [8.0 * PI, 8.0 * PI],
                    width: 6.0,
                    height: 1.0,
                };
                cfg.control = control(2.0);
                cfg.quadrature_2d.allow_large_grid = true;
            }
            Scenario::ReductionCheck => {
                cfg.grid = torus(64);
                cfg.initial = InitialCondition::Modes(vec![mode(1, 0.2, 0.0)]);
                cfg.control = control(0.0);
                cfg.quadrature_2d.image_layers = 2;
            }
            Scenario::VelocityProbe => {
                cfg.dimension = 2;
                cfg.grid = torus(64);
                cfg.initial = InitialCondition::Modes(vec![mode2(1, 0, 0.1)]);
                cfg.control = control(0.0);
                cfg.probe_points = (2..=8).map(|z| [0.0, 0.0, z as f64]).collect();
            }
        }
        cfg
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Scenario::ALL.into_iter().find(|sc| sc.name() == s).ok_or_else(|| {
            let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
            format!("unknown scenario `{s}`; expected one of {}", names.join(", "))
        })
    }
}

fn read_samples(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let values = text
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| LabError::config(None, format!("{}: {e}", path.display())))?;
    if values.len() != expected {
        return Err(LabError::config(
            None,
            format!("{}: expected {expected} samples, found {}", path.display(), values.len()),
        ));
    }
    Ok(values)
}

fn bump(r: f64, height: f64) -> f64 {
    if r < 1.0 {
        height * (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// Signed distance from `c` to `x`, wrapped into one period when `period` is given.
fn offset(x: f64, c: f64, period: Option<f64>) -> f64 {
    let d = x - c;
    match period {
        Some(p) => d - p * (d / p).round(),
        None => d,
    }
}

pub fn initial_1d(cfg: &RunConfig, grid: Grid1D) -> Result<ScalarField1D> {
    let period = (grid.kind() == DomainKind::PeriodicTorus).then_some(grid.length());
    let s = 2.0 * PI / grid.length();
    let field = match &cfg.initial {
        InitialCondition::Modes(modes) => ScalarField1D::from_fn(grid, |x| {
            modes
                .iter()
                .map(|m| m.amplitude * (s * m.k[0] as f64 * x + m.phase).cos())
                .sum()
        })?,
        InitialCondition::Bump { center, width, height } => {
            ScalarField1D::from_fn(grid, |x| bump(offset(x, center[0], period).abs() / width, *height))?
        }
        InitialCondition::File(path) => ScalarField1D::new(grid, read_samples(path, grid.n())?)?,
    };
    Ok(field)
}

pub fn initial_2d(cfg: &RunConfig, grid: Grid2D) -> Result<ScalarField2D> {
    let (s1, s2) = (2.0 * PI / grid.length1(), 2.0 * PI / grid.length2());
    let field = match &cfg.initial {
        InitialCondition::Modes(modes) => ScalarField2D::from_fn(grid, |x1, x2| {
            modes
                .iter()
                .map(|m| m.amplitude * (s1 * m.k[0] as f64 * x1 + s2 * m.k[1] as f64 * x2 + m.phase).cos())
                .sum()
        })?,
        InitialCondition::Bump { center, width, height } => ScalarField2D::from_fn(grid, |x1, x2| {
            let d1 = offset(x1, center[0], Some(grid.length1()));
            let d2 = offset(x2, center[1], Some(grid.length2()));
            bump(d1.hypot(d2) / width, *height)
        })?,
        InitialCondition::File(path) => ScalarField2D::new(grid, read_samples(path, grid.n1() * grid.n2())?)?,
    };
    Ok(field)
}

pub fn integrate_1d(cfg: &RunConfig) -> Result<Trajectory<Grid1D>> {
    let grid = cfg.grid_1d()?;
    let f0 = initial_1d(cfg, grid)?;
    let dynamics = Muskat1D::new(cfg.params()?, cfg.quadrature_1d);
    Ok(integrate(&f0, &dynamics, &cfg.control, cfg.scheme, |_| {})?)
}

pub fn integrate_2d(cfg: &RunConfig) -> Result<Trajectory<Grid2D>> {
    let grid = cfg.grid_2d()?;
    let f0 = initial_2d(cfg, grid)?;
    let dynamics = Muskat2D::new(grid, cfg.params()?, cfg.quadrature_2d)?;
    Ok(integrate(&f0, &dynamics, &cfg.control, cfg.scheme, |_| {})?)
}

/// CSV header of [`emit_csv`].
pub const CSV_HEADER: &str = "t,linf,l1,mean,fmax,fmin,max_slope,argmax_index,spectrum_tail";

/// Every `stride`-th record plus the last one, one row each.
pub fn csv_text(records: &[TimeSeriesRecord], stride: usize) -> String {
    let stride = stride.max(1);
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let last = records.len().saturating_sub(1);
    for (i, r) in records.iter().enumerate() {
        if i % stride != 0 && i != last {
            continue;
        }
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}\n",
            r.t, r.linf, r.l1, r.mean, r.fmax, r.fmin, r.max_slope, r.argmax_index, r.spectrum_tail
        ));
    }
    out
}

pub fn emit_csv(records: &[TimeSeriesRecord], stride: usize, path: &Path) -> Result<()> {
    fs::write(path, csv_text(records, stride)).map_err(|e| LabError::io(path, e))
}

/// Outcome of one scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub verdicts: Vec<Verdict>,
    pub files: Vec<PathBuf>,
    pub termination: Option<Termination>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// 0 when every verdict passes, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn report_text(&self) -> String {
        self.verdicts.iter().map(|v| format!("{v}\n")).collect()
    }
}

/// Output directory: the explicit choice, else `output.dir`, else
/// `$MUSKAT_LAB_OUT`, else [`DEFAULT_OUTPUT_DIR`].
pub fn output_root(explicit: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn scenario_dir(root: &Path, scenario: Scenario) -> Result<PathBuf> {
    let dir = root.join(scenario.name());
    fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
    Ok(dir)
}

/// Runs the configured scenario and writes its files under
/// `root/<scenario>/`.
pub fn run_scenario(cfg: &RunConfig, root: &Path) -> Result<ScenarioReport> {
    let dir = scenario_dir(root, cfg.scenario)?;
    let mut files = Vec::new();
    let mut termination = None;
    let verdicts = match cfg.scenario {
        Scenario::ReductionCheck => {
            let study = reduction_study(cfg, None)?;
            let path = dir.join("reduction.csv");
            fs::write(&path, study.csv()).map_err(|e| LabError::io(&path, e))?;
            files.push(path);
            study.verdicts()
        }
        Scenario::VelocityProbe => {
            let samples = probe(cfg, &cfg.probe_points)?;
            let path = dir.join("velocity.txt");
            fs::write(&path, format_samples(&samples)).map_err(|e| LabError::io(&path, e))?;
            files.push(path);
            vec![velocity_decay_verdict(&samples)]
        }
        _ if cfg.dimension == 1 => {
            let traj = integrate_1d(cfg)?;
            termination = Some(traj.termination);
            let path = dir.join("series.csv");
            emit_csv(&traj.records, cfg.output.stride, &path)?;
            files.push(path);
            verdicts_1d(cfg, &traj)?
        }
        _ => {
            let traj = integrate_2d(cfg)?;
            termination = Some(traj.termination);
            let path = dir.join("series.csv");
            emit_csv(&traj.records, cfg.output.stride, &path)?;
            files.push(path);
            verdicts_2d(cfg, &traj)?
        }
    };
    let report = ScenarioReport {
        scenario: cfg.scenario,
        verdicts,
        files,
        termination,
    };
    let path = dir.join("verdicts.txt");
    fs::write(&path, report.report_text()).map_err(|e| LabError::io(&path, e))?;
    let mut report = report;
    report.files.push(path);
    Ok(report)
}

fn constants(records: &[TimeSeriesRecord], rho_bar: f64) -> BoundConstants {
    BoundConstants::from_record(&records[0], rho_bar)
}

pub fn verdicts_1d(cfg: &RunConfig, traj: &Trajectory<Grid1D>) -> Result<Vec<Verdict>> {
    let records = &traj.records;
    let rho_bar = cfg.params()?.rho_bar();
    let mp = || check_max_principle(records, MAX_PRINCIPLE_TOLERANCE);
    let v = match cfg.scenario {
        Scenario::PeriodicMeanZeroDecay1D => vec![
            mp()?,
            check_exponential_bound(records, &constants(records, rho_bar), ExponentialBound::Prop3_2, EXP_SLACK_1D)?,
            decay_rate_verdict(records)?,
        ],
        Scenario::LineNonnegDecay1D => vec![
            check_algebraic_bound(records, &constants(records, rho_bar), AlgebraicBound::Prop3_3, ALG_SLACK_1D)?,
            l1_drift_verdict(records),
        ],
        Scenario::SlopeBound1D => vec![
            check_slope_bound(records)?,
            n2_verdict(cfg, traj, cfg.output.stride)?,
        ],
        Scenario::UnstableGrowth1D => vec![
            growth_rate_verdict(traj, rho_bar)?,
            blowup_verdict(traj, &cfg.control),
        ],
        _ => vec![mp()?],
    };
    Ok(v)
}

pub fn verdicts_2d(cfg: &RunConfig, traj: &Trajectory<Grid2D>) -> Result<Vec<Verdict>> {
    let records = &traj.records;
    let rho_bar = cfg.params()?.rho_bar();
    let mp = || check_max_principle(records, MAX_PRINCIPLE_TOLERANCE_2D);
    let v = match cfg.scenario {
        Scenario::PeriodicMeanZeroDecay2D => vec![
            mp()?,
            check_exponential_bound(records, &constants(records, rho_bar), ExponentialBound::Prop4_2, EXP_SLACK_2D)?,
        ],
        Scenario::LineNonnegDecay2D => vec![check_algebraic_bound(
            records,
            &constants(records, rho_bar),
            AlgebraicBound::Prop4_3,
            ALG_SLACK_2D,
        )?],
        _ => vec![mp()?],
    };
    Ok(v)
}

/// Fitted exponential rate of `linf` must reach [`MIN_FITTED_RATE_1D`].
pub fn decay_rate_verdict(records: &[TimeSeriesRecord]) -> Result<Verdict> {
    let fit = fit_decay(records, DecayModel::Exponential)?;
    Ok(Verdict {
        check_name: "decay_rate".into(),
        pass: fit.value >= MIN_FITTED_RATE_1D,
        measured: fit.value,
        bound: MIN_FITTED_RATE_1D,
        tolerance: 0.0,
        notes: format!("fit quality {:.6}", fit.quality),
    })
}

pub fn l1_drift_verdict(records: &[TimeSeriesRecord]) -> Verdict {
    let l0 = records[0].l1;
    let drift = records.iter().fold(0.0f64, |m, r| m.max((r.l1 - l0).abs()));
    Verdict {
        check_name: "l1_conservation".into(),
        pass: drift <= L1_DRIFT_TOLERANCE,
        measured: drift,
        bound: 0.0,
        tolerance: L1_DRIFT_TOLERANCE,
        notes: format!("initial L1 {l0:.9}"),
    }
}

/// `N_2` at the grid argmax of `df/dx`, on every `stride`-th state.
pub fn n2_verdict(cfg: &RunConfig, traj: &Trajectory<Grid1D>, stride: usize) -> Result<Verdict> {
    let params = cfg.params()?;
    let last = traj.states.len() - 1;
    let mut worst = f64::NEG_INFINITY;
    let mut sampled = 0usize;
    for (i, f) in traj.states.iter().enumerate() {
        if i % stride.max(1) != 0 && i != last {
            continue;
        }
        let slope = derivative(f, 1)?;
        let at = slope.argmax().index;
        let d = slope_rhs(f, &params, &cfg.quadrature_1d)?;
        worst = worst.max(d.n2.samples()[at]);
        sampled += 1;
    }
    Ok(Verdict {
        check_name: "n2_sign".into(),
        pass: worst <= N2_TOLERANCE,
        measured: worst,
        bound: 0.0,
        tolerance: N2_TOLERANCE,
        notes: format!("{sampled} sampled states"),
    })
}

/// Early-time growth rate of the dominant initial mode against `|rho_bar| k / 2`.
pub fn growth_rate_verdict(traj: &Trajectory<Grid1D>, rho_bar: f64) -> Result<Verdict> {
    let grid = *traj.states[0].grid();
    let s0 = transform(&traj.states[0]);
    let half = grid.n() as i64 / 2;
    let k = (1..half)
        .max_by(|a, b| s0.mode(*a).norm().total_cmp(&s0.mode(*b).norm()).then(b.cmp(a)))
        .unwrap_or(1);
    let wavenumber = k as f64 * 2.0 * PI / grid.length();
    let expected = 0.5 * rho_bar.abs() * wavenumber;
    let (mut t, mut amp) = (Vec::new(), Vec::new());
    for (r, f) in traj.records.iter().zip(&traj.states) {
        if r.linf >= GROWTH_WINDOW_LINF {
            break;
        }
        t.push(r.t);
        amp.push(2.0 * transform(f).mode(k).norm());
    }
    let fit = fit_decay_samples(&t, &amp, DecayModel::Exponential)?;
    let rate = -fit.value;
    let rel = (rate - expected).abs() / expected;
    Ok(Verdict {
        check_name: "growth_rate".into(),
        pass: rel <= GROWTH_RATE_TOLERANCE,
        measured: rel,
        bound: 0.0,
        tolerance: GROWTH_RATE_TOLERANCE,
        notes: format!(
            "mode {k}: fitted {rate:.6} vs {expected:.6} over {} samples up to t = {:.3}",
            t.len(),
            t.last().copied().unwrap_or(0.0)
        ),
    })
}

pub fn blowup_verdict<G: Grid>(traj: &Trajectory<G>, control: &StepControl) -> Verdict {
    let last = traj.records.last().expect("trajectory has a first record");
    Verdict {
        check_name: "blowup_guard".into(),
        pass: traj.termination == Termination::BlowupGuard,
        measured: last.max_slope,
        bound: control.blowup_slope,
        tolerance: 0.0,
        notes: format!("{:?} at t = {}", traj.termination, last.t),
    }
}

/// Reduction gaps at the configured resolution and image layers, without
/// images, and on a grid half as fine.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionStudy {
    pub n: usize,
    pub image_layers: usize,
    pub gap: f64,
    pub gap_no_images: f64,
    pub gap_coarse: f64,
}

impl ReductionStudy {
    pub fn csv(&self) -> String {
        format!(
            "n,image_layers,gap\n{},{},{:.16e}\n{},0,{:.16e}\n{},{},{:.16e}\n",
            self.n,
            self.image_layers,
            self.gap,
            self.n,
            self.gap_no_images,
            self.n / 2,
            self.image_layers,
            self.gap_coarse
        )
    }

    /// Gap below [`REDUCTION_GAP_BOUND`], and shrinking both with more image
    /// layers and with refinement.
    pub fn verdicts(&self) -> Vec<Verdict> {
        let trend = (self.gap / self.gap_no_images).max(self.gap / self.gap_coarse);
        vec![
            Verdict {
                check_name: "reduction_gap".into(),
                pass: self.gap < REDUCTION_GAP_BOUND,
                measured: self.gap,
                bound: REDUCTION_GAP_BOUND,
                tolerance: 0.0,
                notes: format!("{0}x{0}, {1} image layers", self.n, self.image_layers),
            },
            Verdict {
                check_name: "reduction_trend".into(),
                pass: trend < 1.0,
                measured: trend,
                bound: 1.0,
                tolerance: 0.0,
                notes: format!(
                    "gap {:.3e}, without images {:.3e}, at n/2 {:.3e}",
                    self.gap, self.gap_no_images, self.gap_coarse
                ),
            },
        ]
    }
}

/// Runs the reduction comparison; `force_layers` replaces every image
/// layer count (fault injection).
pub fn reduction_study(cfg: &RunConfig, force_layers: Option<usize>) -> Result<ReductionStudy> {
    let params = cfg.params()?;
    let layers = force_layers.unwrap_or(cfg.quadrature_2d.image_layers);
    let gap = |n: usize, layers: usize| -> Result<f64> {
        let grid = make_grid(n, cfg.grid.length, DomainKind::PeriodicTorus)?;
        let f = initial_1d(cfg, grid)?;
        let q2 = Quadrature2DConfig {
            image_layers: force_layers.unwrap_or(layers),
            ..cfg.quadrature_2d
        };
        Ok(reduce_consistency(&f, &params, &q2, &cfg.quadrature_1d)?.l_inf_gap)
    };
    let n = cfg.grid.n;
    Ok(ReductionStudy {
        n,
        image_layers: layers,
        gap: gap(n, layers)?,
        gap_no_images: gap(n, 0)?,
        gap_coarse: gap(n / 2, layers)?,
    })
}

/// Velocity at `points` induced by the initial interface of a 2-D config.
pub fn probe(cfg: &RunConfig, points: &[[f64; 3]]) -> Result<Vec<VelocitySample>> {
    if cfg.dimension != 2 {
        return Err(LabError::config(None, "velocity probes need dimension = 2"));
    }
    let grid = cfg.grid_2d()?;
    let f = initial_2d(cfg, grid)?;
    Ok(velocity_field(&f, &cfg.params()?, points, &cfg.quadrature_2d)?)
}

/// `|v|` must not grow as the query point moves away from the interface
/// along a vertical line.
pub fn velocity_decay_verdict(samples: &[VelocitySample]) -> Verdict {
    let norm = |s: &VelocitySample| s.velocity.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = samples.iter().map(norm).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            let same_column = a.position[0] == b.position[0] && a.position[1] == b.position[1];
            let same_side = a.position[2].signum() == b.position[2].signum();
            if !(same_column && same_side) {
                continue;
            }
            let (near, far) = if a.position[2].abs() < b.position[2].abs() { (a, b) } else { (b, a) };
            worst = worst.max(norm(far) - norm(near));
        }
    }
    let tol = 1e-12 * scale;
    Verdict {
        check_name: "velocity_decay".into(),
        pass: worst <= tol,
        measured: worst,
        bound: 0.0,
        tolerance: tol,
        notes: format!("{} samples, largest |v| {scale:.6e}", samples.len()),
    }
}

/// One row of a time-step self-convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub dt: f64,
    /// `max |u(dt) - u(dt / 2)|` at `t_end`.
    pub difference: f64,
    /// `log2` of the ratio to the next row's difference.
    pub order: Option<f64>,
}

/// Number of step halvings in [`convergence`].
pub const CONVERGENCE_LEVELS: usize = 4;

/// Final states at `dt, dt/2, ..., dt/2^LEVELS` with `dt` the configured
/// (or automatic) step, and the observed order between successive levels.
pub fn convergence(cfg: &RunConfig) -> Result<Vec<ConvergenceRow>> {
    let rho_bar = cfg.params()?.rho_bar();
    let base = if cfg.dimension == 1 {
        cfg.control.resolve_dt(&cfg.grid_1d()?, rho_bar)
    } else {
        cfg.control.resolve_dt(&cfg.grid_2d()?, rho_bar)
    };
    let mut diffs = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    for level in 0..=CONVERGENCE_LEVELS {
        let mut c = cfg.clone();
        c.control.dt = TimeStep::Fixed(base / f64::powi(2.0, level as i32));
        let last = if c.dimension == 1 {
            integrate_1d(&c)?.final_state().samples().to_vec()
        } else {
            integrate_2d(&c)?.final_state().samples().to_vec()
        };
        if let Some(p) = &previous {
            let d = p.iter().zip(&last).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            diffs.push(d);
        }
        previous = Some(last);
    }
    Ok(diffs
        .iter()
        .enumerate()
        .map(|(i, &d)| ConvergenceRow {
            dt: base / f64::powi(2.0, i as i32),
            difference: d,
            order: diffs.get(i + 1).map(|next| (d / next).log2()),
        })
        .collect())
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("dt,difference,order\n");
    for r in rows {
        let order = r.order.map(|o| format!("{o:.6}")).unwrap_or_default();
        out.push_str(&format!("{:.16e},{:.16e},{order}\n", r.dt, r.difference));
    }
    out
}
