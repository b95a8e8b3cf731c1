//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, keys are dotted
//! (`grid.n = 256`). The `scenario` key selects a preset whose values every
//! other key overrides; it may appear anywhere in the file. Unknown keys,
//! malformed values and invalid combinations are reported with the line
//! that set the offending key.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use muskat_core::muskat1d::{NodeOffset, Quadrature1DConfig, SingularRule};
use muskat_core::muskat2d::{Quadrature2DConfig, SingularCell};
use muskat_core::timestepping::{StepControl, TimeScheme, TimeStep};
use muskat_core::{make_grid, make_grid_2d, DomainKind, Grid1D, Grid2D, PhysParams};

use crate::error::{LabError, Result};
use crate::scenario::Scenario;

/// One term `amplitude * cos(k . x + phase)` of a mode sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub k: [i64; 2],
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Modes(Vec<Mode>),
    /// `height * exp(-1 / (1 - r^2))` for `r = |x - center| / width < 1`,
    /// distances taken periodically on a torus.
    Bump {
        center: [f64; 2],
        width: f64,
        height: f64,
    },
    /// Whitespace-separated samples, row-major in 2-D.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub n: usize,
    pub n2: usize,
    pub length: f64,
    pub length2: f64,
    pub kind: DomainKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Every `stride`-th record goes to the CSV; the last one always does.
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub dimension: u8,
    pub grid: GridConfig,
    pub rho1: f64,
    pub rho2: f64,
    pub initial: InitialCondition,
    pub control: StepControl,
    pub scheme: TimeScheme,
    pub quadrature_1d: Quadrature1DConfig,
    pub quadrature_2d: Quadrature2DConfig,
    pub output: OutputConfig,
    /// Query points of the velocity probe.
    pub probe_points: Vec<[f64; 3]>,
}

impl RunConfig {
    pub fn params(&self) -> Result<PhysParams> {
        Ok(PhysParams::new(self.rho1, self.rho2)?)
    }

    pub fn grid_1d(&self) -> Result<Grid1D> {
        Ok(make_grid(self.grid.n, self.grid.length, self.grid.kind)?)
    }

    pub fn grid_2d(&self) -> Result<Grid2D> {
        if self.grid.kind != DomainKind::PeriodicTorus {
            return Err(LabError::config(None, "2-D runs need grid.kind = torus"));
        }
        Ok(make_grid_2d(self.grid.n, self.grid.n2, self.grid.length, self.grid.length2)?)
    }
}

pub const KEYS: &[&str] = &[
    "scenario",
    "dimension",
    "grid.n",
    "grid.n2",
    "grid.length",
    "grid.length2",
    "grid.kind",
    "params.rho1",
    "params.rho2",
    "initial.kind",
    "initial.modes",
    "initial.bump.center",
    "initial.bump.center2",
    "initial.bump.width",
    "initial.bump.height",
    "initial.file",
    "control.dt",
    "control.cfl_safety",
    "control.t_end",
    "control.max_steps",
    "control.blowup_slope",
    "control.scheme",
    "quadrature.node_offset",
    "quadrature.singular_rule",
    "quadrature.line_truncation_radius",
    "quadrature.image_layers",
    "quadrature.singular_cell",
    "quadrature.polar_patch_rings",
    "quadrature.subtract_linear",
    "quadrature.allow_large_grid",
    "output.dir",
    "output.stride",
    "probe.points",
];

/// A `key = value` pair and the line it came from (`None` for overrides).
#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: Option<usize>,
}

fn split_pair(raw: &str, line: Option<usize>) -> Result<Option<Entry>> {
    let text = raw.split('#').next().unwrap_or("").trim();
    if text.is_empty() {
        return Ok(None);
    }
    let (key, value) = text
        .split_once('=')
        .ok_or_else(|| LabError::config(line, format!("expected `key = value`, found `{text}`")))?;
    let (key, value) = (key.trim(), value.trim());
    if key.is_empty() {
        return Err(LabError::config(line, "empty key"));
    }
    if !KEYS.contains(&key) {
        return Err(LabError::config(line, format!("unknown key `{key}`")));
    }
    if value.is_empty() {
        return Err(LabError::config(line, format!("`{key}` has no value")));
    }
    Ok(Some(Entry {
        key: key.to_string(),
        value: value.to_string(),
        line,
    }))
}

/// Parses a configuration file.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with_overrides(text, &[])
}

/// Parses a configuration file, then applies `key=value` overrides in order.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if let Some(e) = split_pair(raw, Some(i + 1))? {
            entries.push(e);
        }
    }
    for o in overrides {
        match split_pair(o, None) {
            Ok(Some(e)) => entries.push(e),
            Ok(None) => {}
            Err(LabError::Config { message, .. }) => {
                return Err(LabError::config(None, format!("override `{o}`: {message}")))
            }
            Err(e) => return Err(e),
        }
    }
    let scenario_entry = entries
        .iter()
        .rev()
        .find(|e| e.key == "scenario")
        .ok_or_else(|| LabError::config(None, "missing required key `scenario`"))?;
    let scenario: Scenario = scenario_entry
        .value
        .parse()
        .map_err(|m: String| LabError::config(scenario_entry.line, m))?;
    let mut cfg = scenario.preset();
    let mut lines: HashMap<&str, Option<usize>> = HashMap::new();
    for e in &entries {
        apply(&mut cfg, e)?;
        let key = KEYS.iter().find(|k| **k == e.key).copied().unwrap_or("");
        lines.insert(key, e.line);
    }
    validate(&cfg, &lines)?;
    Ok(cfg)
}

fn parse_num<T: std::str::FromStr>(e: &Entry) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| LabError::config(e.line, format!("`{}`: cannot parse `{}`", e.key, e.value)))
}

fn parse_real(e: &Entry) -> Result<f64> {
    let v = parse_expr(&e.value)
        .ok_or_else(|| LabError::config(e.line, format!("`{}`: cannot parse `{}`", e.key, e.value)))?;
    if !v.is_finite() {
        return Err(LabError::config(e.line, format!("`{}` must be finite", e.key)));
    }
    Ok(v)
}

/// A real number, optionally written as a multiple of `pi`
/// (`pi`, `2pi`, `80*pi`, `-pi/2`, `0.5`).
pub fn parse_expr(text: &str) -> Option<f64> {
    let t = text.trim();
    if let Ok(v) = t.parse::<f64>() {
        return Some(v);
    }
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim().parse::<f64>().ok()?),
        None => (t, 1.0),
    };
    let coeff = num.strip_suffix("pi")?.trim_end_matches('*').trim();
    let c = match coeff {
        "" => 1.0,
        "-" => -1.0,
        s => s.parse::<f64>().ok()?,
    };
    Some(c * PI / den)
}

fn parse_bool(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(LabError::config(e.line, format!("`{}` must be true or false", e.key))),
    }
}

fn choice<T: Copy>(e: &Entry, options: &[(&str, T)]) -> Result<T> {
    options
        .iter()
        .find(|(name, _)| *name == e.value)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<_> = options.iter().map(|(n, _)| *n).collect();
            LabError::config(
                e.line,
                format!("`{}` must be one of {}, got `{}`", e.key, names.join(", "), e.value),
            )
        })
}

/// `k:amp:phase` or `k1:k2:amp:phase` terms separated by commas; the phase
/// may be omitted.
pub fn parse_modes(text: &str) -> std::result::Result<Vec<Mode>, String> {
    let mut modes = Vec::new();
    for term in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let parts: Vec<&str> = term.split(':').map(str::trim).collect();
        let int = |s: &str| s.parse::<i64>().map_err(|_| format!("bad wavenumber `{s}` in `{term}`"));
        let real = |s: &str| parse_expr(s).ok_or_else(|| format!("bad number `{s}` in `{term}`"));
        let mode = match parts.as_slice() {
            [k, a] => Mode { k: [int(k)?, 0], amplitude: real(a)?, phase: 0.0 },
            [k, a, p] => Mode { k: [int(k)?, 0], amplitude: real(a)?, phase: real(p)? },
            [k1, k2, a, p] => Mode { k: [int(k1)?, int(k2)?], amplitude: real(a)?, phase: real(p)? },
            _ => return Err(format!("cannot read mode `{term}`")),
        };
        if !(mode.amplitude.is_finite() && mode.phase.is_finite()) {
            return Err(format!("mode `{term}` is not finite"));
        }
        modes.push(mode);
    }
    if modes.is_empty() {
        return Err("empty mode list".into());
    }
    Ok(modes)
}

/// `x1 x2 x3` triples separated by `;`.
pub fn parse_point_list(text: &str) -> std::result::Result<Vec<[f64; 3]>, String> {
    text.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let v: Vec<f64> = t
                .split_whitespace()
                .map(|s| parse_expr(s).filter(|v| v.is_finite()))
                .collect::<Option<_>>()
                .ok_or_else(|| format!("cannot read point `{t}`"))?;
            <[f64; 3]>::try_from(v).map_err(|_| format!("point `{t}` needs three coordinates"))
        })
        .collect()
}

fn bump_parts(cfg: &mut RunConfig) -> (&mut [f64; 2], &mut f64, &mut f64) {
    if !matches!(cfg.initial, InitialCondition::Bump { .. }) {
        cfg.initial = InitialCondition::Bump {
            center: [0.0, 0.0],
            width: 1.0,
            height: 1.0,
        };
    }
    match &mut cfg.initial {
        InitialCondition::Bump { center, width, height } => (center, width, height),
        _ => unreachable!(),
    }
}

fn apply(cfg: &mut RunConfig, e: &Entry) -> Result<()> {
    match e.key.as_str() {
        "scenario" => {}
        "dimension" => {
            cfg.dimension = choice(e, &[("1", 1u8), ("2", 2u8)])?;
        }
        "grid.n" => cfg.grid.n = parse_num(e)?,
        "grid.n2" => cfg.grid.n2 = parse_num(e)?,
        "grid.length" => cfg.grid.length = parse_real(e)?,
        "grid.length2" => cfg.grid.length2 = parse_real(e)?,
        "grid.kind" => {
            cfg.grid.kind = choice(
                e,
                &[("torus", DomainKind::PeriodicTorus), ("line", DomainKind::TruncatedLine)],
            )?
        }
        "params.rho1" => cfg.rho1 = parse_real(e)?,
        "params.rho2" => cfg.rho2 = parse_real(e)?,
        "initial.kind" => {
            let kind = choice(e, &[("modes", 0u8), ("bump", 1), ("file", 2)])?;
            let matches = matches!(
                (&cfg.initial, kind),
                (InitialCondition::Modes(_), 0) | (InitialCondition::Bump { .. }, 1) | (InitialCondition::File(_), 2)
            );
            if !matches {
                cfg.initial = match kind {
                    0 => InitialCondition::Modes(Vec::new()),
                    1 => InitialCondition::Bump { center: [0.0, 0.0], width: 1.0, height: 1.0 },
                    _ => InitialCondition::File(PathBuf::new()),
                };
            }
        }
        "initial.modes" => {
            cfg.initial = InitialCondition::Modes(parse_modes(&e.value).map_err(|m| LabError::config(e.line, m))?)
        }
        "initial.bump.center" => *bump_parts(cfg).0.get_mut(0).unwrap() = parse_real(e)?,
        "initial.bump.center2" => *bump_parts(cfg).0.get_mut(1).unwrap() = parse_real(e)?,
        "initial.bump.width" => *bump_parts(cfg).1 = parse_real(e)?,
        "initial.bump.height" => *bump_parts(cfg).2 = parse_real(e)?,
        "initial.file" => cfg.initial = InitialCondition::File(PathBuf::from(&e.value)),
        "control.dt" => {
            cfg.control.dt = if e.value == "auto" {
                TimeStep::Auto
            } else {
                TimeStep::Fixed(parse_real(e)?)
            }
        }
        "control.cfl_safety" => cfg.control.cfl_safety = parse_real(e)?,
        "control.t_end" => cfg.control.t_end = parse_real(e)?,
        "control.max_steps" => cfg.control.max_steps = parse_num(e)?,
        "control.blowup_slope" => cfg.control.blowup_slope = parse_real(e)?,
        "control.scheme" => {
            cfg.scheme = choice(
                e,
                &[("rk4", TimeScheme::Rk4), ("integrating_factor", TimeScheme::IntegratingFactor)],
            )?
        }
        "quadrature.node_offset" => {
            cfg.quadrature_1d.node_offset = choice(
                e,
                &[("collocated", NodeOffset::Collocated), ("half_shifted", NodeOffset::HalfShifted)],
            )?
        }
        "quadrature.singular_rule" => {
            cfg.quadrature_1d.singular_rule = choice(
                e,
                &[("analytic_limit", SingularRule::AnalyticLimit), ("skip_node", SingularRule::SkipNode)],
            )?
        }
        "quadrature.line_truncation_radius" => {
            cfg.quadrature_1d.line_truncation_radius = Some(parse_real(e)?)
        }
        "quadrature.image_layers" => cfg.quadrature_2d.image_layers = parse_num(e)?,
        "quadrature.singular_cell" => {
            cfg.quadrature_2d.singular_cell = choice(
                e,
                &[("puncture", SingularCell::PunctureCell), ("polar_patch", SingularCell::PolarPatch)],
            )?
        }
        "quadrature.polar_patch_rings" => cfg.quadrature_2d.polar_patch_rings = parse_num(e)?,
        "quadrature.subtract_linear" => cfg.quadrature_2d.subtract_linear = parse_bool(e)?,
        "quadrature.allow_large_grid" => cfg.quadrature_2d.allow_large_grid = parse_bool(e)?,
        "output.dir" => cfg.output.dir = Some(PathBuf::from(&e.value)),
        "output.stride" => {
            let s: usize = parse_num(e)?;
            if s == 0 {
                return Err(LabError::config(e.line, "output.stride must be at least 1"));
            }
            cfg.output.stride = s;
        }
        "probe.points" => {
            cfg.probe_points = parse_point_list(&e.value).map_err(|m| LabError::config(e.line, m))?
        }
        other => return Err(LabError::config(e.line, format!("unknown key `{other}`"))),
    }
    Ok(())
}

fn validate(cfg: &RunConfig, lines: &HashMap<&str, Option<usize>>) -> Result<()> {
    let at = |keys: &[&str]| keys.iter().find_map(|k| lines.get(k).copied().flatten());
    let wrap = |keys: &[&str], e: muskat_core::MuskatError| LabError::config(at(keys), e.to_string());
    let grid_keys = ["grid.n", "grid.n2", "grid.length", "grid.length2", "grid.kind", "dimension"];
    match cfg.dimension {
        1 => {
            let g = cfg.grid_1d().map_err(|e| match e {
                LabError::Core(c) => wrap(&grid_keys, c),
                other => other,
            })?;
            cfg.quadrature_1d
                .validate(&g)
                .map_err(|e| wrap(&["quadrature.node_offset", "quadrature.singular_rule", "quadrature.line_truncation_radius"], e))?;
        }
        _ => {
            let g = cfg.grid_2d().map_err(|e| match e {
                LabError::Core(c) => wrap(&grid_keys, c),
                LabError::Config { message, .. } => LabError::config(at(&["grid.kind", "dimension"]), message),
                other => other,
            })?;
            cfg.quadrature_2d.validate(&g).map_err(|e| {
                wrap(&["quadrature.image_layers", "quadrature.polar_patch_rings", "quadrature.allow_large_grid", "grid.n"], e)
            })?;
        }
    }
    cfg.params()
        .map_err(|e| LabError::config(at(&["params.rho1", "params.rho2"]), e.to_string()))?;
    cfg.control
        .validate()
        .map_err(|e| wrap(&["control.dt", "control.cfl_safety", "control.t_end", "control.blowup_slope"], e))?;
    let initial_keys = ["initial.modes", "initial.kind", "initial.file", "initial.bump.width"];
    match &cfg.initial {
        InitialCondition::Modes(m) if m.is_empty() => {
            return Err(LabError::config(at(&initial_keys), "initial.kind = modes needs initial.modes"))
        }
        InitialCondition::Modes(m) => {
            if cfg.dimension == 1 && m.iter().any(|m| m.k[1] != 0) {
                return Err(LabError::config(at(&initial_keys), "1-D runs take `k:amp:phase` modes"));
            }
        }
        InitialCondition::Bump { width, height, center } => {
            if !(*width > 0.0) || !height.is_finite() || center.iter().any(|c| !c.is_finite()) {
                return Err(LabError::config(at(&initial_keys), "bump width must be positive"));
            }
        }
        InitialCondition::File(p) => {
            if !p.is_file() {
                return Err(LabError::config(
                    at(&["initial.file"]),
                    format!("initial file `{}` does not exist", p.display()),
                ));
            }
        }
    }
    Ok(())
}
