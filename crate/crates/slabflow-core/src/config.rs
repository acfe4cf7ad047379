//! Run configuration: a flat `key = value` text format with `#` comments
//! and dotted section prefixes (`grid.N1 = 32`). Parsing validates every
//! line and reports *all* problems at once, each with its line number;
//! unknown keys are rejected.
//!
//! Viscosity and gravity are fixed to one and are not configurable.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Result, SlabflowError};
use crate::geometry::BottomProfile;
use crate::spectral::{Grid, GridSpec, SlabField, SlabVectorField, SurfaceField};

/// One cosine surface mode `amplitude * cos(2 pi (k1 x1 / L1 + k2 x2 / L2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceMode {
    pub k1: i64,
    pub k2: i64,
    pub amplitude: f64,
}

/// Named analytic initial-velocity families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VelocityFamily {
    /// `u0 = 0`.
    Zero,
    /// Horizontal shear `u0 = (sin(pi (x3 + b0) / (2 b0)), 0, 0)`:
    /// no-slip at the bottom, stress-free at the top.
    Shear,
    /// Band-limited divergence-free test field used by the manufactured
    /// cases (vanishes on the bottom).
    Manufactured,
}

/// Bottom profile specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BottomSpec {
    Flat,
    /// `b(x') = b0 + amplitude * cos(2 pi wavenumber x1 / L1)`.
    SingleMode { amplitude: f64, wavenumber: i64 },
}

/// Picard operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PicardMode {
    /// Full nonlinear Picard window iteration.
    Full,
    /// One linear window solve with frozen initial geometry (debugging aid).
    Linear,
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    // grid
    pub n1: usize,
    pub n2: usize,
    pub nz: usize,
    pub l1: f64,
    pub l2: f64,
    pub dealias: bool,
    // physics (viscosity = gravity = 1, fixed)
    pub b0: f64,
    pub bottom: BottomSpec,
    // initial data
    pub eta0_modes: Vec<SurfaceMode>,
    pub u0: VelocityFamily,
    // time window
    pub t_end: f64,
    pub dt: f64,
    // picard
    pub tol_n: f64,
    pub max_picard: usize,
    pub mode: PicardMode,
    /// Optional override of the derived separation margin delta.
    pub delta_override: Option<f64>,
    // extension
    pub c_poisson: f64,
    // output
    pub output_dir: String,
    pub dump_cadence: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n1: 16,
            n2: 16,
            nz: 17,
            l1: 1.0,
            l2: 1.0,
            dealias: false,
            b0: 1.0,
            bottom: BottomSpec::Flat,
            eta0_modes: Vec::new(),
            u0: VelocityFamily::Zero,
            t_end: 0.05,
            dt: 0.005,
            tol_n: 1e-14,
            max_picard: 25,
            mode: PicardMode::Full,
            delta_override: None,
            c_poisson: 1.0,
            output_dir: "out".into(),
            dump_cadence: 1,
            seed: 0,
        }
    }
}

/// One parse or validation problem, with its 1-based line number
/// (0 for whole-file invariants).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

fn issues_to_error(issues: Vec<ConfigIssue>) -> SlabflowError {
    SlabflowError::Config(
        issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n"),
    )
}

/// Parses and validates a config; returns every problem found.
pub fn parse_config(text: &str) -> std::result::Result<RunConfig, Vec<ConfigIssue>> {
    let mut cfg = RunConfig::default();
    let mut issues = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            issues.push(ConfigIssue {
                line: lineno,
                message: format!("expected `key = value`, got `{line}`"),
            });
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            issues.push(ConfigIssue { line: lineno, message: format!("duplicate key `{key}`") });
            continue;
        }
        let mut bad = |message: String| issues.push(ConfigIssue { line: lineno, message });
        macro_rules! parse_as {
            ($ty:ty) => {
                match value.parse::<$ty>() {
                    Ok(v) => Some(v),
                    Err(_) => {
                        bad(format!(
                            "`{key}` expects a {}, got `{value}`",
                            stringify!($ty)
                        ));
                        None
                    }
                }
            };
        }
        match key {
            "grid.N1" => {
                if let Some(v) = parse_as!(usize) {
                    cfg.n1 = v;
                }
            }
            "grid.N2" => {
                if let Some(v) = parse_as!(usize) {
                    cfg.n2 = v;
                }
            }
            "grid.Nz" => {
                if let Some(v) = parse_as!(usize) {
                    cfg.nz = v;
                }
            }
            "grid.L1" => {
                if let Some(v) = parse_as!(f64) {
                    cfg.l1 = v;
                }
            }
            "grid.L2" => {
                if let Some(v) = parse_as!(f64) {
                    cfg.l2 = v;
                }
            }
            "grid.dealias" => {
                if let Some(v) = parse_as!(bool) {
                    cfg.dealias = v;
                }
            }
            "physics.b0" => {
                if let Some(v) = parse_as!(f64) {
                    cfg.b0 = v;
                }
            }
            "physics.bottom" => match value {
                "flat" => cfg.bottom = BottomSpec::Flat,
                "single-mode" => {
                    cfg.bottom = BottomSpec::SingleMode { amplitude: 0.0, wavenumber: 1 }
                }
                other => bad(format!(
                    "`physics.bottom` must be `flat` or `single-mode`, got `{other}`"
                )),
            },
            "physics.bottom_amplitude" => {
                if let Some(v) = parse_as!(f64) {
                    match &mut cfg.bottom {
                        BottomSpec::SingleMode { amplitude, .. } => *amplitude = v,
                        BottomSpec::Flat => bad(
                            "`physics.bottom_amplitude` requires `physics.bottom = single-mode` \
                             earlier in the file"
                                .into(),
                        ),
                    }
                }
            }
            "physics.bottom_wavenumber" => {
                if let Some(v) = parse_as!(i64) {
                    match &mut cfg.bottom {
                        BottomSpec::SingleMode { wavenumber, .. } => *wavenumber = v,
                        BottomSpec::Flat => bad(
                            "`physics.bottom_wavenumber` requires `physics.bottom = single-mode` \
                             earlier in the file"
                                .into(),
                        ),
                    }
                }
            }
            "initial.eta0_modes" => match parse_modes(value) {
                Ok(modes) => cfg.eta0_modes = modes,
                Err(msg) => bad(msg),
            },
            "initial.u0" => match value {
                "zero" => cfg.u0 = VelocityFamily::Zero,
                "shear" => cfg.u0 = VelocityFamily::Shear,
                "manufactured" => cfg.u0 = VelocityFamily::Manufactured,
                other => bad(format!(
                    "`initial.u0` must be `zero`, `shear`, or `manufactured`, got `{other}`"
                )),
            },
            "time.T" => {
                if let Some(v) = parse_as!(f64) {
                    cfg.t_end = v;
                }
            }
            "time.dt" => {
                if let Some(v) = parse_as!(f64) {
                    cfg.dt = v;
                }
            }
            "picard.tol_N" => {
                if let Some(v) = parse_as!(f64) {
                    cfg.tol_n = v;
                }
            }
            "picard.max_picard" => {
                if let Some(v) = parse_as!(usize) {
                    cfg.max_picard = v;
                }
            }
            "picard.mode" => match value {
                "full" => cfg.mode = PicardMode::Full,
                "linear" => cfg.mode = PicardMode::Linear,
                other => bad(format!("`picard.mode` must be `full` or `linear`, got `{other}`")),
            },
            "picard.delta" => {
                if let Some(v) = parse_as!(f64) {
                    cfg.delta_override = Some(v);
                }
            }
            "extension.C_poisson" => {
                if let Some(v) = parse_as!(f64) {
                    cfg.c_poisson = v;
                }
            }
            "output.dir" => cfg.output_dir = value.to_string(),
            "output.cadence" => {
                if let Some(v) = parse_as!(usize) {
                    cfg.dump_cadence = v;
                }
            }
            "output.seed" => {
                if let Some(v) = parse_as!(u64) {
                    cfg.seed = v;
                }
            }
            other => bad(format!("unknown key `{other}`")),
        }
    }

    validate(&cfg, &mut issues);
    if issues.is_empty() {
        Ok(cfg)
    } else {
        Err(issues)
    }
}

/// `parse_config` with the issue list folded into a single error.
pub fn parse_config_or_error(text: &str) -> Result<RunConfig> {
    parse_config(text).map_err(issues_to_error)
}

/// Comma-separated list of `k1 k2 amplitude` triples, e.g.
/// `1 0 0.02, 0 2 0.01`.
fn parse_modes(value: &str) -> std::result::Result<Vec<SurfaceMode>, String> {
    let mut modes = Vec::new();
    if value.trim().is_empty() {
        return Ok(modes);
    }
    for (m, chunk) in value.split(',').enumerate() {
        let parts: Vec<&str> = chunk.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(format!(
                "mode {} must be `k1 k2 amplitude`, got `{}`",
                m + 1,
                chunk.trim()
            ));
        }
        let k1 = parts[0].parse::<i64>().map_err(|_| format!("mode {}: bad k1", m + 1))?;
        let k2 = parts[1].parse::<i64>().map_err(|_| format!("mode {}: bad k2", m + 1))?;
        let amplitude =
            parts[2].parse::<f64>().map_err(|_| format!("mode {}: bad amplitude", m + 1))?;
        if !amplitude.is_finite() {
            return Err(format!("mode {}: amplitude must be finite", m + 1));
        }
        modes.push(SurfaceMode { k1, k2, amplitude });
    }
    Ok(modes)
}

fn validate(cfg: &RunConfig, issues: &mut Vec<ConfigIssue>) {
    let mut check = |ok: bool, message: &str| {
        if !ok {
            issues.push(ConfigIssue { line: 0, message: message.to_string() });
        }
    };
    check(cfg.n1 >= 2 && cfg.n1 % 2 == 0, "grid.N1 must be even and at least 2");
    check(cfg.n2 >= 2 && cfg.n2 % 2 == 0, "grid.N2 must be even and at least 2");
    check(cfg.nz >= 3, "grid.Nz must be at least 3");
    check(cfg.l1 > 0.0, "grid.L1 must be positive");
    check(cfg.l2 > 0.0, "grid.L2 must be positive");
    check(cfg.b0 > 0.0, "physics.b0 must be positive");
    check(cfg.t_end > 0.0, "time.T must be positive");
    check(cfg.dt > 0.0, "time.dt must be positive");
    if cfg.dt > 0.0 && cfg.t_end > 0.0 {
        check(cfg.dt <= cfg.t_end, "time.dt must not exceed time.T");
    }
    check(cfg.tol_n > 0.0, "picard.tol_N must be positive");
    check(cfg.max_picard >= 1, "picard.max_picard must be at least 1");
    if let Some(d) = cfg.delta_override {
        check(d > 0.0, "picard.delta must be positive");
    }
    check(cfg.c_poisson > 0.0, "extension.C_poisson must be positive");
    check(cfg.dump_cadence >= 1, "output.cadence must be at least 1");
    if let BottomSpec::SingleMode { amplitude, .. } = cfg.bottom {
        check(amplitude.is_finite(), "physics.bottom_amplitude must be finite");
        check(
            amplitude.abs() < cfg.b0,
            "physics.bottom_amplitude must be smaller than b0 in magnitude",
        );
    }
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(GridSpec {
            l1: self.l1,
            l2: self.l2,
            b0: self.b0,
            n1: self.n1,
            n2: self.n2,
            nz: self.nz,
            dealias: self.dealias,
        })
    }

    pub fn nsteps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }

    pub fn eta0(&self, grid: &Grid) -> SurfaceField {
        let (l1, l2) = (self.l1, self.l2);
        let modes = self.eta0_modes.clone();
        SurfaceField::from_fn(grid, move |x1, x2| {
            modes
                .iter()
                .map(|m| {
                    m.amplitude
                        * (2.0 * PI * (m.k1 as f64 * x1 / l1 + m.k2 as f64 * x2 / l2)).cos()
                })
                .sum()
        })
    }

    pub fn bottom(&self, grid: &Grid) -> Result<BottomProfile> {
        match self.bottom {
            BottomSpec::Flat => Ok(BottomProfile::flat(grid)),
            BottomSpec::SingleMode { amplitude, wavenumber } => {
                let (b0, l1) = (self.b0, self.l1);
                BottomProfile::new(SurfaceField::from_fn(grid, move |x1, _| {
                    b0 + amplitude * (2.0 * PI * wavenumber as f64 * x1 / l1).cos()
                }))
            }
        }
    }

    pub fn u0(&self, grid: &Grid) -> SlabVectorField {
        let b0 = self.b0;
        match self.u0 {
            VelocityFamily::Zero => SlabVectorField::zeros(grid),
            VelocityFamily::Shear => SlabVectorField::new([
                SlabField::from_fn(grid, move |_, _, x3| {
                    (PI * (x3 + b0) / (2.0 * b0)).sin()
                }),
                SlabField::zeros(grid),
                SlabField::zeros(grid),
            ]),
            VelocityFamily::Manufactured => {
                // Divergence-free, vanishing on the bottom: the curl of a
                // stream field psi e2 with psi = sin^2(pi (x3+b0)/b0) s(x1).
                // u = (d3 psi, 0, -d1 psi) in closed form.
                let l1 = self.l1;
                SlabVectorField::new([
                    SlabField::from_fn(grid, move |x1, _, x3| {
                        PI / b0
                            * (2.0 * PI * (x3 + b0) / b0).sin()
                            * (2.0 * PI * x1 / l1).sin()
                    }),
                    SlabField::zeros(grid),
                    SlabField::from_fn(grid, move |x1, _, x3| {
                        -2.0 * PI / l1
                            * (PI * (x3 + b0) / b0).sin().powi(2)
                            * (2.0 * PI * x1 / l1).cos()
                    }),
                ])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let cfg = parse_config(
            "grid.N1 = 8\ngrid.N2 = 8\ngrid.Nz = 9\ntime.T = 0.1\ntime.dt = 0.01\n",
        )
        .unwrap();
        assert_eq!(cfg.l1, 1.0);
        assert_eq!(cfg.b0, 1.0);
        assert_eq!(cfg.bottom, BottomSpec::Flat);
        assert_eq!(cfg.u0, VelocityFamily::Zero);
        assert_eq!(cfg.c_poisson, 1.0);
        assert_eq!(cfg.mode, PicardMode::Full);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.nsteps(), 10);
    }

    #[test]
    fn odd_n1_is_rejected_with_message() {
        let err = parse_config("grid.N1 = 7\n").unwrap_err();
        assert!(err.iter().any(|i| i.message.contains("N1 must be even")), "{err:?}");
    }

    #[test]
    fn nonpositive_c_poisson_is_rejected() {
        let err = parse_config("extension.C_poisson = 0\n").unwrap_err();
        assert!(err.iter().any(|i| i.message.contains("must be positive")), "{err:?}");
    }

    #[test]
    fn all_errors_are_collected_with_line_numbers() {
        let err = parse_config(
            "grid.N1 = banana\nnot a key value line\nbogus.key = 3\ngrid.N1 = 8\n",
        )
        .unwrap_err();
        // line 1: type error; line 2: shape error; line 3: unknown key;
        // line 4: duplicate (N1 was seen, even though its value was bad).
        assert!(err.len() >= 4, "{err:?}");
        assert_eq!(err[0].line, 1);
        assert_eq!(err[1].line, 2);
        assert!(err[2].message.contains("unknown key"));
        assert!(err[3].message.contains("duplicate"));
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = parse_config(
            "# run\n\ngrid.N1 = 8 # inline\ngrid.N2 = 8\ngrid.Nz = 9\n\
             time.T = 0.1\ntime.dt = 0.01\ninitial.eta0_modes = 1 0 0.02, 0 2 0.01\n",
        )
        .unwrap();
        assert_eq!(
            cfg.eta0_modes,
            vec![
                SurfaceMode { k1: 1, k2: 0, amplitude: 0.02 },
                SurfaceMode { k1: 0, k2: 2, amplitude: 0.01 }
            ]
        );
    }

    #[test]
    fn initial_field_builders_are_consistent() {
        let cfg = parse_config(
            "grid.N1 = 8\ngrid.N2 = 8\ngrid.Nz = 9\ntime.T = 0.1\ntime.dt = 0.01\n\
             initial.eta0_modes = 1 0 0.02\ninitial.u0 = shear\n",
        )
        .unwrap();
        let g = cfg.grid().unwrap();
        let eta = cfg.eta0(&g);
        assert!((eta.linf_norm() - 0.02).abs() < 1e-12);
        let u = cfg.u0(&g);
        assert!(u.trace_bottom().linf_norm() < 1e-12);
        assert!((u.comp(0).trace_top().linf_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bottom_single_mode_requires_declaration_order() {
        let err = parse_config("physics.bottom_amplitude = 0.1\n").unwrap_err();
        assert!(err.iter().any(|i| i.message.contains("single-mode")), "{err:?}");
        let cfg = parse_config(
            "grid.N1 = 8\ngrid.N2 = 8\ngrid.Nz = 9\ntime.T = 0.1\ntime.dt = 0.01\n\
             physics.bottom = single-mode\nphysics.bottom_amplitude = 0.1\n\
             physics.bottom_wavenumber = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.bottom, BottomSpec::SingleMode { amplitude: 0.1, wavenumber: 2 });
    }
}
