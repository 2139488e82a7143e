//! Scenario files.
//!
//! A run is described by one TOML document with the sections `[grid]`,
//! `[potential]`, `[problem]`, `[newton]`, `[objective]`, `[control]`,
//! `[optimizer]`, `[audit]`, `[gradient_check]` and `[output]`. Unknown keys
//! are rejected everywhere. Spatial and space-time data are given as
//! [`FieldSpec`]s; see `configs/README.md` for the full schema.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Bc, Field, Grid, GridConfig, SpaceTime};
use crate::objective::{GMode, ObjectiveSpec};
use crate::optimizer::{ControlBox, PGSettings};
use crate::potentials::{PotentialKind, PotentialSpec, DEFAULT_DOMAIN_MARGIN};
use crate::state::{NewtonSettings, StateProblem};
use crate::verify::AuditConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trig {
    Sin,
    Cos,
}

/// A scalar datum on space-time, evaluated at the nodes of a layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `Σ c tᵃ xᵇ yᵈ` with rows `[c, a, b, d]`.
    Polynomial {
        terms: Vec<[f64; 4]>,
    },
    /// `offset + amplitude · f(π (kx x + ky y + kt t) + phase)`.
    Trig {
        function: Trig,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        kx: f64,
        #[serde(default)]
        ky: f64,
        #[serde(default)]
        kt: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `inside` on the closed box (and time window), `outside` elsewhere.
    /// Omitted ranges are unbounded.
    Box {
        x: Option<[f64; 2]>,
        y: Option<[f64; 2]>,
        t: Option<[f64; 2]>,
        #[serde(default = "one")]
        inside: f64,
        #[serde(default)]
        outside: f64,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "one")]
        inside: f64,
        #[serde(default)]
        outside: f64,
    },
    Sum {
        terms: Vec<FieldSpec>,
    },
    /// Values from a file in the field CSV format, relative to the config.
    Csv {
        path: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

impl FieldSpec {
    pub fn constant(value: f64) -> Self {
        FieldSpec::Constant { value }
    }

    /// Value of an analytic spec; `None` for file-backed specs.
    pub fn eval(&self, t: f64, x: [f64; 2]) -> Option<f64> {
        let inside = |r: &Option<[f64; 2]>, v: f64| r.is_none_or(|[a, b]| a <= v && v <= b);
        Some(match self {
            FieldSpec::Constant { value } => *value,
            FieldSpec::Polynomial { terms } => terms
                .iter()
                .map(|[c, a, b, d]| c * t.powf(*a) * x[0].powf(*b) * x[1].powf(*d))
                .sum(),
            FieldSpec::Trig {
                function,
                amplitude,
                kx,
                ky,
                kt,
                phase,
                offset,
            } => {
                let arg = PI * (kx * x[0] + ky * x[1] + kt * t) + phase;
                offset
                    + amplitude
                        * match function {
                            Trig::Sin => arg.sin(),
                            Trig::Cos => arg.cos(),
                        }
            }
            FieldSpec::Box {
                x: xr,
                y,
                t: tr,
                inside: i,
                outside,
            } => {
                if inside(xr, x[0]) && inside(y, x[1]) && inside(tr, t) {
                    *i
                } else {
                    *outside
                }
            }
            FieldSpec::Ball {
                center,
                radius,
                inside,
                outside,
            } => {
                let d2: f64 = center.iter().zip(x).map(|(c, v)| (v - c).powi(2)).sum();
                if d2 <= radius * radius {
                    *inside
                } else {
                    *outside
                }
            }
            FieldSpec::Sum { terms } => {
                let mut s = 0.0;
                for term in terms {
                    s += term.eval(t, x)?;
                }
                s
            }
            FieldSpec::Csv { .. } => return None,
        })
    }

    fn has_csv(&self) -> bool {
        match self {
            FieldSpec::Csv { .. } => true,
            FieldSpec::Sum { terms } => terms.iter().any(FieldSpec::has_csv),
            _ => false,
        }
    }

    /// Samples every level of `grid` in layout `bc`.
    pub fn sample(&self, grid: &Grid, bc: Bc, base_dir: &Path, key: &str) -> Result<SpaceTime> {
        let st = match self {
            FieldSpec::Csv { path } => {
                let path = base_dir.join(path);
                let text = fs::read_to_string(&path).map_err(|e| {
                    Error::config(key, format!("cannot read {}: {e}", path.display()))
                })?;
                crate::export::parse_field_csv(&text, grid, bc)
                    .map_err(|e| Error::config(key, e.to_string()))?
            }
            FieldSpec::Sum { terms } if self.has_csv() => {
                let mut acc = SpaceTime::zeros(grid, bc);
                for term in terms {
                    acc.axpy(1.0, &term.sample(grid, bc, base_dir, key)?);
                }
                acc
            }
            _ => SpaceTime::from_fn(grid, bc, |t, x| self.eval(t, x).unwrap_or(f64::NAN)),
        };
        if st.levels.iter().any(|f| !f.is_finite()) {
            return Err(Error::config(key, "field has non-finite values"));
        }
        Ok(st)
    }

    /// Time-independent datum: level 0 of [`FieldSpec::sample`].
    pub fn sample_static(&self, grid: &Grid, bc: Bc, base_dir: &Path, key: &str) -> Result<Field> {
        Ok(self.sample(grid, bc, base_dir, key)?.levels.swap_remove(0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialName {
    Regular,
    Logarithmic,
    Obstacle,
    Rational,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub kind: PotentialName,
    /// Coefficient of `π(r) = −2cr` (logarithmic and obstacle kinds).
    pub c: Option<f64>,
    /// Yosida parameter (obstacle kind only).
    pub eps_yosida: Option<f64>,
    pub domain_margin: Option<f64>,
}

impl PotentialConfig {
    pub fn build(&self) -> Result<PotentialSpec> {
        let needs_c = matches!(
            self.kind,
            PotentialName::Logarithmic | PotentialName::Obstacle
        );
        if self.c.is_some() && !needs_c {
            return Err(Error::config(
                "potential.c",
                "only used by the logarithmic and obstacle kinds",
            ));
        }
        if self.eps_yosida.is_some() && self.kind != PotentialName::Obstacle {
            return Err(Error::config(
                "potential.eps_yosida",
                "only used by the obstacle kind",
            ));
        }
        let c = self.c.unwrap_or(1.0);
        let kind = match self.kind {
            PotentialName::Regular => PotentialKind::Regular,
            PotentialName::Rational => PotentialKind::Rational,
            PotentialName::Logarithmic => PotentialKind::Logarithmic { c },
            PotentialName::Obstacle => PotentialKind::Obstacle {
                c,
                eps_yosida: self.eps_yosida.ok_or_else(|| {
                    Error::config("potential.eps_yosida", "required for the obstacle kind")
                })?,
            },
        };
        PotentialSpec::with_margin(kind, self.domain_margin.unwrap_or(DEFAULT_DOMAIN_MARGIN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub ell: f64,
    pub m: FieldSpec,
    pub theta0: FieldSpec,
    pub phi0: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kappa: f64,
    pub eps_g: f64,
    pub lambda_g: f64,
    pub chi: FieldSpec,
    #[serde(default = "zero_spec")]
    pub theta_q: FieldSpec,
    #[serde(default)]
    pub g_mode: GMode,
}

fn zero_spec() -> FieldSpec {
    FieldSpec::constant(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub u_min: FieldSpec,
    pub u_max: FieldSpec,
    /// Starting control; the box midpoint when omitted.
    pub u_init: Option<FieldSpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientCheckConfig {
    /// Base control; the starting control when omitted.
    pub base: Option<FieldSpec>,
    /// Probe direction; a smooth wave scaled to the control box when omitted.
    pub direction: Option<FieldSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Gnuplot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub potential: PotentialConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub newton: NewtonSettings,
    pub objective: ObjectiveConfig,
    pub control: ControlConfig,
    #[serde(default)]
    pub optimizer: PGSettings,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub gradient_check: GradientCheckConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Everything a solve needs, sampled on one grid.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub problem: StateProblem,
    pub objective: ObjectiveSpec,
    pub control_box: ControlBox,
    pub u_init: SpaceTime,
}

impl RunConfig {
    pub fn parse_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = msg
                .split('`')
                .nth(1)
                .map_or_else(|| "config".to_string(), str::to_string);
            Error::config(key, msg)
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(&self.grid)
    }

    /// Checks every block, sampling all fields on the configured grid.
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.newton.validate()?;
        let g = self.grid()?;
        self.build(&g)?;
        Ok(())
    }

    pub fn build(&self, grid: &Grid) -> Result<Scenario> {
        let dir = &self.base_dir;
        let potential = self.potential.build()?;
        let pc = &self.problem;
        let problem = StateProblem {
            grid: grid.clone(),
            potential,
            ell: pc.ell,
            m: pc.m.sample_static(grid, Bc::Neumann, dir, "problem.m")?,
            theta0: pc
                .theta0
                .sample_static(grid, Bc::Dirichlet, dir, "problem.theta0")?,
            phi0: pc
                .phi0
                .sample_static(grid, Bc::Neumann, dir, "problem.phi0")?,
            mms_source_phi: None,
            newton: self.newton,
        };
        problem.validate()?;
        let oc = &self.objective;
        let mut objective = ObjectiveSpec::new(
            grid,
            oc.kappa,
            oc.eps_g,
            oc.lambda_g,
            oc.chi.sample(grid, Bc::Neumann, dir, "objective.chi")?,
            oc.theta_q
                .sample(grid, Bc::Dirichlet, dir, "objective.theta_q")?,
        )?;
        objective.g_mode = oc.g_mode;
        let cc = &self.control;
        let control_box = ControlBox::new(
            grid,
            cc.u_min.sample(grid, Bc::Dirichlet, dir, "control.u_min")?,
            cc.u_max.sample(grid, Bc::Dirichlet, dir, "control.u_max")?,
        )?;
        let u_init = match &cc.u_init {
            Some(spec) => {
                let u = spec.sample(grid, Bc::Dirichlet, dir, "control.u_init")?;
                if !control_box.contains(&u) {
                    return Err(Error::config(
                        "control.u_init",
                        "must lie inside the control box",
                    ));
                }
                u
            }
            None => control_box.midpoint(),
        };
        Ok(Scenario {
            problem,
            objective,
            control_box,
            u_init,
        })
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    RunConfig::parse_str(&text, &base)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [grid]
        lengths = [1.0]
        cells = [8]
        time_steps = 4
        final_time = 0.5

        [potential]
        kind = "regular"

        [problem]
        ell = 1.0
        m = { kind = "constant", value = 1.0 }
        theta0 = { kind = "constant", value = 0.0 }
        phi0 = { kind = "trig", function = "cos", amplitude = 0.5, kx = 1.0 }

        [objective]
        kappa = 0.5
        eps_g = 0.1
        lambda_g = 1e-3
        chi = { kind = "box", x = [0.25, 0.75], t = [0.1, 0.4] }

        [control]
        u_min = { kind = "constant", value = -1.0 }
        u_max = { kind = "constant", value = 1.0 }
    "#;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse_str(text, Path::new("."))
    }

    fn config_key(r: Result<RunConfig>) -> String {
        match r {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_parses() {
        let cfg = parse(MINIMAL).unwrap();
        let s = cfg.build(&cfg.grid().unwrap()).unwrap();
        assert_eq!(s.u_init, SpaceTime::zeros(&s.problem.grid, Bc::Dirichlet));
        assert_eq!(s.problem.phi0.values[0], 0.5);
        assert_eq!(s.objective.chi.levels[1].values[4], 1.0);
        assert_eq!(s.objective.chi.levels[1].values[0], 0.0);
        assert_eq!(cfg.optimizer, PGSettings::default());
    }

    #[test]
    fn negative_kappa_is_rejected() {
        let text = MINIMAL.replace("kappa = 0.5", "kappa = -1.0");
        assert_eq!(config_key(parse(&text)), "objective.kappa");
    }

    #[test]
    fn inverted_box_is_rejected() {
        let text = MINIMAL.replace(
            "u_max = { kind = \"constant\", value = 1.0 }",
            "u_max = { kind = \"box\", x = [0.0, 0.5], inside = 2.0, outside = -2.0 }",
        );
        assert_eq!(config_key(parse(&text)), "control.u_min");
    }

    #[test]
    fn unknown_and_missing_keys_are_named() {
        let text = MINIMAL.replace("kappa = 0.5", "kappa = 0.5\nkapa = 1.0");
        assert_eq!(config_key(parse(&text)), "kapa");
        let text = MINIMAL.replace("lambda_g = 1e-3", "");
        assert_eq!(config_key(parse(&text)), "lambda_g");
        let text = MINIMAL.replace("amplitude = 0.5,", "amplitude = 0.5, wave = 2,");
        assert_eq!(config_key(parse(&text)), "wave");
    }

    #[test]
    fn potential_parameters_are_checked() {
        let text = MINIMAL.replace("kind = \"regular\"", "kind = \"regular\"\nc = 2.0");
        assert_eq!(config_key(parse(&text)), "potential.c");
        let text = MINIMAL.replace("kind = \"regular\"", "kind = \"obstacle\"");
        assert_eq!(config_key(parse(&text)), "potential.eps_yosida");
        let text = MINIMAL
            .replace("kind = \"regular\"", "kind = \"logarithmic\"")
            .replace("amplitude = 0.5", "amplitude = 1.0");
        assert_eq!(config_key(parse(&text)), "problem.phi0");
    }

    #[test]
    fn field_spec_values() {
        let p = FieldSpec::Polynomial {
            terms: vec![[2.0, 1.0, 2.0, 0.0], [1.0, 0.0, 0.0, 0.0]],
        };
        assert_eq!(p.eval(0.5, [3.0, 0.0]), Some(10.0));
        let s = FieldSpec::Sum {
            terms: vec![
                FieldSpec::constant(1.0),
                FieldSpec::Ball {
                    center: vec![0.5, 0.5],
                    radius: 0.1,
                    inside: 2.0,
                    outside: 0.0,
                },
            ],
        };
        assert_eq!(s.eval(0.0, [0.55, 0.5]), Some(3.0));
        assert_eq!(s.eval(0.0, [0.7, 0.5]), Some(1.0));
        let t = FieldSpec::Trig {
            function: Trig::Sin,
            amplitude: 2.0,
            kx: 0.5,
            ky: 0.0,
            kt: 0.0,
            phase: 0.0,
            offset: 1.0,
        };
        assert!((t.eval(0.0, [1.0, 0.0]).unwrap() - 3.0).abs() < 1e-15);
    }
}
