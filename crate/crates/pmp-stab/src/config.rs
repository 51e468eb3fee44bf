//! JSON run configuration.
//!
//! Expressions are strings in the `pmp_stab_core::expr` grammar. Every
//! optional field has a default and [`RunConfig::echo`] prints the fully
//! resolved document.

use std::fs;
use std::path::Path;

use pmp_stab_core::expr::{parse, Expr};
use pmp_stab_core::manifold::{ManifoldOptions, SeedScaling};
use pmp_stab_core::observer::{select_gains, ObserverGains};
use pmp_stab_core::ode::Tolerance;
use pmp_stab_core::simulate::SimOptions;
use pmp_stab_core::synthesis::grid_points;
use pmp_stab_core::systems::{ControlSet, ControlSystem, LyapunovSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub control: ControlConfig,
    pub lyapunov: LyapunovConfig,
    /// Local stabilizer used inside the sublevel set, one expression per input.
    pub inner: Vec<String>,
    #[serde(default)]
    pub manifold: ManifoldConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<ObserverConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Affine,
    General,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(rename = "type")]
    pub kind: SystemKind,
    pub n: usize,
    pub m: usize,
    /// Affine systems: `f(x)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drift: Vec<String>,
    /// Affine systems: the input columns `b_j(x)`, each of length `n`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<Vec<String>>,
    /// General systems: `f(x, u)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub f: Vec<String>,
    #[serde(default = "yes")]
    pub equilibrium_at_origin: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    /// Finite control set, one vector per admissible value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Vec<f64>>>,
    /// Bang-bang amplitude outside the sublevel set. Without it the
    /// Hamiltonian minimizer over the control set is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Bound on `|u|` checked by the synthesized law. Defaults to the
    /// largest magnitude in the control set.
    #[serde(default)]
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub v: String,
    pub epsilon: f64,
    /// Half width of the box on which positivity of `V` is checked.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    Gradient,
    UnitHamiltonian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ManifoldConfig {
    pub seeds: usize,
    pub tau_max: f64,
    pub sample_dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub state_budget: f64,
    pub max_steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_radius: Option<f64>,
    pub scaling: Scaling,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        let d = ManifoldOptions::default();
        ManifoldConfig {
            seeds: d.seeds,
            tau_max: d.tau_max,
            sample_dt: d.sample_dt,
            rel_tol: d.tol.rel,
            abs_tol: d.tol.abs,
            state_budget: d.state_budget,
            max_steps: d.max_steps,
            query_radius: None,
            scaling: Scaling::Gradient,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub per_axis: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// Initial states for `simulate --grid` and `illuminate`. Defaults to
    /// 21 points per axis on `[-5, 5]^n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    pub t_max: f64,
    pub max_step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub convergence_radius: f64,
    pub dwell_time: f64,
    pub sliding_margin: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let d = SimOptions::default();
        SimulationConfig {
            grid: None,
            t_max: d.t_max,
            max_step: d.max_step,
            rel_tol: d.tol.rel,
            abs_tol: d.tol.abs,
            convergence_radius: d.convergence_radius,
            dwell_time: d.dwell_time,
            sliding_margin: d.sliding_margin,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverConfig {
    /// Lipschitz constant of the nonlinearity.
    pub lipschitz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainsConfig>,
    pub x0: [f64; 2],
    pub z0: [f64; 2],
}

fn yes() -> bool {
    true
}

fn default_half_width() -> f64 {
    3.0
}

/// A validated configuration turned into core objects.
#[derive(Clone, Debug)]
pub struct Problem {
    pub system: ControlSystem,
    pub lyapunov: LyapunovSpec,
    pub inner: Vec<Expr>,
    pub manifold: ManifoldOptions,
    pub simulation: SimOptions,
    pub grid: Vec<Vec<f64>>,
    pub amplitude: Option<f64>,
    pub bound: f64,
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    cfg.fill_defaults()?;
    cfg.build()?;
    Ok(cfg)
}

fn expr(field: String, src: &str, n: usize, m: usize) -> Result<Expr, CliError> {
    parse(src, n, m).map_err(|e| CliError::validation(field, e))
}

fn exprs(field: &str, srcs: &[String], len: usize, n: usize, m: usize) -> Result<Vec<Expr>, CliError> {
    if srcs.len() != len {
        return Err(CliError::validation(field, format!("expected {len} expressions, found {}", srcs.len())));
    }
    srcs.iter().enumerate().map(|(i, s)| expr(format!("{field}[{i}]"), s, n, m)).collect()
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::validation(field, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Makes implicit defaults explicit so that the echo shows them.
    pub fn fill_defaults(&mut self) -> Result<(), CliError> {
        let n = self.system.n;
        if self.simulation.grid.is_none() {
            self.simulation.grid = Some(GridConfig { lo: vec![-5.0; n], hi: vec![5.0; n], per_axis: 21 });
        }
        if self.control.bound.is_none() {
            self.control.bound = Some(self.control_set()?.max_abs());
        }
        Ok(())
    }

    /// Pretty JSON of the resolved configuration.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    fn control_set(&self) -> Result<ControlSet, CliError> {
        let c = &self.control;
        let m = self.system.m;
        match (&c.lo, &c.hi, &c.values) {
            (Some(lo), Some(hi), None) => {
                if lo.len() != m || hi.len() != m {
                    return Err(CliError::validation("control.lo", format!("box bounds need {m} entries")));
                }
                ControlSet::new_box(lo.clone(), hi.clone()).map_err(|e| CliError::validation("control.lo", e))
            }
            (None, None, Some(values)) => {
                if let Some(i) = values.iter().position(|v| v.len() != m) {
                    return Err(CliError::validation(format!("control.values[{i}]"), format!("expected {m} entries")));
                }
                ControlSet::finite(values.clone()).map_err(|e| CliError::validation("control.values", e))
            }
            _ => Err(CliError::validation("control", "give either lo and hi, or values")),
        }
    }

    fn build_system(&self) -> Result<ControlSystem, CliError> {
        let s = &self.system;
        let (n, m) = (s.n, s.m);
        if n == 0 || m == 0 {
            return Err(CliError::validation("system.n", "state and input dimensions must be positive"));
        }
        let omega = self.control_set()?;
        let built = match s.kind {
            SystemKind::Affine => {
                if !s.f.is_empty() {
                    return Err(CliError::validation("system.f", "affine systems use drift and columns"));
                }
                let drift = exprs("system.drift", &s.drift, n, n, 0)?;
                if s.columns.len() != m {
                    return Err(CliError::validation(
                        "system.columns",
                        format!("expected {m} columns, found {}", s.columns.len()),
                    ));
                }
                let cols = s
                    .columns
                    .iter()
                    .enumerate()
                    .map(|(j, c)| exprs(&format!("system.columns[{j}]"), c, n, n, 0))
                    .collect::<Result<Vec<_>, _>>()?;
                ControlSystem::affine(drift, cols, omega, s.equilibrium_at_origin)
            }
            SystemKind::General => {
                if !s.drift.is_empty() || !s.columns.is_empty() {
                    return Err(CliError::validation("system.drift", "general systems use f"));
                }
                let f = exprs("system.f", &s.f, n, n, m)?;
                ControlSystem::general(f, m, omega, s.equilibrium_at_origin)
            }
        };
        built.map_err(|e| CliError::validation("system", e))
    }

    fn manifold_options(&self) -> Result<ManifoldOptions, CliError> {
        let c = &self.manifold;
        if c.seeds < 4 {
            return Err(CliError::validation("manifold.seeds", "need at least 4 seeds"));
        }
        positive("manifold.tau_max", c.tau_max)?;
        positive("manifold.sample_dt", c.sample_dt)?;
        positive("manifold.rel_tol", c.rel_tol)?;
        positive("manifold.abs_tol", c.abs_tol)?;
        positive("manifold.state_budget", c.state_budget)?;
        if let Some(r) = c.query_radius {
            positive("manifold.query_radius", r)?;
        }
        Ok(ManifoldOptions {
            seeds: c.seeds,
            tau_max: c.tau_max,
            sample_dt: c.sample_dt,
            tol: Tolerance { rel: c.rel_tol, abs: c.abs_tol },
            state_budget: c.state_budget,
            max_steps: c.max_steps,
            query_radius: c.query_radius,
            scaling: match c.scaling {
                Scaling::Gradient => SeedScaling::Gradient,
                Scaling::UnitHamiltonian => SeedScaling::UnitHamiltonian,
            },
            ..ManifoldOptions::default()
        })
    }

    fn simulation_options(&self) -> Result<SimOptions, CliError> {
        let c = &self.simulation;
        if !(c.t_max >= 0.0 && c.t_max.is_finite()) {
            return Err(CliError::validation("simulation.t_max", "must be non-negative"));
        }
        positive("simulation.max_step", c.max_step)?;
        positive("simulation.rel_tol", c.rel_tol)?;
        positive("simulation.abs_tol", c.abs_tol)?;
        if !(c.convergence_radius >= 0.0) {
            return Err(CliError::validation("simulation.convergence_radius", "must be non-negative"));
        }
        if !(c.dwell_time >= 0.0) {
            return Err(CliError::validation("simulation.dwell_time", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&c.sliding_margin) {
            return Err(CliError::validation("simulation.sliding_margin", "must lie in [0, 1)"));
        }
        Ok(SimOptions {
            t_max: c.t_max,
            max_step: c.max_step,
            tol: Tolerance { rel: c.rel_tol, abs: c.abs_tol },
            convergence_radius: c.convergence_radius,
            dwell_time: c.dwell_time,
            sliding_margin: c.sliding_margin,
            ..SimOptions::default()
        })
    }

    fn grid(&self) -> Result<Vec<Vec<f64>>, CliError> {
        let n = self.system.n;
        let Some(g) = &self.simulation.grid else {
            return Ok(grid_points(&vec![-5.0; n], &vec![5.0; n], 21));
        };
        if g.lo.len() != n || g.hi.len() != n {
            return Err(CliError::validation("simulation.grid", format!("bounds need {n} entries")));
        }
        if g.per_axis == 0 {
            return Err(CliError::validation("simulation.grid.per_axis", "must be positive"));
        }
        if g.lo.iter().zip(&g.hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return Err(CliError::validation("simulation.grid", "need finite lo <= hi"));
        }
        Ok(grid_points(&g.lo, &g.hi, g.per_axis))
    }

    /// Observer gains: explicit ones if given, else the default schedule.
    pub fn observer_gains(&self) -> Result<Option<ObserverGains>, CliError> {
        let Some(o) = &self.observer else { return Ok(None) };
        if !(o.lipschitz >= 0.0 && o.lipschitz.is_finite()) {
            return Err(CliError::validation("observer.lipschitz", "must be non-negative"));
        }
        let g = match &o.gains {
            Some(g) => ObserverGains::new(g.beta1, g.beta2, g.delta, o.lipschitz)
                .map_err(|e| CliError::validation("observer.gains", e))?,
            None => select_gains(o.lipschitz).map_err(|e| CliError::validation("observer.lipschitz", e))?,
        };
        Ok(Some(g))
    }

    /// Validates every block and builds the core objects.
    pub fn build(&self) -> Result<Problem, CliError> {
        let system = self.build_system()?;
        let n = system.n();
        let lyap = &self.lyapunov;
        positive("lyapunov.epsilon", lyap.epsilon)?;
        positive("lyapunov.half_width", lyap.half_width)?;
        let v = expr("lyapunov.v".into(), &lyap.v, n, 0)?;
        let lyapunov = LyapunovSpec::new(v, n, lyap.epsilon, lyap.half_width)
            .map_err(|e| CliError::validation("lyapunov.v", e))?;
        let inner = exprs("inner", &self.inner, system.m(), n, 0)?;
        if let Some(k) = self.control.amplitude {
            positive("control.amplitude", k)?;
            if !matches!(system.omega(), ControlSet::Box { .. }) {
                return Err(CliError::validation("control.amplitude", "needs a box control set"));
            }
        }
        let bound = match self.control.bound {
            Some(b) => {
                positive("control.bound", b)?;
                b
            }
            None => system.omega().max_abs(),
        };
        self.observer_gains()?;
        Ok(Problem {
            manifold: self.manifold_options()?,
            simulation: self.simulation_options()?,
            grid: self.grid()?,
            amplitude: self.control.amplitude,
            bound,
            inner,
            lyapunov,
            system,
        })
    }
}
