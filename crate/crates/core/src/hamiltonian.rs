//! The Hamiltonian `S(nu, t, x, u) = <nu, f(t, x, u)>`, its minimizer over the
//! control set, and the forward and reversed characteristic flows.

use alloc::vec;
use alloc::vec::Vec;

use crate::systems::{dot, ControlSet, ControlSystem, Dynamics, SystemError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianOptions {
    /// `|<nu, b_j>|` at or below this marks channel `j` as degenerate.
    pub switch_tol: f64,
    /// Grid points per axis when minimizing a non-affine `f` over a box.
    pub grid_res: usize,
}

impl Default for HamiltonianOptions {
    fn default() -> Self {
        HamiltonianOptions { switch_tol: 1e-10, grid_res: 101 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinimizerResult {
    pub u: Vec<f64>,
    pub s_value: f64,
    /// The minimizer is not unique.
    pub degenerate: bool,
}

/// Switching functions `sigma_j = <nu, b_j(x)>` of an affine system.
pub fn switching_functions(sys: &ControlSystem, t: f64, x: &[f64], nu: &[f64]) -> Result<Vec<f64>, SystemError> {
    (0..sys.m()).map(|j| Ok(dot(nu, &sys.column(j, t, x)?))).collect()
}

/// Minimizes `<nu, f(t, x, u)>` over the control set.
pub fn minimize_hamiltonian(
    sys: &ControlSystem,
    t: f64,
    x: &[f64],
    nu: &[f64],
    opts: &HamiltonianOptions,
) -> Result<MinimizerResult, SystemError> {
    match (sys.dynamics(), sys.omega()) {
        (Dynamics::Affine { .. }, ControlSet::Box { lo, hi }) => {
            let sigma = switching_functions(sys, t, x, nu)?;
            let mut degenerate = false;
            let u: Vec<f64> = sigma
                .iter()
                .enumerate()
                .map(|(j, &s)| {
                    if s > opts.switch_tol {
                        lo[j]
                    } else if s < -opts.switch_tol {
                        hi[j]
                    } else {
                        degenerate = true;
                        0.5 * (lo[j] + hi[j])
                    }
                })
                .collect();
            let s_value = dot(nu, &sys.eval_dynamics(t, x, &u)?);
            Ok(MinimizerResult { u, s_value, degenerate })
        }
        (_, ControlSet::Finite(values)) => exhaustive(sys, t, x, nu, values.iter().map(|v| v.as_slice())),
        (Dynamics::General { .. }, ControlSet::Box { lo, hi }) => {
            let res = opts.grid_res.max(2);
            let m = lo.len();
            let total = res.checked_pow(m as u32).unwrap_or(usize::MAX);
            let grid = (0..total).map(|mut idx| {
                (0..m)
                    .map(|j| {
                        let k = idx % res;
                        idx /= res;
                        lo[j] + (hi[j] - lo[j]) * k as f64 / (res - 1) as f64
                    })
                    .collect::<Vec<f64>>()
            });
            let mut best: Option<MinimizerResult> = None;
            for u in grid {
                let s = dot(nu, &sys.eval_dynamics(t, x, &u)?);
                match &mut best {
                    None => best = Some(MinimizerResult { u, s_value: s, degenerate: false }),
                    Some(b) => {
                        if s < b.s_value {
                            *b = MinimizerResult { u, s_value: s, degenerate: false };
                        } else if tie(s, b.s_value) {
                            b.degenerate = true;
                        }
                    }
                }
            }
            best.ok_or(SystemError::EmptyControlSet)
        }
    }
}

fn tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

fn exhaustive<'a>(
    sys: &ControlSystem,
    t: f64,
    x: &[f64],
    nu: &[f64],
    values: impl Iterator<Item = &'a [f64]>,
) -> Result<MinimizerResult, SystemError> {
    let mut scores: Vec<(Vec<f64>, f64)> = Vec::new();
    for u in values {
        scores.push((u.to_vec(), dot(nu, &sys.eval_dynamics(t, x, u)?)));
    }
    let mut best = 0;
    for (i, (_, s)) in scores.iter().enumerate() {
        if *s < scores[best].1 {
            best = i;
        }
    }
    let s_best = scores[best].1;
    let degenerate = scores.iter().enumerate().any(|(i, (_, s))| i != best && tie(*s, s_best));
    let (u, s_value) = scores.swap_remove(best);
    Ok(MinimizerResult { u, s_value, degenerate })
}

/// `min_u <nu, f(t, x, u)>`.
pub fn hamiltonian_value(
    sys: &ControlSystem,
    t: f64,
    x: &[f64],
    nu: &[f64],
    opts: &HamiltonianOptions,
) -> Result<f64, SystemError> {
    Ok(minimize_hamiltonian(sys, t, x, nu, opts)?.s_value)
}

/// Time orientation of the characteristic flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `x' = f`, `nu' = -(df/dx)^T nu`.
    Forward,
    /// `x' = -f`, `nu' = (df/dx)^T nu`.
    Reversed,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reversed => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowRhs {
    pub dx: Vec<f64>,
    pub dnu: Vec<f64>,
    /// The control used, after degenerate channels were resolved.
    pub u: Vec<f64>,
    /// Some channel stayed degenerate after resolution.
    pub degenerate: bool,
}

/// Right-hand side of the characteristic flow with the control held at `u`.
pub fn frozen_rhs(
    sys: &ControlSystem,
    t: f64,
    x: &[f64],
    nu: &[f64],
    u: &[f64],
    dir: Direction,
    dx: &mut [f64],
    dnu: &mut [f64],
) -> Result<(), SystemError> {
    let s = dir.sign();
    sys.eval_dynamics_into(t, x, u, dx)?;
    sys.jacobian_transpose_times(t, x, u, nu, dnu)?;
    dx.iter_mut().for_each(|v| *v *= s);
    dnu.iter_mut().for_each(|v| *v *= -s);
    Ok(())
}

/// Rate of change of each switching function along the flow with control `u`.
pub fn switching_rates(
    sys: &ControlSystem,
    t: f64,
    x: &[f64],
    nu: &[f64],
    u: &[f64],
    dir: Direction,
) -> Result<Vec<f64>, SystemError> {
    let n = sys.n();
    let mut dx = vec![0.0; n];
    let mut dnu = vec![0.0; n];
    frozen_rhs(sys, t, x, nu, u, dir, &mut dx, &mut dnu)?;
    (0..sys.m())
        .map(|j| {
            let b = sys.column(j, t, x)?;
            let db = sys.column_jacobian(j, t, x)?;
            Ok(dot(&dnu, &b) + dot(nu, &db.apply(&dx)))
        })
        .collect()
}

/// Minimizer with degenerate box channels settled by the side the flow is
/// about to enter: if `sigma_j` is zero but moving, the control is the one
/// valid once it has left zero.
pub fn resolve_control(
    sys: &ControlSystem,
    t: f64,
    x: &[f64],
    nu: &[f64],
    dir: Direction,
    opts: &HamiltonianOptions,
) -> Result<MinimizerResult, SystemError> {
    let mut res = minimize_hamiltonian(sys, t, x, nu, opts)?;
    let (Dynamics::Affine { .. }, ControlSet::Box { lo, hi }) = (sys.dynamics(), sys.omega()) else {
        return Ok(res);
    };
    if !res.degenerate {
        return Ok(res);
    }
    let sigma = switching_functions(sys, t, x, nu)?;
    let rates = switching_rates(sys, t, x, nu, &res.u, dir)?;
    let mut still = false;
    for j in 0..sys.m() {
        if sigma[j].abs() > opts.switch_tol {
            continue;
        }
        if rates[j] > opts.switch_tol {
            res.u[j] = lo[j];
        } else if rates[j] < -opts.switch_tol {
            res.u[j] = hi[j];
        } else {
            still = true;
        }
    }
    res.degenerate = still;
    res.s_value = dot(nu, &sys.eval_dynamics(t, x, &res.u)?);
    Ok(res)
}

fn flow_rhs(
    sys: &ControlSystem,
    t: f64,
    x: &[f64],
    nu: &[f64],
    dir: Direction,
    opts: &HamiltonianOptions,
) -> Result<FlowRhs, SystemError> {
    let res = resolve_control(sys, t, x, nu, dir, opts)?;
    let n = sys.n();
    let mut dx = vec![0.0; n];
    let mut dnu = vec![0.0; n];
    frozen_rhs(sys, t, x, nu, &res.u, dir, &mut dx, &mut dnu)?;
    Ok(FlowRhs { dx, dnu, u: res.u, degenerate: res.degenerate })
}

/// Reversed characteristic flow of a time-invariant system.
pub fn reversed_rhs(sys: &ControlSystem, x: &[f64], nu: &[f64], opts: &HamiltonianOptions) -> Result<FlowRhs, SystemError> {
    if !sys.is_autonomous() {
        return Err(SystemError::NonAutonomous);
    }
    flow_rhs(sys, 0.0, x, nu, Direction::Reversed, opts)
}

/// Forward characteristic flow.
pub fn forward_rhs(
    sys: &ControlSystem,
    t: f64,
    x: &[f64],
    nu: &[f64],
    opts: &HamiltonianOptions,
) -> Result<FlowRhs, SystemError> {
    flow_rhs(sys, t, x, nu, Direction::Forward, opts)
}
