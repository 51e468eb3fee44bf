//! Control systems, control sets and Lyapunov data.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::expr::{EvalError, Expr, Var};

/// Absolute tolerance on `det(b, ad_f b)` used by [`ControlSystem::rank_condition`].
pub const RANK_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum SystemError {
    Eval(EvalError),
    Dimension { expected: usize, found: usize, what: &'static str },
    NotAffine,
    NotSingleInput,
    NotPlanar,
    NonAutonomous,
    EmptyControlSet,
    InvalidBounds { channel: usize, lo: f64, hi: f64 },
    EquilibriumNotAtOrigin { residual: f64 },
    LyapunovNotZeroAtOrigin { value: f64 },
    LyapunovNotPositive { at: Vec<f64>, value: f64 },
    InvalidEpsilon(f64),
}

impl fmt::Display for SystemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemError::Eval(e) => write!(f, "evaluation failed: {e}"),
            SystemError::Dimension { expected, found, what } => {
                write!(f, "{what}: expected dimension {expected}, found {found}")
            }
            SystemError::NotAffine => write!(f, "operation needs a control-affine system"),
            SystemError::NotSingleInput => write!(f, "operation needs a single-input system"),
            SystemError::NotPlanar => write!(f, "operation needs a planar (n = 2) system"),
            SystemError::NonAutonomous => write!(f, "operation needs a time-invariant system"),
            SystemError::EmptyControlSet => write!(f, "control set is empty"),
            SystemError::InvalidBounds { channel, lo, hi } => {
                write!(f, "control channel {channel}: lower bound {lo} is not below upper bound {hi}")
            }
            SystemError::EquilibriumNotAtOrigin { residual } => {
                write!(f, "f(0, 0) is not zero (norm {residual})")
            }
            SystemError::LyapunovNotZeroAtOrigin { value } => write!(f, "V(0) = {value}, expected 0"),
            SystemError::LyapunovNotPositive { at, value } => {
                write!(f, "V is not positive at {at:?} (value {value})")
            }
            SystemError::InvalidEpsilon(e) => write!(f, "level {e} must be positive and finite"),
        }
    }
}

impl core::error::Error for SystemError {}

impl From<EvalError> for SystemError {
    fn from(e: EvalError) -> Self {
        SystemError::Eval(e)
    }
}

fn check_len(expected: usize, found: usize, what: &'static str) -> Result<(), SystemError> {
    if expected == found {
        Ok(())
    } else {
        Err(SystemError::Dimension { expected, found, what })
    }
}

/// Admissible control values.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlSet {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Finite(Vec<Vec<f64>>),
}

impl ControlSet {
    /// `[-1, 1]^m`.
    pub fn unit_box(m: usize) -> Self {
        ControlSet::Box { lo: vec![-1.0; m], hi: vec![1.0; m] }
    }

    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, SystemError> {
        check_len(lo.len(), hi.len(), "control box bounds")?;
        for (channel, (&l, &h)) in lo.iter().zip(&hi).enumerate() {
            if !(l < h) || !l.is_finite() || !h.is_finite() {
                return Err(SystemError::InvalidBounds { channel, lo: l, hi: h });
            }
        }
        Ok(ControlSet::Box { lo, hi })
    }

    pub fn finite(values: Vec<Vec<f64>>) -> Result<Self, SystemError> {
        let first = values.first().ok_or(SystemError::EmptyControlSet)?;
        let m = first.len();
        for v in &values {
            check_len(m, v.len(), "finite control value")?;
        }
        Ok(ControlSet::Finite(values))
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Box { lo, .. } => lo.len(),
            ControlSet::Finite(v) => v[0].len(),
        }
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            ControlSet::Box { lo, hi } => {
                u.len() == lo.len()
                    && u.iter().zip(lo.iter().zip(hi)).all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol)
            }
            ControlSet::Finite(vals) => vals
                .iter()
                .any(|c| c.len() == u.len() && c.iter().zip(u).all(|(a, b)| (a - b).abs() <= tol)),
        }
    }

    /// Largest absolute component of any admissible control.
    pub fn max_abs(&self) -> f64 {
        match self {
            ControlSet::Box { lo, hi } => lo.iter().chain(hi).fold(0.0, |a, v| a.max(v.abs())),
            ControlSet::Finite(vals) => vals.iter().flatten().fold(0.0, |a, v| a.max(v.abs())),
        }
    }
}

/// Right-hand side description.
#[derive(Clone, Debug, PartialEq)]
pub enum Dynamics {
    /// `f(x) + sum_j u_j b_j(x)`; `columns[j][i]` is component `i` of `b_j`.
    Affine { drift: Vec<Expr>, columns: Vec<Vec<Expr>> },
    General { f: Vec<Expr> },
}

#[derive(Clone, Debug, PartialEq)]
enum Jacobians {
    Affine { drift: Vec<Vec<Expr>>, columns: Vec<Vec<Vec<Expr>>> },
    General { f: Vec<Vec<Expr>> },
}

fn jacobian_exprs(fs: &[Expr], n: usize) -> (Vec<Vec<Expr>>, bool) {
    let mut kink = false;
    let rows = fs
        .iter()
        .map(|fi| {
            (0..n)
                .map(|j| {
                    let d = fi.diff(Var::State(j));
                    kink |= d.through_kink;
                    d.expr
                })
                .collect()
        })
        .collect();
    (rows, kink)
}

/// Dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian {
    pub n: usize,
    pub entries: Vec<f64>,
    /// Some `abs`/`sign` argument vanishes (to 1e-12) at the evaluation point.
    pub at_kink: bool,
}

impl Jacobian {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// `self * v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlSystem {
    n: usize,
    m: usize,
    dynamics: Dynamics,
    omega: ControlSet,
    autonomous: bool,
    jac: Jacobians,
}

impl ControlSystem {
    /// Control-affine system. With `equilibrium_at_origin` the drift must vanish at 0.
    pub fn affine(
        drift: Vec<Expr>,
        columns: Vec<Vec<Expr>>,
        omega: ControlSet,
        equilibrium_at_origin: bool,
    ) -> Result<Self, SystemError> {
        let n = drift.len();
        let m = columns.len();
        check_len(m, omega.dim(), "control set")?;
        for c in &columns {
            check_len(n, c.len(), "input column")?;
        }
        let autonomous = !drift.iter().chain(columns.iter().flatten()).any(|e| e.depends_on(Var::Time));
        let (jd, _) = jacobian_exprs(&drift, n);
        let jc = columns.iter().map(|c| jacobian_exprs(c, n).0).collect();
        let sys = ControlSystem {
            n,
            m,
            dynamics: Dynamics::Affine { drift, columns },
            omega,
            autonomous,
            jac: Jacobians::Affine { drift: jd, columns: jc },
        };
        if equilibrium_at_origin {
            sys.check_origin()?;
        }
        Ok(sys)
    }

    /// General system `f(t, x, u)` with `m` inputs.
    pub fn general(f: Vec<Expr>, m: usize, omega: ControlSet, equilibrium_at_origin: bool) -> Result<Self, SystemError> {
        let n = f.len();
        check_len(m, omega.dim(), "control set")?;
        let autonomous = !f.iter().any(|e| e.depends_on(Var::Time));
        let (jf, _) = jacobian_exprs(&f, n);
        let sys = ControlSystem {
            n,
            m,
            dynamics: Dynamics::General { f },
            omega,
            autonomous,
            jac: Jacobians::General { f: jf },
        };
        if equilibrium_at_origin {
            sys.check_origin()?;
        }
        Ok(sys)
    }

    fn check_origin(&self) -> Result<(), SystemError> {
        let f0 = self.eval_dynamics(0.0, &vec![0.0; self.n], &vec![0.0; self.m])?;
        let residual = f0.iter().map(|v| v * v).sum::<f64>();
        let residual = libm::sqrt(residual);
        if residual > 1e-12 {
            return Err(SystemError::EquilibriumNotAtOrigin { residual });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn omega(&self) -> &ControlSet {
        &self.omega
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    pub fn is_affine(&self) -> bool {
        matches!(self.dynamics, Dynamics::Affine { .. })
    }

    fn check_dims(&self, x: &[f64], u: &[f64]) -> Result<(), SystemError> {
        check_len(self.n, x.len(), "state")?;
        check_len(self.m, u.len(), "control")
    }

    /// `f(t, x, u)`.
    pub fn eval_dynamics(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>, SystemError> {
        let mut out = vec![0.0; self.n];
        self.eval_dynamics_into(t, x, u, &mut out)?;
        Ok(out)
    }

    pub fn eval_dynamics_into(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<(), SystemError> {
        self.check_dims(x, u)?;
        match &self.dynamics {
            Dynamics::Affine { drift, columns } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut v = drift[i].eval(x, u, t)?;
                    for (j, c) in columns.iter().enumerate() {
                        if u[j] != 0.0 {
                            v += u[j] * c[i].eval(x, u, t)?;
                        }
                    }
                    *o = v;
                }
            }
            Dynamics::General { f } => {
                for (o, fi) in out.iter_mut().zip(f) {
                    *o = fi.eval(x, u, t)?;
                }
            }
        }
        Ok(())
    }

    /// Drift `f(x)` of an affine system.
    pub fn drift(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, SystemError> {
        match &self.dynamics {
            Dynamics::Affine { drift, .. } => {
                drift.iter().map(|e| e.eval(x, &[], t).map_err(SystemError::from)).collect()
            }
            Dynamics::General { .. } => Err(SystemError::NotAffine),
        }
    }

    /// Input column `b_j(x)` of an affine system.
    pub fn column(&self, j: usize, t: f64, x: &[f64]) -> Result<Vec<f64>, SystemError> {
        match &self.dynamics {
            Dynamics::Affine { columns, .. } => {
                let c = columns.get(j).ok_or(SystemError::Dimension {
                    expected: self.m,
                    found: j + 1,
                    what: "input column index",
                })?;
                c.iter().map(|e| e.eval(x, &[], t).map_err(SystemError::from)).collect()
            }
            Dynamics::General { .. } => Err(SystemError::NotAffine),
        }
    }

    fn kink_at(&self, t: f64, x: &[f64], u: &[f64]) -> bool {
        let near = |e: &Expr| e.near_kink(x, u, t, 1e-12);
        match &self.dynamics {
            Dynamics::Affine { drift, columns } => drift.iter().chain(columns.iter().flatten()).any(near),
            Dynamics::General { f } => f.iter().any(near),
        }
    }

    /// `df/dx (t, x, u)`.
    pub fn jacobian_x(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Jacobian, SystemError> {
        self.check_dims(x, u)?;
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        match &self.jac {
            Jacobians::Affine { drift, columns } => {
                for i in 0..n {
                    for j in 0..n {
                        let mut v = drift[i][j].eval(x, u, t)?;
                        for (k, c) in columns.iter().enumerate() {
                            if u[k] != 0.0 && !c[i][j].is_zero() {
                                v += u[k] * c[i][j].eval(x, u, t)?;
                            }
                        }
                        entries[i * n + j] = v;
                    }
                }
            }
            Jacobians::General { f } => {
                for i in 0..n {
                    for j in 0..n {
                        entries[i * n + j] = f[i][j].eval(x, u, t)?;
                    }
                }
            }
        }
        Ok(Jacobian { n, entries, at_kink: self.kink_at(t, x, u) })
    }

    /// `(df/dx)^T nu` without forming the matrix.
    pub fn jacobian_transpose_times(
        &self,
        t: f64,
        x: &[f64],
        u: &[f64],
        nu: &[f64],
        out: &mut [f64],
    ) -> Result<(), SystemError> {
        let n = self.n;
        out.iter_mut().for_each(|o| *o = 0.0);
        match &self.jac {
            Jacobians::Affine { drift, columns } => {
                for i in 0..n {
                    if nu[i] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        let mut v = 0.0;
                        if !drift[i][j].is_zero() {
                            v += drift[i][j].eval(x, u, t)?;
                        }
                        for (k, c) in columns.iter().enumerate() {
                            if u[k] != 0.0 && !c[i][j].is_zero() {
                                v += u[k] * c[i][j].eval(x, u, t)?;
                            }
                        }
                        out[j] += v * nu[i];
                    }
                }
            }
            Jacobians::General { f } => {
                for i in 0..n {
                    if nu[i] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        if !f[i][j].is_zero() {
                            out[j] += f[i][j].eval(x, u, t)? * nu[i];
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Jacobian of input column `j`.
    pub fn column_jacobian(&self, j: usize, t: f64, x: &[f64]) -> Result<Jacobian, SystemError> {
        let Jacobians::Affine { columns, .. } = &self.jac else {
            return Err(SystemError::NotAffine);
        };
        let n = self.n;
        let c = &columns[j];
        let mut entries = vec![0.0; n * n];
        for r in 0..n {
            for s in 0..n {
                entries[r * n + s] = c[r][s].eval(x, &[], t)?;
            }
        }
        Ok(Jacobian { n, entries, at_kink: false })
    }

    /// `[g, b_j](x) = (db_j/dx) g - (dg/dx) b_j` where `g = f + sum_{k != j} u_k b_k`.
    ///
    /// With a single input this is `ad_f b`.
    pub fn bracket_with_column(&self, j: usize, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>, SystemError> {
        if !self.is_affine() {
            return Err(SystemError::NotAffine);
        }
        self.check_dims(x, u)?;
        let mut others = u.to_vec();
        others[j] = 0.0;
        let g = self.eval_dynamics(t, x, &others)?;
        let dg = self.jacobian_x(t, x, &others)?;
        let b = self.column(j, t, x)?;
        let db = self.column_jacobian(j, t, x)?;
        let lhs = db.apply(&g);
        let rhs = dg.apply(&b);
        Ok(lhs.iter().zip(&rhs).map(|(a, c)| a - c).collect())
    }

    /// `ad_f b (x) = (db/dx) f(x) - (df/dx) b(x)` for a single-input affine system.
    pub fn lie_bracket_adfb(&self, x: &[f64]) -> Result<Vec<f64>, SystemError> {
        if !self.is_affine() {
            return Err(SystemError::NotAffine);
        }
        if self.m != 1 {
            return Err(SystemError::NotSingleInput);
        }
        self.bracket_with_column(0, 0.0, x, &[0.0])
    }

    fn planar_single_input(&self) -> Result<(), SystemError> {
        if !self.is_affine() {
            return Err(SystemError::NotAffine);
        }
        if self.n != 2 {
            return Err(SystemError::NotPlanar);
        }
        if self.m != 1 {
            return Err(SystemError::NotSingleInput);
        }
        Ok(())
    }

    /// `det[f(x), b(x)]`; zero exactly on the equilibrium set.
    pub fn equilibrium_residual(&self, x: &[f64]) -> Result<f64, SystemError> {
        self.planar_single_input()?;
        check_len(2, x.len(), "state")?;
        let f = self.drift(0.0, x)?;
        let b = self.column(0, 0.0, x)?;
        Ok(det2(&f, &b))
    }

    /// `|det[b(x), ad_f b(x)]| > tol`.
    pub fn rank_condition_with_tol(&self, x: &[f64], tol: f64) -> Result<bool, SystemError> {
        self.planar_single_input()?;
        check_len(2, x.len(), "state")?;
        let b = self.column(0, 0.0, x)?;
        let ad = self.lie_bracket_adfb(x)?;
        Ok(det2(&b, &ad).abs() > tol)
    }

    pub fn rank_condition(&self, x: &[f64]) -> Result<bool, SystemError> {
        self.rank_condition_with_tol(x, RANK_TOL)
    }

    /// Sampled estimate of the linear growth constant of `f` on `[-r, r]^n x omega`:
    /// the largest ratio `|f(x, u)| / (1 + |x| + |u|)` seen on a lattice.
    pub fn growth_bound_estimate(&self, half_width: f64, per_axis: usize) -> Result<f64, SystemError> {
        let controls: Vec<Vec<f64>> = match &self.omega {
            ControlSet::Box { lo, hi } => {
                // corners and centre
                let mut out = vec![lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect::<Vec<_>>()];
                for mask in 0..(1usize << self.m.min(10)) {
                    out.push((0..self.m).map(|j| if mask >> j & 1 == 1 { hi[j] } else { lo[j] }).collect());
                }
                out
            }
            ControlSet::Finite(v) => v.clone(),
        };
        let mut worst: f64 = 0.0;
        for x in lattice(self.n, half_width, per_axis) {
            let nx = norm(&x);
            for u in &controls {
                let fx = self.eval_dynamics(0.0, &x, u)?;
                worst = worst.max(norm(&fx) / (1.0 + nx + norm(u)));
            }
        }
        Ok(worst)
    }
}

pub(crate) fn det2(a: &[f64], b: &[f64]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|a| a * a).sum())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Points of the uniform lattice with `per_axis` nodes on `[-r, r]^n`.
pub(crate) fn lattice(n: usize, r: f64, per_axis: usize) -> impl Iterator<Item = Vec<f64>> {
    let per_axis = per_axis.max(2);
    let total = per_axis.checked_pow(n as u32).unwrap_or(usize::MAX);
    (0..total).map(move |mut idx| {
        (0..n)
            .map(|_| {
                let k = idx % per_axis;
                idx /= per_axis;
                -r + 2.0 * r * k as f64 / (per_axis - 1) as f64
            })
            .collect()
    })
}

/// Lyapunov-type function with its gradient and the level `epsilon`.
#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovSpec {
    v: Expr,
    grad: Vec<Expr>,
    epsilon: f64,
}

impl LyapunovSpec {
    /// Checks `V(0) = 0` and `V > 0` on a lattice of `[-half_width, half_width]^n` minus the origin.
    pub fn new(v: Expr, n: usize, epsilon: f64, half_width: f64) -> Result<Self, SystemError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(SystemError::InvalidEpsilon(epsilon));
        }
        let grad = (0..n).map(|i| v.diff(Var::State(i)).expr).collect();
        let spec = LyapunovSpec { v, grad, epsilon };
        let zero = vec![0.0; n];
        let v0 = spec.value(&zero)?;
        if v0.abs() > 1e-12 {
            return Err(SystemError::LyapunovNotZeroAtOrigin { value: v0 });
        }
        let per_axis = match n {
            0 | 1 => 201,
            2 => 41,
            3 => 15,
            _ => 5,
        };
        for x in lattice(n, half_width, per_axis) {
            if x.iter().all(|v| *v == 0.0) {
                continue;
            }
            let val = spec.value(&x)?;
            if !(val > 0.0) {
                return Err(SystemError::LyapunovNotPositive { at: x, value: val });
            }
        }
        Ok(spec)
    }

    pub fn expr(&self) -> &Expr {
        &self.v
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, SystemError> {
        Ok(self.v.eval(x, &[], 0.0)?)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, SystemError> {
        self.grad.iter().map(|g| g.eval(x, &[], 0.0).map_err(SystemError::from)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use core::f64::consts::PI;

    fn exprs(src: &[&str], n: usize) -> Vec<Expr> {
        src.iter().map(|s| parse(s, n, 0).unwrap()).collect()
    }

    pub(crate) fn affine(drift: &[&str], b: &[&str]) -> ControlSystem {
        let n = drift.len();
        ControlSystem::affine(exprs(drift, n), vec![exprs(b, n)], ControlSet::unit_box(1), false).unwrap()
    }

    #[test]
    fn dynamics_examples() {
        let di = affine(&["x2", "0"], &["0", "1"]);
        assert_eq!(di.eval_dynamics(0.0, &[1.0, 2.0], &[3.0]).unwrap(), vec![2.0, 3.0]);
        assert_eq!(di.eval_dynamics(0.0, &[0.0, 0.0], &[0.0]).unwrap(), vec![0.0, 0.0]);
        let pend = affine(&["x2", "-sin(x1)"], &["0", "1"]);
        let v = pend.eval_dynamics(0.0, &[PI / 2.0, 0.0], &[0.0]).unwrap();
        assert_eq!(v, vec![0.0, -1.0]);
    }

    #[test]
    fn general_form_matches_affine_form() {
        let f = vec![parse("x2", 2, 1).unwrap(), parse("-sin(x1)+u1", 2, 1).unwrap()];
        let g = ControlSystem::general(f, 1, ControlSet::unit_box(1), true).unwrap();
        let a = affine(&["x2", "-sin(x1)"], &["0", "1"]);
        let (x, u) = ([0.3, -0.7], [0.4]);
        assert_eq!(g.eval_dynamics(0.0, &x, &u).unwrap(), a.eval_dynamics(0.0, &x, &u).unwrap());
        assert_eq!(g.jacobian_x(0.0, &x, &u).unwrap(), a.jacobian_x(0.0, &x, &u).unwrap());
    }

    #[test]
    fn jacobian_examples() {
        let di = affine(&["x2", "0"], &["0", "1"]);
        assert_eq!(di.jacobian_x(0.0, &[3.0, 4.0], &[1.0]).unwrap().entries, vec![0.0, 1.0, 0.0, 0.0]);
        let c = affine(&["0", "0"], &["1", "2"]);
        assert_eq!(c.jacobian_x(0.0, &[3.0, 4.0], &[1.0]).unwrap().entries, vec![0.0; 4]);
        let pend = affine(&["x2", "-sin(x1)"], &["0", "1"]);
        assert_eq!(pend.jacobian_x(0.0, &[0.0, 0.0], &[0.0]).unwrap().entries, vec![0.0, 1.0, -1.0, 0.0]);
        let k = affine(&["x2", "-abs(x1)"], &["0", "1"]);
        assert!(k.jacobian_x(0.0, &[0.0, 1.0], &[0.0]).unwrap().at_kink);
        assert!(!k.jacobian_x(0.0, &[0.5, 1.0], &[0.0]).unwrap().at_kink);
    }

    #[test]
    fn transpose_product_matches_matrix() {
        let s = affine(&["x2*x1", "-sin(x1)+x2^2"], &["x2", "1+x1^2"]);
        let (x, u, nu) = ([0.3, -0.7], [0.4], [1.5, -2.0]);
        let j = s.jacobian_x(0.0, &x, &u).unwrap();
        let mut out = [0.0; 2];
        s.jacobian_transpose_times(0.0, &x, &u, &nu, &mut out).unwrap();
        for c in 0..2 {
            let expect = j.get(0, c) * nu[0] + j.get(1, c) * nu[1];
            assert!((out[c] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn bracket_examples() {
        assert_eq!(affine(&["x2", "0"], &["0", "1"]).lie_bracket_adfb(&[2.0, 3.0]).unwrap(), vec![-1.0, 0.0]);
        assert_eq!(affine(&["1", "2"], &["3", "4"]).lie_bracket_adfb(&[2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let pend = affine(&["x2", "-sin(x1)"], &["0", "1"]);
        assert_eq!(pend.lie_bracket_adfb(&[0.7, -0.2]).unwrap(), vec![-1.0, 0.0]);
        let f = vec![parse("x2", 2, 1).unwrap(), parse("u1", 2, 1).unwrap()];
        let g = ControlSystem::general(f, 1, ControlSet::unit_box(1), true).unwrap();
        assert_eq!(g.lie_bracket_adfb(&[0.0, 0.0]), Err(SystemError::NotAffine));
    }

    #[test]
    fn equilibrium_set_and_rank() {
        let di = affine(&["x2", "0"], &["0", "1"]);
        assert_eq!(di.equilibrium_residual(&[5.0, 0.0]).unwrap(), 0.0);
        assert_eq!(di.equilibrium_residual(&[5.0, 2.0]).unwrap(), 2.0);
        let par = affine(&["x2", "x2"], &["1", "1"]);
        assert_eq!(par.equilibrium_residual(&[0.3, 0.9]).unwrap(), 0.0);
        assert!(di.rank_condition(&[-4.0, 7.0]).unwrap());
        assert!(!affine(&["0", "0"], &["0", "1"]).rank_condition(&[1.0, 1.0]).unwrap());
        assert!(affine(&["x2", "-sin(x1)"], &["0", "1"]).rank_condition(&[1.0, 1.0]).unwrap());
        let one_d = affine(&["x1"], &["1"]);
        assert_eq!(one_d.equilibrium_residual(&[1.0]), Err(SystemError::NotPlanar));
    }

    #[test]
    fn control_sets() {
        assert!(ControlSet::new_box(vec![1.0], vec![1.0]).is_err());
        assert!(ControlSet::finite(vec![]).is_err());
        assert!(ControlSet::finite(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        let b = ControlSet::unit_box(2);
        assert!(b.contains(&[1.0, -1.0], 0.0));
        assert!(!b.contains(&[1.1, 0.0], 0.0));
        assert_eq!(ControlSet::finite(vec![vec![-3.0], vec![2.0]]).unwrap().max_abs(), 3.0);
    }

    #[test]
    fn origin_must_be_an_equilibrium_when_declared() {
        let r = ControlSystem::affine(exprs(&["x2+1", "0"], 2), vec![exprs(&["0", "1"], 2)], ControlSet::unit_box(1), true);
        assert!(matches!(r, Err(SystemError::EquilibriumNotAtOrigin { .. })));
    }

    #[test]
    fn lyapunov_checks() {
        let v = parse("0.5*(x1^2+x2^2)", 2, 0).unwrap();
        let l = LyapunovSpec::new(v, 2, 0.5, 10.0).unwrap();
        assert_eq!(l.gradient(&[3.0, -4.0]).unwrap(), vec![3.0, -4.0]);
        assert_eq!(l.value(&[3.0, -4.0]).unwrap(), 12.5);
        let bad = parse("x1^2", 2, 0).unwrap();
        assert!(matches!(LyapunovSpec::new(bad, 2, 0.5, 10.0), Err(SystemError::LyapunovNotPositive { .. })));
        let shifted = parse("x1^2+x2^2+1", 2, 0).unwrap();
        assert!(matches!(LyapunovSpec::new(shifted, 2, 0.5, 10.0), Err(SystemError::LyapunovNotZeroAtOrigin { .. })));
        let v = parse("x1^2", 2, 0).unwrap();
        assert!(matches!(LyapunovSpec::new(v, 2, 0.0, 1.0), Err(SystemError::InvalidEpsilon(_))));
    }

    #[test]
    fn growth_estimate_is_finite_for_linear_systems() {
        let di = affine(&["x2", "0"], &["0", "1"]);
        let q = di.growth_bound_estimate(10.0, 11).unwrap();
        assert!(q > 0.0 && q <= 1.0);
    }
}
