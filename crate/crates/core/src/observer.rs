//! Output feedback for planar systems `x1' = x2, x2' = f(x1, x2) + u` when
//! only `x1` is measured: a high-gain estimator supplies `z2` and the
//! synthesized law is applied at `(x1, z2)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::simulate::{simulate, PiecewiseSmooth, SimError, SimOptions, Trajectory};
use crate::synthesis::{BoundaryKind, FeedbackLaw, Region, SynthesisError};
use crate::systems::{norm, ControlSystem, SystemError};

#[derive(Clone, Debug, PartialEq)]
pub enum ObserverError {
    System(SystemError),
    Synthesis(SynthesisError),
    Simulation(SimError),
    /// The system is not of the form `x1' = x2, x2' = f + u`.
    NotManipulator(&'static str),
    InvalidLipschitz(f64),
    InvalidGains,
    InvalidInitialState,
}

impl fmt::Display for ObserverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObserverError::System(e) => write!(f, "{e}"),
            ObserverError::Synthesis(e) => write!(f, "{e}"),
            ObserverError::Simulation(e) => write!(f, "{e}"),
            ObserverError::NotManipulator(why) => write!(f, "system is not in manipulator form: {why}"),
            ObserverError::InvalidLipschitz(l) => write!(f, "Lipschitz constant must be finite and non-negative, got {l}"),
            ObserverError::InvalidGains => f.write_str("observer gains must be positive and finite"),
            ObserverError::InvalidInitialState => f.write_str("initial plant and estimator states must be finite 2-vectors"),
        }
    }
}

impl core::error::Error for ObserverError {}

impl From<SystemError> for ObserverError {
    fn from(e: SystemError) -> Self {
        ObserverError::System(e)
    }
}

impl From<SynthesisError> for ObserverError {
    fn from(e: SynthesisError) -> Self {
        ObserverError::Synthesis(e)
    }
}

impl From<SimError> for ObserverError {
    fn from(e: SimError) -> Self {
        ObserverError::Simulation(e)
    }
}

/// Estimator gains together with the constants they were chosen for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserverGains {
    pub beta1: f64,
    pub beta2: f64,
    /// Weight used to split the cross term `2 |e1 e2|`.
    pub delta: f64,
    /// Lipschitz constant of `f` in `x2`.
    pub lipschitz: f64,
}

impl ObserverGains {
    pub fn new(beta1: f64, beta2: f64, delta: f64, lipschitz: f64) -> Result<Self, ObserverError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(pos(beta1) && pos(beta2) && pos(delta)) {
            return Err(ObserverError::InvalidGains);
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(ObserverError::InvalidLipschitz(lipschitz));
        }
        Ok(ObserverGains { beta1, beta2, delta, lipschitz })
    }

    fn cross(&self) -> f64 {
        2.0 / self.beta1 + self.beta1 / self.beta2
    }

    /// Coefficient of `e1^2` in the decrease estimate; must be negative.
    pub fn e1_coefficient(&self) -> f64 {
        -2.0 * self.beta2 + self.lipschitz / (self.delta * self.delta)
    }

    /// `-2 + delta^2 L + (2/beta1 + beta1/beta2) L`; must be negative.
    pub fn e2_condition(&self) -> f64 {
        -2.0 + self.delta * self.delta * self.lipschitz + self.cross() * self.lipschitz
    }

    /// Coefficient of `e2^2` in the decrease estimate. Differentiating the
    /// quadratic form gives twice the cross term that `e2_condition` uses.
    pub fn e2_coefficient(&self) -> f64 {
        -2.0 + self.delta * self.delta * self.lipschitz + 2.0 * self.cross() * self.lipschitz
    }

    /// All three quantities are at most `-margin`.
    pub fn feasible(&self, margin: f64) -> bool {
        self.e1_coefficient() <= -margin && self.e2_condition() <= -margin && self.e2_coefficient() <= -margin
    }
}

/// Deterministic gain schedule for a Lipschitz constant `l`.
pub fn select_gains(l: f64) -> Result<ObserverGains, ObserverError> {
    const MARGIN: f64 = 0.1;
    if !(l >= 0.0 && l.is_finite()) {
        return Err(ObserverError::InvalidLipschitz(l));
    }
    let delta = libm::sqrt(0.25f64.min(0.9 / l.max(1.0)));
    // beta1 must exceed 4L for the 4L/beta1 part of the e2 coefficient to fit
    let beta1 = 4.0f64.max(8.0 * l - 4.0);
    let mut beta2 = 1.0;
    loop {
        let g = ObserverGains { beta1, beta2, delta, lipschitz: l };
        if g.feasible(MARGIN) {
            return Ok(g);
        }
        beta2 *= 2.0;
        if !beta2.is_finite() {
            return Err(ObserverError::InvalidGains);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorState {
    pub e1: f64,
    pub e2: f64,
}

impl ErrorState {
    pub fn new(x: &[f64], z: &[f64]) -> Self {
        ErrorState { e1: z[0] - x[0], e2: z[1] - x[1] }
    }

    pub fn norm(&self) -> f64 {
        libm::hypot(self.e1, self.e2)
    }
}

/// `2 (beta2/beta1) e1^2 - 2 e1 e2 + (2/beta1 + beta1/beta2) e2^2`.
pub fn error_lyapunov(g: &ObserverGains, e: ErrorState) -> f64 {
    2.0 * g.beta2 / g.beta1 * e.e1 * e.e1 - 2.0 * e.e1 * e.e2 + g.cross() * e.e2 * e.e2
}

/// Upper bound on the derivative of [`error_lyapunov`] along the error
/// dynamics when `f` is `L`-Lipschitz in `x2`.
pub fn error_rate_bound(g: &ObserverGains, e: ErrorState) -> f64 {
    g.e1_coefficient() * e.e1 * e.e1 + g.e2_coefficient() * e.e2 * e.e2
}

/// Exact derivative of [`error_lyapunov`] given the nonlinearity mismatch
/// `df = f(x1, z2) - f(x1, x2)`.
pub fn error_rate(g: &ObserverGains, e: ErrorState, df: f64) -> f64 {
    let d1 = e.e2 - g.beta1 * e.e1;
    let d2 = df - g.beta2 * e.e1;
    4.0 * g.beta2 / g.beta1 * e.e1 * d1 - 2.0 * (d1 * e.e2 + e.e1 * d2) + 2.0 * g.cross() * e.e2 * d2
}

/// A planar system in the form `x1' = x2, x2' = f(x1, x2) + u`.
#[derive(Clone, Debug)]
pub struct Manipulator {
    sys: ControlSystem,
}

impl Manipulator {
    pub fn new(sys: ControlSystem) -> Result<Self, ObserverError> {
        if sys.n() != 2 || sys.m() != 1 {
            return Err(ObserverError::NotManipulator("needs two states and one input"));
        }
        if !sys.is_affine() {
            return Err(ObserverError::NotManipulator("needs a control-affine system"));
        }
        // structural check at a spread of points
        for x in [[0.3, -1.7], [-2.1, 0.4], [1.3, 2.9], [0.0, 0.0]] {
            if sys.drift(0.0, &x)?[0] != x[1] {
                return Err(ObserverError::NotManipulator("first equation must be x1' = x2"));
            }
            if sys.column(0, 0.0, &x)? != [0.0, 1.0] {
                return Err(ObserverError::NotManipulator("input must enter as (0, 1)"));
            }
        }
        Ok(Manipulator { sys })
    }

    pub fn system(&self) -> &ControlSystem {
        &self.sys
    }

    /// `f(x1, x2)`.
    pub fn nonlinearity(&self, x1: f64, x2: f64) -> Result<f64, ObserverError> {
        Ok(self.sys.drift(0.0, &[x1, x2])?[1])
    }

    /// Estimator right-hand side from the measurement `x1` and the applied
    /// control `u`.
    pub fn estimator_rhs(&self, g: &ObserverGains, z: &[f64], x1: f64, u: f64) -> Result<[f64; 2], ObserverError> {
        let r = z[0] - x1;
        Ok([z[1] - g.beta1 * r, self.nonlinearity(x1, z[1])? + u - g.beta2 * r])
    }
}

/// Plant and estimator as one piecewise-smooth system in
/// `(x1, x2, z1, z2)`, with the law applied at `(x1, z2)`.
pub struct OutputFeedback<'a> {
    plant: &'a Manipulator,
    law: &'a FeedbackLaw,
    gains: ObserverGains,
}

impl<'a> OutputFeedback<'a> {
    pub fn new(plant: &'a Manipulator, law: &'a FeedbackLaw, gains: ObserverGains) -> Self {
        OutputFeedback { plant, law, gains }
    }
}

fn law_point(y: &[f64]) -> [f64; 2] {
    [y[0], y[3]]
}

impl PiecewiseSmooth for OutputFeedback<'_> {
    type Region = Region;

    fn dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn region(&self, _t: f64, y: &[f64]) -> Result<Region, SimError> {
        Ok(self.law.region(&law_point(y))?)
    }

    fn control(&self, r: &Region, _t: f64, y: &[f64]) -> Result<Vec<f64>, SimError> {
        Ok(self.law.control_in(r, &law_point(y))?)
    }

    fn field_with(&self, u: &[f64], _t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), SimError> {
        let f = |a: f64, b: f64| self.plant.nonlinearity(a, b).map_err(|e| match e {
            ObserverError::System(e) => SimError::System(e),
            other => SimError::Other(alloc::format!("{other}")),
        });
        dy[0] = y[1];
        dy[1] = f(y[0], y[1])? + u[0];
        let r = y[2] - y[0];
        dy[2] = y[3] - self.gains.beta1 * r;
        dy[3] = f(y[0], y[3])? + u[0] - self.gains.beta2 * r;
        Ok(())
    }

    fn normal(&self, from: &Region, to: &Region, _t: f64, y: &[f64]) -> Result<Option<Vec<f64>>, SimError> {
        Ok(self.law.boundary_normal(from, to, &law_point(y))?.map(|n| vec![n[0], 0.0, 0.0, n[1]]))
    }

    fn continuous(&self, from: &Region, to: &Region) -> bool {
        self.law.boundary_kind(from, to) == BoundaryKind::Continuous
    }

    fn monitored_norm(&self, y: &[f64]) -> f64 {
        norm(&y[..2])
    }
}

/// One row of the error log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    pub e: ErrorState,
    pub v_e: f64,
    /// Generating function at the true state; `V` inside the sublevel set
    /// and NaN where the manifold does not cover it.
    pub w: f64,
}

/// A sample where the control at the estimate differs from the control at
/// the true state, both outside the sublevel set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MismatchSample {
    pub t: f64,
    /// `nu_2` of the law's covector at the true state.
    pub nu2: f64,
    /// `u(x1, z2) - u(x1, x2)`.
    pub du: f64,
    pub e2: f64,
}

impl MismatchSample {
    /// `|nu2 du| <= 2 k M |e2|`, up to a relative rounding tolerance.
    pub fn within_bound(&self, slope: f64, amplitude: f64) -> bool {
        let lhs = (self.nu2 * self.du).abs();
        let rhs = 2.0 * amplitude * slope * self.e2.abs();
        lhs <= rhs * (1.0 + 1e-9) + 1e-12
    }
}

#[derive(Clone, Debug)]
pub struct OutputFeedbackRun {
    /// States `(x1, x2, z1, z2)` and the applied control.
    pub trajectory: Trajectory,
    pub errors: Vec<ErrorSample>,
    pub mismatches: Vec<MismatchSample>,
}

impl OutputFeedbackRun {
    pub fn plant(&self) -> Trajectory {
        self.trajectory.select(&[0, 1])
    }

    pub fn estimator(&self) -> Trajectory {
        self.trajectory.select(&[2, 3])
    }

    /// First time after which `|e|` stays at or below `tol`.
    pub fn error_settles(&self, tol: f64) -> Option<f64> {
        let last_bad = self.errors.iter().rposition(|s| s.e.norm() > tol);
        match last_bad {
            None => self.errors.first().map(|s| s.t),
            Some(i) => self.errors.get(i + 1).map(|s| s.t),
        }
    }
}

/// Co-integrates plant and estimator under `u(x1, z2)` and logs the error.
pub fn simulate_output_feedback(
    plant: &Manipulator,
    law: &FeedbackLaw,
    gains: ObserverGains,
    x0: [f64; 2],
    z0: [f64; 2],
    opts: &SimOptions,
) -> Result<OutputFeedbackRun, ObserverError> {
    if x0.iter().chain(&z0).any(|v| !v.is_finite()) {
        return Err(ObserverError::InvalidInitialState);
    }
    let closed = OutputFeedback::new(plant, law, gains);
    let trajectory = simulate(&closed, &[x0[0], x0[1], z0[0], z0[1]], opts)?;
    let mut errors = Vec::with_capacity(trajectory.len());
    let mut mismatches = Vec::new();
    for i in 0..trajectory.len() {
        let y = trajectory.state(i);
        let t = trajectory.t(i);
        let e = ErrorState::new(&y[..2], &y[2..]);
        let x = [y[0], y[1]];
        let w = if law.is_inner(&x)? {
            law.lyapunov().value(&x)?
        } else {
            law.outer_covector(&x).map_or(f64::NAN, |q| q.w)
        };
        errors.push(ErrorSample { t, e, v_e: error_lyapunov(&gains, e), w });

        let z = law_point(y);
        if law.is_inner(&x)? || law.is_inner(&z)? {
            continue;
        }
        let (Ok(q), Ok(ux), Ok(uz)) = (law.outer_covector(&x), law.eval(&x), law.eval(&z)) else { continue };
        let du = uz[0] - ux[0];
        if du != 0.0 {
            mismatches.push(MismatchSample { t, nu2: q.nu[1], du, e2: e.e2 });
        }
    }
    Ok(OutputFeedbackRun { trajectory, errors, mismatches })
}

/// Lipschitz constant in `x2` of the interpolated `nu_2` over the covered
/// region.
pub fn covector_lipschitz(law: &FeedbackLaw) -> Option<f64> {
    law.manifold().covector_slope(1, 1)
}

/// `-max <nu, f(x, u)>` over manifold samples outside the sublevel set.
/// Positive when every ray strictly decreases the generating function.
pub fn hamiltonian_margin(law: &FeedbackLaw) -> Result<f64, ObserverError> {
    let mut worst = f64::NEG_INFINITY;
    for br in law.manifold().branches() {
        for s in br.samples() {
            if !law.is_inner(s.x)? {
                worst = worst.max(s.s);
            }
        }
    }
    Ok(-worst)
}
