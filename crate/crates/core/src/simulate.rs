//! Closed-loop simulation with discontinuous feedback, in Filippov's sense:
//! region changes are localized, and where both neighbouring fields push
//! into a boundary the motion slides along it with the equivalent control.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::fmt::Debug;

use crate::expr::{Expr, Func, Var};
use crate::ode::{next_step, Dopri5, Tolerance};
use crate::synthesis::{BoundaryKind, FeedbackLaw, Region, SynthesisError};
use crate::systems::{dot, norm, ControlSystem, SystemError};

#[derive(Clone, Debug, PartialEq)]
pub enum SimError {
    System(SystemError),
    Synthesis(SynthesisError),
    StepUnderflow { t: f64 },
    StepLimit { t: f64 },
    /// A boundary needed for sliding has no computable normal.
    NoNormal { t: f64 },
    InvalidInitialState,
    InvalidOption(&'static str),
    Other(String),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::System(e) => write!(f, "{e}"),
            SimError::Synthesis(e) => write!(f, "{e}"),
            SimError::StepUnderflow { t } => write!(f, "step size underflow at t = {t}"),
            SimError::StepLimit { t } => write!(f, "step limit reached at t = {t}"),
            SimError::NoNormal { t } => write!(f, "no boundary normal available for sliding at t = {t}"),
            SimError::InvalidInitialState => write!(f, "initial state must be finite with the system's dimension"),
            SimError::InvalidOption(what) => write!(f, "invalid simulation option: {what}"),
            SimError::Other(s) => f.write_str(s),
        }
    }
}

impl core::error::Error for SimError {}

impl From<SystemError> for SimError {
    fn from(e: SystemError) -> Self {
        SimError::System(e)
    }
}

impl From<SynthesisError> for SimError {
    fn from(e: SynthesisError) -> Self {
        SimError::Synthesis(e)
    }
}

impl From<crate::expr::EvalError> for SimError {
    fn from(e: crate::expr::EvalError) -> Self {
        SimError::System(e.into())
    }
}

/// A vector field that is smooth inside each of finitely many regions.
/// Every region's field must extend smoothly a little past its boundary.
pub trait PiecewiseSmooth {
    type Region: Clone + PartialEq + Debug;

    fn dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn region(&self, t: f64, y: &[f64]) -> Result<Self::Region, SimError>;
    fn control(&self, r: &Self::Region, t: f64, y: &[f64]) -> Result<Vec<f64>, SimError>;
    /// Field of region `r` with control `u`.
    fn field_with(&self, u: &[f64], t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), SimError>;
    /// Normal of the boundary between two regions at `y` (any orientation).
    fn normal(&self, from: &Self::Region, to: &Self::Region, t: f64, y: &[f64]) -> Result<Option<Vec<f64>>, SimError>;
    /// The control is continuous across this boundary.
    fn continuous(&self, from: &Self::Region, to: &Self::Region) -> bool;
    /// Norm used for the convergence and divergence checks.
    fn monitored_norm(&self, y: &[f64]) -> f64 {
        norm(y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    pub t_max: f64,
    pub max_step: f64,
    pub tol: Tolerance,
    pub min_step: f64,
    pub convergence_radius: f64,
    /// Time the state must stay within the convergence radius.
    pub dwell_time: f64,
    pub blowup_radius: f64,
    /// Region changes within one `max_step` that force sliding.
    pub chatter_count: usize,
    /// Time resolution of boundary localization.
    pub event_tol: f64,
    /// Minimum sine of the angle between each field and the surface before
    /// sliding is entered from the normal test alone; shallower approaches
    /// cross and rely on the chattering guard.
    pub sliding_margin: f64,
    pub max_steps: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            t_max: 100.0,
            max_step: 0.05,
            tol: Tolerance { rel: 1e-9, abs: 1e-12 },
            min_step: 1e-13,
            convergence_radius: 1e-2,
            dwell_time: 1.0,
            blowup_radius: 1e6,
            chatter_count: 50,
            event_tol: 1e-12,
            sliding_margin: 0.1,
            max_steps: 5_000_000,
        }
    }
}

impl SimOptions {
    fn validate(&self) -> Result<(), SimError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(SimError::InvalidOption("t_max must be non-negative"));
        }
        if !pos(self.max_step) || !pos(self.min_step) || !pos(self.event_tol) {
            return Err(SimError::InvalidOption("step sizes must be positive"));
        }
        if !pos(self.tol.rel) || !pos(self.tol.abs) {
            return Err(SimError::InvalidOption("tolerances must be positive"));
        }
        if !(self.convergence_radius >= 0.0) || !(self.dwell_time >= 0.0) || !pos(self.blowup_radius) {
            return Err(SimError::InvalidOption("radii must be positive"));
        }
        if !(0.0..1.0).contains(&self.sliding_margin) {
            return Err(SimError::InvalidOption("sliding margin must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimEventKind {
    BoundaryCross,
    ControlSwitch,
    SlidingEnter,
    SlidingExit,
    /// Rapid switching was turned into sliding.
    ChatteringGuard,
}

impl SimEventKind {
    pub fn code(self) -> u8 {
        match self {
            SimEventKind::BoundaryCross => 1,
            SimEventKind::ControlSwitch => 2,
            SimEventKind::SlidingEnter => 3,
            SimEventKind::SlidingExit => 4,
            SimEventKind::ChatteringGuard => 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimEvent {
    pub t: f64,
    pub kind: SimEventKind,
    pub sample: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Converged { t: f64 },
    Horizon,
    Diverged { t: f64 },
    Failed { t: f64, error: SimError },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dim: usize,
    control_dim: usize,
    ts: Vec<f64>,
    ys: Vec<f64>,
    us: Vec<f64>,
    flags: Vec<u8>,
    pub events: Vec<SimEvent>,
    pub outcome: Outcome,
}

impl Trajectory {
    fn new(dim: usize, control_dim: usize) -> Self {
        Trajectory {
            dim,
            control_dim,
            ts: Vec::new(),
            ys: Vec::new(),
            us: Vec::new(),
            flags: Vec::new(),
            events: Vec::new(),
            outcome: Outcome::Horizon,
        }
    }

    fn push(&mut self, t: f64, y: &[f64], u: &[f64], flag: u8) -> usize {
        self.ts.push(t);
        self.ys.extend_from_slice(y);
        self.us.extend_from_slice(u);
        self.flags.push(flag);
        self.ts.len() - 1
    }

    fn event(&mut self, t: f64, y: &[f64], u: &[f64], kind: SimEventKind) {
        // events at the time of the last sample share it
        let sample = if self.ts.last() == Some(&t) {
            let i = self.ts.len() - 1;
            self.flags[i] = kind.code();
            self.us[i * self.control_dim..(i + 1) * self.control_dim].copy_from_slice(u);
            i
        } else {
            self.push(t, y, u, kind.code())
        };
        self.events.push(SimEvent { t, kind, sample });
    }

    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn t(&self, i: usize) -> f64 {
        self.ts[i]
    }

    pub fn times(&self) -> &[f64] {
        &self.ts
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.ys[i * self.dim..(i + 1) * self.dim]
    }

    pub fn control(&self, i: usize) -> &[f64] {
        &self.us[i * self.control_dim..(i + 1) * self.control_dim]
    }

    pub fn flag(&self, i: usize) -> u8 {
        self.flags[i]
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }

    pub fn converged(&self) -> bool {
        matches!(self.outcome, Outcome::Converged { .. })
    }

    /// The same samples and events restricted to some state components.
    pub fn select(&self, components: &[usize]) -> Trajectory {
        let mut ys = Vec::with_capacity(self.len() * components.len());
        for i in 0..self.len() {
            let y = self.state(i);
            ys.extend(components.iter().map(|&c| y[c]));
        }
        Trajectory { dim: components.len(), ys, ..self.clone() }
    }
}

enum Mode<R> {
    Smooth(R),
    Sliding {
        a: R,
        b: R,
        /// Orientation of the boundary normal so that `<n, F_a> > 0`.
        orient: f64,
    },
}

struct Engine<'a, P: PiecewiseSmooth> {
    sys: &'a P,
    opts: &'a SimOptions,
    stepper: Dopri5,
}

/// Sliding data at a point: the equivalent weight and control.
struct SlideState {
    alpha: f64,
    u: Vec<f64>,
    na: f64,
    nb: f64,
}

impl<P: PiecewiseSmooth> Engine<'_, P> {
    fn step_with<F>(&mut self, f: &mut F, t: f64, y: &[f64], h: f64, out: &mut [f64]) -> Result<f64, SimError>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), SimError>,
    {
        self.stepper.step(f, t, y, h, out, self.opts.tol)
    }

    fn smooth_step(&mut self, r: &P::Region, t: f64, y: &[f64], h: f64, out: &mut [f64]) -> Result<f64, SimError> {
        let sys = self.sys;
        let mut f = |t: f64, y: &[f64], dy: &mut [f64]| {
            let u = sys.control(r, t, y)?;
            sys.field_with(&u, t, y, dy)
        };
        self.step_with(&mut f, t, y, h, out)
    }

    fn slide_state(&self, a: &P::Region, b: &P::Region, orient: f64, t: f64, y: &[f64]) -> Result<SlideState, SimError> {
        let n = self.sys.normal(a, b, t, y)?.ok_or(SimError::NoNormal { t })?;
        let d = self.sys.dim();
        let (ua, ub) = (self.sys.control(a, t, y)?, self.sys.control(b, t, y)?);
        let (mut fa, mut fb) = (vec![0.0; d], vec![0.0; d]);
        self.sys.field_with(&ua, t, y, &mut fa)?;
        self.sys.field_with(&ub, t, y, &mut fb)?;
        let (na, nb) = (orient * dot(&n, &fa), orient * dot(&n, &fb));
        let denom = nb - na;
        let alpha = if denom != 0.0 { (nb / denom).clamp(0.0, 1.0) } else { 0.5 };
        let u = ua.iter().zip(&ub).map(|(p, q)| alpha * p + (1.0 - alpha) * q).collect();
        Ok(SlideState { alpha, u, na, nb })
    }

    fn sliding_step(&mut self, a: &P::Region, b: &P::Region, orient: f64, t: f64, y: &[f64], h: f64, out: &mut [f64]) -> Result<f64, SimError> {
        let this: &Self = self;
        let sys = this.sys;
        let mut f = |t: f64, y: &[f64], dy: &mut [f64]| {
            let s = this.slide_state(a, b, orient, t, y)?;
            sys.field_with(&s.u, t, y, dy)
        };
        let mut st = Dopri5::new(y.len());
        let err = st.step(&mut f, t, y, h, out, this.opts.tol)?;
        Ok(err)
    }
}

/// Integrates `sys` from `y0` at `t = 0`. Failures during the run end the
/// trajectory with [`Outcome::Failed`]; only invalid input is an error.
pub fn simulate<P: PiecewiseSmooth>(sys: &P, y0: &[f64], opts: &SimOptions) -> Result<Trajectory, SimError> {
    opts.validate()?;
    if y0.len() != sys.dim() || y0.iter().any(|v| !v.is_finite()) {
        return Err(SimError::InvalidInitialState);
    }
    let mut traj = Trajectory::new(sys.dim(), sys.control_dim());
    let mut eng = Engine { sys, opts, stepper: Dopri5::new(sys.dim()) };
    if let Err((t, error)) = run(&mut eng, &mut traj, y0) {
        traj.outcome = Outcome::Failed { t, error };
    }
    Ok(traj)
}

fn run<P: PiecewiseSmooth>(eng: &mut Engine<'_, P>, traj: &mut Trajectory, y0: &[f64]) -> Result<(), (f64, SimError)> {
    let (sys, opts) = (eng.sys, eng.opts);
    let d = sys.dim();
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut y1 = vec![0.0; d];
    let at = |t: f64| move |e: SimError| (t, e);

    let r0 = sys.region(t, &y).map_err(at(t))?;
    let u0 = sys.control(&r0, t, &y).map_err(at(t))?;
    traj.push(t, &y, &u0, 0);
    let mut mode = Mode::Smooth(r0);
    let mut h = opts.max_step;
    let mut inside_since: Option<f64> = (sys.monitored_norm(&y) <= opts.convergence_radius).then_some(0.0);
    let mut switch_times: VecDeque<f64> = VecDeque::new();
    let mut steps = 0usize;

    while t < opts.t_max {
        steps += 1;
        if steps > opts.max_steps {
            return Err((t, SimError::StepLimit { t }));
        }
        h = h.min(opts.max_step).min(opts.t_max - t);
        let err = match &mode {
            Mode::Smooth(r) => eng.smooth_step(r, t, &y, h, &mut y1),
            Mode::Sliding { a, b, orient } => eng.sliding_step(a, b, *orient, t, &y, h, &mut y1),
        }
        .map_err(at(t))?;
        if err > 1.0 || y1.iter().any(|v| !v.is_finite()) {
            h = next_step(h, err.min(1e6));
            if h < opts.min_step {
                return Err((t, SimError::StepUnderflow { t }));
            }
            continue;
        }

        match &mode {
            Mode::Smooth(r) => {
                let r1 = sys.region(t + h, &y1).map_err(at(t + h))?;
                if r1 == *r {
                    t += h;
                    y.copy_from_slice(&y1);
                    let u = sys.control(r, t, &y).map_err(at(t))?;
                    traj.push(t, &y, &u, 0);
                } else {
                    let r = r.clone();
                    // localize the first region change within the step
                    let (mut lo, mut hi) = (0.0, 1.0);
                    let mut y_hi = y1.clone();
                    let mut r_hi = r1;
                    let mut probe = vec![0.0; d];
                    while (hi - lo) * h > opts.event_tol * (1.0 + t) {
                        let mid = 0.5 * (lo + hi);
                        eng.smooth_step(&r, t, &y, mid * h, &mut probe).map_err(at(t))?;
                        let rm = sys.region(t + mid * h, &probe).map_err(at(t + mid * h))?;
                        if rm == r {
                            lo = mid;
                        } else {
                            hi = mid;
                            y_hi.copy_from_slice(&probe);
                            r_hi = rm;
                        }
                    }
                    t += hi * h;
                    y.copy_from_slice(&y_hi);
                    let ua = sys.control(&r, t, &y).map_err(at(t))?;
                    let ub = sys.control(&r_hi, t, &y).map_err(at(t))?;
                    let continuous = sys.continuous(&r, &r_hi);
                    let kind = if continuous { SimEventKind::BoundaryCross } else { SimEventKind::ControlSwitch };
                    traj.event(t, &y, &ub, kind);
                    mode = Mode::Smooth(r_hi.clone());

                    if !continuous {
                        switch_times.push_back(t);
                        while switch_times.front().is_some_and(|&s| s < t - opts.max_step) {
                            switch_times.pop_front();
                        }
                        let chattering = switch_times.len() >= opts.chatter_count;
                        if let Some(n) = sys.normal(&r, &r_hi, t, &y).map_err(at(t))? {
                            let (mut fa, mut fb) = (vec![0.0; d], vec![0.0; d]);
                            sys.field_with(&ua, t, &y, &mut fa).map_err(at(t))?;
                            sys.field_with(&ub, t, &y, &mut fb).map_err(at(t))?;
                            let mut orient = 1.0;
                            let mut na = dot(&n, &fa);
                            if na < 0.0 {
                                orient = -1.0;
                                na = -na;
                            }
                            let nb = orient * dot(&n, &fb);
                            let eta = opts.sliding_margin * norm(&n);
                            if (na > eta * norm(&fa) && nb < -eta * norm(&fb)) || chattering {
                                if chattering {
                                    traj.event(t, &y, &ub, SimEventKind::ChatteringGuard);
                                    switch_times.clear();
                                }
                                let s = eng.slide_state(&r, &r_hi, orient, t, &y).map_err(at(t))?;
                                traj.event(t, &y, &s.u, SimEventKind::SlidingEnter);
                                mode = Mode::Sliding { a: r, b: r_hi, orient };
                            }
                        } else if chattering {
                            return Err((t, SimError::NoNormal { t }));
                        }
                    }
                    h = (h * (1.0 - hi)).max(opts.min_step * 10.0);
                    check_norm(sys, opts, traj, t, &y, &mut inside_since)?;
                    if matches!(traj.outcome, Outcome::Converged { .. } | Outcome::Diverged { .. }) {
                        return Ok(());
                    }
                    continue;
                }
            }
            Mode::Sliding { a, b, orient } => {
                t += h;
                y.copy_from_slice(&y1);
                let here = sys.region(t, &y).map_err(at(t))?;
                let s = eng.slide_state(a, b, *orient, t, &y).map_err(at(t))?;
                if here != *a && here != *b {
                    // slid off the end of the surface into a third region
                    let u = sys.control(&here, t, &y).map_err(at(t))?;
                    traj.event(t, &y, &u, SimEventKind::SlidingExit);
                    mode = Mode::Smooth(here);
                } else if s.na > 0.0 && s.nb < 0.0 && s.alpha > 0.0 && s.alpha < 1.0 {
                    traj.push(t, &y, &s.u, 0);
                } else {
                    // leave into the side whose field no longer points at the boundary
                    let next = if s.na <= 0.0 { a.clone() } else { b.clone() };
                    let u = sys.control(&next, t, &y).map_err(at(t))?;
                    traj.event(t, &y, &u, SimEventKind::SlidingExit);
                    mode = Mode::Smooth(next);
                }
            }
        }
        check_norm(sys, opts, traj, t, &y, &mut inside_since)?;
        if matches!(traj.outcome, Outcome::Converged { .. } | Outcome::Diverged { .. }) {
            return Ok(());
        }
        h = next_step(h, err);
    }
    traj.outcome = Outcome::Horizon;
    Ok(())
}

fn check_norm<P: PiecewiseSmooth>(
    sys: &P,
    opts: &SimOptions,
    traj: &mut Trajectory,
    t: f64,
    y: &[f64],
    inside_since: &mut Option<f64>,
) -> Result<(), (f64, SimError)> {
    let r = sys.monitored_norm(y);
    if r > opts.blowup_radius {
        traj.outcome = Outcome::Diverged { t };
        return Ok(());
    }
    if r <= opts.convergence_radius {
        let since = *inside_since.get_or_insert(t);
        if t - since >= opts.dwell_time {
            traj.outcome = Outcome::Converged { t: since };
        }
    } else {
        *inside_since = None;
    }
    Ok(())
}

/// A state feedback made of finitely many smooth pieces.
pub trait SwitchedFeedback {
    type Region: Clone + PartialEq + Debug;

    fn region(&self, x: &[f64]) -> Result<Self::Region, SimError>;
    fn control_in(&self, r: &Self::Region, x: &[f64]) -> Result<Vec<f64>, SimError>;
    fn normal(&self, from: &Self::Region, to: &Self::Region, x: &[f64]) -> Result<Option<Vec<f64>>, SimError>;
    fn continuous(&self, from: &Self::Region, to: &Self::Region) -> bool;
}

impl SwitchedFeedback for FeedbackLaw {
    type Region = Region;

    fn region(&self, x: &[f64]) -> Result<Region, SimError> {
        Ok(FeedbackLaw::region(self, x)?)
    }

    fn control_in(&self, r: &Region, x: &[f64]) -> Result<Vec<f64>, SimError> {
        Ok(FeedbackLaw::control_in(self, r, x)?)
    }

    fn normal(&self, from: &Region, to: &Region, x: &[f64]) -> Result<Option<Vec<f64>>, SimError> {
        Ok(self.boundary_normal(from, to, x)?)
    }

    fn continuous(&self, from: &Region, to: &Region) -> bool {
        self.boundary_kind(from, to) == BoundaryKind::Continuous
    }
}

/// Feedback given by expressions in the state, possibly with `abs`/`sign`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprFeedback {
    exprs: Vec<Expr>,
    kinks: Vec<Func>,
    kink_grads: Vec<Vec<Expr>>,
}

impl ExprFeedback {
    pub fn new(exprs: Vec<Expr>, n: usize) -> Self {
        let mut kinks = Vec::new();
        let mut kink_grads = Vec::new();
        for e in &exprs {
            e.kink_kinds(&mut kinks);
            for a in e.kink_arguments() {
                kink_grads.push((0..n).map(|i| a.diff(Var::State(i)).expr).collect());
            }
        }
        ExprFeedback { exprs, kinks, kink_grads }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, SimError> {
        Ok(self.exprs.iter().map(|e| e.eval(x, &[], 0.0)).collect::<Result<_, _>>()?)
    }
}

impl SwitchedFeedback for ExprFeedback {
    type Region = Vec<i8>;

    fn region(&self, x: &[f64]) -> Result<Vec<i8>, SimError> {
        let mut p = Vec::with_capacity(self.kinks.len());
        for e in &self.exprs {
            e.eval_recording(x, &[], 0.0, &mut p)?;
        }
        Ok(p)
    }

    fn control_in(&self, r: &Vec<i8>, x: &[f64]) -> Result<Vec<f64>, SimError> {
        let mut out = Vec::with_capacity(self.exprs.len());
        let mut off = 0;
        for e in &self.exprs {
            let k = e.kink_count();
            out.push(e.eval_with_pattern(x, &[], 0.0, &r[off..off + k])?);
            off += k;
        }
        Ok(out)
    }

    fn normal(&self, from: &Vec<i8>, to: &Vec<i8>, x: &[f64]) -> Result<Option<Vec<f64>>, SimError> {
        let Some(i) = from.iter().zip(to).position(|(a, b)| a != b) else { return Ok(None) };
        let g: Vec<f64> = self.kink_grads[i].iter().map(|e| e.eval(x, &[], 0.0)).collect::<Result<_, _>>()?;
        Ok((norm(&g) > 0.0).then_some(g))
    }

    fn continuous(&self, from: &Vec<i8>, to: &Vec<i8>) -> bool {
        !from.iter().zip(to).enumerate().any(|(i, (a, b))| a != b && self.kinks[i] == Func::Sign)
    }
}

/// Plant `x' = f(x, u)` with `u` from a switched state feedback.
pub struct ClosedLoop<'a, L> {
    pub sys: &'a ControlSystem,
    pub law: &'a L,
}

impl<L: SwitchedFeedback> PiecewiseSmooth for ClosedLoop<'_, L> {
    type Region = L::Region;

    fn dim(&self) -> usize {
        self.sys.n()
    }

    fn control_dim(&self) -> usize {
        self.sys.m()
    }

    fn region(&self, _t: f64, y: &[f64]) -> Result<L::Region, SimError> {
        self.law.region(y)
    }

    fn control(&self, r: &L::Region, _t: f64, y: &[f64]) -> Result<Vec<f64>, SimError> {
        self.law.control_in(r, y)
    }

    fn field_with(&self, u: &[f64], t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), SimError> {
        Ok(self.sys.eval_dynamics_into(t, y, u, dy)?)
    }

    fn normal(&self, from: &L::Region, to: &L::Region, _t: f64, y: &[f64]) -> Result<Option<Vec<f64>>, SimError> {
        self.law.normal(from, to, y)
    }

    fn continuous(&self, from: &L::Region, to: &L::Region) -> bool {
        self.law.continuous(from, to)
    }
}

pub fn simulate_closed_loop<L: SwitchedFeedback>(
    sys: &ControlSystem,
    law: &L,
    x0: &[f64],
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    simulate(&ClosedLoop { sys, law }, x0, opts)
}

/// One row of the sampled stability check.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityRow {
    pub epsilon: f64,
    pub delta: f64,
    pub tested: usize,
    pub max_excursion: f64,
    pub passed: bool,
    /// Trajectory index of the worst excursion.
    pub witness: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub converged: bool,
    /// Indices of trajectories that did not converge.
    pub not_converged: Vec<usize>,
    pub rows: Vec<StabilityRow>,
    pub stable: bool,
}

impl Verdict {
    pub fn stabilizes(&self) -> bool {
        self.converged && self.stable
    }
}

/// Convergence of every trajectory plus, for each `(epsilon, delta)` pair,
/// `|x(t)| <= epsilon` along every trajectory started with `|x0| <= delta`.
pub fn stabilization_verdict(trajectories: &[Trajectory], table: &[(f64, f64)]) -> Verdict {
    let not_converged: Vec<usize> =
        trajectories.iter().enumerate().filter(|(_, t)| !t.converged()).map(|(i, _)| i).collect();
    let rows: Vec<StabilityRow> = table
        .iter()
        .map(|&(epsilon, delta)| {
            let mut row = StabilityRow { epsilon, delta, tested: 0, max_excursion: 0.0, passed: true, witness: None };
            for (i, tr) in trajectories.iter().enumerate() {
                if tr.is_empty() || norm(tr.state(0)) > delta {
                    continue;
                }
                row.tested += 1;
                let ex = (0..tr.len()).map(|k| norm(tr.state(k))).fold(0.0, f64::max);
                if ex > row.max_excursion || row.witness.is_none() {
                    row.max_excursion = row.max_excursion.max(ex);
                    row.witness = Some(i);
                }
                if ex > epsilon {
                    row.passed = false;
                }
            }
            row
        })
        .collect();
    let stable = rows.iter().all(|r| r.passed);
    Verdict { converged: not_converged.is_empty(), not_converged, rows, stable }
}

/// Planar initial states on circles of radius `delta` and `delta / 2`.
pub fn ball_initial_states(delta: f64, per_circle: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * per_circle + 1);
    out.push(vec![0.0, 0.0]);
    for r in [delta, 0.5 * delta] {
        for k in 0..per_circle {
            let a = 2.0 * core::f64::consts::PI * k as f64 / per_circle as f64;
            out.push(vec![r * libm::cos(a), r * libm::sin(a)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::systems::ControlSet;

    fn sys(drift: &[&str], b: &[&str]) -> ControlSystem {
        let n = drift.len();
        let e = |s: &&str| parse(s, n, 0).unwrap();
        ControlSystem::affine(drift.iter().map(e).collect(), vec![b.iter().map(e).collect()], ControlSet::unit_box(1), true)
            .unwrap()
    }

    fn law(src: &str, n: usize) -> ExprFeedback {
        ExprFeedback::new(vec![parse(src, n, 0).unwrap()], n)
    }

    #[test]
    fn scalar_sign_feedback_slides_at_zero() {
        let s = sys(&["0"], &["1"]);
        let l = law("-sign(x1)", 1);
        let o = SimOptions { t_max: 2.0, convergence_radius: 0.0, ..Default::default() };
        let tr = simulate_closed_loop(&s, &l, &[0.0], &o).unwrap();
        for i in 0..tr.len() {
            assert_eq!(tr.state(i)[0], 0.0);
            assert_eq!(tr.control(i)[0], 0.0);
        }
        // from x = 0.3 the state reaches 0 at t = 0.3 and then slides
        let tr = simulate_closed_loop(&s, &l, &[0.3], &o).unwrap();
        assert!(tr.events.iter().any(|e| e.kind == SimEventKind::SlidingEnter && (e.t - 0.3).abs() < 1e-9));
        assert!(tr.last_state().unwrap()[0].abs() < 1e-9);
        assert_eq!(tr.outcome, Outcome::Horizon);
    }

    #[test]
    fn sliding_is_tangent_to_the_line() {
        // u = -sign(x1 + x2) on the double integrator slides along x1 + x2 = 0 when |x2| < 1
        let s = sys(&["x2", "0"], &["0", "1"]);
        let l = law("-sign(x1+x2)", 2);
        let o = SimOptions { t_max: 6.0, ..Default::default() };
        let tr = simulate_closed_loop(&s, &l, &[0.5, 0.0], &o).unwrap();
        let enter = tr.events.iter().find(|e| e.kind == SimEventKind::SlidingEnter).expect("sliding");
        for i in enter.sample..tr.len() {
            let x = tr.state(i);
            let u = tr.control(i)[0];
            assert!(u.abs() <= 1.0);
            // d/dt (x1 + x2) = x2 + u
            assert!((x[1] + u).abs() <= 1e-6, "t {} rate {}", tr.t(i), x[1] + u);
            assert!((x[0] + x[1]).abs() <= 1e-6);
        }
        assert!(tr.converged());
    }

    #[test]
    fn equilibrium_stays_put() {
        let s = sys(&["x2", "0"], &["0", "1"]);
        let tr = simulate_closed_loop(&s, &law("-x1-x2", 2), &[0.0, 0.0], &SimOptions::default()).unwrap();
        assert_eq!(tr.outcome, Outcome::Converged { t: 0.0 });
        assert!(tr.last_state().unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn inner_law_decreases_energy() {
        let s = sys(&["x2", "0"], &["0", "1"]);
        let o = SimOptions { t_max: 10.0, ..Default::default() };
        let tr = simulate_closed_loop(&s, &law("-x1-x2", 2), &[0.6, 0.8], &o).unwrap();
        let v = |i: usize| 0.5 * norm(tr.state(i)).powi(2);
        for i in 1..tr.len() {
            assert!(v(i) <= v(i - 1) + 1e-9);
            assert!(tr.t(i) > tr.t(i - 1));
        }
    }

    #[test]
    fn verdict_flags_unstable_law() {
        let s = sys(&["x2", "0"], &["0", "1"]);
        let o = SimOptions { t_max: 20.0, blowup_radius: 1e3, ..Default::default() };
        let good: Vec<_> = ball_initial_states(0.1, 8)
            .iter()
            .map(|x| simulate_closed_loop(&s, &law("-x1-x2", 2), x, &o).unwrap())
            .collect();
        let v = stabilization_verdict(&good, &[(0.5, 0.1)]);
        assert!(v.stabilizes(), "{v:?}");
        assert!(v.rows[0].max_excursion <= 0.1 * core::f64::consts::SQRT_2);
        let bad: Vec<_> = ball_initial_states(0.1, 8)
            .iter()
            .map(|x| simulate_closed_loop(&s, &law("x1", 2), x, &o).unwrap())
            .collect();
        let v = stabilization_verdict(&bad, &[(0.5, 0.1)]);
        assert!(!v.converged && !v.stable);
        assert!(v.rows[0].witness.is_some());
    }
}
