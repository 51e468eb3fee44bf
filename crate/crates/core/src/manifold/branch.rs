//! Integration of single characteristics with switch localization.

use alloc::vec;
use alloc::vec::Vec;

use super::{ManifoldError, ManifoldOptions, Seed};
use crate::hamiltonian::{
    frozen_rhs, hamiltonian_value, minimize_hamiltonian, resolve_control, switching_functions, Direction,
};
use crate::ode::{next_step, Dopri5};
use crate::systems::{dot, norm, ControlSet, ControlSystem, Dynamics, SystemError};

/// What happened at a flagged sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Switch,
    TransversalityFailure,
    Budget,
}

impl EventKind {
    /// Integer code used in exports (0 is "no event").
    pub fn code(self) -> u8 {
        match self {
            EventKind::Switch => 1,
            EventKind::TransversalityFailure => 2,
            EventKind::Budget => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(EventKind::Switch),
            2 => Some(EventKind::TransversalityFailure),
            3 => Some(EventKind::Budget),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchEvent {
    pub kind: EventKind,
    pub tau: f64,
    pub x: Vec<f64>,
    pub nu: Vec<f64>,
    /// Index of the sample recorded at the event.
    pub sample: usize,
    /// `<nu, [g, b_j]>` for the switching channel (NaN when not applicable).
    pub transversality: f64,
    /// The switching channel for box control sets.
    pub channel: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StopReason {
    TauMax,
    Budget,
    TransversalityFailure,
    Failed(ManifoldError),
}

/// Borrowed view of one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleRef<'a> {
    pub tau: f64,
    pub x: &'a [f64],
    pub nu: &'a [f64],
    pub u: &'a [f64],
    pub w: f64,
    pub s: f64,
    pub event: Option<EventKind>,
}

/// One characteristic of the reversed flow, sampled at adaptive steps, at
/// every multiple of the sampling interval and at events.
#[derive(Clone, Debug, PartialEq)]
pub struct Bicharacteristic {
    pub seed: Seed,
    n: usize,
    m: usize,
    taus: Vec<f64>,
    xs: Vec<f64>,
    nus: Vec<f64>,
    us: Vec<f64>,
    ws: Vec<f64>,
    ss: Vec<f64>,
    flags: Vec<u8>,
    grid: Vec<u32>,
    pub events: Vec<BranchEvent>,
    pub stop: StopReason,
    /// `dx/dpsi` and `dx/dtau` are nearly parallel at the seed.
    pub tangent_degenerate: bool,
}

impl Bicharacteristic {
    fn empty(seed: Seed, m: usize) -> Self {
        let n = seed.x0.len();
        Bicharacteristic {
            seed,
            n,
            m,
            taus: Vec::new(),
            xs: Vec::new(),
            nus: Vec::new(),
            us: Vec::new(),
            ws: Vec::new(),
            ss: Vec::new(),
            flags: Vec::new(),
            grid: Vec::new(),
            events: Vec::new(),
            stop: StopReason::TauMax,
            tangent_degenerate: false,
        }
    }

    /// A branch that could not be integrated: just its seed.
    pub(crate) fn failed(seed: Seed, m: usize, err: ManifoldError) -> Self {
        let mut b = Bicharacteristic::empty(seed, m);
        let x0 = b.seed.x0.clone();
        let nu0 = b.seed.nu0.clone();
        b.push(0.0, &x0, &nu0, &vec![f64::NAN; m], b.seed.v0, f64::NAN, None);
        b.grid.push(0);
        b.stop = StopReason::Failed(err);
        b
    }

    fn push(&mut self, tau: f64, x: &[f64], nu: &[f64], u: &[f64], w: f64, s: f64, event: Option<EventKind>) -> usize {
        self.taus.push(tau);
        self.xs.extend_from_slice(x);
        self.nus.extend_from_slice(nu);
        self.us.extend_from_slice(u);
        self.ws.push(w);
        self.ss.push(s);
        self.flags.push(event.map_or(0, EventKind::code));
        self.taus.len() - 1
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn sample(&self, i: usize) -> SampleRef<'_> {
        let (n, m) = (self.n, self.m);
        SampleRef {
            tau: self.taus[i],
            x: &self.xs[i * n..(i + 1) * n],
            nu: &self.nus[i * n..(i + 1) * n],
            u: &self.us[i * m..(i + 1) * m],
            w: self.ws[i],
            s: self.ss[i],
            event: EventKind::from_code(self.flags[i]),
        }
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.n..(i + 1) * self.n]
    }

    pub fn samples(&self) -> impl Iterator<Item = SampleRef<'_>> + '_ {
        (0..self.len()).map(move |i| self.sample(i))
    }

    /// Sample index at `tau = j * sample_dt`, if the branch got that far.
    pub fn grid_sample(&self, j: usize) -> Option<usize> {
        self.grid.get(j).map(|&i| i as usize)
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn last_tau(&self) -> f64 {
        self.taus.last().copied().unwrap_or(0.0)
    }

    pub fn failed_to_integrate(&self) -> bool {
        matches!(self.stop, StopReason::Failed(_))
    }

    /// Index `i` with `tau_i <= tau <= tau_{i+1}`.
    pub(crate) fn interval(&self, tau: f64) -> Option<usize> {
        if self.len() < 2 || tau < self.taus[0] || tau > self.last_tau() {
            return None;
        }
        let i = self.taus.partition_point(|&t| t <= tau);
        Some(i.saturating_sub(1).min(self.len() - 2))
    }

    /// State `(x, nu)` at `tau` by cubic Hermite interpolation between samples,
    /// with the derivative taken from the control active on the interval.
    pub fn state_at(&self, sys: &ControlSystem, tau: f64) -> Result<(Vec<f64>, Vec<f64>), ManifoldError> {
        let i = self.interval(tau).ok_or(ManifoldError::TauOutOfRange { tau, last: self.last_tau() })?;
        let (a, b) = (self.sample(i), self.sample(i + 1));
        let h = b.tau - a.tau;
        if h <= 0.0 {
            return Ok((a.x.to_vec(), a.nu.to_vec()));
        }
        let n = self.n;
        let mut da = (vec![0.0; n], vec![0.0; n]);
        let mut db = (vec![0.0; n], vec![0.0; n]);
        frozen_rhs(sys, 0.0, a.x, a.nu, a.u, Direction::Reversed, &mut da.0, &mut da.1)?;
        frozen_rhs(sys, 0.0, b.x, b.nu, a.u, Direction::Reversed, &mut db.0, &mut db.1)?;
        let s = (tau - a.tau) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let herm = |p0: &[f64], d0: &[f64], p1: &[f64], d1: &[f64]| -> Vec<f64> {
            (0..n).map(|k| h00 * p0[k] + h10 * h * d0[k] + h01 * p1[k] + h11 * h * d1[k]).collect()
        };
        Ok((herm(a.x, &da.0, b.x, &db.0), herm(a.nu, &da.1, b.nu, &db.1)))
    }

    /// Control active at `tau` (the post-switch value at an event).
    pub fn control_at(&self, tau: f64) -> Option<&[f64]> {
        self.interval(tau).map(|i| self.sample(i).u)
    }
}

/// End state of a flow run without sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowEnd {
    pub x: Vec<f64>,
    pub nu: Vec<f64>,
    pub w: f64,
    pub switches: usize,
}

struct Tracer<'a> {
    sys: &'a ControlSystem,
    opts: &'a ManifoldOptions,
    dir: Direction,
    n: usize,
    stepper: Dopri5,
}

/// How a step ended with respect to the frozen control.
enum Crossing {
    None,
    /// A box channel's switching function changed sign.
    Channel,
    /// The minimizer over a finite or sampled set changed.
    Argmin,
}

impl<'a> Tracer<'a> {
    fn new(sys: &'a ControlSystem, opts: &'a ManifoldOptions, dir: Direction) -> Self {
        let n = sys.n();
        Tracer { sys, opts, dir, n, stepper: Dopri5::new(2 * n + 1) }
    }

    fn step(&mut self, u: &[f64], y: &[f64], h: f64, out: &mut [f64]) -> Result<f64, SystemError> {
        let (sys, dir, n) = (self.sys, self.dir, self.n);
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<(), SystemError> {
            let (dx, rest) = dy.split_at_mut(n);
            let (dnu, dw) = rest.split_at_mut(n);
            frozen_rhs(sys, 0.0, &y[..n], &y[n..2 * n], u, dir, dx, dnu)?;
            dw[0] = dot(&y[n..2 * n], dx);
            Ok(())
        };
        self.stepper.step(&mut f, 0.0, y, h, out, self.opts.tol)
    }

    fn is_box_affine(&self) -> bool {
        matches!((self.sys.dynamics(), self.sys.omega()), (Dynamics::Affine { .. }, ControlSet::Box { .. }))
    }

    /// Expected sign of `sigma_j` for the frozen control (0 when undecided).
    fn expected_signs(&self, u: &[f64]) -> Vec<f64> {
        match self.sys.omega() {
            ControlSet::Box { lo, hi } => u
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    if v == lo[j] {
                        1.0
                    } else if v == hi[j] {
                        -1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
            ControlSet::Finite(_) => Vec::new(),
        }
    }

    fn crossing(&self, u: &[f64], expect: &[f64], y: &[f64]) -> Result<Crossing, SystemError> {
        let n = self.n;
        if self.is_box_affine() {
            let sigma = switching_functions(self.sys, 0.0, &y[..n], &y[n..2 * n])?;
            // earliest is decided during localization; any flipped channel triggers it
            for (&s, &e) in sigma.iter().zip(expect) {
                if e != 0.0 && s * e < 0.0 {
                    return Ok(Crossing::Channel);
                }
            }
            Ok(Crossing::None)
        } else {
            let r = minimize_hamiltonian(self.sys, 0.0, &y[..n], &y[n..2 * n], &self.opts.hamiltonian)?;
            Ok(if r.u.as_slice() == u { Crossing::None } else { Crossing::Argmin })
        }
    }

    /// Shrinks the step fraction to the first crossing. Returns `(theta, y_at_theta)`.
    fn localize(&mut self, u: &[f64], expect: &[f64], y0: &[f64], h: f64) -> Result<(f64, Vec<f64>, Option<usize>), SystemError> {
        let n = self.n;
        let d = y0.len();
        let mut out = vec![0.0; d];
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut y_hi = vec![0.0; d];
        self.step(u, y0, h, &mut y_hi)?;
        // pick the channel that crosses first
        let mut channel = None;
        if self.is_box_affine() {
            let mut best = f64::INFINITY;
            for j in 0..self.sys.m() {
                if expect[j] == 0.0 {
                    continue;
                }
                let sig = |y: &[f64]| -> Result<f64, SystemError> {
                    Ok(expect[j] * dot(&y[n..2 * n], &self.sys.column(j, 0.0, &y[..n])?))
                };
                if sig(&y_hi)? >= 0.0 {
                    continue;
                }
                let (mut a, mut b) = (0.0, 1.0);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    self.step(u, y0, mid * h, &mut out)?;
                    let s = sig(&out)?;
                    if s >= 0.0 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                    if s.abs() <= self.opts.event_tol || (b - a) * h <= 1e-15 * (1.0 + h) {
                        b = mid;
                        break;
                    }
                }
                if b < best {
                    best = b;
                    channel = Some(j);
                }
            }
            hi = if channel.is_some() { best } else { 1.0 };
        } else {
            for _ in 0..200 {
                if (hi - lo) * h <= 1e-13 * (1.0 + h) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                self.step(u, y0, mid * h, &mut out)?;
                match self.crossing(u, expect, &out)? {
                    Crossing::None => lo = mid,
                    _ => hi = mid,
                }
            }
        }
        self.step(u, y0, hi * h, &mut out)?;
        Ok((hi, out, channel))
    }

    fn transversality(&self, channel: Option<usize>, u_pre: &[f64], x: &[f64], nu: &[f64]) -> Result<f64, SystemError> {
        if !self.sys.is_affine() {
            return Ok(f64::NAN);
        }
        let j = match channel {
            Some(j) => j,
            None if self.sys.m() == 1 => 0,
            None => return Ok(f64::NAN),
        };
        Ok(dot(nu, &self.sys.bracket_with_column(j, 0.0, x, u_pre)?))
    }
}

fn seed_state(seed: &Seed) -> Vec<f64> {
    let mut y = seed.x0.clone();
    y.extend_from_slice(&seed.nu0);
    y.push(seed.v0);
    y
}

/// Integrates the reversed flow from `seed` up to `opts.tau_max`.
pub fn integrate_bicharacteristic(
    sys: &ControlSystem,
    seed: &Seed,
    opts: &ManifoldOptions,
) -> Result<Bicharacteristic, ManifoldError> {
    if !sys.is_autonomous() {
        return Err(SystemError::NonAutonomous.into());
    }
    let n = sys.n();
    let hopts = &opts.hamiltonian;
    let mut tr = Tracer::new(sys, opts, Direction::Reversed);
    let mut br = Bicharacteristic::empty(seed.clone(), sys.m());

    let mut y = seed_state(seed);
    let mut u = resolve_control(sys, 0.0, &seed.x0, &seed.nu0, Direction::Reversed, hopts)?.u;
    let mut expect = tr.expected_signs(&u);
    let s0 = hamiltonian_value(sys, 0.0, &seed.x0, &seed.nu0, hopts)?;
    br.push(0.0, &seed.x0, &seed.nu0, &u, seed.v0, s0, None);
    br.grid.push(0);

    let dt = opts.sample_dt;
    let mut tau = 0.0;
    let mut h = dt;
    let mut y1 = vec![0.0; y.len()];
    let mut steps = 0usize;
    loop {
        if tau >= opts.tau_max - 1e-12 {
            br.stop = StopReason::TauMax;
            break;
        }
        steps += 1;
        if steps > opts.max_steps {
            return Err(ManifoldError::StepLimit { tau });
        }
        let next_grid = br.grid.len() as f64 * dt;
        let to_grid = next_grid - tau;
        h = h.min(to_grid).min(opts.tau_max - tau);
        if h < opts.min_step {
            // a sliver before the grid time; land on it exactly
            if to_grid <= opts.min_step {
                h = to_grid.max(f64::MIN_POSITIVE);
            } else {
                return Err(ManifoldError::StepUnderflow { tau });
            }
        }
        let err = tr.step(&u, &y, h, &mut y1)?;
        if err > 1.0 {
            h = next_step(h, err);
            if h < opts.min_step {
                return Err(ManifoldError::StepUnderflow { tau });
            }
            continue;
        }

        if !matches!(tr.crossing(&u, &expect, &y1)?, Crossing::None) {
            let (theta, ye, channel) = tr.localize(&u, &expect, &y, h)?;
            let (xe, nue) = (&ye[..n], &ye[n..2 * n]);
            let new_u = resolve_control(sys, 0.0, xe, nue, Direction::Reversed, hopts)?.u;
            if new_u != u {
                let tau_e = tau + theta * h;
                let trans = tr.transversality(channel, &u, xe, nue)?;
                let s = hamiltonian_value(sys, 0.0, xe, nue, hopts)?;
                let failed = trans.is_finite() && trans.abs() <= opts.transversality_tol;
                let kind = if failed { EventKind::TransversalityFailure } else { EventKind::Switch };
                let recorded_u = if failed { &u } else { &new_u };
                let idx = br.push(tau_e, xe, nue, recorded_u, ye[2 * n], s, Some(kind));
                br.events.push(BranchEvent {
                    kind,
                    tau: tau_e,
                    x: xe.to_vec(),
                    nu: nue.to_vec(),
                    sample: idx,
                    transversality: trans,
                    channel,
                });
                if failed {
                    br.stop = StopReason::TransversalityFailure;
                    break;
                }
                y.copy_from_slice(&ye);
                tau = tau_e;
                u = new_u;
                expect = tr.expected_signs(&u);
                continue;
            }
            // grazing or numerical noise at the surface: keep the branch
        }

        let on_grid = (h - to_grid).abs() <= 1e-15 * (1.0 + tau);
        tau = if on_grid { next_grid } else { tau + h };
        y.copy_from_slice(&y1);
        let (x, nu) = (&y[..n], &y[n..2 * n]);
        let s = hamiltonian_value(sys, 0.0, x, nu, hopts)?;
        let over = norm(x) > opts.state_budget;
        let idx = br.push(tau, x, nu, &u, y[2 * n], s, over.then_some(EventKind::Budget));
        if on_grid {
            br.grid.push(idx as u32);
        }
        if over {
            br.events.push(BranchEvent {
                kind: EventKind::Budget,
                tau,
                x: x.to_vec(),
                nu: nu.to_vec(),
                sample: idx,
                transversality: f64::NAN,
                channel: None,
            });
            br.stop = StopReason::Budget;
            break;
        }
        h = next_step(h, err).min(dt);
    }
    Ok(br)
}

/// Runs the characteristic flow from `(x, nu)` for `duration` with events,
/// without storing samples.
pub fn run_flow(
    sys: &ControlSystem,
    x: &[f64],
    nu: &[f64],
    duration: f64,
    dir: Direction,
    opts: &ManifoldOptions,
) -> Result<FlowEnd, ManifoldError> {
    let n = sys.n();
    let hopts = &opts.hamiltonian;
    let mut tr = Tracer::new(sys, opts, dir);
    let mut y: Vec<f64> = x.iter().chain(nu).copied().chain([0.0]).collect();
    let mut u = resolve_control(sys, 0.0, x, nu, dir, hopts)?.u;
    let mut expect = tr.expected_signs(&u);
    let mut y1 = vec![0.0; y.len()];
    let (mut t, mut h) = (0.0, opts.sample_dt);
    let mut switches = 0;
    let mut steps = 0usize;
    while t < duration - 1e-14 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(ManifoldError::StepLimit { tau: t });
        }
        h = h.min(duration - t);
        let err = tr.step(&u, &y, h, &mut y1)?;
        if err > 1.0 {
            h = next_step(h, err);
            if h < opts.min_step {
                return Err(ManifoldError::StepUnderflow { tau: t });
            }
            continue;
        }
        if !matches!(tr.crossing(&u, &expect, &y1)?, Crossing::None) {
            let (theta, ye, _) = tr.localize(&u, &expect, &y, h)?;
            let new_u = resolve_control(sys, 0.0, &ye[..n], &ye[n..2 * n], dir, hopts)?.u;
            if new_u != u {
                t += theta * h;
                y.copy_from_slice(&ye);
                u = new_u;
                expect = tr.expected_signs(&u);
                switches += 1;
                continue;
            }
        }
        t += h;
        y.copy_from_slice(&y1);
        h = next_step(h, err).min(opts.sample_dt);
    }
    Ok(FlowEnd { x: y[..n].to_vec(), nu: y[n..2 * n].to_vec(), w: y[2 * n], switches })
}
