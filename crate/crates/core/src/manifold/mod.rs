//! The Lagrangian manifold swept by characteristics of the reversed flow
//! emitted from a level set of the Lyapunov function.

mod branch;
mod index;
mod mesh;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

pub use branch::{
    integrate_bicharacteristic, run_flow, Bicharacteristic, BranchEvent, EventKind, FlowEnd, SampleRef, StopReason,
};
pub use index::SampleId;
pub use mesh::{MeshHit, Triangle};

use crate::hamiltonian::{frozen_rhs, hamiltonian_value, Direction, HamiltonianOptions};
use crate::ode::Tolerance;
use crate::systems::{det2, dot, norm, ControlSystem, LyapunovSpec, SystemError};
use index::GridIndex;

#[derive(Clone, Debug, PartialEq)]
pub enum ManifoldError {
    System(SystemError),
    StepUnderflow { tau: f64 },
    StepLimit { tau: f64 },
    TauOutOfRange { tau: f64, last: f64 },
    RootNotBracketed { psi: f64 },
    TooFewSeeds { count: usize, min: usize },
    UnsupportedDimension(usize),
    TooManyFailures { failed: usize, total: usize, first: Option<alloc::boxed::Box<ManifoldError>> },
    NotCovered { distance: Option<f64> },
    BranchOutOfRange(usize),
    NoNeighbours,
    InvalidOption(&'static str),
}

impl fmt::Display for ManifoldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldError::System(e) => write!(f, "{e}"),
            ManifoldError::StepUnderflow { tau } => write!(f, "step size underflow at tau = {tau}"),
            ManifoldError::StepLimit { tau } => write!(f, "step limit reached at tau = {tau}"),
            ManifoldError::TauOutOfRange { tau, last } => {
                write!(f, "tau = {tau} is outside the branch (last sample at {last})")
            }
            ManifoldError::RootNotBracketed { psi } => {
                write!(f, "level set not found along the ray at angle {psi}")
            }
            ManifoldError::TooFewSeeds { count, min } => write!(f, "{count} seeds requested, need at least {min}"),
            ManifoldError::UnsupportedDimension(n) => write!(f, "seeding supports n = 1 or n = 2, got n = {n}"),
            ManifoldError::TooManyFailures { failed, total, first } => {
                write!(f, "{failed} of {total} branches failed")?;
                if let Some(e) = first {
                    write!(f, " (first: {e})")?;
                }
                Ok(())
            }
            ManifoldError::NotCovered { distance: Some(d) } => {
                write!(f, "point not covered by the manifold (nearest sample at distance {d})")
            }
            ManifoldError::NotCovered { distance: None } => write!(f, "point not covered by the manifold"),
            ManifoldError::BranchOutOfRange(b) => write!(f, "no branch with index {b}"),
            ManifoldError::NoNeighbours => write!(f, "branch has no neighbours at this tau"),
            ManifoldError::InvalidOption(what) => write!(f, "invalid manifold option: {what}"),
        }
    }
}

impl core::error::Error for ManifoldError {}

impl From<SystemError> for ManifoldError {
    fn from(e: SystemError) -> Self {
        ManifoldError::System(e)
    }
}

/// Starting point of one characteristic on the level set `V = epsilon`.
#[derive(Clone, Debug, PartialEq)]
pub struct Seed {
    /// Angle parameter (n = 2) or `0`/`pi` for the two ends of an interval (n = 1).
    pub psi: f64,
    pub x0: Vec<f64>,
    pub nu0: Vec<f64>,
    /// `V(x0)`, the starting value of the generating function.
    pub v0: f64,
}

/// How the initial covector is chosen along the seed set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SeedScaling {
    /// `nu0 = grad V(x0)`.
    #[default]
    Gradient,
    /// `nu0 = grad V(x0) / |S(x0, grad V)|`, so every branch starts at `S = -1`.
    /// Branches where `S` vanishes keep the gradient.
    UnitHamiltonian,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldOptions {
    pub seeds: usize,
    pub tau_max: f64,
    /// Forced sampling interval in `tau`.
    pub sample_dt: f64,
    pub tol: Tolerance,
    /// Bisection target for `|sigma|` at a switch.
    pub event_tol: f64,
    /// Minimum `|<nu, [g, b]>|` at a switch.
    pub transversality_tol: f64,
    /// Integration stops once `|x|` exceeds this.
    pub state_budget: f64,
    pub max_steps: usize,
    pub min_step: f64,
    /// Nearest-sample radius for queries; derived from sample spacing when `None`.
    pub query_radius: Option<f64>,
    pub scaling: SeedScaling,
    pub hamiltonian: HamiltonianOptions,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        ManifoldOptions {
            seeds: 256,
            tau_max: 10.0,
            sample_dt: 0.01,
            tol: Tolerance { rel: 1e-10, abs: 1e-12 },
            event_tol: 1e-10,
            transversality_tol: 1e-8,
            state_budget: 1e3,
            max_steps: 2_000_000,
            min_step: 1e-14,
            query_radius: None,
            scaling: SeedScaling::Gradient,
            hamiltonian: HamiltonianOptions::default(),
        }
    }
}

impl ManifoldOptions {
    pub fn validate(&self) -> Result<(), ManifoldError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(self.tau_max > 0.0 && self.tau_max.is_finite()) {
            return Err(ManifoldError::InvalidOption("tau_max must be positive"));
        }
        if !pos(self.sample_dt) {
            return Err(ManifoldError::InvalidOption("sample_dt must be positive"));
        }
        if !pos(self.tol.rel) || !pos(self.tol.abs) {
            return Err(ManifoldError::InvalidOption("tolerances must be positive"));
        }
        if !pos(self.state_budget) {
            return Err(ManifoldError::InvalidOption("state_budget must be positive"));
        }
        if let Some(r) = self.query_radius {
            if !pos(r) {
                return Err(ManifoldError::InvalidOption("query_radius must be positive"));
            }
        }
        Ok(())
    }
}

/// Minimum number of seeds on a planar level set.
pub const MIN_SEEDS: usize = 8;
const WORKING_RADIUS: f64 = 1e6;
const LEVEL_TOL: f64 = 1e-12;

/// Point on the ray `r * dir` with `V = epsilon`, by doubling then bisection.
fn level_point(lyap: &LyapunovSpec, dir: &[f64], psi: f64) -> Result<Vec<f64>, ManifoldError> {
    let eps = lyap.epsilon();
    let at = |r: f64| -> Vec<f64> { dir.iter().map(|d| r * d).collect() };
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        if lyap.value(&at(hi))? >= eps {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > WORKING_RADIUS {
            return Err(ManifoldError::RootNotBracketed { psi });
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let g = lyap.value(&at(mid))? - eps;
        if g.abs() <= LEVEL_TOL || mid == lo || mid == hi {
            return Ok(at(mid));
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(0.5 * (lo + hi)))
}

/// Seeds on `{V = epsilon}`: `count` uniform angles for n = 2, both ends for n = 1.
pub fn seed_manifold(lyap: &LyapunovSpec, count: usize) -> Result<Vec<Seed>, ManifoldError> {
    let dirs: Vec<(f64, Vec<f64>)> = match lyap.dim() {
        1 => vec![(0.0, vec![1.0]), (PI, vec![-1.0])],
        2 => {
            if count < MIN_SEEDS {
                return Err(ManifoldError::TooFewSeeds { count, min: MIN_SEEDS });
            }
            (0..count)
                .map(|k| {
                    let psi = 2.0 * PI * k as f64 / count as f64;
                    (psi, vec![libm::cos(psi), libm::sin(psi)])
                })
                .collect()
        }
        n => return Err(ManifoldError::UnsupportedDimension(n)),
    };
    dirs.into_iter()
        .map(|(psi, d)| {
            let x0 = level_point(lyap, &d, psi)?;
            let nu0 = lyap.gradient(&x0)?;
            let v0 = lyap.value(&x0)?;
            Ok(Seed { psi, x0, nu0, v0 })
        })
        .collect()
}

/// Rescales seed covectors according to `scaling`.
pub fn scale_seeds(
    sys: &ControlSystem,
    seeds: &mut [Seed],
    scaling: SeedScaling,
    opts: &HamiltonianOptions,
) -> Result<(), ManifoldError> {
    if scaling == SeedScaling::Gradient {
        return Ok(());
    }
    for s in seeds {
        let h = hamiltonian_value(sys, 0.0, &s.x0, &s.nu0, opts)?;
        if h.abs() > 1e-12 {
            let k = 1.0 / h.abs();
            s.nu0.iter_mut().for_each(|v| *v *= k);
        }
    }
    Ok(())
}

/// Seeds for `opts`, scaled as requested.
pub fn prepare_seeds(sys: &ControlSystem, lyap: &LyapunovSpec, opts: &ManifoldOptions) -> Result<Vec<Seed>, ManifoldError> {
    if sys.n() != lyap.dim() {
        return Err(SystemError::Dimension { expected: sys.n(), found: lyap.dim(), what: "Lyapunov function" }.into());
    }
    let mut seeds = seed_manifold(lyap, opts.seeds)?;
    scale_seeds(sys, &mut seeds, opts.scaling, &opts.hamiltonian)?;
    Ok(seeds)
}

/// Integrates one branch, turning failures into a seed-only stub.
pub fn integrate_or_stub(sys: &ControlSystem, seed: &Seed, opts: &ManifoldOptions) -> Bicharacteristic {
    match integrate_bicharacteristic(sys, seed, opts) {
        Ok(b) => b,
        Err(e) => Bicharacteristic::failed(seed.clone(), sys.m(), e),
    }
}

/// Builds the manifold serially. See [`LagrangianManifold::assemble`] for
/// combining branches integrated elsewhere.
pub fn build_manifold(
    sys: &ControlSystem,
    lyap: &LyapunovSpec,
    opts: &ManifoldOptions,
) -> Result<LagrangianManifold, ManifoldError> {
    opts.validate()?;
    let seeds = prepare_seeds(sys, lyap, opts)?;
    let branches = seeds.iter().map(|s| integrate_or_stub(sys, s, opts)).collect();
    LagrangianManifold::assemble(sys, lyap.epsilon(), branches, opts)
}

/// Result of a nearest-sample query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryHit {
    pub id: SampleId,
    pub nu: Vec<f64>,
    pub w: f64,
    pub u: Vec<f64>,
    pub distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Illumination {
    Inner,
    Illuminated,
    Dark,
}

/// One switch on the switching curve.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchPoint {
    pub x: Vec<f64>,
    pub branch: usize,
    pub psi: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianManifold {
    epsilon: f64,
    n: usize,
    m: usize,
    sample_dt: f64,
    radius: f64,
    branches: Vec<Bicharacteristic>,
    index: GridIndex,
    failed: usize,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum())
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

impl LagrangianManifold {
    /// Indexes integrated branches (in seed order). Fails when more than
    /// half of them could not be integrated.
    pub fn assemble(
        sys: &ControlSystem,
        epsilon: f64,
        branches: Vec<Bicharacteristic>,
        opts: &ManifoldOptions,
    ) -> Result<Self, ManifoldError> {
        opts.validate()?;
        let n = sys.n();
        if n > index::MAX_DIM {
            return Err(ManifoldError::UnsupportedDimension(n));
        }
        let failed = branches.iter().filter(|b| b.failed_to_integrate()).count();
        if 2 * failed > branches.len() || branches.is_empty() {
            let first = branches.iter().find_map(|b| match &b.stop {
                StopReason::Failed(e) => Some(alloc::boxed::Box::new(e.clone())),
                _ => None,
            });
            return Err(ManifoldError::TooManyFailures { failed, total: branches.len(), first });
        }
        let radius = match opts.query_radius {
            Some(r) => r,
            None => 2.0 * spacing_median(&branches).unwrap_or(opts.sample_dt),
        };
        let points = branches.iter().enumerate().flat_map(|(b, br)| {
            (0..br.len()).map(move |s| (SampleId { branch: b as u32, sample: s as u32 }, br.x(s)))
        });
        let index = GridIndex::build(n, 0.25 * radius, points);
        Ok(LagrangianManifold { epsilon, n, m: sys.m(), sample_dt: opts.sample_dt, radius, branches, index, failed })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn sample_dt(&self) -> f64 {
        self.sample_dt
    }

    pub fn query_radius(&self) -> f64 {
        self.radius
    }

    pub fn branches(&self) -> &[Bicharacteristic] {
        &self.branches
    }

    pub fn branch(&self, b: usize) -> Result<&Bicharacteristic, ManifoldError> {
        self.branches.get(b).ok_or(ManifoldError::BranchOutOfRange(b))
    }

    pub fn failed_branches(&self) -> usize {
        self.failed
    }

    pub fn sample_count(&self) -> usize {
        self.index.len()
    }

    pub fn sample(&self, id: SampleId) -> SampleRef<'_> {
        self.branches[id.branch as usize].sample(id.sample as usize)
    }

    fn coord(&self, id: SampleId) -> &[f64] {
        self.branches[id.branch as usize].x(id.sample as usize)
    }

    /// Nearest sample within `max_dist` (any distance when infinite).
    pub fn nearest(&self, x: &[f64], max_dist: f64) -> Option<(SampleId, f64)> {
        self.index.nearest(x, max_dist, |id| dist(self.coord(id), x))
    }

    /// Samples within `radius`, nearest first.
    pub fn within(&self, x: &[f64], radius: f64) -> Vec<(SampleId, f64)> {
        self.index.within(x, radius, |id| dist(self.coord(id), x))
    }

    /// Nearest sample within the query radius.
    pub fn query(&self, x: &[f64]) -> Result<QueryHit, ManifoldError> {
        match self.nearest(x, self.radius) {
            Some((id, d)) => {
                let s = self.sample(id);
                Ok(QueryHit { id, nu: s.nu.to_vec(), w: s.w, u: s.u.to_vec(), distance: d })
            }
            None => Err(ManifoldError::NotCovered { distance: self.nearest(x, 64.0 * self.radius).map(|(_, d)| d) }),
        }
    }

    /// Mesh interpolation of `(nu, W)` at a planar point, if some mesh
    /// triangle contains it.
    pub fn interpolate(&self, x: &[f64]) -> Option<MeshHit> {
        let (start, _) = self.nearest(x, 64.0 * self.radius)?;
        self.walk(x, start)
    }

    /// Like [`interpolate`](Self::interpolate), starting the walk at a known
    /// nearby sample.
    pub(crate) fn interpolate_from(&self, x: &[f64], start: SampleId) -> Option<MeshHit> {
        self.walk(x, start)
    }

    /// Whether `x` is covered by the projection: a sample within the query
    /// radius or a containing mesh triangle.
    pub fn covers(&self, x: &[f64]) -> bool {
        self.nearest(x, self.radius).is_some() || self.interpolate(x).is_some()
    }

    pub fn illumination_check(&self, lyap: &LyapunovSpec, points: &[Vec<f64>]) -> Result<Vec<Illumination>, ManifoldError> {
        points
            .iter()
            .map(|p| {
                Ok(if lyap.value(p)? <= self.epsilon {
                    Illumination::Inner
                } else if self.covers(p) {
                    Illumination::Illuminated
                } else {
                    Illumination::Dark
                })
            })
            .collect()
    }

    /// `det(dx/dpsi, dx/dtau)` on branch `b` at `tau` (planar manifolds).
    /// `dx/dpsi` is a central difference of the neighbouring branches
    /// interpolated to the same `tau`.
    pub fn jacobian_along(&self, sys: &ControlSystem, b: usize, tau: f64) -> Result<f64, ManifoldError> {
        if self.n != 2 {
            return Err(SystemError::NotPlanar.into());
        }
        let nb = self.branches.len();
        let br = self.branch(b)?;
        let (x, nu) = br.state_at(sys, tau)?;
        let u = br.control_at(tau).ok_or(ManifoldError::TauOutOfRange { tau, last: br.last_tau() })?;
        let mut dx = vec![0.0; 2];
        let mut dnu = vec![0.0; 2];
        frozen_rhs(sys, 0.0, &x, &nu, u, Direction::Reversed, &mut dx, &mut dnu)?;
        let (prev, next) = (&self.branches[(b + nb - 1) % nb], &self.branches[(b + 1) % nb]);
        let (xp, _) = prev.state_at(sys, tau).map_err(|_| ManifoldError::NoNeighbours)?;
        let (xn, _) = next.state_at(sys, tau).map_err(|_| ManifoldError::NoNeighbours)?;
        let mut dpsi = next.seed.psi - prev.seed.psi;
        if dpsi <= 0.0 {
            dpsi += 2.0 * PI;
        }
        let xpsi = [(xn[0] - xp[0]) / dpsi, (xn[1] - xp[1]) / dpsi];
        Ok(det2(&xpsi, &dx))
    }

    /// All switches, grouped into curves: a new curve starts when the switch
    /// ordinal changes or a branch without that switch interrupts the run.
    /// Curves are ordered by switch ordinal then seed angle.
    pub fn switching_curve(&self) -> Vec<Vec<SwitchPoint>> {
        let nb = self.branches.len();
        let max_ord = self.branches.iter().map(|b| switches(b).count()).max().unwrap_or(0);
        let mut curves = Vec::new();
        for ord in 0..max_ord {
            let mut cur: Vec<SwitchPoint> = Vec::new();
            let mut runs: Vec<Vec<SwitchPoint>> = Vec::new();
            for (k, br) in self.branches.iter().enumerate() {
                match switches(br).nth(ord) {
                    Some(e) => cur.push(SwitchPoint { x: e.x.clone(), branch: k, psi: br.seed.psi, tau: e.tau }),
                    None => {
                        if !cur.is_empty() {
                            runs.push(core::mem::take(&mut cur));
                        }
                    }
                }
            }
            if !cur.is_empty() {
                // join a run that wraps past psi = 2 pi
                match runs.first_mut() {
                    Some(first) if first[0].branch == 0 && cur.last().is_some_and(|p| p.branch == nb - 1) => {
                        cur.append(first);
                        *first = cur;
                    }
                    _ => runs.push(cur),
                }
            }
            curves.extend(runs);
        }
        curves
    }

    /// Largest mismatch between `W(psi_{k+1}) - W(psi_k)` and the integral of
    /// `<nu, dx/dpsi>` across the gap, over all grid times up to `tau_limit`.
    /// Zero up to discretization error when `nu . dx` vanishes on the
    /// manifold. Gaps whose stencil straddles a switch or a missing sample are
    /// skipped.
    pub fn path_independence_defect(&self, tau_limit: f64) -> PathDefect {
        let nb = self.branches.len();
        let mut out = PathDefect { max: 0.0, at: None, checked: 0 };
        if self.n != 2 || nb < MIN_SEEDS {
            return out;
        }
        let dpsi = 2.0 * PI / nb as f64;
        let jmax = libm::floor(tau_limit / self.sample_dt + 1e-9) as usize;
        let at = |k: isize, j: usize| -> Option<SampleRef<'_>> {
            let br = &self.branches[k.rem_euclid(nb as isize) as usize];
            br.grid_sample(j).map(|s| br.sample(s))
        };
        let switched = |k: isize, tau: f64| -> usize {
            switches(&self.branches[k.rem_euclid(nb as isize) as usize]).filter(|e| e.tau <= tau).count()
        };
        for j in 0..=jmax {
            for k in 0..nb as isize {
                let stencil: Option<Vec<SampleRef<'_>>> = (-3..=4).map(|d| at(k + d, j)).collect();
                let Some(st) = stencil else { continue };
                let tau = st[0].tau;
                let c = switched(k - 3, tau);
                if (-2..=4).any(|d| switched(k + d, tau) != c) {
                    continue;
                }
                // st[i] is branch k + i - 3
                let xpsi = |i: usize| -> [f64; 2] {
                    let mut v = [0.0; 2];
                    for (d, w) in [(-2isize, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)] {
                        let x = st[(i as isize + d) as usize].x;
                        v[0] += w * x[0];
                        v[1] += w * x[1];
                    }
                    [v[0] / (12.0 * dpsi), v[1] / (12.0 * dpsi)]
                };
                // integrand g at branches k-1, k, k+1, k+2
                let g: Vec<f64> = (2..=5).map(|i| dot(st[i].nu, &xpsi(i))).collect();
                let dg0 = (g[2] - g[0]) / (2.0 * dpsi);
                let dg1 = (g[3] - g[1]) / (2.0 * dpsi);
                let integral = 0.5 * dpsi * (g[1] + g[2]) + dpsi * dpsi / 12.0 * (dg0 - dg1);
                let defect = (st[4].w - st[3].w - integral).abs();
                out.checked += 1;
                if defect > out.max {
                    out.max = defect;
                    out.at = Some((k as usize, tau));
                }
            }
        }
        out
    }

    /// Compares two routes from seed `a` to the grid sample `(b, j)`: along
    /// branch `b` directly, versus along branch `a` to the same grid time and
    /// then across branches at constant `tau` by integrating `<nu, dx/dpsi>`.
    /// Returns `|W_b - (W_a + integral)|`, or `None` when a needed sample is
    /// missing.
    pub fn two_path_defect(&self, a: usize, b: usize, j: usize) -> Option<f64> {
        let nb = self.branches.len();
        if self.n != 2 || nb < MIN_SEEDS || a >= nb || b >= nb {
            return None;
        }
        let dpsi = 2.0 * PI / nb as f64;
        let at = |k: isize| -> Option<SampleRef<'_>> {
            let br = &self.branches[k.rem_euclid(nb as isize) as usize];
            br.grid_sample(j).map(|s| br.sample(s))
        };
        let g = |k: isize| -> Option<f64> {
            let mut v = [0.0; 2];
            for (d, w) in [(-2isize, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)] {
                let x = at(k + d)?.x;
                v[0] += w * x[0];
                v[1] += w * x[1];
            }
            let nu = at(k)?.nu;
            Some((nu[0] * v[0] + nu[1] * v[1]) / (12.0 * dpsi))
        };
        // walk forward in psi from a to b
        let steps = (b + nb - a) % nb;
        let mut integral = 0.0;
        for i in 0..steps as isize {
            let k = a as isize + i;
            let (gm, g0, g1, g2) = (g(k - 1)?, g(k)?, g(k + 1)?, g(k + 2)?);
            let (d0, d1) = ((g1 - gm) / (2.0 * dpsi), (g2 - g0) / (2.0 * dpsi));
            integral += 0.5 * dpsi * (g0 + g1) + dpsi * dpsi / 12.0 * (d0 - d1);
        }
        Some((at(b as isize)?.w - at(a as isize)?.w - integral).abs())
    }

    /// Runs the forward flow from a stored sample for its `tau` and returns
    /// the distance in `(x, nu)` to the branch seed.
    pub fn reversal_defect(&self, sys: &ControlSystem, id: SampleId, opts: &ManifoldOptions) -> Result<f64, ManifoldError> {
        let br = self.branch(id.branch as usize)?;
        let s = br.sample(id.sample as usize);
        let end = run_flow(sys, s.x, s.nu, s.tau, Direction::Forward, opts)?;
        let dx = dist(&end.x, &br.seed.x0);
        let dnu = dist(&end.nu, &br.seed.nu0);
        Ok(dx.max(dnu))
    }

    /// Largest `|S(tau) - S(0)|` along each branch.
    pub fn hamiltonian_drift(&self) -> Vec<f64> {
        self.branches
            .iter()
            .map(|b| {
                let s0 = b.sample(0).s;
                b.samples().map(|s| (s.s - s0).abs()).filter(|d| d.is_finite()).fold(0.0, f64::max)
            })
            .collect()
    }

    /// Largest state norm over all samples.
    pub fn extent(&self) -> f64 {
        self.branches.iter().flat_map(|b| b.samples()).map(|s| norm(s.x)).fold(0.0, f64::max)
    }
}

/// Outcome of [`LagrangianManifold::path_independence_defect`].
#[derive(Clone, Debug, PartialEq)]
pub struct PathDefect {
    pub max: f64,
    /// Branch and grid time of the largest defect.
    pub at: Option<(usize, f64)>,
    pub checked: usize,
}

fn switches(b: &Bicharacteristic) -> impl Iterator<Item = &BranchEvent> {
    b.events.iter().filter(|e| e.kind == EventKind::Switch)
}

/// Median distance between neighbouring branches at equal grid times.
fn spacing_median(branches: &[Bicharacteristic]) -> Option<f64> {
    let nb = branches.len();
    let mut d = Vec::new();
    if nb < 2 {
        return None;
    }
    if branches[0].seed.x0.len() == 1 {
        // the two ends of an interval move apart; use spacing along branches
        for br in branches {
            for i in 1..br.len() {
                d.push(dist(br.x(i), br.x(i - 1)));
            }
        }
        return median(d).filter(|m| *m > 0.0);
    }
    for k in 0..nb {
        let (a, b) = (&branches[k], &branches[(k + 1) % nb]);
        for j in 0..a.grid_len().min(b.grid_len()) {
            let (sa, sb) = (a.grid_sample(j)?, b.grid_sample(j)?);
            d.push(dist(a.x(sa), b.x(sb)));
        }
    }
    median(d).filter(|m| *m > 0.0)
}

#[cfg(test)]
mod tests;
