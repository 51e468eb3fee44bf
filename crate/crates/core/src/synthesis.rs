//! Composite feedback: a user-supplied law inside the level set `V <= epsilon`
//! and the bang-bang law read off the manifold outside it.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::expr::{Expr, Func, Var};
use crate::hamiltonian::minimize_hamiltonian;
use crate::manifold::{seed_manifold, LagrangianManifold, ManifoldError, SampleId};
use crate::systems::{dot, lattice, norm, ControlSet, ControlSystem, Dynamics, LyapunovSpec, SystemError};

#[derive(Clone, Debug, PartialEq)]
pub enum SynthesisError {
    System(SystemError),
    Manifold(ManifoldError),
    /// The inner law increases `V` at `at`.
    DecreaseViolation { at: Vec<f64>, value: f64 },
    EmptyManifold,
    InnerLawDimension { expected: usize, found: usize },
    InvalidAmplitude(f64),
    InvalidBound(f64),
    /// A curve parameter outside `(pi/2, pi) U (3pi/2, 2pi)`.
    ParameterOutOfRange(f64),
}

impl fmt::Display for SynthesisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthesisError::System(e) => write!(f, "{e}"),
            SynthesisError::Manifold(e) => write!(f, "{e}"),
            SynthesisError::DecreaseViolation { at, value } => {
                write!(f, "inner law increases V at {at:?} (dV/dt = {value})")
            }
            SynthesisError::EmptyManifold => write!(f, "manifold has no samples beyond its seeds"),
            SynthesisError::InnerLawDimension { expected, found } => {
                write!(f, "inner law has {found} components, system has {expected} inputs")
            }
            SynthesisError::InvalidAmplitude(k) => write!(f, "outer amplitude {k} must be positive and finite"),
            SynthesisError::InvalidBound(c) => write!(f, "control bound {c} must be positive and finite"),
            SynthesisError::ParameterOutOfRange(t) => {
                write!(f, "curve parameter {t} is outside (pi/2, pi) and (3pi/2, 2pi)")
            }
        }
    }
}

impl core::error::Error for SynthesisError {}

impl From<SystemError> for SynthesisError {
    fn from(e: SystemError) -> Self {
        SynthesisError::System(e)
    }
}

impl From<ManifoldError> for SynthesisError {
    fn from(e: ManifoldError) -> Self {
        SynthesisError::Manifold(e)
    }
}

impl From<crate::expr::EvalError> for SynthesisError {
    fn from(e: crate::expr::EvalError) -> Self {
        SynthesisError::System(e.into())
    }
}

/// Piece of the composite law active at a point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Region {
    /// Inside the level set; signs of the inner law's `abs`/`sign` arguments.
    Inner(Vec<i8>),
    /// Outside, box control: signs of the interpolated switching functions.
    Outer(Vec<i8>),
    /// Outside, other control sets: bit patterns of the selected control.
    OuterControl(Vec<u64>),
}

/// Where the covector for an outer point came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovectorSource {
    /// Linear interpolation inside a mesh triangle.
    Mesh,
    /// The nearest sample within the query radius.
    Nearest,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuterQuery {
    pub nu: Vec<f64>,
    pub w: f64,
    pub source: CovectorSource,
    pub nearest: SampleId,
    pub distance: f64,
    /// Samples from a distant part of the seed set also project here.
    pub multi_valued: bool,
}

/// Diagnostics gathered while assembling a law.
#[derive(Clone, Debug, PartialEq)]
pub struct AssemblyReport {
    /// Largest `<grad V, f(x, w(x))>` on the level set (negative = strict decrease).
    pub boundary_margin: f64,
    /// Largest `|w(x)|` (max norm) over the sampled sublevel set.
    pub inner_max: f64,
    pub checked_points: usize,
}

/// A switch event with the forward field on its pre-switch side.
#[derive(Clone, Copy, Debug)]
struct CurveNode {
    x: [f64; 2],
    pre: [f64; 2],
    u_pre: f64,
    u_post: f64,
}

/// Closest point of a switch curve.
struct CurveHit {
    normal: [f64; 2],
    /// `x` lies on the pre-switch side.
    pre_side: Option<bool>,
    u_pre: f64,
    u_post: f64,
}

fn curve_nodes(sys: &ControlSystem, manifold: &LagrangianManifold) -> Result<Vec<Vec<CurveNode>>, SynthesisError> {
    let mut out = Vec::new();
    for curve in manifold.switching_curve() {
        let mut nodes = Vec::with_capacity(curve.len());
        for p in &curve {
            let br = manifold.branch(p.branch)?;
            let Some(e) = br.events.iter().find(|e| e.tau == p.tau && e.sample > 0) else { continue };
            let (u_pre, u_post) = (br.sample(e.sample - 1).u[0], br.sample(e.sample).u[0]);
            let f = sys.eval_dynamics(0.0, &p.x, &[u_pre])?;
            nodes.push(CurveNode { x: [p.x[0], p.x[1]], pre: [f[0], f[1]], u_pre, u_post });
        }
        if nodes.len() >= 2 {
            out.push(nodes);
        }
    }
    Ok(out)
}

/// The composite law. Immutable once assembled.
#[derive(Clone, Debug)]
pub struct FeedbackLaw {
    sys: ControlSystem,
    lyap: LyapunovSpec,
    inner: Vec<Expr>,
    inner_kinks: Vec<Vec<(Func, Expr, Vec<Expr>)>>,
    manifold: LagrangianManifold,
    /// Switch events in order along each curve, planar single-input only.
    switch_curves: Vec<Vec<CurveNode>>,
    amplitude: Option<f64>,
    bound: f64,
    report: AssemblyReport,
}

const DECREASE_TOL: f64 = 1e-12;

/// Radius of a box that contains the sublevel set `V <= epsilon`.
fn sublevel_radius(lyap: &LyapunovSpec) -> Result<f64, SynthesisError> {
    let seeds = seed_manifold(lyap, if lyap.dim() == 2 { 256 } else { 8 })?;
    Ok(seeds.iter().map(|s| norm(&s.x0)).fold(0.0, f64::max))
}

const DEGENERATE_SIGMA: f64 = 1e-9;

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Checks the inner law and builds the composite feedback. `amplitude`
/// selects `u_j = -k sgn sigma_j` outside (box control sets only); `None`
/// uses the Hamiltonian minimizer over the control set.
pub fn assemble_feedback(
    sys: &ControlSystem,
    lyap: &LyapunovSpec,
    inner: Vec<Expr>,
    manifold: LagrangianManifold,
    amplitude: Option<f64>,
    bound: f64,
) -> Result<FeedbackLaw, SynthesisError> {
    let n = sys.n();
    if inner.len() != sys.m() {
        return Err(SynthesisError::InnerLawDimension { expected: sys.m(), found: inner.len() });
    }
    if lyap.dim() != n {
        return Err(SystemError::Dimension { expected: n, found: lyap.dim(), what: "Lyapunov function" }.into());
    }
    if let Some(k) = amplitude {
        if !(k > 0.0 && k.is_finite()) {
            return Err(SynthesisError::InvalidAmplitude(k));
        }
    }
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(SynthesisError::InvalidBound(bound));
    }
    if manifold.branches().iter().all(|b| b.len() < 2) {
        return Err(SynthesisError::EmptyManifold);
    }

    let eps = lyap.epsilon();
    let radius = sublevel_radius(lyap)? * 1.0001;
    let per_axis = match n {
        1 => 2001,
        2 => 161,
        3 => 31,
        _ => 9,
    };
    let decrease = |x: &[f64]| -> Result<(f64, f64), SynthesisError> {
        let w: Vec<f64> = inner.iter().map(|e| e.eval(x, &[], 0.0)).collect::<Result<_, _>>()?;
        let f = sys.eval_dynamics(0.0, x, &w)?;
        let g = lyap.gradient(x)?;
        Ok((dot(&g, &f), (norm(&g) * norm(&f)).max(1.0) * DECREASE_TOL ))
    };
    let mut inner_max = 0.0f64;
    let mut checked = 0;
    for x in lattice(n, radius, per_axis) {
        let v = lyap.value(&x)?;
        if !(v > 0.0 && v <= eps) {
            continue;
        }
        let (d, tol) = decrease(&x)?;
        checked += 1;
        if d > tol {
            return Err(SynthesisError::DecreaseViolation { at: x, value: d });
        }
        for e in &inner {
            inner_max = inner_max.max(e.eval(&x, &[], 0.0)?.abs());
        }
    }
    let mut boundary_margin = f64::NEG_INFINITY;
    for s in seed_manifold(lyap, if n == 2 { 720 } else { 8 })? {
        let (d, tol) = decrease(&s.x0)?;
        checked += 1;
        if d > tol {
            return Err(SynthesisError::DecreaseViolation { at: s.x0, value: d });
        }
        boundary_margin = boundary_margin.max(d);
        for e in &inner {
            inner_max = inner_max.max(e.eval(&s.x0, &[], 0.0)?.abs());
        }
    }

    let inner_kinks = inner
        .iter()
        .map(|e| {
            let mut kinds = Vec::new();
            e.kink_kinds(&mut kinds);
            kinds
                .into_iter()
                .zip(e.kink_arguments())
                .map(|(k, a)| (k, a.clone(), (0..n).map(|i| a.diff(Var::State(i)).expr).collect()))
                .collect()
        })
        .collect();
    let switch_curves = if n == 2 && sys.m() == 1 { curve_nodes(sys, &manifold)? } else { Vec::new() };
    Ok(FeedbackLaw {
        sys: sys.clone(),
        lyap: lyap.clone(),
        inner,
        inner_kinks,
        manifold,
        switch_curves,
        amplitude,
        bound,
        report: AssemblyReport { boundary_margin, inner_max, checked_points: checked },
    })
}

/// How the law changes across a region boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    /// The control is continuous (a kink of `abs`).
    Continuous,
    /// The control jumps.
    Jump,
}

impl FeedbackLaw {
    pub fn system(&self) -> &ControlSystem {
        &self.sys
    }

    pub fn lyapunov(&self) -> &LyapunovSpec {
        &self.lyap
    }

    pub fn inner(&self) -> &[Expr] {
        &self.inner
    }

    pub fn manifold(&self) -> &LagrangianManifold {
        &self.manifold
    }

    pub fn amplitude(&self) -> Option<f64> {
        self.amplitude
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn report(&self) -> &AssemblyReport {
        &self.report
    }

    pub fn is_inner(&self, x: &[f64]) -> Result<bool, SynthesisError> {
        Ok(self.lyap.value(x)? <= self.lyap.epsilon())
    }

    /// Covector used for the outer law at `x`: mesh interpolation when a
    /// triangle contains `x`, else the nearest sample within the query radius.
    pub fn outer_covector(&self, x: &[f64]) -> Result<OuterQuery, SynthesisError> {
        let man = &self.manifold;
        let radius = man.query_radius();
        let near = man.nearest(x, 64.0 * radius);
        let mesh = near.and_then(|(id, _)| man.interpolate_from(x, id).map(|h| (id, h)));
        let (mut q, nearest_id) = match (mesh, near) {
            (Some((id, hit)), Some((_, d))) => (
                OuterQuery { nu: hit.nu.to_vec(), w: hit.w, source: CovectorSource::Mesh, nearest: id, distance: d, multi_valued: false },
                id,
            ),
            (None, Some((id, d))) if d <= radius => {
                let s = man.sample(id);
                (
                    OuterQuery { nu: s.nu.to_vec(), w: s.w, source: CovectorSource::Nearest, nearest: id, distance: d, multi_valued: false },
                    id,
                )
            }
            (_, other) => return Err(ManifoldError::NotCovered { distance: other.map(|(_, d)| d) }.into()),
        };
        // another sheet of the projection: samples close to a point inside the
        // mesh whose seeds are far from the nearest one along the seed set
        let nb = man.branches().len();
        if nb >= 16 && q.source == CovectorSource::Mesh {
            let home = nearest_id.branch as usize;
            let far = man
                .within(x, 0.5 * radius)
                .into_iter()
                .filter(|(id, _)| {
                    let d = (id.branch as usize + nb - home) % nb;
                    d.min(nb - d) > nb / 8
                })
                .min_by(|a, b| man.sample(a.0).w.total_cmp(&man.sample(b.0).w));
            if let Some((id, d)) = far {
                q.multi_valued = true;
                let s = man.sample(id);
                if s.w < q.w {
                    q = OuterQuery { nu: s.nu.to_vec(), w: s.w, source: CovectorSource::Nearest, nearest: id, distance: d, multi_valued: true };
                }
            }
        }
        self.align_with_curve(x, &mut q.nu)?;
        Ok(q)
    }

    /// Next to a switch curve the interpolated covector can put `x` on the
    /// wrong side; the exact events decide, by reflecting the `b` component.
    fn align_with_curve(&self, x: &[f64], nu: &mut [f64]) -> Result<(), SynthesisError> {
        let Some(hit) = self.nearest_curve(x) else { return Ok(()) };
        let Some(pre) = hit.pre_side else { return Ok(()) };
        if hit.u_pre == hit.u_post {
            return Ok(());
        }
        let (u, other) = if pre { (hit.u_pre, hit.u_post) } else { (hit.u_post, hit.u_pre) };
        // the minimizer takes the upper bound where sigma < 0
        let target = if u > other { -1 } else { 1 };
        let b = self.sys.column(0, 0.0, x)?;
        let (sigma, bb) = (dot(nu, &b), dot(&b, &b));
        if sign(sigma) == -target && bb > 0.0 {
            for (v, bi) in nu.iter_mut().zip(&b) {
                *v -= 2.0 * sigma * bi / bb;
            }
        }
        Ok(())
    }

    fn box_affine(&self) -> bool {
        matches!((self.sys.dynamics(), self.sys.omega()), (Dynamics::Affine { .. }, ControlSet::Box { .. }))
    }

    /// Interpolated switching functions `<nu~, b_j(x)>`.
    pub fn outer_switching(&self, x: &[f64]) -> Result<(Vec<f64>, OuterQuery), SynthesisError> {
        let q = self.outer_covector(x)?;
        let stored = self.manifold.sample(q.nearest).u;
        let sigma = (0..self.sys.m())
            .map(|j| {
                let b = self.sys.column(j, 0.0, x)?;
                let s = dot(&q.nu, &b);
                // a covector orthogonal to b_j carries no sign; fall back to
                // the control the branch resolved from the derivative
                Ok(if s.abs() <= DEGENERATE_SIGMA * norm(&q.nu) * norm(&b) { -stored[j] } else { s })
            })
            .collect::<Result<_, SystemError>>()?;
        Ok((sigma, q))
    }

    pub fn region(&self, x: &[f64]) -> Result<Region, SynthesisError> {
        if self.is_inner(x)? {
            let mut pattern = Vec::new();
            for e in &self.inner {
                e.eval_recording(x, &[], 0.0, &mut pattern)?;
            }
            return Ok(Region::Inner(pattern));
        }
        if self.box_affine() && self.amplitude.is_some() {
            let (sigma, _) = self.outer_switching(x)?;
            Ok(Region::Outer(sigma.into_iter().map(sign).collect()))
        } else {
            let u = self.outer_control(x)?;
            Ok(Region::OuterControl(u.into_iter().map(f64::to_bits).collect()))
        }
    }

    fn outer_control(&self, x: &[f64]) -> Result<Vec<f64>, SynthesisError> {
        match self.amplitude {
            Some(k) if self.box_affine() => {
                let (sigma, q) = self.outer_switching(x)?;
                let stored = self.manifold.sample(q.nearest).u;
                Ok(sigma
                    .iter()
                    .zip(stored)
                    .map(|(&s, &u)| match sign(s) {
                        0 => u,
                        sg => -k * f64::from(sg),
                    })
                    .collect())
            }
            _ => Ok(minimize_hamiltonian(&self.sys, 0.0, x, &self.outer_covector(x)?.nu, &Default::default())?.u),
        }
    }

    /// The law's control at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, SynthesisError> {
        if self.is_inner(x)? {
            Ok(self.inner.iter().map(|e| e.eval(x, &[], 0.0)).collect::<Result<_, _>>()?)
        } else {
            self.outer_control(x)
        }
    }

    /// The smooth extension of the law piece `region` evaluated at `x`
    /// (which may lie slightly outside that region).
    pub fn control_in(&self, region: &Region, x: &[f64]) -> Result<Vec<f64>, SynthesisError> {
        match region {
            Region::Inner(pattern) => {
                let mut out = Vec::with_capacity(self.inner.len());
                let mut offset = 0;
                for e in &self.inner {
                    let k = e.kink_count();
                    out.push(e.eval_with_pattern(x, &[], 0.0, &pattern[offset..offset + k])?);
                    offset += k;
                }
                Ok(out)
            }
            Region::Outer(signs) => {
                let k = self.amplitude.unwrap_or(1.0);
                if signs.iter().any(|s| *s == 0) {
                    let stored = self.manifold.sample(self.outer_covector(x)?.nearest).u;
                    Ok(signs.iter().zip(stored).map(|(&s, &u)| if s == 0 { u } else { -k * f64::from(s) }).collect())
                } else {
                    Ok(signs.iter().map(|&s| -k * f64::from(s)).collect())
                }
            }
            Region::OuterControl(bits) => Ok(bits.iter().map(|&b| f64::from_bits(b)).collect()),
        }
    }

    /// Normal of the boundary between two regions at `x`, pointing from
    /// `from` towards `to` is not guaranteed; callers orient it.
    pub fn boundary_normal(&self, from: &Region, to: &Region, x: &[f64]) -> Result<Option<Vec<f64>>, SynthesisError> {
        match (from, to) {
            (Region::Inner(a), Region::Inner(b)) => {
                let idx = a.iter().zip(b).position(|(p, q)| p != q);
                Ok(match idx.and_then(|i| self.inner_kinks.iter().flatten().nth(i)) {
                    Some((_, _, grad)) => Some(grad.iter().map(|g| g.eval(x, &[], 0.0)).collect::<Result<_, _>>()?),
                    None => None,
                })
            }
            (Region::Inner(_), _) | (_, Region::Inner(_)) => Ok(Some(self.lyap.gradient(x)?)),
            (Region::Outer(a), Region::Outer(b)) => {
                let Some(j) = a.iter().zip(b).position(|(p, q)| p != q) else { return Ok(None) };
                Ok(self.nearest_curve(x).map(|h| h.normal.to_vec()).or_else(|| self.switching_gradient(j, x)))
            }
            _ => Ok(None),
        }
    }

    /// The switch-event curve near `x`: its normal from a cubic through the
    /// four events around the closest segment, and the side `x` is on.
    fn nearest_curve(&self, x: &[f64]) -> Option<CurveHit> {
        let mut best: Option<(usize, usize, f64, f64, f64)> = None;
        for (c, pts) in self.switch_curves.iter().enumerate() {
            for i in 0..pts.len() - 1 {
                let (p, q) = (pts[i].x, pts[i + 1].x);
                let d = [q[0] - p[0], q[1] - p[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                let t = if len2 > 0.0 { (((x[0] - p[0]) * d[0] + (x[1] - p[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let dist = libm::hypot(x[0] - p[0] - t * d[0], x[1] - p[1] - t * d[1]);
                if best.is_none_or(|b| dist < b.3) {
                    best = Some((c, i, t, dist, libm::sqrt(len2)));
                }
            }
        }
        let (c, i, t, dist, len) = best?;
        let pts = &self.switch_curves[c];
        let band = len.max(self.manifold.query_radius());
        if dist > band {
            return None;
        }
        let lo = i.saturating_sub(1);
        let hi = (i + 2).min(pts.len() - 1);
        let at = (i - lo) as f64 + t;
        let nodes: Vec<f64> = (0..=hi - lo).map(|k| k as f64).collect();
        let mut tangent = [0.0; 2];
        for (j, &nj) in nodes.iter().enumerate() {
            // derivative of the j-th Lagrange basis polynomial at `at`
            let mut dl = 0.0;
            for (k, &nk) in nodes.iter().enumerate() {
                if k == j {
                    continue;
                }
                let mut term = 1.0 / (nj - nk);
                for (l, &nl) in nodes.iter().enumerate() {
                    if l != j && l != k {
                        term *= (at - nl) / (nj - nl);
                    }
                }
                dl += term;
            }
            tangent[0] += dl * pts[lo + j].x[0];
            tangent[1] += dl * pts[lo + j].x[1];
        }
        if tangent == [0.0, 0.0] {
            return None;
        }
        let normal = [-tangent[1], tangent[0]];
        let (a, b) = (&pts[i], &pts[i + 1]);
        let foot = [a.x[0] + t * (b.x[0] - a.x[0]), a.x[1] + t * (b.x[1] - a.x[1])];
        let pre = [a.pre[0] + t * (b.pre[0] - a.pre[0]), a.pre[1] + t * (b.pre[1] - a.pre[1])];
        let side = normal[0] * (x[0] - foot[0]) + normal[1] * (x[1] - foot[1]);
        let pre_dir = normal[0] * pre[0] + normal[1] * pre[1];
        // past either end of the curve, or a field tangent to it: no side
        let interior = (t > 0.0 || i > 0) && (t < 1.0 || i + 2 < pts.len());
        let consistent = a.u_post == b.u_post && a.u_pre == b.u_pre;
        let pre_side = (interior && consistent && side != 0.0 && pre_dir != 0.0).then_some((side > 0.0) == (pre_dir > 0.0));
        Some(CurveHit { normal, pre_side, u_pre: a.u_pre, u_post: a.u_post })
    }

    /// Central-difference gradient of the interpolated switching function `j`.
    fn switching_gradient(&self, j: usize, x: &[f64]) -> Option<Vec<f64>> {
        let h = 0.25 * self.manifold.query_radius().min(1.0);
        let n = x.len();
        let mut grad = vec![0.0; n];
        let mut p = x.to_vec();
        for i in 0..n {
            p[i] = x[i] + h;
            let a = self.outer_switching(&p).ok()?.0[j];
            p[i] = x[i] - h;
            let b = self.outer_switching(&p).ok()?.0[j];
            p[i] = x[i];
            grad[i] = (a - b) / (2.0 * h);
        }
        (norm(&grad) > 0.0).then_some(grad)
    }

    pub fn boundary_kind(&self, from: &Region, to: &Region) -> BoundaryKind {
        match (from, to) {
            (Region::Inner(a), Region::Inner(b)) => {
                let kinks: Vec<Func> = self.inner_kinks.iter().flatten().map(|k| k.0).collect();
                let jump = a.iter().zip(b).enumerate().any(|(i, (p, q))| p != q && kinks.get(i) == Some(&Func::Sign));
                if jump {
                    BoundaryKind::Jump
                } else {
                    BoundaryKind::Continuous
                }
            }
            _ => BoundaryKind::Jump,
        }
    }
}

/// Outcome of [`verify_bound`].
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub max_abs: f64,
    pub argmax: Option<Vec<f64>>,
    /// Points where some `|u_j| > C`, with the control found there.
    pub violations: Vec<(Vec<f64>, Vec<f64>)>,
    pub uncovered: usize,
    pub evaluated: usize,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples `|u(x)|` over `points` against the law's bound.
pub fn verify_bound(law: &FeedbackLaw, points: &[Vec<f64>]) -> Result<BoundReport, SynthesisError> {
    let mut r = BoundReport { max_abs: 0.0, argmax: None, violations: Vec::new(), uncovered: 0, evaluated: 0 };
    for x in points {
        let u = match law.eval(x) {
            Ok(u) => u,
            Err(SynthesisError::Manifold(ManifoldError::NotCovered { .. })) => {
                r.uncovered += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        r.evaluated += 1;
        let m = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if m > r.max_abs || r.argmax.is_none() {
            r.max_abs = m.max(r.max_abs);
            r.argmax = Some(x.clone());
        }
        if m > law.bound() * (1.0 + 1e-12) {
            r.violations.push((x.clone(), u));
        }
    }
    Ok(r)
}

/// Uniform grid with `per_axis` points per axis on the box `[lo, hi]`.
pub fn grid_points(lo: &[f64], hi: &[f64], per_axis: usize) -> Vec<Vec<f64>> {
    let n = lo.len();
    let per_axis = per_axis.max(1);
    let total = per_axis.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|d| {
                    let k = idx % per_axis;
                    idx /= per_axis;
                    if per_axis == 1 {
                        0.5 * (lo[d] + hi[d])
                    } else {
                        lo[d] + (hi[d] - lo[d]) * k as f64 / (per_axis - 1) as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// A point of the double-integrator switching curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub x: [f64; 2],
    /// The parameter is within `1e-3` (in `|cos|`) of an asymptote.
    pub near_asymptote: bool,
}

/// Closed-form switching curve of the double integrator `x1' = x2, x2' = u`,
/// `|u| <= 1`, for characteristics emitted from the circle of radius `radius`
/// with covector along the outward normal, parametrized by the seed angle.
pub fn reference_switching_curve_with_radius(radius: f64, taus: &[f64]) -> Result<Vec<CurvePoint>, SynthesisError> {
    taus.iter()
        .map(|&t| {
            let in_range = (t > PI / 2.0 && t < PI) || (t > 1.5 * PI && t < 2.0 * PI);
            if !in_range {
                return Err(SynthesisError::ParameterOutOfRange(t));
            }
            let (s, c) = (libm::sin(t), libm::cos(t));
            let x1 = -s * s.abs() / (2.0 * c * c) + radius * (s * s / c + c);
            let x2 = -s.abs() / c + radius * s;
            Ok(CurvePoint { x: [x1, x2], near_asymptote: c.abs() < 1e-3 })
        })
        .collect()
}

/// [`reference_switching_curve_with_radius`] on the unit circle.
pub fn reference_switching_curve(taus: &[f64]) -> Result<Vec<CurvePoint>, SynthesisError> {
    reference_switching_curve_with_radius(1.0, taus)
}

/// Distance from `p` to a polyline.
pub fn distance_to_polyline(p: &[f64; 2], line: &[[f64; 2]]) -> f64 {
    match line {
        [] => f64::INFINITY,
        [a] => libm::hypot(p[0] - a[0], p[1] - a[1]),
        _ => line
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let d = [b[0] - a[0], b[1] - a[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                let t = if len2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
                libm::hypot(p[0] - a[0] - t * d[0], p[1] - a[1] - t * d[1])
            })
            .fold(f64::INFINITY, f64::min),
    }
}
