//! Piecewise-linear interpolation over the (branch, grid time) mesh of a
//! planar manifold.
//!
//! Cell `(k, j)` spans branches `k, k + 1` and grid times `j, j + 1` and is
//! split into a lower and an upper triangle. Branch indices wrap around.

use super::index::SampleId;
use super::LagrangianManifold;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Triangle {
    Lower { branch: usize, step: usize },
    Upper { branch: usize, step: usize },
}

/// Result of locating a point in the mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshHit {
    pub triangle: Triangle,
    pub vertices: [SampleId; 3],
    pub weights: [f64; 3],
    pub nu: [f64; 2],
    pub w: f64,
}

const INSIDE_TOL: f64 = 1e-12;

impl LagrangianManifold {
    fn mesh_vertex(&self, k: isize, j: isize) -> Option<SampleId> {
        let nb = self.branches.len() as isize;
        if j < 0 || nb == 0 {
            return None;
        }
        let b = k.rem_euclid(nb) as usize;
        let s = self.branches[b].grid_sample(j as usize)?;
        Some(SampleId { branch: b as u32, sample: s as u32 })
    }

    fn triangle_vertices(&self, t: Triangle) -> Option<[SampleId; 3]> {
        let (k, j) = match t {
            Triangle::Lower { branch, step } | Triangle::Upper { branch, step } => (branch as isize, step as isize),
        };
        let v = |dk: isize, dj: isize| self.mesh_vertex(k + dk, j + dj);
        Some(match t {
            Triangle::Lower { .. } => [v(0, 0)?, v(1, 0)?, v(0, 1)?],
            Triangle::Upper { .. } => [v(1, 1)?, v(0, 1)?, v(1, 0)?],
        })
    }

    /// Neighbour across the edge opposite vertex `i`.
    fn across(&self, t: Triangle, i: usize) -> Option<Triangle> {
        let nb = self.branches.len();
        let prev = |k: usize| (k + nb - 1) % nb;
        let next = |k: usize| (k + 1) % nb;
        match (t, i) {
            (Triangle::Lower { branch, step }, 0) => Some(Triangle::Upper { branch, step }),
            (Triangle::Lower { branch, step }, 1) => Some(Triangle::Upper { branch: prev(branch), step }),
            (Triangle::Lower { branch, step }, _) => step.checked_sub(1).map(|s| Triangle::Upper { branch, step: s }),
            (Triangle::Upper { branch, step }, 0) => Some(Triangle::Lower { branch, step }),
            (Triangle::Upper { branch, step }, 1) => Some(Triangle::Lower { branch: next(branch), step }),
            (Triangle::Upper { branch, step }, _) => Some(Triangle::Lower { branch, step: step + 1 }),
        }
    }

    fn xy(&self, id: SampleId) -> [f64; 2] {
        let x = self.branches[id.branch as usize].x(id.sample as usize);
        [x[0], x[1]]
    }

    fn barycentric(&self, v: &[SampleId; 3], p: [f64; 2]) -> Option<[f64; 3]> {
        let [a, b, c] = [self.xy(v[0]), self.xy(v[1]), self.xy(v[2])];
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        Some([1.0 - l1 - l2, l1, l2])
    }

    /// Locates `x` by walking the mesh from the triangle next to `start`.
    pub(crate) fn walk(&self, x: &[f64], start: SampleId) -> Option<MeshHit> {
        if self.n != 2 || self.branches.len() < 3 {
            return None;
        }
        let p = [x[0], x[1]];
        let br = &self.branches[start.branch as usize];
        let tau = br.sample(start.sample as usize).tau;
        let last_step = br.grid_len().saturating_sub(2);
        let j = (libm::floor(tau / self.sample_dt) as usize).min(last_step);
        let mut t = Triangle::Lower { branch: start.branch as usize, step: j };
        let max_steps = 4 * self.branches.len() + 400;
        for _ in 0..max_steps {
            let v = self.triangle_vertices(t)?;
            let l = self.barycentric(&v, p)?;
            let (imin, lmin) = l.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1))?;
            if lmin >= -INSIDE_TOL {
                let mut nu = [0.0; 2];
                let mut w = 0.0;
                for (id, li) in v.iter().zip(l) {
                    let s = self.branches[id.branch as usize].sample(id.sample as usize);
                    nu[0] += li * s.nu[0];
                    nu[1] += li * s.nu[1];
                    w += li * s.w;
                }
                return Some(MeshHit { triangle: t, vertices: v, weights: l, nu, w });
            }
            t = self.across(t, imin)?;
        }
        None
    }
}

impl LagrangianManifold {
    /// Largest `|d nu~_c / d x_axis|` of the piecewise-linear covector over
    /// all non-degenerate mesh triangles; a Lipschitz constant of the
    /// interpolant along that axis on the covered region.
    pub fn covector_slope(&self, component: usize, axis: usize) -> Option<f64> {
        if self.n != 2 || component > 1 || axis > 1 || self.branches.len() < 3 {
            return None;
        }
        let mut best: Option<f64> = None;
        for k in 0..self.branches.len() {
            let steps = self.branches[k].grid_len();
            for step in 0..steps {
                for t in [Triangle::Lower { branch: k, step }, Triangle::Upper { branch: k, step }] {
                    let Some(v) = self.triangle_vertices(t) else { continue };
                    let [a, b, c] = [self.xy(v[0]), self.xy(v[1]), self.xy(v[2])];
                    let (d1, d2) = ([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]);
                    let det = d1[0] * d2[1] - d2[0] * d1[1];
                    let scale = (d1[0] * d1[0] + d1[1] * d1[1]).max(d2[0] * d2[0] + d2[1] * d2[1]);
                    if !(det.abs() > 1e-9 * scale) {
                        continue;
                    }
                    let nu = |id: SampleId| self.branches[id.branch as usize].sample(id.sample as usize).nu[component];
                    let (g1, g2) = (nu(v[1]) - nu(v[0]), nu(v[2]) - nu(v[0]));
                    // solve [d1; d2] grad = [g1; g2]
                    let grad = [(g1 * d2[1] - g2 * d1[1]) / det, (d1[0] * g2 - d2[0] * g1) / det];
                    let s = grad[axis].abs();
                    if s.is_finite() {
                        best = Some(best.map_or(s, |m: f64| m.max(s)));
                    }
                }
            }
        }
        best
    }
}
