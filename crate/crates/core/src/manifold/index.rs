//! Uniform-grid buckets over sample points, stored sparsely in CSR form.

use alloc::vec::Vec;

pub(crate) const MAX_DIM: usize = 4;

type Key = [i64; MAX_DIM];

/// Reference to one stored sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SampleId {
    pub branch: u32,
    pub sample: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct GridIndex {
    n: usize,
    cell: f64,
    /// Sorted distinct keys of non-empty cells.
    keys: Vec<Key>,
    /// `start[c]..start[c + 1]` indexes `entries` for cell `c`.
    start: Vec<u32>,
    entries: Vec<SampleId>,
}

impl GridIndex {
    pub(crate) fn build<'a>(n: usize, cell: f64, points: impl Iterator<Item = (SampleId, &'a [f64])>) -> Self {
        assert!(n <= MAX_DIM && cell > 0.0);
        let mut keyed: Vec<(Key, SampleId)> = points.map(|(id, x)| (key(n, cell, x), id)).collect();
        keyed.sort_unstable();
        let mut keys = Vec::new();
        let mut start = Vec::new();
        let mut entries = Vec::with_capacity(keyed.len());
        for (i, (k, id)) in keyed.iter().enumerate() {
            if i == 0 || keys.last() != Some(k) {
                keys.push(*k);
                start.push(i as u32);
            }
            entries.push(*id);
        }
        start.push(entries.len() as u32);
        GridIndex { n, cell, keys, start, entries }
    }

    pub(crate) fn len(&self) -> usize {
        self.entries.len()
    }

    fn bucket(&self, k: &Key) -> &[SampleId] {
        match self.keys.binary_search(k) {
            Ok(c) => &self.entries[self.start[c] as usize..self.start[c + 1] as usize],
            Err(_) => &[],
        }
    }

    /// Calls `visit` for every sample in cells whose Chebyshev cell distance
    /// from the cell of `x` is exactly `ring`.
    fn visit_ring(&self, x: &[f64], ring: i64, visit: &mut impl FnMut(SampleId)) {
        let center = key(self.n, self.cell, x);
        let width = (2 * ring + 1) as usize;
        let total = width.pow(self.n as u32);
        for mut idx in 0..total {
            let mut k = center;
            let mut on_ring = false;
            for d in 0..self.n {
                let off = (idx % width) as i64 - ring;
                idx /= width;
                on_ring |= off.abs() == ring;
                k[d] += off;
            }
            if on_ring || ring == 0 {
                for &id in self.bucket(&k) {
                    visit(id);
                }
            }
        }
    }

    /// Nearest sample by `dist`, searching outward ring by ring until no
    /// closer sample can exist or `max_dist` is exceeded.
    pub(crate) fn nearest(&self, x: &[f64], max_dist: f64, dist: impl Fn(SampleId) -> f64) -> Option<(SampleId, f64)> {
        let mut best: Option<(SampleId, f64)> = None;
        let max_ring = libm::ceil(max_dist / self.cell).min(1e6) as i64 + 1;
        let cells = libm::pow((2 * max_ring + 1) as f64, self.n as f64);
        if cells > self.entries.len() as f64 {
            // a full scan is cheaper than walking mostly empty rings
            for &id in &self.entries {
                let d = dist(id);
                if d <= max_dist && best.map_or(true, |(bid, bd)| d < bd || (d == bd && id < bid)) {
                    best = Some((id, d));
                }
            }
            return best;
        }
        for ring in 0..=max_ring {
            // anything in ring r is at least (r - 1) cells away
            let floor = (ring - 1).max(0) as f64 * self.cell;
            if floor > max_dist || best.is_some_and(|(_, d)| d <= floor) {
                break;
            }
            self.visit_ring(x, ring, &mut |id| {
                let d = dist(id);
                if d <= max_dist && best.map_or(true, |(bid, bd)| d < bd || (d == bd && id < bid)) {
                    best = Some((id, d));
                }
            });
        }
        best
    }

    /// All samples within `radius` of `x`.
    pub(crate) fn within(&self, x: &[f64], radius: f64, dist: impl Fn(SampleId) -> f64) -> Vec<(SampleId, f64)> {
        let mut out = Vec::new();
        let rings = libm::ceil(radius / self.cell) as i64;
        for ring in 0..=rings {
            self.visit_ring(x, ring, &mut |id| {
                let d = dist(id);
                if d <= radius {
                    out.push((id, d));
                }
            });
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }
}

fn key(n: usize, cell: f64, x: &[f64]) -> Key {
    let mut k = [0i64; MAX_DIM];
    for d in 0..n {
        k[d] = libm::floor(x[d] / cell) as i64;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_matches_brute_force() {
        let pts: Vec<[f64; 2]> = (0..400).map(|i| {
            let t = i as f64 * 0.37;
            [libm::sin(t) * (1.0 + 0.01 * i as f64), libm::cos(1.3 * t) * 2.0]
        }).collect();
        let id = |i: usize| SampleId { branch: 0, sample: i as u32 };
        let idx = GridIndex::build(2, 0.3, pts.iter().enumerate().map(|(i, p)| (id(i), &p[..])));
        assert_eq!(idx.len(), 400);
        for q in [[0.1, 0.2], [3.0, -1.0], [-0.7, 1.9], [10.0, 10.0]] {
            let d = |s: SampleId| {
                let p = pts[s.sample as usize];
                libm::hypot(p[0] - q[0], p[1] - q[1])
            };
            let brute = (0..400).map(|i| (i, d(id(i)))).min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            let got = idx.nearest(&q, 100.0, d).unwrap();
            assert_eq!(got.0.sample as usize, brute.0);
            assert!(idx.nearest(&q, brute.1 * 0.99, d).is_none());
            let within = idx.within(&q, brute.1 + 0.5, d);
            let count = (0..400).filter(|&i| d(id(i)) <= brute.1 + 0.5).count();
            assert_eq!(within.len(), count);
        }
    }
}
