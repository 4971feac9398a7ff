//! Static implicit kd-tree for nearest-neighbour snapping.

use alloc::vec::Vec;

#[derive(Clone, Debug)]
pub(crate) struct KdTree<const K: usize> {
    points: Vec<[f64; K]>,
    ids: Vec<u32>,
}

impl<const K: usize> KdTree<K> {
    pub fn new(points: &[[f64; K]]) -> Self {
        let mut ids: Vec<u32> = (0..points.len() as u32).collect();
        build(points, &mut ids, 0);
        let points = ids.iter().map(|&i| points[i as usize]).collect();
        KdTree { points, ids }
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    /// Index (into the construction slice) of the nearest point; ties go to
    /// the smaller index.
    pub fn nearest(&self, q: &[f64; K]) -> Option<usize> {
        if self.ids.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, u32::MAX);
        self.search(q, 0, self.ids.len(), 0, &mut best);
        Some(best.1 as usize)
    }

    fn search(&self, q: &[f64; K], lo: usize, hi: usize, depth: usize, best: &mut (f64, u32)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = &self.points[mid];
        let d2: f64 = (0..K).map(|k| (p[k] - q[k]) * (p[k] - q[k])).sum();
        let id = self.ids[mid];
        if d2 < best.0 || (d2 == best.0 && id < best.1) {
            *best = (d2, id);
        }
        let axis = depth % K;
        let delta = q[axis] - p[axis];
        let (near, far) = if delta <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, depth + 1, best);
        if delta * delta <= best.0 {
            self.search(q, far.0, far.1, depth + 1, best);
        }
    }
}

fn build<const K: usize>(points: &[[f64; K]], ids: &mut [u32], depth: usize) {
    if ids.len() <= 1 {
        return;
    }
    let axis = depth % K;
    let mid = ids.len() / 2;
    ids.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (left, right) = ids.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}
