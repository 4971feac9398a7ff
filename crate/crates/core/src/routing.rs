//! Road graph, bounded Dijkstra sweeps and the cell-to-cell distance matrix.
//!
//! The graph is undirected. Nodes are snapped by great-circle distance, edge
//! lengths are haversine segment lengths, and travel time along a path is
//! the sum of `length / class speed` over its edges.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::choice::CellDistances;
use crate::error::{Error, Result};
use crate::geo::{haversine_m, unit_vector, LonLat};
use crate::kdtree::KdTree;

/// Routed distances above this are replaced by the beeline distance.
pub const DEFAULT_DISTANCE_LIMIT_M: f64 = 300_000.0;
/// Distance digitization bin width used by the calibration likelihood.
pub const DEFAULT_BIN_WIDTH_M: f64 = 50.0;

/// Drivable `highway=*` classes and their free-flow speeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadClasses {
    pub classes: Vec<(String, f64)>,
    /// Speed used for beeline fallbacks, km/h.
    pub fallback_kmh: f64,
}

impl Default for RoadClasses {
    fn default() -> Self {
        let c = [
            ("motorway", 120.0),
            ("motorway_link", 60.0),
            ("trunk", 100.0),
            ("trunk_link", 50.0),
            ("primary", 80.0),
            ("primary_link", 50.0),
            ("secondary", 70.0),
            ("secondary_link", 50.0),
            ("tertiary", 50.0),
            ("tertiary_link", 40.0),
            ("unclassified", 40.0),
            ("residential", 30.0),
            ("service", 20.0),
        ];
        RoadClasses {
            classes: c.iter().map(|(n, s)| (String::from(*n), *s)).collect(),
            fallback_kmh: 50.0,
        }
    }
}

impl RoadClasses {
    /// Speed in km/h, `None` for non-drivable classes.
    pub fn speed_kmh(&self, highway: &str) -> Option<f64> {
        self.classes.iter().find(|(n, _)| n == highway).map(|(_, s)| *s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMethod {
    Routed,
    Beeline,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Route {
    pub distance_m: f64,
    pub duration_s: f64,
    pub method: DistanceMethod,
}

/// Anything that can produce a trip distance and travel time between two points.
pub trait Router {
    fn route(&self, from: LonLat, to: LonLat) -> Route;
}

/// Straight-line routing at a constant speed.
#[derive(Clone, Copy, Debug)]
pub struct BeelineRouter {
    pub speed_kmh: f64,
}

impl Router for BeelineRouter {
    fn route(&self, from: LonLat, to: LonLat) -> Route {
        let d = haversine_m(from, to);
        Route {
            distance_m: d,
            duration_s: d / (self.speed_kmh / 3.6),
            method: DistanceMethod::Beeline,
        }
    }
}

/// Undirected road graph in compressed adjacency form.
#[derive(Clone, Debug)]
pub struct RoadGraph {
    osm_ids: Vec<i64>,
    coords: Vec<LonLat>,
    offsets: Vec<u32>,
    targets: Vec<u32>,
    lengths: Vec<f64>,
    /// m/s per adjacency entry.
    speeds: Vec<f64>,
    n_edges: usize,
    fallback_mps: f64,
    index: KdTree<3>,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Distances (m) and times (s) from one source; `INFINITY` where unreached.
#[derive(Clone, Debug)]
pub struct ShortestPaths {
    pub distance: Vec<f64>,
    pub time: Vec<f64>,
}

impl RoadGraph {
    /// Builds the graph from OSM-style ways: node id lists with their
    /// `highway` class. Ways whose class is not drivable are skipped, as are
    /// segments referencing unknown nodes. Parallel segments keep the shorter
    /// length.
    pub fn build<'a, W>(nodes: &BTreeMap<i64, LonLat>, ways: W, classes: &RoadClasses) -> Result<RoadGraph>
    where
        W: IntoIterator<Item = (&'a [i64], &'a str)>,
    {
        let mut segs: BTreeMap<(i64, i64), (f64, f64)> = BTreeMap::new();
        for (refs, highway) in ways {
            let Some(kmh) = classes.speed_kmh(highway) else {
                continue;
            };
            for w in refs.windows(2) {
                let (a, b) = (w[0], w[1]);
                if a == b {
                    continue;
                }
                let (Some(&pa), Some(&pb)) = (nodes.get(&a), nodes.get(&b)) else {
                    continue;
                };
                let len = haversine_m(pa, pb).max(0.01);
                let key = if a < b { (a, b) } else { (b, a) };
                let e = segs.entry(key).or_insert((len, kmh / 3.6));
                if len < e.0 {
                    *e = (len, kmh / 3.6);
                }
            }
        }
        if segs.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let mut ids: Vec<i64> = segs.keys().flat_map(|&(a, b)| [a, b]).collect();
        ids.sort_unstable();
        ids.dedup();
        let local = |id: i64| ids.binary_search(&id).unwrap() as u32;
        let mut adj: Vec<Vec<(u32, f64, f64)>> = vec![Vec::new(); ids.len()];
        for (&(a, b), &(len, v)) in &segs {
            let (ia, ib) = (local(a), local(b));
            adj[ia as usize].push((ib, len, v));
            adj[ib as usize].push((ia, len, v));
        }
        let coords: Vec<LonLat> = ids.iter().map(|id| nodes[id]).collect();
        let mut offsets = Vec::with_capacity(ids.len() + 1);
        let (mut targets, mut lengths, mut speeds) = (Vec::new(), Vec::new(), Vec::new());
        offsets.push(0u32);
        for list in adj {
            for (t, l, v) in list {
                targets.push(t);
                lengths.push(l);
                speeds.push(v);
            }
            offsets.push(targets.len() as u32);
        }
        let unit: Vec<[f64; 3]> = coords.iter().map(|&c| unit_vector(c)).collect();
        Ok(RoadGraph {
            index: KdTree::new(&unit),
            osm_ids: ids,
            coords,
            offsets,
            targets,
            lengths,
            speeds,
            n_edges: segs.len(),
            fallback_mps: classes.fallback_kmh / 3.6,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    /// Undirected edge count.
    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn node(&self, i: usize) -> LonLat {
        self.coords[i]
    }

    pub fn osm_id(&self, i: usize) -> i64 {
        self.osm_ids[i]
    }

    /// `(a, b, length_m)` for every undirected edge with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_nodes()).flat_map(move |a| {
            let (s, e) = (self.offsets[a] as usize, self.offsets[a + 1] as usize);
            (s..e)
                .filter(move |&k| (self.targets[k] as usize) > a)
                .map(move |k| (a, self.targets[k] as usize, self.lengths[k]))
        })
    }

    /// Nearest node by great-circle distance.
    pub fn snap(&self, p: LonLat) -> usize {
        self.index.nearest(&unit_vector(p)).expect("graph is never empty")
    }

    /// Dijkstra from `source`, settling nodes up to `limit_m`. If `target` is
    /// given the sweep stops once it is settled.
    pub fn sweep(&self, source: usize, limit_m: f64, target: Option<usize>) -> ShortestPaths {
        let n = self.n_nodes();
        let mut dist = vec![f64::INFINITY; n];
        let mut time = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        time[source] = 0.0;
        heap.push(HeapEntry {
            dist: 0.0,
            node: source as u32,
        });
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            let u = node as usize;
            if done[u] {
                continue;
            }
            if d > limit_m {
                break;
            }
            done[u] = true;
            if Some(u) == target {
                break;
            }
            for k in self.offsets[u] as usize..self.offsets[u + 1] as usize {
                let v = self.targets[k] as usize;
                let nd = d + self.lengths[k];
                if nd < dist[v] {
                    dist[v] = nd;
                    time[v] = time[u] + self.lengths[k] / self.speeds[k];
                    heap.push(HeapEntry { dist: nd, node: v as u32 });
                }
            }
        }
        // drop tentative labels that were never settled
        for i in 0..n {
            if !done[i] {
                dist[i] = f64::INFINITY;
                time[i] = f64::INFINITY;
            }
        }
        ShortestPaths { distance: dist, time }
    }

    /// Shortest path between the nodes nearest to `from` and `to`; beeline if
    /// they are disconnected.
    pub fn shortest_distance(&self, from: LonLat, to: LonLat) -> Route {
        let (a, b) = (self.snap(from), self.snap(to));
        if a == b {
            return Route {
                distance_m: 0.0,
                duration_s: 0.0,
                method: DistanceMethod::Routed,
            };
        }
        let sp = self.sweep(a, f64::INFINITY, Some(b));
        if sp.distance[b].is_finite() {
            Route {
                distance_m: sp.distance[b],
                duration_s: sp.time[b],
                method: DistanceMethod::Routed,
            }
        } else {
            self.beeline(from, to)
        }
    }

    fn beeline(&self, from: LonLat, to: LonLat) -> Route {
        let d = haversine_m(from, to);
        Route {
            distance_m: d,
            duration_s: d / self.fallback_mps,
            method: DistanceMethod::Beeline,
        }
    }

    /// One matrix row: distances from `centroids[source]` to every centroid.
    /// `snapped` holds the snapped node of each centroid.
    pub fn distance_row(&self, source: usize, centroids: &[LonLat], snapped: &[usize], limit_m: f64) -> (Vec<f32>, Vec<DistanceMethod>) {
        let sp = self.sweep(snapped[source], limit_m, None);
        let mut row = Vec::with_capacity(centroids.len());
        let mut methods = Vec::with_capacity(centroids.len());
        for t in 0..centroids.len() {
            if t == source {
                row.push(0.0);
                methods.push(DistanceMethod::Routed);
                continue;
            }
            let d = sp.distance[snapped[t]];
            if d <= limit_m {
                row.push(d as f32);
                methods.push(DistanceMethod::Routed);
            } else {
                row.push(haversine_m(centroids[source], centroids[t]) as f32);
                methods.push(DistanceMethod::Beeline);
            }
        }
        (row, methods)
    }

    /// Full matrix, one bounded sweep per source (sequential; callers with
    /// threads can assemble rows from [`RoadGraph::distance_row`]).
    pub fn distance_matrix(&self, centroids: &[LonLat], limit_m: f64) -> DistanceMatrix {
        let snapped: Vec<usize> = centroids.iter().map(|&c| self.snap(c)).collect();
        let mut m = DistanceMatrix::zeros(centroids.len(), DEFAULT_BIN_WIDTH_M);
        for s in 0..centroids.len() {
            let (row, methods) = self.distance_row(s, centroids, &snapped, limit_m);
            m.set_row(s, &row, &methods);
        }
        m
    }
}

impl Router for RoadGraph {
    fn route(&self, from: LonLat, to: LonLat) -> Route {
        self.shortest_distance(from, to)
    }
}

/// Square cell-to-cell distance matrix (meters, `f32`) with a per-entry
/// routed/beeline flag.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    bin_width: f64,
    d: Vec<f32>,
    beeline: Vec<u64>,
}

impl DistanceMatrix {
    pub fn zeros(n: usize, bin_width: f64) -> Self {
        DistanceMatrix {
            n,
            bin_width,
            d: vec![0.0; n * n],
            beeline: vec![0; (n * n).div_ceil(64)],
        }
    }

    /// All-beeline matrix between centroids.
    pub fn beeline(centroids: &[LonLat]) -> Self {
        let n = centroids.len();
        let mut m = DistanceMatrix::zeros(n, DEFAULT_BIN_WIDTH_M);
        for s in 0..n {
            for t in 0..n {
                if s != t {
                    m.d[s * n + t] = haversine_m(centroids[s], centroids[t]) as f32;
                    m.set_method(s, t, DistanceMethod::Beeline);
                }
            }
        }
        m
    }

    /// Reassembles a matrix from its serialized parts.
    pub fn from_parts(n: usize, bin_width: f64, d: Vec<f32>, beeline_bits: Vec<u64>) -> Result<Self> {
        if d.len() != n * n || beeline_bits.len() != (n * n).div_ceil(64) {
            return Err(Error::Schema("distance matrix size does not match its cell count".into()));
        }
        if d.iter().any(|v| !(*v >= 0.0)) || !(bin_width > 0.0) {
            return Err(Error::Schema("distance matrix holds negative or non-finite entries".into()));
        }
        Ok(DistanceMatrix {
            n,
            bin_width,
            d,
            beeline: beeline_bits,
        })
    }

    pub fn set_row(&mut self, s: usize, row: &[f32], methods: &[DistanceMethod]) {
        let n = self.n;
        self.d[s * n..(s + 1) * n].copy_from_slice(row);
        for (t, &m) in methods.iter().enumerate() {
            self.set_method(s, t, m);
        }
    }

    fn set_method(&mut self, s: usize, t: usize, m: DistanceMethod) {
        let k = s * self.n + t;
        if m == DistanceMethod::Beeline {
            self.beeline[k / 64] |= 1 << (k % 64);
        } else {
            self.beeline[k / 64] &= !(1 << (k % 64));
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.d[s * self.n + t] as f64
    }

    pub fn method(&self, s: usize, t: usize) -> DistanceMethod {
        let k = s * self.n + t;
        if self.beeline[k / 64] >> (k % 64) & 1 == 1 {
            DistanceMethod::Beeline
        } else {
            DistanceMethod::Routed
        }
    }

    pub fn values(&self) -> &[f32] {
        &self.d
    }

    pub fn beeline_bits(&self) -> &[u64] {
        &self.beeline
    }
}

impl CellDistances for DistanceMatrix {
    fn n_cells(&self) -> usize {
        self.n
    }

    fn distance_m(&self, from: usize, to: usize) -> f64 {
        self.get(from, to)
    }
}

/// `floor(d / width)`.
pub fn digitize_distance(d_m: f64, bin_width_m: f64) -> Result<usize> {
    if !(d_m >= 0.0) || !d_m.is_finite() {
        return Err(Error::arg("distance must be finite and non-negative"));
    }
    if !(bin_width_m > 0.0) {
        return Err(Error::arg("bin width must be positive"));
    }
    Ok(num_traits::Float::floor(d_m / bin_width_m) as usize)
}

/// Representative distance of bin `k`: its center.
pub fn bin_representative(k: usize, bin_width_m: f64) -> f64 {
    (k as f64 + 0.5) * bin_width_m
}
