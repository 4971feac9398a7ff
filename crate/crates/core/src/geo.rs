//! WGS84 points, great-circle distances, a local Lambert azimuthal
//! equal-area projection and planar polygon predicates.
//!
//! Metric work (areas, dispersion, buffer distances) happens in the projected
//! frame; positions are stored and exchanged as lon/lat.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Mean earth radius (IUGG), meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub const fn new(lon: f64, lat: f64) -> Self {
        LonLat { lon, lat }
    }
}

/// Great-circle distance in meters.
pub fn haversine_m(a: LonLat, b: LonLat) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Unit vector on the sphere. Chord length between two such vectors is a
/// monotone function of the great-circle distance, so Euclidean nearest
/// neighbours in this space are haversine nearest neighbours.
pub fn unit_vector(p: LonLat) -> [f64; 3] {
    let (lat, lon) = (p.lat.to_radians(), p.lon.to_radians());
    [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
}

/// Spherical Lambert azimuthal equal-area projection around a center point.
/// Areas are preserved exactly; distances are accurate to well below 0.1 %
/// within a few hundred kilometers of the center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalProjection {
    center: LonLat,
    sin_lat0: f64,
    cos_lat0: f64,
}

impl LocalProjection {
    pub fn new(center: LonLat) -> Self {
        let lat0 = center.lat.to_radians();
        LocalProjection {
            center,
            sin_lat0: lat0.sin(),
            cos_lat0: lat0.cos(),
        }
    }

    /// Projection centered on the bounding box of `points`.
    pub fn centered_on(points: impl IntoIterator<Item = LonLat>) -> Self {
        let bb = BoundingBox::of(points).unwrap_or(BoundingBox {
            min: LonLat::new(0.0, 0.0),
            max: LonLat::new(0.0, 0.0),
        });
        LocalProjection::new(bb.center())
    }

    pub fn center(&self) -> LonLat {
        self.center
    }

    pub fn project(&self, p: LonLat) -> [f64; 2] {
        let lat = p.lat.to_radians();
        let dl = (p.lon - self.center.lon).to_radians();
        let (sin_lat, cos_lat) = (lat.sin(), lat.cos());
        let cos_dl = dl.cos();
        let denom = 1.0 + self.sin_lat0 * sin_lat + self.cos_lat0 * cos_lat * cos_dl;
        // antipode of the center is not representable
        let k = (2.0 / denom.max(1e-15)).sqrt();
        [
            EARTH_RADIUS_M * k * cos_lat * dl.sin(),
            EARTH_RADIUS_M * k * (self.cos_lat0 * sin_lat - self.sin_lat0 * cos_lat * cos_dl),
        ]
    }

    pub fn unproject(&self, xy: [f64; 2]) -> LonLat {
        let [x, y] = xy;
        let rho = (x * x + y * y).sqrt();
        if rho < 1e-12 {
            return self.center;
        }
        let c = 2.0 * (rho / (2.0 * EARTH_RADIUS_M)).min(1.0).asin();
        let (sin_c, cos_c) = (c.sin(), c.cos());
        let lat = (cos_c * self.sin_lat0 + y * sin_c * self.cos_lat0 / rho)
            .clamp(-1.0, 1.0)
            .asin();
        let dl = (x * sin_c).atan2(rho * self.cos_lat0 * cos_c - y * self.sin_lat0 * sin_c);
        let mut lon = self.center.lon + dl.to_degrees();
        if lon > 180.0 {
            lon -= 360.0;
        } else if lon < -180.0 {
            lon += 360.0;
        }
        LonLat::new(lon, lat.to_degrees())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: LonLat,
    pub max: LonLat,
}

impl BoundingBox {
    pub fn of(points: impl IntoIterator<Item = LonLat>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut bb = BoundingBox {
            min: first,
            max: first,
        };
        for p in it {
            bb.min.lon = bb.min.lon.min(p.lon);
            bb.min.lat = bb.min.lat.min(p.lat);
            bb.max.lon = bb.max.lon.max(p.lon);
            bb.max.lat = bb.max.lat.max(p.lat);
        }
        Some(bb)
    }

    pub fn center(&self) -> LonLat {
        LonLat::new(
            (self.min.lon + self.max.lon) / 2.0,
            (self.min.lat + self.max.lat) / 2.0,
        )
    }
}

/// Polygon with one exterior ring and optional holes, lon/lat vertices.
/// Rings may or may not repeat their first vertex at the end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<LonLat>,
    #[serde(default)]
    pub holes: Vec<Vec<LonLat>>,
}

impl Polygon {
    pub fn new(exterior: Vec<LonLat>, holes: Vec<Vec<LonLat>>) -> Self {
        Polygon { exterior, holes }
    }

    pub fn rings(&self) -> impl Iterator<Item = &[LonLat]> {
        core::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    pub fn project(&self, proj: &LocalProjection) -> PlanarPolygon {
        let ring = |r: &[LonLat]| r.iter().map(|p| proj.project(*p)).collect::<Vec<_>>();
        PlanarPolygon {
            exterior: ring(&self.exterior),
            holes: self.holes.iter().map(|h| ring(h)).collect(),
        }
    }
}

/// Polygon in a projected metric frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarPolygon {
    pub exterior: Vec<[f64; 2]>,
    pub holes: Vec<Vec<[f64; 2]>>,
}

fn ring_signed_area(ring: &[[f64; 2]]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        s += a[0] * b[1] - b[0] * a[1];
    }
    s / 2.0
}

fn ring_centroid_moment(ring: &[[f64; 2]]) -> (f64, f64, f64) {
    let n = ring.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    if n < 3 {
        return (0.0, 0.0, 0.0);
    }
    // shift to the first vertex for numerical stability
    let o = ring[0];
    for i in 0..n {
        let p = [ring[i][0] - o[0], ring[i][1] - o[1]];
        let q = [ring[(i + 1) % n][0] - o[0], ring[(i + 1) % n][1] - o[1]];
        let cross = p[0] * q[1] - q[0] * p[1];
        a += cross;
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    let a = a / 2.0;
    if a == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let sign = a.signum();
    // moments of the absolute area
    (
        a.abs(),
        (cx / 6.0 + o[0] * a) * sign,
        (cy / 6.0 + o[1] * a) * sign,
    )
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

fn ring_crossings(ring: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0];
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

impl PlanarPolygon {
    pub fn rings(&self) -> impl Iterator<Item = &[[f64; 2]]> {
        core::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    /// Exterior area minus hole areas.
    pub fn area(&self) -> f64 {
        let outer = ring_signed_area(&self.exterior).abs();
        let holes: f64 = self.holes.iter().map(|h| ring_signed_area(h).abs()).sum();
        (outer - holes).max(0.0)
    }

    /// Area centroid; falls back to the vertex mean for degenerate rings.
    pub fn centroid(&self) -> [f64; 2] {
        let (a, mut mx, mut my) = ring_centroid_moment(&self.exterior);
        let mut area = a;
        for h in &self.holes {
            let (ha, hx, hy) = ring_centroid_moment(h);
            area -= ha;
            mx -= hx;
            my -= hy;
        }
        if area > 1e-12 {
            [mx / area, my / area]
        } else {
            let n = self.exterior.len().max(1) as f64;
            let sx: f64 = self.exterior.iter().map(|p| p[0]).sum();
            let sy: f64 = self.exterior.iter().map(|p| p[1]).sum();
            [sx / n, sy / n]
        }
    }

    /// Even-odd point-in-polygon test over all rings.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.rings().fold(false, |acc, r| acc ^ ring_crossings(r, p))
    }

    /// Distance from `p` to the nearest boundary point (exterior or holes).
    pub fn boundary_distance(&self, p: [f64; 2]) -> f64 {
        let mut best = f64::INFINITY;
        for ring in self.rings() {
            let n = ring.len();
            for i in 0..n {
                best = best.min(segment_distance(p, ring[i], ring[(i + 1) % n]));
            }
        }
        best
    }
}

/// Which part of the model area a geometry describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaRole {
    Focus,
    FocusBuffer,
}

/// Model area: the (possibly buffered) polygons plus the original focus
/// polygons, which stay authoritative for focus tagging.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaGeometry {
    pub polygons: Vec<Polygon>,
    pub role: AreaRole,
    pub focus: Vec<Polygon>,
}

impl AreaGeometry {
    pub fn focus(polygons: Vec<Polygon>) -> Self {
        AreaGeometry {
            focus: polygons.clone(),
            polygons,
            role: AreaRole::Focus,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    /// Projection centered on the focus area.
    pub fn projection(&self) -> LocalProjection {
        LocalProjection::centered_on(self.focus.iter().flat_map(|p| p.exterior.iter().copied()))
    }

    pub fn area_m2(&self, proj: &LocalProjection) -> f64 {
        self.polygons.iter().map(|p| p.project(proj).area()).sum()
    }

    pub fn focus_planar(&self, proj: &LocalProjection) -> Vec<PlanarPolygon> {
        self.focus.iter().map(|p| p.project(proj)).collect()
    }
}

/// Projected focus polygons with the two queries the grid and ingest need.
#[derive(Clone, Debug)]
pub struct FocusIndex {
    proj: LocalProjection,
    polygons: Vec<PlanarPolygon>,
}

impl FocusIndex {
    pub fn new(area: &AreaGeometry) -> Self {
        let proj = area.projection();
        FocusIndex {
            polygons: area.focus_planar(&proj),
            proj,
        }
    }

    pub fn projection(&self) -> &LocalProjection {
        &self.proj
    }

    pub fn contains(&self, p: LonLat) -> bool {
        let xy = self.proj.project(p);
        self.polygons.iter().any(|poly| poly.contains(xy))
    }

    /// 0 inside the focus area, otherwise the distance to its nearest boundary point.
    pub fn distance_m(&self, p: LonLat) -> f64 {
        let xy = self.proj.project(p);
        if self.polygons.iter().any(|poly| poly.contains(xy)) {
            return 0.0;
        }
        self.polygons
            .iter()
            .map(|poly| poly.boundary_distance(xy))
            .fold(f64::INFINITY, f64::min)
    }
}
