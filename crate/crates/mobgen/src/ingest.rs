//! Focus area, buffer, building extraction and census assignment.
//!
//! Geometry work happens in the equal-area projection centered on the focus
//! area, so areas come out in m² and the buffer distance is metric.

use std::path::Path;

use geo::orient::{Direction, Orient};
use geo::{Area, BoundingRect, Buffer, Centroid, Coord, Geometry, Intersects, LineString, MultiPolygon, Point, Polygon};
use geojson::GeoJson;
use mobgen_core::geo::{AreaRole, LocalProjection, Polygon as RingPolygon};
use mobgen_core::{AreaGeometry, Building, Landuse, LonLat};
use rayon::prelude::*;
use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, AABB};

use crate::error::{Error, Result};
use crate::osm::{tag, MemberKind, OsmData, OsmRelation, OsmWay, Tags};

/// Default name of the census population property.
pub const CENSUS_PROPERTY: &str = "population";

use mobgen_core::building::RELATION_ID_OFFSET as RELATION_ID_BASE;
const NODE_ID_BASE: u64 = 1 << 61;

/// Area given to buildings mapped as a node or an open way.
pub const MIN_FOOTPRINT_M2: f64 = 1.0;

pub fn parse_focus_area(path: &Path) -> Result<AreaGeometry> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_focus_area_str(&text).map_err(|e| e.in_file(path))
}

/// Union of all polygonal geometries in a GeoJSON document.
pub fn parse_focus_area_str(text: &str) -> Result<AreaGeometry> {
    let gj: GeoJson = text.parse().map_err(|e: geojson::Error| Error::parse(e.to_string()))?;
    // boolean ops expect counter-clockwise shells and clockwise holes
    let polys: Vec<Polygon> = geojson_polygons(&gj)?
        .into_iter()
        .map(|(p, _)| p.orient(Direction::Default))
        .collect();
    if polys.is_empty() {
        return Err(mobgen_core::Error::EmptyArea.into());
    }
    let union = geo::unary_union(&polys);
    Ok(AreaGeometry::focus(union.0.iter().map(polygon_from_geo).collect()))
}

/// Polygons of every feature (or bare geometry) with the feature's
/// properties, if any.
fn geojson_polygons(gj: &GeoJson) -> Result<Vec<(Polygon, Option<&geojson::JsonObject>)>> {
    fn collect(g: &Geometry, out: &mut Vec<Polygon>) {
        match g {
            Geometry::Polygon(p) => out.push(p.clone()),
            Geometry::MultiPolygon(mp) => out.extend(mp.0.iter().cloned()),
            Geometry::GeometryCollection(gc) => gc.0.iter().for_each(|g| collect(g, out)),
            _ => {}
        }
    }
    let convert = |g: &geojson::Geometry| -> Result<Vec<Polygon>> {
        let g: Geometry = Geometry::try_from(&g.value).map_err(|e| Error::parse(e.to_string()))?;
        let mut v = Vec::new();
        collect(&g, &mut v);
        Ok(v)
    };
    let mut out = Vec::new();
    match gj {
        GeoJson::Geometry(g) => out.extend(convert(g)?.into_iter().map(|p| (p, None))),
        GeoJson::Feature(f) => {
            if let Some(g) = &f.geometry {
                out.extend(convert(g)?.into_iter().map(|p| (p, f.properties.as_ref())));
            }
        }
        GeoJson::FeatureCollection(fc) => {
            for f in &fc.features {
                if let Some(g) = &f.geometry {
                    out.extend(convert(g)?.into_iter().map(|p| (p, f.properties.as_ref())));
                }
            }
        }
    }
    Ok(out)
}

fn ring_to_lonlat(ls: &LineString) -> Vec<LonLat> {
    ls.0.iter().map(|c| LonLat::new(c.x, c.y)).collect()
}

fn polygon_from_geo(p: &Polygon) -> RingPolygon {
    RingPolygon::new(ring_to_lonlat(p.exterior()), p.interiors().iter().map(ring_to_lonlat).collect())
}

fn project_ring(ring: &[LonLat], proj: &LocalProjection) -> LineString {
    ring.iter()
        .map(|&p| {
            let [x, y] = proj.project(p);
            Coord { x, y }
        })
        .collect()
}

fn project_polygon(p: &RingPolygon, proj: &LocalProjection) -> Polygon {
    Polygon::new(
        project_ring(&p.exterior, proj),
        p.holes.iter().map(|h| project_ring(h, proj)).collect(),
    )
}

fn unproject_polygon(p: &Polygon, proj: &LocalProjection) -> RingPolygon {
    let ring = |ls: &LineString| ls.0.iter().map(|c| proj.unproject([c.x, c.y])).collect::<Vec<_>>();
    RingPolygon::new(ring(p.exterior()), p.interiors().iter().map(ring).collect())
}

fn project_lonlat_geometry(g: &Geometry, proj: &LocalProjection) -> Geometry {
    use geo::MapCoords;
    g.map_coords(|c| {
        let [x, y] = proj.project(LonLat::new(c.x, c.y));
        Coord { x, y }
    })
}

/// Planar polygons of the whole model area.
pub fn area_planar(area: &AreaGeometry, proj: &LocalProjection) -> MultiPolygon {
    MultiPolygon::new(
        area.polygons
            .iter()
            .map(|p| project_polygon(p, proj).orient(Direction::Default))
            .collect(),
    )
}

/// Dilates the area by `dist_m` meters. The original focus polygons are kept
/// for focus tagging.
pub fn buffer_area(area: &AreaGeometry, dist_m: f64) -> Result<AreaGeometry> {
    if !(dist_m >= 0.0) || !dist_m.is_finite() {
        return Err(mobgen_core::Error::InvalidArgument(format!("buffer distance {dist_m} must be ≥ 0")).into());
    }
    if area.is_empty() {
        return Err(mobgen_core::Error::EmptyArea.into());
    }
    let proj = area.projection();
    let planar = area_planar(area, &proj);
    let polygons = if dist_m > 0.0 {
        planar.buffer(dist_m).0.iter().map(|p| unproject_polygon(p, &proj)).collect()
    } else {
        area.polygons.clone()
    };
    Ok(AreaGeometry {
        polygons,
        role: AreaRole::FocusBuffer,
        focus: area.focus.clone(),
    })
}

/// Buildings with their planar footprints, which census assignment needs.
#[derive(Clone, Debug)]
pub struct Extracted {
    pub buildings: Vec<Building>,
    pub footprints: Vec<Geometry>,
    pub projection: LocalProjection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum ObjectKind {
    Node,
    Way,
    Relation,
}

struct Object<'a> {
    kind: ObjectKind,
    id: i64,
    tags: &'a Tags,
    geometry: Geometry,
}

fn closed_ring(coords: &[LonLat]) -> bool {
    coords.len() >= 4 && coords.first() == coords.last()
}

fn way_geometry(osm: &OsmData, w: &OsmWay, proj: &LocalProjection) -> Option<Geometry> {
    let coords = osm.way_coords(w)?;
    let ls = project_ring(&coords, proj);
    Some(match coords.len() {
        0 => return None,
        1 => Geometry::Point(Point(ls.0[0])),
        _ if closed_ring(&coords) => Geometry::Polygon(Polygon::new(ls, vec![])),
        _ => Geometry::LineString(ls),
    })
}

/// Joins member ways end to end into closed rings. Pieces that never close
/// are dropped.
fn assemble_rings(mut pieces: Vec<Vec<i64>>) -> Vec<Vec<i64>> {
    let mut rings = Vec::new();
    pieces.retain(|p| p.len() >= 2);
    while let Some(mut ring) = pieces.pop() {
        loop {
            if ring.len() >= 4 && ring.first() == ring.last() {
                rings.push(ring);
                break;
            }
            let end = *ring.last().unwrap();
            let Some(i) = pieces.iter().position(|p| p[0] == end || *p.last().unwrap() == end) else {
                break;
            };
            let mut next = pieces.remove(i);
            if next[0] != end {
                next.reverse();
            }
            ring.extend_from_slice(&next[1..]);
        }
    }
    rings
}

fn relation_geometry(osm: &OsmData, r: &OsmRelation, proj: &LocalProjection) -> Option<Geometry> {
    if tag(&r.tags, "type") != Some("multipolygon") {
        return None;
    }
    let pieces = |role: &str| -> Vec<Vec<i64>> {
        r.members
            .iter()
            .filter(|m| m.kind == MemberKind::Way && (m.role == role || (role == "outer" && m.role.is_empty())))
            .filter_map(|m| osm.way(m.id).map(|w| w.refs.clone()))
            .collect()
    };
    let to_ls = |ring: &[i64]| -> Option<LineString> {
        let c: Option<Vec<LonLat>> = ring.iter().map(|id| osm.nodes.get(id).copied()).collect();
        Some(project_ring(&c?, proj))
    };
    let outers: Vec<LineString> = assemble_rings(pieces("outer")).iter().filter_map(|r| to_ls(r)).collect();
    if outers.is_empty() {
        return None;
    }
    let mut holes: Vec<Vec<LineString>> = vec![Vec::new(); outers.len()];
    for inner in assemble_rings(pieces("inner")).iter().filter_map(|r| to_ls(r)) {
        let probe = Point(inner.0[0]);
        if let Some(k) = outers.iter().position(|o| Polygon::new(o.clone(), vec![]).intersects(&probe)) {
            holes[k].push(inner);
        }
    }
    Some(Geometry::MultiPolygon(MultiPolygon::new(
        outers.into_iter().zip(holes).map(|(o, h)| Polygon::new(o, h)).collect(),
    )))
}

fn objects<'a>(osm: &'a OsmData, proj: &LocalProjection, wanted: impl Fn(&Tags) -> bool) -> Vec<Object<'a>> {
    let mut out = Vec::new();
    for n in &osm.tagged_nodes {
        if wanted(&n.tags) {
            let [x, y] = proj.project(n.pos);
            out.push(Object {
                kind: ObjectKind::Node,
                id: n.id,
                tags: &n.tags,
                geometry: Geometry::Point(Point::new(x, y)),
            });
        }
    }
    for w in &osm.ways {
        if wanted(&w.tags) {
            if let Some(g) = way_geometry(osm, w, proj) {
                out.push(Object {
                    kind: ObjectKind::Way,
                    id: w.id,
                    tags: &w.tags,
                    geometry: g,
                });
            }
        }
    }
    for r in &osm.relations {
        if wanted(&r.tags) {
            if let Some(g) = relation_geometry(osm, r, proj) {
                out.push(Object {
                    kind: ObjectKind::Relation,
                    id: r.id,
                    tags: &r.tags,
                    geometry: g,
                });
            }
        }
    }
    out
}

type Envelope = GeomWithData<Rectangle<[f64; 2]>, usize>;

fn envelope(g: &Geometry) -> Option<AABB<[f64; 2]>> {
    let r = g.bounding_rect()?;
    Some(AABB::from_corners([r.min().x, r.min().y], [r.max().x, r.max().y]))
}

fn rtree(geoms: impl Iterator<Item = Option<AABB<[f64; 2]>>>) -> RTree<Envelope> {
    RTree::bulk_load(
        geoms
            .enumerate()
            .filter_map(|(i, e)| e.map(|e| GeomWithData::new(Rectangle::from_corners(e.lower(), e.upper()), i)))
            .collect(),
    )
}

fn candidates<'t>(tree: &'t RTree<Envelope>, g: &Geometry) -> Vec<usize> {
    let Some(e) = envelope(g) else { return Vec::new() };
    let mut v: Vec<usize> = tree.locate_in_envelope_intersecting(&e).map(|x| x.data).collect();
    v.sort_unstable();
    v
}

#[derive(Clone, Copy)]
enum Poi {
    Shop,
    Office,
    School,
    University,
}

fn poi_kinds(tags: &Tags) -> Vec<Poi> {
    let mut v = Vec::new();
    if tag(tags, "shop").is_some() {
        v.push(Poi::Shop);
    }
    if tag(tags, "office").is_some() {
        v.push(Poi::Office);
    }
    match tag(tags, "amenity") {
        Some("school") => v.push(Poi::School),
        Some("university") => v.push(Poi::University),
        _ => {}
    }
    v
}

fn is_building(tags: &Tags) -> bool {
    tag(tags, "building").is_some_and(|v| v != "no")
}

fn building_id(kind: ObjectKind, id: i64) -> u64 {
    let id = id.unsigned_abs();
    match kind {
        ObjectKind::Way => id,
        ObjectKind::Relation => RELATION_ID_BASE | id,
        ObjectKind::Node => NODE_ID_BASE | id,
    }
}

/// Every object tagged `building` whose footprint intersects the area, with
/// land use and POI counts filled in. Land use comes from the zone containing
/// the footprint centroid, or else from the intersecting zone with the lowest
/// OSM id; POIs are counted for every footprint they intersect.
pub fn extract_buildings(osm: &OsmData, area: &AreaGeometry) -> Result<Extracted> {
    if area.is_empty() {
        return Err(mobgen_core::Error::EmptyArea.into());
    }
    let proj = area.projection();
    let model_area = area_planar(area, &proj);
    let focus = mobgen_core::geo::FocusIndex::new(area);

    let buildings: Vec<Object> = objects(osm, &proj, is_building)
        .into_iter()
        .filter(|o| o.geometry.intersects(&model_area))
        .collect();
    if buildings.is_empty() {
        return Err(mobgen_core::Error::EmptyModel.into());
    }
    let mut zones: Vec<(Object, Landuse)> = objects(osm, &proj, |t| tag(t, "landuse").is_some())
        .into_iter()
        .filter(|o| matches!(o.geometry, Geometry::Polygon(_) | Geometry::MultiPolygon(_)))
        .map(|o| {
            let lu = Landuse::from_osm(tag(o.tags, "landuse").unwrap_or(""));
            (o, lu)
        })
        .collect();
    zones.sort_by_key(|(o, _)| (o.id, o.kind));
    let pois: Vec<(Object, Vec<Poi>)> = objects(osm, &proj, |t| !poi_kinds(t).is_empty())
        .into_iter()
        .map(|o| {
            let k = poi_kinds(o.tags);
            (o, k)
        })
        .collect();
    let zone_tree = rtree(zones.iter().map(|(o, _)| envelope(&o.geometry)));
    let poi_tree = rtree(pois.iter().map(|(o, _)| envelope(&o.geometry)));

    let out: Vec<(Building, Geometry)> = buildings
        .par_iter()
        .map(|b| {
            let centroid = b.geometry.centroid().unwrap_or(Point::new(0.0, 0.0));
            let coords = proj.unproject([centroid.x(), centroid.y()]);
            let area = b.geometry.unsigned_area().max(MIN_FOOTPRINT_M2);
            let mut building = Building::bare(building_id(b.kind, b.id), coords, area);
            let near = candidates(&zone_tree, &b.geometry);
            let containing = near.iter().find(|&&z| zones[z].0.geometry.intersects(&centroid));
            let chosen = containing.or_else(|| near.iter().find(|&&z| zones[z].0.geometry.intersects(&b.geometry)));
            building.landuse = chosen.map(|&z| zones[z].1).unwrap_or(Landuse::None);
            for p in candidates(&poi_tree, &b.geometry) {
                if !pois[p].0.geometry.intersects(&b.geometry) {
                    continue;
                }
                for kind in &pois[p].1 {
                    match kind {
                        Poi::Shop => building.n_shops += 1,
                        Poi::Office => building.n_offices += 1,
                        Poi::School => building.n_schools += 1,
                        Poi::University => building.n_universities += 1,
                    }
                }
            }
            building.in_focus_area = focus.contains(coords);
            (building, b.geometry.clone())
        })
        .collect();
    let (buildings, footprints) = out.into_iter().unzip();
    Ok(Extracted {
        buildings,
        footprints,
        projection: proj,
    })
}

/// Splits each census cell's population equally over the buildings whose
/// footprints intersect it. Returns the total population assigned.
pub fn apply_census(ex: &mut Extracted, census: &GeoJson, property: &str) -> Result<f64> {
    let cells = geojson_polygons(census)?;
    let tree = rtree(ex.footprints.iter().map(envelope));
    let mut assigned = 0.0;
    for (i, (poly, props)) in cells.iter().enumerate() {
        let pop = props
            .and_then(|p| p.get(property))
            .and_then(|v| v.as_f64())
            .ok_or_else(|| mobgen_core::Error::Schema(format!("census feature {i} has no numeric `{property}` property")))?;
        if !(pop >= 0.0) {
            return Err(mobgen_core::Error::Schema(format!("census feature {i} has negative population")).into());
        }
        let cell = project_lonlat_geometry(&Geometry::Polygon(poly.clone()), &ex.projection);
        let hits: Vec<usize> = candidates(&tree, &cell)
            .into_iter()
            .filter(|&b| ex.footprints[b].intersects(&cell))
            .collect();
        if hits.is_empty() {
            continue;
        }
        let share = pop / hits.len() as f64;
        for b in hits {
            ex.buildings[b].population += share;
        }
        assigned += pop;
    }
    Ok(assigned)
}

pub fn apply_census_file(ex: &mut Extracted, path: &Path, property: &str) -> Result<f64> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let gj: GeoJson = text
        .parse()
        .map_err(|e: geojson::Error| Error::parse(e.to_string()).in_file(path))?;
    apply_census(ex, &gj, property).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rings_join_in_either_direction() {
        let rings = assemble_rings(vec![vec![1, 2, 3], vec![5, 4, 3], vec![5, 6, 1], vec![8, 9]]);
        assert_eq!(rings.len(), 1);
        let r = &rings[0];
        assert_eq!(r.first(), r.last());
        assert_eq!(r.len(), 7);
    }

    #[test]
    fn building_ids_do_not_collide() {
        let ids = [
            building_id(ObjectKind::Way, 7),
            building_id(ObjectKind::Node, 7),
            building_id(ObjectKind::Relation, 7),
        ];
        assert!(ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2]);
    }

    #[test]
    fn union_merges_overlapping_polygons() {
        let gj = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[[[0,0],[0.01,0],[0.01,0.01],[0,0.01],[0,0]]]}},
            {"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[[[0.005,0],[0.015,0],[0.015,0.01],[0.005,0.01],[0.005,0]]]}}]}"#;
        let a = parse_focus_area_str(gj).unwrap();
        assert_eq!(a.polygons.len(), 1);
    }
}
