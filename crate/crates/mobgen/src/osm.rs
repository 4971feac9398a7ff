//! Minimal OSM reader for XML (`.osm`) and PBF (`.osm.pbf`) extracts.
//!
//! Every node position is kept (ways need them), tags only for nodes that
//! carry any. Ways and relations are kept whole. Output is sorted by id so
//! downstream iteration order does not depend on the file layout.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use mobgen_core::LonLat;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};

pub type Tags = Vec<(String, String)>;

pub fn tag<'a>(tags: &'a Tags, key: &str) -> Option<&'a str> {
    tags.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

#[derive(Clone, Debug, PartialEq)]
pub struct OsmNode {
    pub id: i64,
    pub pos: LonLat,
    pub tags: Tags,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OsmWay {
    pub id: i64,
    pub refs: Vec<i64>,
    pub tags: Tags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemberKind {
    Node,
    Way,
    Relation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OsmMember {
    pub kind: MemberKind,
    pub id: i64,
    pub role: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OsmRelation {
    pub id: i64,
    pub members: Vec<OsmMember>,
    pub tags: Tags,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OsmData {
    pub nodes: BTreeMap<i64, LonLat>,
    pub tagged_nodes: Vec<OsmNode>,
    pub ways: Vec<OsmWay>,
    pub relations: Vec<OsmRelation>,
}

impl OsmData {
    fn finish(mut self) -> Self {
        self.tagged_nodes.sort_by_key(|n| n.id);
        self.ways.sort_by_key(|w| w.id);
        self.relations.sort_by_key(|r| r.id);
        self
    }

    pub fn way(&self, id: i64) -> Option<&OsmWay> {
        self.ways.binary_search_by_key(&id, |w| w.id).ok().map(|i| &self.ways[i])
    }

    /// Positions of a way's nodes; `None` if any is missing from the extract.
    pub fn way_coords(&self, way: &OsmWay) -> Option<Vec<LonLat>> {
        way.refs.iter().map(|r| self.nodes.get(r).copied()).collect()
    }

    /// Drivable ways as `(node refs, highway value)` for the road graph.
    pub fn highways(&self) -> impl Iterator<Item = (&[i64], &str)> {
        self.ways
            .iter()
            .filter_map(|w| tag(&w.tags, "highway").map(|h| (w.refs.as_slice(), h)))
    }
}

/// Reads `.pbf` files with the PBF decoder and everything else as XML.
pub fn read_osm(path: &Path) -> Result<OsmData> {
    let is_pbf = path
        .file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(".pbf"));
    if is_pbf {
        read_pbf(path)
    } else {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        parse_xml(BufReader::new(f)).map_err(|e| e.in_file(path))
    }
}

fn attr_map(e: &BytesStart) -> Result<BTreeMap<String, String>> {
    let mut m = BTreeMap::new();
    for a in e.attributes() {
        let a = a.map_err(|e| Error::parse(e.to_string()))?;
        let value = a.normalized_value(quick_xml::XmlVersion::Implicit1_0).map_err(|e| Error::parse(e.to_string()))?;
        m.insert(a.key.as_ref().to_string(), value.into_owned());
    }
    Ok(m)
}

fn num<T: std::str::FromStr>(m: &BTreeMap<String, String>, key: &str, elem: &str) -> Result<T> {
    m.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(format!("<{elem}> without a valid `{key}` attribute")))
}

enum Open {
    None,
    Node(OsmNode),
    Way(OsmWay),
    Relation(OsmRelation),
}

pub fn parse_xml<R: BufRead>(input: R) -> Result<OsmData> {
    let mut reader = Reader::from_reader(input);
    reader.config_mut().trim_text(true);
    let mut data = OsmData::default();
    let mut open = Open::None;
    let mut buf = Vec::new();
    let mut saw_root = false;
    loop {
        let ev = reader
            .read_event_into(&mut buf)
            .map_err(|e| Error::parse(format!("at byte {}: {e}", reader.buffer_position())))?;
        let (start, is_empty) = match &ev {
            Event::Start(e) => (Some(e.clone()), false),
            Event::Empty(e) => (Some(e.clone()), true),
            _ => (None, false),
        };
        if let Some(e) = start {
            let name = e.name();
            let m = attr_map(&e)?;
            match name.as_ref() {
                "osm" => saw_root = true,
                "node" => {
                    let n = OsmNode {
                        id: num(&m, "id", "node")?,
                        pos: LonLat::new(num(&m, "lon", "node")?, num(&m, "lat", "node")?),
                        tags: Vec::new(),
                    };
                    open = Open::Node(n);
                }
                "way" => {
                    open = Open::Way(OsmWay {
                        id: num(&m, "id", "way")?,
                        refs: Vec::new(),
                        tags: Vec::new(),
                    })
                }
                "relation" => {
                    open = Open::Relation(OsmRelation {
                        id: num(&m, "id", "relation")?,
                        members: Vec::new(),
                        tags: Vec::new(),
                    })
                }
                "tag" => {
                    let kv = (
                        m.get("k").cloned().ok_or_else(|| Error::parse("<tag> without `k`"))?,
                        m.get("v").cloned().unwrap_or_default(),
                    );
                    match &mut open {
                        Open::Node(n) => n.tags.push(kv),
                        Open::Way(w) => w.tags.push(kv),
                        Open::Relation(r) => r.tags.push(kv),
                        Open::None => {}
                    }
                }
                "nd" => {
                    if let Open::Way(w) = &mut open {
                        w.refs.push(num(&m, "ref", "nd")?);
                    }
                }
                "member" => {
                    if let Open::Relation(r) = &mut open {
                        let kind = match m.get("type").map(String::as_str) {
                            Some("node") => MemberKind::Node,
                            Some("way") => MemberKind::Way,
                            Some("relation") => MemberKind::Relation,
                            other => return Err(Error::parse(format!("unknown member type {other:?}"))),
                        };
                        r.members.push(OsmMember {
                            kind,
                            id: num(&m, "ref", "member")?,
                            role: m.get("role").cloned().unwrap_or_default(),
                        });
                    }
                }
                _ => {}
            }
            if is_empty && matches!(name.as_ref(), "node" | "way" | "relation") {
                close(&mut data, std::mem::replace(&mut open, Open::None));
            }
        } else {
            match ev {
                Event::End(e) if matches!(e.name().as_ref(), "node" | "way" | "relation") => {
                    close(&mut data, std::mem::replace(&mut open, Open::None));
                }
                Event::Eof => break,
                _ => {}
            }
        }
        buf.clear();
    }
    if !saw_root {
        return Err(Error::parse("no <osm> root element"));
    }
    Ok(data.finish())
}

fn close(data: &mut OsmData, open: Open) {
    match open {
        Open::Node(n) => {
            data.nodes.insert(n.id, n.pos);
            if !n.tags.is_empty() {
                data.tagged_nodes.push(n);
            }
        }
        Open::Way(w) => data.ways.push(w),
        Open::Relation(r) => data.relations.push(r),
        Open::None => {}
    }
}

fn owned_tags<'a>(it: impl Iterator<Item = (&'a str, &'a str)>) -> Tags {
    it.map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

pub fn read_pbf(path: &Path) -> Result<OsmData> {
    use osmpbf::{Element, ElementReader, RelMemberType};
    let reader = ElementReader::from_path(path).map_err(|e| Error::parse(e.to_string()).in_file(path))?;
    let mut data = OsmData::default();
    let mut bad_role = None;
    reader
        .for_each(|el| match el {
            Element::Node(n) => {
                let node = OsmNode {
                    id: n.id(),
                    pos: LonLat::new(n.lon(), n.lat()),
                    tags: owned_tags(n.tags()),
                };
                close(&mut data, Open::Node(node));
            }
            Element::DenseNode(n) => {
                let node = OsmNode {
                    id: n.id(),
                    pos: LonLat::new(n.lon(), n.lat()),
                    tags: owned_tags(n.tags()),
                };
                close(&mut data, Open::Node(node));
            }
            Element::Way(w) => data.ways.push(OsmWay {
                id: w.id(),
                refs: w.refs().collect(),
                tags: owned_tags(w.tags()),
            }),
            Element::Relation(r) => {
                let members = r
                    .members()
                    .map(|m| OsmMember {
                        kind: match m.member_type {
                            RelMemberType::Node => MemberKind::Node,
                            RelMemberType::Way => MemberKind::Way,
                            RelMemberType::Relation => MemberKind::Relation,
                        },
                        id: m.member_id,
                        role: m.role().map(str::to_string).unwrap_or_else(|e| {
                            bad_role = Some(e.to_string());
                            String::new()
                        }),
                    })
                    .collect();
                data.relations.push(OsmRelation {
                    id: r.id(),
                    members,
                    tags: owned_tags(r.tags()),
                });
            }
        })
        .map_err(|e| Error::parse(e.to_string()).in_file(path))?;
    if let Some(e) = bad_role {
        return Err(Error::parse(format!("relation member role: {e}")).in_file(path));
    }
    Ok(data.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<osm version="0.6">
  <node id="3" lat="51.001" lon="10.002"/>
  <node id="1" lat="51.0" lon="10.0">
    <tag k="shop" v="bakery"/>
    <tag k="name" v="B&amp;B"/>
  </node>
  <node id="2" lat="51.0" lon="10.001"/>
  <way id="20">
    <nd ref="1"/><nd ref="2"/><nd ref="3"/><nd ref="1"/>
    <tag k="building" v="yes"/>
  </way>
  <way id="10"><nd ref="1"/><nd ref="2"/><tag k="highway" v="residential"/></way>
  <relation id="5">
    <member type="way" ref="20" role="outer"/>
    <tag k="type" v="multipolygon"/>
  </relation>
</osm>"#;

    #[test]
    fn parses_elements_sorted() {
        let d = parse_xml(SAMPLE.as_bytes()).unwrap();
        assert_eq!(d.nodes.len(), 3);
        assert_eq!(d.tagged_nodes.len(), 1);
        assert_eq!(tag(&d.tagged_nodes[0].tags, "name"), Some("B&B"));
        assert_eq!(d.ways.iter().map(|w| w.id).collect::<Vec<_>>(), vec![10, 20]);
        assert_eq!(d.way(20).unwrap().refs, vec![1, 2, 3, 1]);
        assert_eq!(d.relations[0].members[0].kind, MemberKind::Way);
        assert_eq!(d.relations[0].members[0].role, "outer");
        assert_eq!(d.highways().count(), 1);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_xml("not xml at all".as_bytes()).is_err());
        assert!(parse_xml(r#"<osm><node id="x" lat="1" lon="2"/></osm>"#.as_bytes()).is_err());
    }
}
