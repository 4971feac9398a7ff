//! Minimal OSM PBF writer for tests: uncompressed blobs, one primitive block
//! holding dense nodes, ways and relations.

use std::collections::BTreeMap;

use mobgen::osm::{MemberKind, OsmData};

fn varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

fn key(out: &mut Vec<u8>, field: u32, wire: u32) {
    varint(out, ((field << 3) | wire) as u64);
}

fn bytes_field(out: &mut Vec<u8>, field: u32, b: &[u8]) {
    key(out, field, 2);
    varint(out, b.len() as u64);
    out.extend_from_slice(b);
}

fn int_field(out: &mut Vec<u8>, field: u32, v: u64) {
    key(out, field, 0);
    varint(out, v);
}

fn packed(out: &mut Vec<u8>, field: u32, values: impl IntoIterator<Item = u64>) {
    let mut body = Vec::new();
    for v in values {
        varint(&mut body, v);
    }
    bytes_field(out, field, &body);
}

fn delta_zigzag(values: impl IntoIterator<Item = i64>) -> Vec<u64> {
    let mut prev = 0;
    values
        .into_iter()
        .map(|v| {
            let d = zigzag(v - prev);
            prev = v;
            d
        })
        .collect()
}

struct Strings(BTreeMap<String, u64>, Vec<String>);

impl Strings {
    fn new() -> Self {
        Strings(BTreeMap::new(), vec![String::new()])
    }

    fn id(&mut self, s: &str) -> u64 {
        if let Some(&i) = self.0.get(s) {
            return i;
        }
        let i = self.1.len() as u64;
        self.1.push(s.to_string());
        self.0.insert(s.to_string(), i);
        i
    }
}

fn blob(out: &mut Vec<u8>, kind: &str, payload: &[u8]) {
    let mut b = Vec::new();
    bytes_field(&mut b, 1, payload);
    int_field(&mut b, 2, payload.len() as u64);
    let mut header = Vec::new();
    bytes_field(&mut header, 1, kind.as_bytes());
    int_field(&mut header, 3, b.len() as u64);
    out.extend_from_slice(&(header.len() as u32).to_be_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&b);
}

/// Encodes `data` with coordinates at 1e-7 degree resolution.
pub fn encode(data: &OsmData) -> Vec<u8> {
    let mut st = Strings::new();
    let tagged: BTreeMap<i64, &Vec<(String, String)>> = data.tagged_nodes.iter().map(|n| (n.id, &n.tags)).collect();

    let mut dense = Vec::new();
    let ids: Vec<i64> = data.nodes.keys().copied().collect();
    packed(&mut dense, 1, delta_zigzag(ids.iter().copied()));
    let lat = data.nodes.values().map(|p| (p.lat * 1e7).round() as i64);
    packed(&mut dense, 8, delta_zigzag(lat));
    let lon = data.nodes.values().map(|p| (p.lon * 1e7).round() as i64);
    packed(&mut dense, 9, delta_zigzag(lon));
    let mut kv = Vec::new();
    for id in &ids {
        if let Some(tags) = tagged.get(id) {
            for (k, v) in tags.iter() {
                kv.push(st.id(k));
                kv.push(st.id(v));
            }
        }
        kv.push(0);
    }
    packed(&mut dense, 10, kv);

    let mut group = Vec::new();
    bytes_field(&mut group, 2, &dense);
    for w in &data.ways {
        let mut m = Vec::new();
        int_field(&mut m, 1, w.id as u64);
        let (ks, vs): (Vec<u64>, Vec<u64>) = w.tags.iter().map(|(k, v)| (st.id(k), st.id(v))).unzip();
        packed(&mut m, 2, ks);
        packed(&mut m, 3, vs);
        packed(&mut m, 8, delta_zigzag(w.refs.iter().copied()));
        bytes_field(&mut group, 3, &m);
    }
    for r in &data.relations {
        let mut m = Vec::new();
        int_field(&mut m, 1, r.id as u64);
        let (ks, vs): (Vec<u64>, Vec<u64>) = r.tags.iter().map(|(k, v)| (st.id(k), st.id(v))).unzip();
        packed(&mut m, 2, ks);
        packed(&mut m, 3, vs);
        let roles: Vec<u64> = r.members.iter().map(|x| st.id(&x.role)).collect();
        packed(&mut m, 8, roles);
        packed(&mut m, 9, delta_zigzag(r.members.iter().map(|x| x.id)));
        let types = r.members.iter().map(|x| match x.kind {
            MemberKind::Node => 0,
            MemberKind::Way => 1,
            MemberKind::Relation => 2,
        });
        packed(&mut m, 10, types);
        bytes_field(&mut group, 4, &m);
    }

    let mut table = Vec::new();
    for s in &st.1 {
        bytes_field(&mut table, 1, s.as_bytes());
    }
    let mut block = Vec::new();
    bytes_field(&mut block, 1, &table);
    bytes_field(&mut block, 2, &group);

    let mut header = Vec::new();
    bytes_field(&mut header, 4, b"OsmSchema-V0.6");
    bytes_field(&mut header, 4, b"DenseNodes");

    let mut out = Vec::new();
    blob(&mut out, "OSMHeader", &header);
    blob(&mut out, "OSMData", &block);
    out
}
