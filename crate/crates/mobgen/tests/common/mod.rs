#![allow(dead_code)]

pub mod pbf;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mobgen_core::geo::LocalProjection;
use mobgen_core::LonLat;

pub const CENTER: LonLat = LonLat::new(10.0, 51.0);

/// Regular street grid with square buildings in every block.
///
/// Blocks are `block_m` wide; block `(i, j)` holds `per_side²` buildings of
/// 8 to 14 m side. Every 7th building carries a shop node at its center,
/// every 11th an office node, building 5 is a school. Blocks cycle through
/// residential, retail, industrial and no land use.
#[derive(Clone, Debug)]
pub struct Town {
    pub blocks: usize,
    pub block_m: f64,
    pub per_side: usize,
}

pub struct TownBuilding {
    pub way_id: i64,
    pub center: [f64; 2],
    pub side: f64,
    pub block: (usize, usize),
    pub shop: bool,
    pub office: bool,
    pub school: bool,
}

impl Town {
    pub fn new(blocks: usize, per_side: usize) -> Self {
        Town {
            blocks,
            block_m: 120.0,
            per_side,
        }
    }

    pub fn projection(&self) -> LocalProjection {
        LocalProjection::new(CENTER)
    }

    pub fn extent_m(&self) -> f64 {
        self.blocks as f64 * self.block_m
    }

    fn to_lonlat(&self, xy: [f64; 2]) -> LonLat {
        let h = self.extent_m() / 2.0;
        self.projection().unproject([xy[0] - h, xy[1] - h])
    }

    pub fn landuse_of(&self, block: (usize, usize)) -> Option<&'static str> {
        [Some("residential"), Some("retail"), Some("industrial"), None][(block.0 + 2 * block.1) % 4]
    }

    pub fn buildings(&self) -> Vec<TownBuilding> {
        let mut out = Vec::new();
        let step = (self.block_m - 30.0) / self.per_side as f64;
        for bj in 0..self.blocks {
            for bi in 0..self.blocks {
                for k in 0..self.per_side * self.per_side {
                    let (u, v) = (k % self.per_side, k / self.per_side);
                    let n = out.len();
                    out.push(TownBuilding {
                        way_id: 1_000_000 + n as i64,
                        center: [
                            bi as f64 * self.block_m + 15.0 + (u as f64 + 0.5) * step,
                            bj as f64 * self.block_m + 15.0 + (v as f64 + 0.5) * step,
                        ],
                        side: 8.0 + (n % 4) as f64 * 2.0,
                        block: (bi, bj),
                        shop: n % 7 == 3,
                        office: n % 11 == 4,
                        school: n == 5,
                    });
                }
            }
        }
        out
    }

    pub fn xml(&self) -> String {
        let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\">\n");
        let mut next_node = 1i64;
        let mut node = |s: &mut String, xy: [f64; 2], tags: &[(&str, &str)]| -> i64 {
            let id = next_node;
            next_node += 1;
            let p = self.to_lonlat(xy);
            if tags.is_empty() {
                let _ = writeln!(s, "  <node id=\"{id}\" lat=\"{:.9}\" lon=\"{:.9}\"/>", p.lat, p.lon);
            } else {
                let _ = writeln!(s, "  <node id=\"{id}\" lat=\"{:.9}\" lon=\"{:.9}\">", p.lat, p.lon);
                for (k, v) in tags {
                    let _ = writeln!(s, "    <tag k=\"{k}\" v=\"{v}\"/>");
                }
                s.push_str("  </node>\n");
            }
            id
        };
        let mut ways = String::new();
        let way = |out: &mut String, id: i64, refs: &[i64], tags: &[(&str, &str)]| {
            let _ = writeln!(out, "  <way id=\"{id}\">");
            for r in refs {
                let _ = writeln!(out, "    <nd ref=\"{r}\"/>");
            }
            for (k, v) in tags {
                let _ = writeln!(out, "    <tag k=\"{k}\" v=\"{v}\"/>");
            }
            out.push_str("  </way>\n");
        };
        let square = |s: &mut String, node: &mut dyn FnMut(&mut String, [f64; 2], &[(&str, &str)]) -> i64, c: [f64; 2], h: f64| {
            let ids: Vec<i64> = [[-h, -h], [h, -h], [h, h], [-h, h]]
                .iter()
                .map(|d| node(s, [c[0] + d[0], c[1] + d[1]], &[]))
                .collect();
            vec![ids[0], ids[1], ids[2], ids[3], ids[0]]
        };

        // streets
        let n = self.blocks + 1;
        let mut grid = vec![0i64; n * n];
        for j in 0..n {
            for i in 0..n {
                grid[j * n + i] = node(&mut s, [i as f64 * self.block_m, j as f64 * self.block_m], &[]);
            }
        }
        for j in 0..n {
            let refs: Vec<i64> = (0..n).map(|i| grid[j * n + i]).collect();
            let class = if j == n / 2 { "primary" } else { "residential" };
            way(&mut ways, 10 + j as i64, &refs, &[("highway", class)]);
            let refs: Vec<i64> = (0..n).map(|i| grid[i * n + j]).collect();
            way(&mut ways, 500 + j as i64, &refs, &[("highway", "residential")]);
        }

        // land use
        for bj in 0..self.blocks {
            for bi in 0..self.blocks {
                if let Some(lu) = self.landuse_of((bi, bj)) {
                    let h = self.block_m / 2.0 - 3.0;
                    let c = [(bi as f64 + 0.5) * self.block_m, (bj as f64 + 0.5) * self.block_m];
                    let refs = square(&mut s, &mut node, c, h);
                    way(&mut ways, 2_000_000 + (bj * self.blocks + bi) as i64, &refs, &[("landuse", lu)]);
                }
            }
        }

        // buildings and POIs
        for b in self.buildings() {
            let refs = square(&mut s, &mut node, b.center, b.side / 2.0);
            let mut tags = vec![("building", "yes")];
            if b.school {
                tags.push(("amenity", "school"));
            }
            way(&mut ways, b.way_id, &refs, &tags);
            if b.shop {
                node(&mut s, b.center, &[("shop", "bakery")]);
            }
            if b.office {
                node(&mut s, [b.center[0] + 1.0, b.center[1]], &[("office", "company")]);
            }
        }
        s.push_str(&ways);
        s.push_str("</osm>\n");
        s
    }

    /// GeoJSON polygon of the square `[lo, hi]²` in town meters.
    pub fn square_geojson(&self, lo: f64, hi: f64) -> String {
        let ring: Vec<String> = [[lo, lo], [hi, lo], [hi, hi], [lo, hi], [lo, lo]]
            .iter()
            .map(|&xy| {
                let p = self.to_lonlat(xy);
                format!("[{:.10},{:.10}]", p.lon, p.lat)
            })
            .collect();
        format!(
            "{{\"type\":\"FeatureCollection\",\"features\":[{{\"type\":\"Feature\",\"properties\":{{}},\"geometry\":{{\"type\":\"Polygon\",\"coordinates\":[[{}]]}}}}]}}",
            ring.join(",")
        )
    }

    /// Census cells: an `n × n` split of the town, population `pop(i, j)`.
    pub fn census_geojson(&self, n: usize, pop: impl Fn(usize, usize) -> f64) -> String {
        let w = self.extent_m() / n as f64;
        let mut feats = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let (x0, y0) = (i as f64 * w, j as f64 * w);
                let ring: Vec<String> = [[x0, y0], [x0 + w, y0], [x0 + w, y0 + w], [x0, y0 + w], [x0, y0]]
                    .iter()
                    .map(|&xy| {
                        let p = self.to_lonlat(xy);
                        format!("[{:.10},{:.10}]", p.lon, p.lat)
                    })
                    .collect();
                feats.push(format!(
                    "{{\"type\":\"Feature\",\"properties\":{{\"population\":{}}},\"geometry\":{{\"type\":\"Polygon\",\"coordinates\":[[{}]]}}}}",
                    pop(i, j),
                    ring.join(",")
                ));
            }
        }
        format!("{{\"type\":\"FeatureCollection\",\"features\":[{}]}}", feats.join(","))
    }
}

pub struct TownFiles {
    pub dir: tempfile::TempDir,
    pub osm: PathBuf,
    pub area: PathBuf,
    pub census: PathBuf,
}

impl TownFiles {
    pub fn write(town: &Town) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let osm = dir.path().join("town.osm");
        let area = dir.path().join("area.geojson");
        let census = dir.path().join("census.geojson");
        std::fs::write(&osm, town.xml()).unwrap();
        std::fs::write(&area, town.square_geojson(1.0, town.extent_m() - 1.0)).unwrap();
        std::fs::write(&census, town.census_geojson(2, |i, j| 100.0 * (1 + i + 2 * j) as f64)).unwrap();
        TownFiles { dir, osm, area, census }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

pub fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// Bundle with the reference destination model and a single chain.
pub fn single_chain_bundle(chain: &str) -> mobgen_core::CalibrationBundle {
    use mobgen_core::gmm::{ComponentRecord, GaussianMixture};
    use mobgen_core::schedule::{Chain, ChainDistribution, ChainKey, ChainTable, DwellMixture, DwellTable, WeightedChain};
    let chain = Chain::parse(chain).unwrap();
    let mut chains = ChainTable::default();
    chains.insert(ChainDistribution {
        key: ChainKey::GLOBAL,
        chains: vec![WeightedChain {
            chain: chain.clone(),
            probability: 1.0,
        }],
        sample_count: 1000,
    });
    let mut dwell = DwellTable::default();
    let d = chain.len() - 1;
    if d > 0 {
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = 0.25;
        }
        let mixture = GaussianMixture::new(
            d,
            vec![ComponentRecord {
                weight: 1.0,
                mean: (0..d).map(|i| if i == 0 { 8.0 } else { 4.0 }).collect(),
                covariance: cov,
            }],
        )
        .unwrap();
        dwell
            .insert(DwellMixture {
                key: ChainKey::GLOBAL,
                chain,
                mixture,
            })
            .unwrap();
    }
    mobgen_core::CalibrationBundle::new("test", mobgen_core::DestinationModel::reference(), chains, dwell)
}
