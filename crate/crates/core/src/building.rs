use serde::{Deserialize, Serialize};

use crate::geo::LonLat;

/// Number of explanatory features of the attraction function.
pub const N_FEATURES: usize = 12;

/// Feature names in coefficient order (`θ0` .. `θ11`).
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "a_residential",
    "a_industrial",
    "a_commercial",
    "a_other",
    "u_office",
    "u_shops",
    "u_schools",
    "u_universities",
    "u_residential",
    "u_industrial",
    "u_commercial",
    "u_other",
];

/// Index of the `u_shops` feature.
pub const U_SHOPS: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Landuse {
    Residential,
    Industrial,
    Commercial,
    #[default]
    None,
}

impl Landuse {
    /// Maps an OSM `landuse=*` value; `retail` folds into commercial, anything
    /// unknown becomes `None`.
    pub fn from_osm(value: &str) -> Landuse {
        match value {
            "residential" => Landuse::Residential,
            "industrial" => Landuse::Industrial,
            "commercial" | "retail" => Landuse::Commercial,
            _ => Landuse::None,
        }
    }

    fn slot(self) -> usize {
        match self {
            Landuse::Residential => 0,
            Landuse::Industrial => 1,
            Landuse::Commercial => 2,
            Landuse::None => 3,
        }
    }
}

/// One destination candidate. Field names on the wire follow the building
/// feature table (coordinates, area, population, landuse, number of shops,
/// offices, schools, universities, in focus area).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Building {
    /// Opaque, unique within one model. OSM ways keep their id, relations are
    /// offset by [`RELATION_ID_OFFSET`].
    pub id: u64,
    pub coordinates: LonLat,
    /// Footprint area, m².
    pub area: f64,
    pub population: f64,
    pub landuse: Landuse,
    #[serde(rename = "number_of_shops")]
    pub n_shops: u32,
    #[serde(rename = "number_of_offices")]
    pub n_offices: u32,
    #[serde(rename = "number_of_schools")]
    pub n_schools: u32,
    #[serde(rename = "number_of_universities")]
    pub n_universities: u32,
    pub in_focus_area: bool,
}

pub const RELATION_ID_OFFSET: u64 = 1 << 60;

impl Building {
    /// Bare building: no POIs, no land use, no population.
    pub fn bare(id: u64, coordinates: LonLat, area: f64) -> Self {
        Building {
            id,
            coordinates,
            area,
            population: 0.0,
            landuse: Landuse::None,
            n_shops: 0,
            n_offices: 0,
            n_schools: 0,
            n_universities: 0,
            in_focus_area: true,
        }
    }

    /// Feature vector of the linear attraction function: the area goes to the
    /// slot of the building's land use, the land-use indicator is one-hot.
    pub fn features(&self) -> [f64; N_FEATURES] {
        let mut x = [0.0; N_FEATURES];
        let slot = self.landuse.slot();
        x[slot] = self.area;
        x[4] = self.n_offices as f64;
        x[5] = self.n_shops as f64;
        x[6] = self.n_schools as f64;
        x[7] = self.n_universities as f64;
        x[8 + slot] = 1.0;
        x
    }
}
