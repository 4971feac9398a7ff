//! On-disk formats: building table, grid, distance matrix, bundle, survey,
//! cell table, socio-demographics and schedules.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use mobgen_core::calibration::survey::{SurveyRecord, SURVEY_COLUMNS};
use mobgen_core::calibration::CellTable;
use mobgen_core::population::{AgeGroup, HomogenousGroup, MobilityGroup, SocioDistribution};
use mobgen_core::simulate::AgentSchedule;
use mobgen_core::validation::Stop;
use mobgen_core::{ActivityType, Building, CalibrationBundle, DistanceMatrix, Grid, LonLat, SocioFeatures, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T, pretty: bool) -> Result<()> {
    let mut w = create(path)?;
    if pretty {
        serde_json::to_writer_pretty(&mut w, value)?;
    } else {
        serde_json::to_writer(&mut w, value)?;
    }
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| Error::from(e).in_file(path))
}

// ---- buildings ----

/// One building per line.
pub fn write_buildings(path: &Path, buildings: &[Building]) -> Result<()> {
    let mut w = create(path)?;
    for b in buildings {
        serde_json::to_writer(&mut w, b)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_buildings(path: &Path) -> Result<Vec<Building>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let b: Building = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("line {}: {e}", i + 1)).in_file(path))?;
        out.push(b);
    }
    Ok(out)
}

// ---- grid ----

#[derive(Serialize, Deserialize)]
struct GridCellRecord {
    id: u32,
    tier: u32,
    centroid: LonLat,
    /// Building ids.
    members: Vec<u64>,
}

pub fn write_grid(path: &Path, grid: &Grid, buildings: &[Building]) -> Result<()> {
    let cells: Vec<GridCellRecord> = grid
        .cells()
        .iter()
        .map(|c| GridCellRecord {
            id: c.id,
            tier: c.tier,
            centroid: c.centroid,
            members: c.members.iter().map(|&m| buildings[m as usize].id).collect(),
        })
        .collect();
    write_json(path, &cells, false)
}

/// Rebuilds the grid over `buildings`; attraction sums use `model`.
pub fn read_grid(path: &Path, buildings: &[Building], model: &mobgen_core::DestinationModel) -> Result<Grid> {
    let cells: Vec<GridCellRecord> = read_json(path)?;
    let index: HashMap<u64, u32> = buildings.iter().enumerate().map(|(i, b)| (b.id, i as u32)).collect();
    let mut assignment = Vec::with_capacity(cells.len());
    for (i, c) in cells.into_iter().enumerate() {
        if c.id as usize != i {
            return Err(Error::parse("grid cell ids must be 0, 1, 2, ... in order").in_file(path));
        }
        let members = c
            .members
            .iter()
            .map(|id| index.get(id).copied().ok_or_else(|| Error::parse(format!("cell {i}: unknown building {id}"))))
            .collect::<Result<Vec<u32>>>()
            .map_err(|e| e.in_file(path))?;
        assignment.push((c.tier, members));
    }
    Grid::from_assignment(buildings, assignment, model).map_err(|e| Error::from(e).in_file(path))
}

// ---- distance matrix ----

pub const MATRIX_MAGIC: [u8; 4] = *b"MGDM";
pub const MATRIX_VERSION: u32 = 1;

/// Little-endian: magic, version (u32), cell count (u64), bin width (f64),
/// `n²` row-major f32 meters, then the beeline bitmap as `⌈n²/64⌉` u64 words
/// (bit `s·n + t` set when that entry is a beeline distance).
pub fn write_matrix(path: &Path, m: &DistanceMatrix) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    w.write_all(&MATRIX_MAGIC).map_err(io)?;
    w.write_all(&MATRIX_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(m.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&m.bin_width().to_le_bytes()).map_err(io)?;
    for v in m.values() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for word in m.beeline_bits() {
        w.write_all(&word.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_matrix(path: &Path) -> Result<DistanceMatrix> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes).map_err(|e| e.in_file(path))
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DistanceMatrix> {
    if bytes.len() < 24 || bytes[..4] != MATRIX_MAGIC {
        return Err(Error::parse("not a distance matrix file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MATRIX_VERSION {
        return Err(Error::parse(format!("unsupported matrix version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let bin_width = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let cells = n.checked_mul(n).ok_or_else(|| Error::parse("matrix size overflows"))?;
    let words = cells.div_ceil(64);
    if bytes.len() != 24 + 4 * cells + 8 * words {
        return Err(Error::parse("matrix file is truncated or has trailing bytes"));
    }
    let body = &bytes[24..];
    let d = body[..4 * cells]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let bits = body[4 * cells..]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DistanceMatrix::from_parts(n, bin_width, d, bits)?)
}

// ---- bundle, cells, socio ----

pub fn write_bundle(path: &Path, bundle: &CalibrationBundle) -> Result<()> {
    write_json(path, bundle, true)
}

pub fn read_bundle(path: &Path) -> Result<CalibrationBundle> {
    let b: CalibrationBundle = read_json(path)?;
    b.validate().map_err(|e| Error::from(e).in_file(path))?;
    Ok(b)
}

pub fn parse_bundle(text: &str) -> Result<CalibrationBundle> {
    let b: CalibrationBundle = serde_json::from_str(text)?;
    b.validate()?;
    Ok(b)
}

pub fn write_cells(path: &Path, cells: &CellTable) -> Result<()> {
    write_json(path, cells, false)
}

pub fn read_cells(path: &Path) -> Result<CellTable> {
    let c: CellTable = read_json(path)?;
    c.validate().map_err(|e| Error::from(e).in_file(path))?;
    Ok(c)
}

pub fn read_socio(path: &Path) -> Result<SocioDistribution> {
    read_json(path)
}

// ---- survey ----

#[derive(Serialize, Deserialize)]
struct SurveyRow {
    person_id: u64,
    age: String,
    hom_group: String,
    mob_group: String,
    weekday: String,
    trip_index: u32,
    purpose: String,
    origin_cell: u32,
    dest_cell: u32,
    start_min: f64,
    end_min: f64,
}

impl SurveyRow {
    fn from_record(r: &SurveyRecord) -> Self {
        SurveyRow {
            person_id: r.person_id,
            age: r.features.age.as_str().into(),
            hom_group: r.features.homogenous_group.as_str().into(),
            mob_group: r.features.mobility_group.as_str().into(),
            weekday: r.weekday.as_str().into(),
            trip_index: r.trip_index,
            purpose: r.purpose.as_str().into(),
            origin_cell: r.origin_cell,
            dest_cell: r.dest_cell,
            start_min: r.start_min,
            end_min: r.end_min,
        }
    }

    fn to_record(&self, line: usize) -> Result<SurveyRecord> {
        let bad = |col: &str, v: &str| Error::parse(format!("line {line}: invalid {col} `{v}`"));
        Ok(SurveyRecord {
            person_id: self.person_id,
            features: SocioFeatures {
                age: AgeGroup::parse(&self.age).ok_or_else(|| bad("age", &self.age))?,
                homogenous_group: HomogenousGroup::parse(&self.hom_group).ok_or_else(|| bad("hom_group", &self.hom_group))?,
                mobility_group: MobilityGroup::parse(&self.mob_group).ok_or_else(|| bad("mob_group", &self.mob_group))?,
            },
            weekday: Weekday::parse(&self.weekday).ok_or_else(|| bad("weekday", &self.weekday))?,
            trip_index: self.trip_index,
            purpose: ActivityType::parse(&self.purpose).ok_or_else(|| bad("purpose", &self.purpose))?,
            origin_cell: self.origin_cell,
            dest_cell: self.dest_cell,
            start_min: self.start_min,
            end_min: self.end_min,
        })
    }
}

pub fn write_survey<W: Write>(out: W, records: &[SurveyRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(SurveyRow::from_record(r))?;
    }
    w.flush().map_err(|e| Error::parse(e.to_string()))
}

pub fn write_survey_file(path: &Path, records: &[SurveyRecord]) -> Result<()> {
    write_survey(create(path)?, records).map_err(|e| e.in_file(path))
}

/// Parses survey CSV. A missing column is reported by name.
pub fn read_survey<R: Read>(input: R) -> Result<Vec<SurveyRecord>> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers()?.clone();
    for col in SURVEY_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(mobgen_core::Error::Schema(format!("survey is missing column `{col}`")).into());
        }
    }
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<SurveyRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(format!("line {}: {e}", i + 2)))?;
        out.push(row.to_record(i + 2)?);
    }
    Ok(out)
}

pub fn read_survey_file(path: &Path) -> Result<Vec<SurveyRecord>> {
    read_survey(open(path)?).map_err(|e| e.in_file(path))
}

// ---- schedules ----

pub const SCHEDULES_SCHEMA: &str = "mobgen.schedules/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ActivityRecord {
    #[serde(rename = "type")]
    pub kind: ActivityType,
    pub stay_time: Option<f64>,
    pub lat: f64,
    pub lon: f64,
    pub in_focus_area: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub weekday: Weekday,
    pub activities: Vec<ActivityRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: u64,
    pub features: SocioFeatures,
    pub days: Vec<DayRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulesFile {
    pub schema: String,
    pub agents: Vec<AgentRecord>,
}

impl SchedulesFile {
    pub fn from_schedules(schedules: &[AgentSchedule], buildings: &[Building]) -> Self {
        let agents = schedules
            .iter()
            .map(|s| AgentRecord {
                id: s.agent.id,
                features: s.agent.features,
                days: s
                    .days
                    .iter()
                    .map(|d| DayRecord {
                        weekday: d.weekday,
                        activities: d
                            .activities
                            .iter()
                            .map(|a| {
                                let b = &buildings[a.building];
                                ActivityRecord {
                                    kind: a.kind,
                                    stay_time: a.stay_minutes,
                                    lat: b.coordinates.lat,
                                    lon: b.coordinates.lon,
                                    in_focus_area: b.in_focus_area,
                                }
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        SchedulesFile {
            schema: SCHEDULES_SCHEMA.into(),
            agents,
        }
    }

    /// Agents × days × stops, for validation.
    pub fn stops(&self) -> Vec<Vec<Vec<Stop>>> {
        self.agents
            .iter()
            .map(|a| {
                a.days
                    .iter()
                    .map(|d| {
                        d.activities
                            .iter()
                            .map(|x| Stop {
                                kind: x.kind,
                                stay_minutes: x.stay_time,
                                location: LonLat::new(x.lon, x.lat),
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn write_schedules(path: &Path, file: &SchedulesFile) -> Result<()> {
    write_json(path, file, false)
}

pub fn read_schedules(path: &Path) -> Result<SchedulesFile> {
    let f: SchedulesFile = read_json(path)?;
    if f.schema != SCHEDULES_SCHEMA {
        return Err(Error::parse(format!("unsupported schedules schema `{}`", f.schema)).in_file(path));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mobgen_core::routing::DistanceMethod;

    #[test]
    fn matrix_round_trip() {
        let mut m = DistanceMatrix::zeros(3, 50.0);
        m.set_row(1, &[10.0, 0.0, 2.5], &[DistanceMethod::Routed, DistanceMethod::Routed, DistanceMethod::Beeline]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.bin");
        write_matrix(&p, &m).unwrap();
        let back = read_matrix(&p).unwrap();
        assert_eq!(back.values(), m.values());
        assert_eq!(back.method(1, 2), DistanceMethod::Beeline);
        assert_eq!(back.method(1, 0), DistanceMethod::Routed);
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.pop();
        assert!(decode_matrix(&bytes).is_err());
    }

    #[test]
    fn survey_missing_column_is_named() {
        let csv = "person_id,age,hom_group,mob_group,weekday,trip_index,origin_cell,dest_cell,start_min,end_min\n";
        let err = read_survey(csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`purpose`"), "{err}");
    }

    #[test]
    fn activity_record_uses_schedule_field_names() {
        let a = ActivityRecord {
            kind: ActivityType::Home,
            stay_time: None,
            lat: 53.6157,
            lon: 10.1072,
            in_focus_area: true,
        };
        let v = serde_json::to_value(&a).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys.len(), 5);
        for k in ["type", "stayTime", "lat", "lon", "inFocusArea"] {
            assert!(keys.contains(&k));
        }
        assert_eq!(v["type"], "HOME");
        assert!(v["stayTime"].is_null());
    }
}
