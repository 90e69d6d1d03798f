//! AGS-lite import: PROJ, LOCA, SAMP, ISPT and GEOL groups converted to a
//! creation-ordered batch.
//!
//! Whether a heading is test metadata or a test result is decided by a
//! mapping table (`ags_mapping.csv`, replaceable at runtime). Headings the
//! table does not list are treated as results.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::linref::{convert_length, LengthUnit};
use crate::store::{Batch, BatchItem};

/// The shipped heading mapping.
pub const DEFAULT_MAPPING: &str = include_str!("ags_mapping.csv");

pub const SUPPORTED_GROUPS: [&str; 5] = ["PROJ", "LOCA", "SAMP", "ISPT", "GEOL"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgsError {
    #[error("line {line}: {message}")]
    Syntax { line: u64, message: String },
    #[error("{group} row at line {line} refers to LOCA_ID `{loca}`, which has no LOCA row")]
    MissingParent { group: String, line: u64, loca: String },
    #[error("{group} row at line {line}: {message}")]
    Row { group: String, line: u64, message: String },
    #[error("mapping line {line}: {message}")]
    Mapping { line: u64, message: String },
}

/// What a heading contributes to the converted entities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadingRole {
    /// Identifier of a PROJ or LOCA row; the collar name for LOCA.
    Key,
    /// LOCA_ID reference from a child row.
    Parent,
    Name,
    Description,
    /// Entry of the PROJ or LOCA `properties` object.
    Property,
    Latitude,
    Longitude,
    Elevation,
    /// Final depth of the hole.
    Length,
    Top,
    Base,
    /// Names the sampling procedure.
    Procedure,
    /// Recovery percentage of the sample.
    Recovery,
    /// Entry of the group Sensor's `properties` object.
    Metadata,
    /// Observation result under an ObservedProperty named after the heading.
    Result,
    Ignore,
}

impl FromStr for HeadingRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        use HeadingRole::*;
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "key" => Key,
            "parent" => Parent,
            "name" => Name,
            "description" => Description,
            "property" => Property,
            "latitude" => Latitude,
            "longitude" => Longitude,
            "elevation" => Elevation,
            "length" => Length,
            "top" => Top,
            "base" => Base,
            "procedure" => Procedure,
            "recovery" => Recovery,
            "metadata" => Metadata,
            "result" => Result,
            "ignore" => Ignore,
            other => return Err(format!("unknown role `{other}`")),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgsMapping {
    roles: BTreeMap<(String, String), HeadingRole>,
}

impl Default for AgsMapping {
    fn default() -> Self {
        AgsMapping::parse(DEFAULT_MAPPING).expect("shipped mapping parses")
    }
}

impl AgsMapping {
    /// Parses `group,heading,role` CSV with a header row.
    pub fn parse(text: &str) -> Result<Self, AgsError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut roles = BTreeMap::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| AgsError::Mapping { line: csv_line(&e), message: e.to_string() })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() < 3 {
                return Err(AgsError::Mapping { line, message: "expected group,heading,role".into() });
            }
            let role = rec[2].parse().map_err(|message| AgsError::Mapping { line, message })?;
            roles.insert((rec[0].to_ascii_uppercase(), rec[1].to_ascii_uppercase()), role);
        }
        Ok(AgsMapping { roles })
    }

    /// Unlisted headings fall back to `Property` in PROJ and LOCA, to
    /// `Parent` for LOCA_ID in child groups, and to `Result` otherwise.
    pub fn role(&self, group: &str, heading: &str) -> HeadingRole {
        if let Some(r) = self.roles.get(&(group.to_string(), heading.to_string())) {
            return *r;
        }
        match (group, heading) {
            ("PROJ" | "LOCA", _) => HeadingRole::Property,
            (_, "LOCA_ID") => HeadingRole::Parent,
            _ => HeadingRole::Result,
        }
    }
}

fn csv_line(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}

#[derive(Clone, Debug, Default)]
struct Table {
    group: String,
    headings: Vec<String>,
    units: Vec<String>,
    types: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    fn unit(&self, col: usize) -> Option<&str> {
        self.units.get(col).map(String::as_str).filter(|u| !u.is_empty())
    }
}

fn parse_tables(text: &str) -> Result<Vec<Table>, AgsError> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut tables: Vec<Table> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| AgsError::Syntax { line: csv_line(&e), message: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let fields: Vec<String> = rec.iter().skip(1).map(str::to_string).collect();
        let descriptor = rec[0].to_ascii_uppercase();
        if descriptor == "GROUP" {
            let group = fields.first().filter(|g| !g.is_empty()).ok_or(AgsError::Syntax {
                line,
                message: "GROUP line without a group name".into(),
            })?;
            tables.push(Table { group: group.to_ascii_uppercase(), ..Table::default() });
            continue;
        }
        let table = tables.last_mut().ok_or_else(|| AgsError::Syntax {
            line,
            message: format!("{descriptor} line before any GROUP line"),
        })?;
        let expect_width = |fields: &Vec<String>, table: &Table| {
            if fields.len() != table.headings.len() {
                Err(AgsError::Syntax {
                    line,
                    message: format!("{descriptor} line has {} fields, HEADING has {}", fields.len(), table.headings.len()),
                })
            } else {
                Ok(())
            }
        };
        match descriptor.as_str() {
            "HEADING" => table.headings = fields.iter().map(|h| h.to_ascii_uppercase()).collect(),
            "UNIT" => {
                expect_width(&fields, table)?;
                table.units = fields;
            }
            "TYPE" => {
                expect_width(&fields, table)?;
                table.types = fields;
            }
            "DATA" => {
                if table.headings.is_empty() {
                    return Err(AgsError::Syntax { line, message: "DATA line before HEADING line".into() });
                }
                expect_width(&fields, table)?;
                table.rows.push((line, fields));
            }
            other => return Err(AgsError::Syntax { line, message: format!("unknown line descriptor `{other}`") }),
        }
    }
    Ok(tables)
}

/// Converts a field using its AGS data type; untyped fields become numbers
/// when they parse as one.
fn typed(value: &str, ty: Option<&str>) -> Value {
    let numeric = match ty.map(str::to_ascii_uppercase) {
        Some(t) if t.ends_with("DP") || t.ends_with("SF") || t.ends_with("SCI") || t == "MC" => true,
        Some(t) if !t.is_empty() => false,
        _ => true,
    };
    if numeric {
        if let Ok(i) = value.parse::<i64>() {
            return json!(i);
        }
        if let Ok(f) = value.parse::<f64>() {
            if f.is_finite() {
                return json!(f);
            }
        }
    }
    Value::String(value.to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgsImport {
    pub batch: Batch,
    pub warnings: Vec<String>,
}

struct Hole {
    trajectory: String,
    unit: LengthUnit,
}

#[derive(Default)]
struct Emitter {
    items: Vec<BatchItem>,
    emitted: BTreeSet<String>,
    sensors: BTreeMap<(String, String), (String, String)>,
}

impl Emitter {
    fn push(&mut self, set: &str, key: String, body: Value, reuse_by_name: bool) -> Value {
        let r = json!({ "@local": key });
        self.emitted.insert(key.clone());
        self.items.push(BatchItem { entity_set: set.into(), local_key: Some(key), body, reuse_by_name });
        r
    }

    /// Pushes `body` under `key` the first time only.
    fn once(&mut self, set: &str, key: String, reuse_by_name: bool, body: impl FnOnce() -> Value) -> Value {
        if self.emitted.contains(&key) {
            json!({ "@local": key })
        } else {
            self.push(set, key, body(), reuse_by_name)
        }
    }

    fn feature_type(&mut self, name: &str) -> Value {
        self.once("BhFeatureTypes", format!("FT:{name}"), true, || {
            json!({ "name": name, "definition": format!("https://ogc.org/{name}") })
        })
    }

    /// One Sensor per distinct metadata object of a group; the first keeps
    /// the bare group name.
    fn sensor(&mut self, group: &str, metadata: &Map<String, Value>) -> (Value, String) {
        let fingerprint = Value::Object(metadata.clone()).to_string();
        if let Some((key, name)) = self.sensors.get(&(group.to_string(), fingerprint.clone())) {
            return (json!({ "@local": key }), name.clone());
        }
        let n = self.sensors.keys().filter(|(g, _)| g == group).count() + 1;
        let (key, name) = if n == 1 {
            (format!("SENSOR:{group}"), group.to_string())
        } else {
            (format!("SENSOR:{group}:{n}"), format!("{group} ({n})"))
        };
        let mut body = json!({
            "name": name,
            "description": format!("AGS group {group}"),
            "encodingType": "text/plain",
            "metadata": format!("AGS {group}"),
        });
        if !metadata.is_empty() {
            body["properties"] = Value::Object(metadata.clone());
        }
        let r = self.push("Sensors", key.clone(), body, false);
        self.sensors.insert((group.to_string(), fingerprint), (key, name.clone()));
        (r, name)
    }
}

fn depth_text(x: f64) -> String {
    let s = format!("{x:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Converts AGS-lite text into a batch that creates its entities in
/// dependency order.
pub fn import_ags_lite(text: &str, mapping: &AgsMapping) -> Result<AgsImport, AgsError> {
    let tables = parse_tables(text)?;
    let mut warnings = Vec::new();
    for t in &tables {
        if !SUPPORTED_GROUPS.contains(&t.group.as_str()) {
            warnings.push(format!("skipped unsupported group {} ({} rows)", t.group, t.rows.len()));
        }
    }
    let of = |g: &'static str| tables.iter().filter(move |t| t.group == g);
    let mut out = Emitter::default();

    let mut projects = Vec::new();
    for t in of("PROJ") {
        for (line, row) in &t.rows {
            let (mut key, mut name, mut description, mut props) = (None, None, None, Map::new());
            for (i, h) in t.headings.iter().enumerate() {
                let v = &row[i];
                if v.is_empty() {
                    continue;
                }
                match mapping.role("PROJ", h) {
                    HeadingRole::Key => key = Some(v.clone()),
                    HeadingRole::Name => name = Some(v.clone()),
                    HeadingRole::Description => description = Some(v.clone()),
                    HeadingRole::Ignore => {}
                    _ => {
                        props.insert(h.clone(), typed(v, t.types.get(i).map(String::as_str)));
                    }
                }
            }
            let key = key.unwrap_or_else(|| format!("line{line}"));
            let mut body = json!({ "name": name.unwrap_or_else(|| key.clone()) });
            if let Some(d) = description {
                body["description"] = json!(d);
            }
            if !props.is_empty() {
                body["properties"] = Value::Object(props);
            }
            projects.push(out.push("Projects", format!("PROJ:{key}"), body, false));
        }
    }

    // Deepest child position per hole, so the declared length covers every sampling.
    let mut deepest: BTreeMap<String, Vec<(f64, Option<String>)>> = BTreeMap::new();
    for t in tables.iter().filter(|t| !matches!(t.group.as_str(), "PROJ" | "LOCA")) {
        if !SUPPORTED_GROUPS.contains(&t.group.as_str()) {
            continue;
        }
        let parent = t.headings.iter().position(|h| mapping.role(&t.group, h) == HeadingRole::Parent);
        for (_, row) in &t.rows {
            let Some(p) = parent else { continue };
            for (i, h) in t.headings.iter().enumerate() {
                if matches!(mapping.role(&t.group, h), HeadingRole::Top | HeadingRole::Base) {
                    if let Ok(d) = row[i].parse::<f64>() {
                        deepest.entry(row[p].clone()).or_default().push((d, t.unit(i).map(str::to_string)));
                    }
                }
            }
        }
    }

    let mut holes: BTreeMap<String, Hole> = BTreeMap::new();
    for t in of("LOCA") {
        for (line, row) in &t.rows {
            let row_err = |message: String| AgsError::Row { group: "LOCA".into(), line: *line, message };
            let (mut key, mut description, mut props) = (None, None, Map::new());
            let (mut lat, mut lon, mut elev, mut length) = (None, None, None, None);
            let mut unit = LengthUnit::Metre;
            for (i, h) in t.headings.iter().enumerate() {
                let v = &row[i];
                if v.is_empty() {
                    continue;
                }
                let num = || v.parse::<f64>().map_err(|_| row_err(format!("{h} `{v}` is not a number")));
                match mapping.role("LOCA", h) {
                    HeadingRole::Key | HeadingRole::Name => key = Some(v.clone()),
                    HeadingRole::Description => description = Some(v.clone()),
                    HeadingRole::Latitude => lat = Some(num()?),
                    HeadingRole::Longitude => lon = Some(num()?),
                    HeadingRole::Elevation => {
                        let u = t.unit(i).map_or(Ok(LengthUnit::Metre), LengthUnit::from_str);
                        let u = u.map_err(|e| row_err(format!("{h} unit: {e}")))?;
                        elev = Some(convert_length(num()?, u, LengthUnit::Metre));
                    }
                    HeadingRole::Length => {
                        length = Some(num()?);
                        if let Some(u) = t.unit(i) {
                            unit = u.parse().map_err(|e| row_err(format!("{h} unit: {e}")))?;
                        }
                    }
                    HeadingRole::Ignore => {}
                    _ => {
                        props.insert(h.clone(), typed(v, t.types.get(i).map(String::as_str)));
                    }
                }
            }
            let id = key.ok_or_else(|| row_err("missing LOCA_ID".into()))?;
            if holes.contains_key(&id) {
                return Err(row_err(format!("duplicate LOCA_ID `{id}`")));
            }
            let mut max = length.unwrap_or(0.0);
            for (d, u) in deepest.get(&id).into_iter().flatten() {
                let from = match u {
                    Some(u) => u.parse().map_err(|e| row_err(format!("child depth unit: {e}")))?,
                    None => unit,
                };
                max = max.max(convert_length(*d, from, unit));
            }
            if max < 0.0 {
                return Err(row_err("negative final depth".into()));
            }
            let mut collar = json!({ "name": id });
            if let Some(d) = description {
                collar["description"] = json!(d);
            }
            if !props.is_empty() {
                collar["properties"] = Value::Object(props);
            }
            if !projects.is_empty() {
                collar["Projects"] = json!(projects);
            }
            let collar_ref = out.push("BhCollarThings", format!("LOCA:{id}"), collar, false);
            let mut traj = json!({
                "name": format!("{id} trajectory"),
                "lengthHole": max,
                "uom": unit.code(),
                "BhCollarThing": collar_ref,
            });
            if !projects.is_empty() {
                traj["Projects"] = json!(projects);
            }
            let traj_key = format!("TRAJ:{id}");
            out.push("BhTrajectoryThings", traj_key.clone(), traj, false);
            if let (Some(lat), Some(lon)) = (lat, lon) {
                let coords = match elev {
                    Some(h) => json!([lon, lat, h]),
                    None => json!([lon, lat]),
                };
                out.push(
                    "Locations",
                    format!("LOC:{id}"),
                    json!({
                        "name": format!("{id} location"),
                        "encodingType": "application/geo+json",
                        "location": { "type": "Point", "coordinates": coords },
                        "BhCollarThings": [collar_ref],
                    }),
                    false,
                );
            }
            holes.insert(id, Hole { trajectory: traj_key, unit });
        }
    }

    for t in tables.iter().filter(|t| matches!(t.group.as_str(), "SAMP" | "ISPT" | "GEOL")) {
        for (line, row) in &t.rows {
            child_row(t, *line, row, mapping, &holes, &mut out, &mut warnings)?;
        }
    }
    Ok(AgsImport { batch: Batch { requests: out.items }, warnings })
}

fn child_row(
    t: &Table,
    line: u64,
    row: &[String],
    mapping: &AgsMapping,
    holes: &BTreeMap<String, Hole>,
    out: &mut Emitter,
    warnings: &mut Vec<String>,
) -> Result<(), AgsError> {
    let g = t.group.as_str();
    let row_err = |message: String| AgsError::Row { group: g.into(), line, message };
    let parent = t
        .headings
        .iter()
        .position(|h| mapping.role(g, h) == HeadingRole::Parent)
        .map(|i| row[i].clone())
        .unwrap_or_default();
    let hole = holes.get(&parent).ok_or_else(|| AgsError::MissingParent { group: g.into(), line, loca: parent.clone() })?;

    let (mut top, mut base, mut name, mut procedure, mut recovery) = (None, None, None, None, None);
    let mut pos_unit = hole.unit;
    let mut metadata = Map::new();
    let mut results = Vec::new();
    for (i, h) in t.headings.iter().enumerate() {
        let v = &row[i];
        if v.is_empty() {
            continue;
        }
        let ty = t.types.get(i).map(String::as_str);
        let depth = || -> Result<f64, AgsError> {
            let d = v.parse::<f64>().map_err(|_| row_err(format!("{h} `{v}` is not a number")))?;
            if !d.is_finite() || d < 0.0 {
                return Err(row_err(format!("{h} must be a non-negative depth")));
            }
            Ok(d)
        };
        match mapping.role(g, h) {
            HeadingRole::Top | HeadingRole::Base => {
                if let Some(u) = t.unit(i) {
                    pos_unit = u.parse().map_err(|e| row_err(format!("{h} unit: {e}")))?;
                }
                if mapping.role(g, h) == HeadingRole::Top {
                    top = Some(depth()?);
                } else {
                    base = Some(depth()?);
                }
            }
            HeadingRole::Name | HeadingRole::Key => name = Some(v.clone()),
            HeadingRole::Procedure => procedure = Some(v.clone()),
            HeadingRole::Recovery => match v.parse::<f64>() {
                Ok(p) if (0.0..=100.0).contains(&p) => recovery = Some(p),
                _ => warnings.push(format!("{g} line {line}: recovery `{v}` outside [0, 100], dropped")),
            },
            HeadingRole::Metadata | HeadingRole::Property | HeadingRole::Description => {
                metadata.insert(h.clone(), typed(v, ty));
            }
            HeadingRole::Result => results.push((i, h.clone(), typed(v, ty))),
            _ => {}
        }
    }

    let mut sampling = Map::new();
    let (extent, label) = match (top, base) {
        (Some(a), Some(b)) if b > a => {
            sampling.insert("fromPosition".into(), json!(a));
            sampling.insert("toPosition".into(), json!(b));
            ("Segment", format!("{}-{}", depth_text(a), depth_text(b)))
        }
        (Some(a), Some(b)) if b < a => return Err(row_err(format!("base {b} lies above top {a}"))),
        (Some(a), _) | (None, Some(a)) => {
            sampling.insert("atPosition".into(), json!(a));
            ("Point", depth_text(a))
        }
        (None, None) => ("Entirety", "entire hole".to_string()),
    };
    // Required even for whole-hole samplings.
    sampling.insert("positionUom".into(), json!(pos_unit.code()));
    let name = name.unwrap_or_else(|| format!("{parent} {g} {label}"));
    sampling.insert("name".into(), json!(name));
    sampling.insert("BhTrajectoryThing".into(), json!({ "@local": hole.trajectory }));
    if let Some(p) = procedure {
        let r = out.once("BhSamplingProcedures", format!("PROC:{p}"), true, || json!({ "name": p }));
        sampling.insert("BhSamplingProcedure".into(), r);
    }
    let key = format!("{g}:{line}");
    let sampling_ref = out.push("BhSamplings", format!("{key}:sampling"), Value::Object(sampling), false);

    let material = if g == "SAMP" { "Core" } else { "Hole" };
    let types = vec![out.feature_type(material), out.feature_type(extent)];
    let mut foi = json!({ "name": name, "BhSampling": sampling_ref, "BhFeatureTypes": types });
    if let Some(p) = recovery {
        foi["recoveryPercentage"] = json!(p);
    }
    let foi_ref = out.push("BhFeaturesOfInterest", format!("{key}:foi"), foi, false);

    if results.is_empty() {
        return Ok(());
    }
    let (sensor, sensor_name) = out.sensor(g, &metadata);
    let sensor_key = sensor["@local"].as_str().unwrap_or_default().to_string();
    for (i, heading, result) in results {
        let op = out.once("ObservedProperties", format!("OP:{heading}"), true, || {
            json!({ "name": heading, "description": format!("AGS heading {heading}") })
        });
        let unit = t.unit(i).unwrap_or("").to_string();
        let ds = out.once("Datastreams", format!("DS:{parent}:{sensor_key}:{heading}"), false, || {
            json!({
                "name": format!("{parent} / {sensor_name} / {heading}"),
                "unitOfMeasurement": { "name": unit, "symbol": unit },
                "Thing": { "@local": hole.trajectory },
                "Sensor": sensor,
                "ObservedProperty": op,
            })
        });
        out.push(
            "Observations",
            format!("{key}:obs:{heading}"),
            json!({ "result": result, "Datastream": ds, "FeatureOfInterest": foi_ref }),
            false,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#""GROUP","LOCA"
"HEADING","LOCA_ID","LOCA_LAT","LOCA_LON","LOCA_FDEP"
"UNIT","","","","m"
"TYPE","ID","X","X","2DP"
"DATA","B-001-0-20","39.47466","-81.796858","12.50"

"GROUP","ISPT"
"HEADING","LOCA_ID","ISPT_TOP","ISPT_NVAL","ISPT_ERAT"
"UNIT","","m","","%"
"TYPE","ID","2DP","0DP","0DP"
"DATA","B-001-0-20","0.46","17","84"
"#;

    fn sets(b: &Batch) -> Vec<&str> {
        b.requests.iter().map(|i| i.entity_set.as_str()).collect()
    }

    #[test]
    fn loca_and_ispt() {
        let r = import_ags_lite(SAMPLE, &AgsMapping::default()).unwrap();
        let b = &r.batch;
        assert_eq!(b.requests[0].body["name"], "B-001-0-20");
        let obs = b.requests.iter().find(|i| i.entity_set == "Observations").unwrap();
        assert_eq!(obs.body["result"], json!(17));
        let sensor = b.requests.iter().find(|i| i.entity_set == "Sensors").unwrap();
        assert_eq!(sensor.body["name"], "ISPT");
        assert_eq!(sensor.body["properties"]["ISPT_ERAT"], json!(84));
        let op = b.requests.iter().find(|i| i.entity_set == "ObservedProperties").unwrap();
        assert_eq!(op.body["name"], "ISPT_NVAL");
        assert_eq!(sets(b).iter().filter(|s| **s == "Locations").count(), 1);
    }

    #[test]
    fn empty_file_is_empty_batch() {
        let r = import_ags_lite("", &AgsMapping::default()).unwrap();
        assert!(r.batch.requests.is_empty());
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn missing_parent_is_an_error() {
        let text = "\"GROUP\",\"GEOL\"\n\"HEADING\",\"LOCA_ID\",\"GEOL_TOP\",\"GEOL_BASE\",\"GEOL_DESC\"\n\"DATA\",\"X\",\"0\",\"1\",\"Clay\"\n";
        assert!(matches!(
            import_ags_lite(text, &AgsMapping::default()),
            Err(AgsError::MissingParent { loca, .. }) if loca == "X"
        ));
    }

    #[test]
    fn unknown_group_warns() {
        let text = "\"GROUP\",\"TRAN\"\n\"HEADING\",\"TRAN_ISNO\"\n\"DATA\",\"1\"\n";
        let r = import_ags_lite(text, &AgsMapping::default()).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!(r.batch.requests.is_empty());
    }

    #[test]
    fn mapping_roles() {
        let m = AgsMapping::default();
        assert_eq!(m.role("ISPT", "ISPT_NVAL"), HeadingRole::Result);
        assert_eq!(m.role("ISPT", "ISPT_HAM"), HeadingRole::Metadata);
        assert_eq!(m.role("ISPT", "ISPT_FOO"), HeadingRole::Result);
        assert_eq!(m.role("LOCA", "LOCA_FOO"), HeadingRole::Property);
        assert!(AgsMapping::parse("group,heading,role\nISPT,ISPT_NVAL,bogus\n").is_err());
    }

    #[test]
    fn typed_values() {
        assert_eq!(typed("17", Some("0DP")), json!(17));
        assert_eq!(typed("0.5", None), json!(0.5));
        assert_eq!(typed("17", Some("X")), json!("17"));
        assert_eq!(typed("Clay", Some("2DP")), json!("Clay"));
    }
}
