//! Borehole log tables assembled from service queries, so the same code
//! serves an embedded store and a remote server.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use crate::access::Principal;
use crate::api::{Api, ApiRequest, SERVICE_PATH};
use crate::linref::{convert_length, LengthUnit};
use crate::model::EntityId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LogError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("not authorized: {0}")]
    Unauthorized(String),
    #[error("request failed with status {status}: {message}")]
    Http { status: u16, message: String },
    #[error("unexpected response: {0}")]
    Malformed(String),
    #[error("transport error: {0}")]
    Transport(String),
}

impl LogError {
    /// Classifies a non-200 response.
    pub fn from_status(status: u16, body: Option<&Value>) -> LogError {
        let message = body
            .and_then(|b| b.pointer("/error/message"))
            .and_then(Value::as_str)
            .unwrap_or("no message")
            .to_string();
        match status {
            404 => LogError::NotFound(message),
            401 | 403 => LogError::Unauthorized(message),
            _ => LogError::Http { status, message },
        }
    }
}

/// Read access to the service, addressed relative to the service root.
pub trait ResourceSource {
    fn get(&mut self, target: &str) -> Result<Value, LogError>;
}

/// Queries an in-process [`Api`].
pub struct ApiSource<'a> {
    api: &'a Api,
    caller: Caller,
}

enum Caller {
    Header(Option<String>),
    Trusted(Principal),
}

impl<'a> ApiSource<'a> {
    /// Authenticates every request from an optional Authorization header.
    pub fn new(api: &'a Api, authorization: Option<String>) -> Self {
        Self { api, caller: Caller::Header(authorization) }
    }

    /// Serves every request as `principal`, for embedded tooling.
    pub fn trusted(api: &'a Api, principal: Principal) -> Self {
        Self { api, caller: Caller::Trusted(principal) }
    }
}

impl ResourceSource for ApiSource<'_> {
    fn get(&mut self, target: &str) -> Result<Value, LogError> {
        let mut req = ApiRequest::get(format!("{SERVICE_PATH}/{target}"));
        let resp = match &self.caller {
            Caller::Header(h) => {
                req.authorization = h.clone();
                self.api.handle(&req)
            }
            Caller::Trusted(p) => self.api.handle_as(&req, p),
        };
        match (resp.status, resp.body) {
            (200, Some(v)) => Ok(v),
            (status, body) => Err(LogError::from_status(status, body.as_ref())),
        }
    }
}

/// Follows `@iot.nextLink` until the collection is exhausted.
fn get_all(src: &mut dyn ResourceSource, target: &str) -> Result<Vec<Value>, LogError> {
    let mut out = Vec::new();
    let mut next = Some(target.to_string());
    while let Some(t) = next.take() {
        let page = src.get(&t)?;
        let items = page
            .get("value")
            .and_then(Value::as_array)
            .ok_or_else(|| LogError::Malformed(format!("{t} did not return a collection")))?;
        out.extend(items.iter().cloned());
        if let Some(link) = page.get("@iot.nextLink").and_then(Value::as_str) {
            let rel = link
                .split_once(&format!("{SERVICE_PATH}/"))
                .map(|(_, r)| r.to_string())
                .ok_or_else(|| LogError::Malformed(format!("unexpected next link {link}")))?;
            next = Some(rel);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoreholeLog {
    pub header: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn text(v: &Value, key: &str) -> Option<String> {
    v.get(key).and_then(Value::as_str).map(str::to_string)
}

fn id_of(v: &Value) -> u64 {
    v.get("@iot.id").and_then(Value::as_u64).unwrap_or(0)
}

fn array<'a>(v: &'a Value, key: &str) -> &'a [Value] {
    v.get(key).and_then(Value::as_array).map(Vec::as_slice).unwrap_or(&[])
}

/// Renders a result or property value as log cell text.
fn cell(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        other => other.to_string(),
    }
}

/// Fixed three-decimal rounding with trailing zeros removed.
fn depth(x: f64) -> String {
    let s = format!("{x:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn sorted_properties(v: &Value) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = v
        .get("properties")
        .and_then(Value::as_object)
        .map(|m| m.iter().map(|(k, v)| (k.clone(), cell(v))).collect())
        .unwrap_or_default();
    out.sort();
    out
}

struct Row {
    from: f64,
    to: f64,
    id: u64,
    material: Vec<(u64, String)>,
    samples: Vec<(u64, String)>,
    /// Datastream id to (observation id, result text).
    results: BTreeMap<u64, Vec<(u64, String)>>,
}

struct StreamInfo {
    property: String,
    sensor: String,
}

/// ObservedProperty names shown in the material description column.
const MATERIAL_PROPERTIES: [&str; 2] = ["lithology description", "GEOL_DESC"];

/// Queries a collar, its trajectories and their samplings, and tabulates
/// every observation by sampling interval.
pub fn fetch_borehole_log(src: &mut dyn ResourceSource, collar: EntityId) -> Result<BoreholeLog, LogError> {
    let c = src.get(&format!(
        "BhCollarThings({collar})?$expand=Projects,Locations,BhTrajectoryThings($expand=Locations)"
    ))?;
    let mut header = Vec::new();
    header.push(("Borehole".to_string(), text(&c, "name").unwrap_or_default()));
    if let Some(d) = text(&c, "description") {
        header.push(("Description".into(), d));
    }
    let mut projects: Vec<&Value> = array(&c, "Projects").iter().collect();
    projects.sort_by_key(|p| id_of(p));
    for p in projects {
        let props: Vec<String> = sorted_properties(p).into_iter().map(|(k, v)| format!("{k}: {v}")).collect();
        let name = text(p, "name").unwrap_or_default();
        let value = if props.is_empty() { name } else { format!("{name} ({})", props.join(", ")) };
        header.push(("Project".into(), value));
    }
    for (k, v) in sorted_properties(&c) {
        header.push((k, v));
    }
    let mut locations: Vec<&Value> = array(&c, "Locations").iter().collect();
    locations.sort_by_key(|l| id_of(l));
    for l in locations {
        if let Some(coords) = l.pointer("/location/coordinates").and_then(Value::as_array) {
            if l.pointer("/location/type").and_then(Value::as_str) == Some("Point") {
                let n: Vec<String> = coords.iter().map(cell).collect();
                let mut s = format!("lat {}, lon {}", n.get(1).cloned().unwrap_or_default(), n[0]);
                if let Some(h) = n.get(2) {
                    s.push_str(&format!(", elevation {h} m"));
                }
                header.push(("Location".into(), s));
            }
        }
        for (k, v) in sorted_properties(l) {
            header.push((k, v));
        }
    }

    let mut trajectories: Vec<&Value> = array(&c, "BhTrajectoryThings").iter().collect();
    trajectories.sort_by_key(|t| id_of(t));
    let mut rows = Vec::new();
    let mut streams: BTreeMap<u64, StreamInfo> = BTreeMap::new();
    let mut unit_code = None;
    for t in trajectories {
        let uom = text(t, "uom").unwrap_or_else(|| "m".into());
        let unit: LengthUnit = uom.parse().map_err(|e| LogError::Malformed(format!("trajectory uom: {e}")))?;
        let length = t.get("lengthHole").and_then(Value::as_f64).unwrap_or(0.0);
        header.push((
            "Trajectory".into(),
            format!("{}, length {} {uom}", text(t, "name").unwrap_or_default(), depth(length)),
        ));
        unit_code.get_or_insert(uom.clone());
        let samplings = get_all(
            src,
            &format!(
                "BhTrajectoryThings({})/BhSamplings?$expand=BhFeaturesOfInterest($expand=BhFeatureTypes,Observations($expand=Datastream($expand=ObservedProperty,Sensor)))",
                id_of(t)
            ),
        )?;
        for s in &samplings {
            rows.push(sampling_row(s, unit, length, &mut streams)?);
        }
    }
    rows.sort_by(|a, b| a.from.total_cmp(&b.from).then(a.to.total_cmp(&b.to)).then(a.id.cmp(&b.id)));

    let unit = unit_code.unwrap_or_else(|| "m".into());
    let mut columns =
        vec![format!("From ({unit})"), format!("To ({unit})"), "Material description".into(), "Sample IDs".into()];
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in streams.values() {
        *counts.entry(s.property.as_str()).or_default() += 1;
    }
    let mut seen = Vec::new();
    for (id, s) in &streams {
        let mut label =
            if counts[s.property.as_str()] > 1 { format!("{} [{}]", s.property, s.sensor) } else { s.property.clone() };
        if seen.contains(&label) {
            label = format!("{label} #{id}");
        }
        seen.push(label.clone());
        columns.push(label);
    }
    let table = rows
        .into_iter()
        .map(|mut r| {
            r.material.sort();
            r.samples.sort();
            let mut out = vec![
                depth(r.from),
                depth(r.to),
                r.material.into_iter().map(|(_, m)| m).collect::<Vec<_>>().join("; "),
                r.samples.into_iter().map(|(_, m)| m).collect::<Vec<_>>().join(", "),
            ];
            for id in streams.keys() {
                let mut vals = r.results.remove(id).unwrap_or_default();
                vals.sort();
                out.push(vals.into_iter().map(|(_, v)| v).collect::<Vec<_>>().join(", "));
            }
            out
        })
        .collect();
    Ok(BoreholeLog { header, columns, rows: table })
}

fn sampling_row(
    s: &Value,
    unit: LengthUnit,
    length: f64,
    streams: &mut BTreeMap<u64, StreamInfo>,
) -> Result<Row, LogError> {
    let pos_unit: LengthUnit = match text(s, "positionUom") {
        Some(u) => u.parse().map_err(|e| LogError::Malformed(format!("positionUom: {e}")))?,
        None => unit,
    };
    let num = |k: &str| s.get(k).and_then(Value::as_f64).map(|v| convert_length(v, pos_unit, unit));
    let (from, to) = match (num("atPosition"), num("fromPosition"), num("toPosition")) {
        (Some(a), _, _) => (a, a),
        (None, Some(f), Some(t)) => (f, t),
        _ => (0.0, length),
    };
    let mut row = Row { from, to, id: id_of(s), material: Vec::new(), samples: Vec::new(), results: BTreeMap::new() };
    for f in array(s, "BhFeaturesOfInterest") {
        let types: Vec<String> =
            array(f, "BhFeatureTypes").iter().filter_map(|t| text(t, "name")).map(|n| n.to_ascii_lowercase()).collect();
        if types.iter().any(|t| t == "core") && !types.iter().any(|t| t == "specimen") {
            row.samples.push((id_of(f), text(f, "name").unwrap_or_default()));
        }
        for o in array(f, "Observations") {
            let ds = o.get("Datastream").cloned().unwrap_or(Value::Object(Map::new()));
            let property = ds.pointer("/ObservedProperty/name").and_then(Value::as_str).unwrap_or("").to_string();
            let result = cell(o.get("result").unwrap_or(&Value::Null));
            if MATERIAL_PROPERTIES.iter().any(|m| property.eq_ignore_ascii_case(m)) {
                row.material.push((id_of(o), result));
                continue;
            }
            let sensor = ds.pointer("/Sensor/name").and_then(Value::as_str).unwrap_or("").to_string();
            streams.entry(id_of(&ds)).or_insert(StreamInfo { property, sensor });
            row.results.entry(id_of(&ds)).or_default().push((id_of(o), result));
        }
    }
    Ok(row)
}

impl BoreholeLog {
    /// Fixed-width text: the header block, a blank line, then the table.
    pub fn to_text(&self) -> String {
        let mut out = String::from("BOREHOLE LOG\n");
        let key_width = self.header.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
        for (k, v) in &self.header {
            out.push_str(&format!("{k:<key_width$}  {v}\n"));
        }
        out.push('\n');
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.chars().count()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| -> String {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            padded.join(" | ").trim_end().to_string() + "\n"
        };
        out.push_str(&line(&self.columns));
        out.push_str(&(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-") + "\n"));
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }

    /// The table as CSV with a header row; the header block is omitted.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
    }

    /// Index of the first column whose label equals `name`.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_format() {
        assert_eq!(depth(1.5), "1.5");
        assert_eq!(depth(10.0), "10");
        assert_eq!(depth(1.4999999999), "1.5");
        assert_eq!(depth(-0.0), "0");
    }

    #[test]
    fn text_table_alignment() {
        let log = BoreholeLog {
            header: vec![("Borehole".into(), "B-1".into())],
            columns: vec!["From (m)".into(), "X".into()],
            rows: vec![vec!["1.5".into(), "long value".into()]],
        };
        let t = log.to_text();
        assert!(t.contains("From (m) | X\n"));
        assert!(t.contains("1.5      | long value\n"));
    }
}
