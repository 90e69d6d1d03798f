use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{
    atterberg_reduce, cpt_derive_series, liquid_limit, plastic_limit, spt_reduce, AtterbergResult, CasagrandePoint,
    CptPoint, Determination, DriveSet, NValue, PlasticityIndex, ReductionError, SptResult,
};
use crate::linref::{Length, LengthUnit};
use crate::model::EntityId;
use crate::store::{Batch, BatchItem};

/// An entity a graph attaches to: a stored id, or the local key of an
/// earlier item in the same batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphRef {
    Id(EntityId),
    Local(String),
}

impl GraphRef {
    fn to_json(&self) -> Value {
        match self {
            GraphRef::Id(id) => json!({ "@iot.id": id }),
            GraphRef::Local(key) => local(key),
        }
    }
}

/// Existing entities a test graph attaches to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphRefs {
    /// The BhTrajectoryThing every Datastream belongs to.
    pub thing: GraphRef,
    pub sensor: GraphRef,
    /// Required for SPT and Atterberg; CPT creates one feature per row.
    #[serde(default)]
    pub feature_of_interest: Option<GraphRef>,
    /// Prefixes Datastream names, e.g. the borehole name.
    pub label: String,
    /// Prefixes batch local keys; defaults to `label`. Must differ between
    /// graphs combined into one batch.
    #[serde(default)]
    pub key_prefix: Option<String>,
    #[serde(default)]
    pub phenomenon_time: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DriveSetRaw {
    pub index: u32,
    pub blow_count: i64,
    pub penetration: f64,
    #[serde(default)]
    pub weight_of_rods: bool,
    #[serde(default)]
    pub weight_of_hammer: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SptRaw {
    pub drive_sets: Vec<DriveSetRaw>,
    pub penetration_uom: String,
    /// Nominal increment in `penetration_uom`; 6 inches when absent.
    #[serde(default)]
    pub increment_length: Option<f64>,
    #[serde(default)]
    pub energy_transfer_ratio: Option<f64>,
    #[serde(default)]
    pub overburden_factor: Option<f64>,
}

impl SptRaw {
    pub fn unit(&self) -> Result<LengthUnit, ReductionError> {
        Ok(self.penetration_uom.parse()?)
    }

    pub fn drive_sets(&self) -> Result<Vec<DriveSet>, ReductionError> {
        let unit = self.unit()?;
        Ok(self
            .drive_sets
            .iter()
            .map(|d| DriveSet {
                index: d.index,
                blow_count: d.blow_count,
                penetration: Length::new(d.penetration, unit),
                weight_of_rods: d.weight_of_rods,
                weight_of_hammer: d.weight_of_hammer,
            })
            .collect())
    }

    pub fn reduce(&self) -> Result<SptResult, ReductionError> {
        let increment = match self.increment_length {
            Some(v) => Length::new(v, self.unit()?),
            None => Length::new(0.1524, LengthUnit::Metre),
        };
        let r = spt_reduce(&self.drive_sets()?, increment)?;
        match self.energy_transfer_ratio {
            Some(etr) => r.with_energy(etr, self.overburden_factor.unwrap_or(1.0)),
            None => Ok(r),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CasagrandeTrial {
    pub trial: u32,
    pub blow_count: u32,
    pub water_content: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlasticLimitTrial {
    pub trial: u32,
    pub water_content: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AtterbergRaw {
    pub casagrande: Vec<CasagrandeTrial>,
    pub plastic_limit: Vec<PlasticLimitTrial>,
}

impl AtterbergRaw {
    pub fn reduce(&self) -> Result<AtterbergResult, ReductionError> {
        let pts: Vec<CasagrandePoint> =
            self.casagrande.iter().map(|t| CasagrandePoint::new(t.blow_count, t.water_content)).collect();
        let wcs: Vec<f64> = self.plastic_limit.iter().map(|t| t.water_content).collect();
        Ok(atterberg_reduce(liquid_limit(&pts)?, plastic_limit(&wcs)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CptRaw {
    pub depth_uom: String,
    /// Unit symbol of qc, fs and u2, e.g. `tsf`.
    pub stress_uom: String,
    pub rows: Vec<CptPoint>,
}

struct Builder<'a> {
    refs: &'a GraphRefs,
    items: Vec<BatchItem>,
    next_obs: usize,
}

fn local(key: &str) -> Value {
    json!({ "@local": key })
}

fn uom(name: &str, symbol: &str) -> Value {
    json!({ "name": name, "symbol": symbol })
}

impl<'a> Builder<'a> {
    fn new(refs: &'a GraphRefs) -> Self {
        Self { refs, items: Vec::new(), next_obs: 0 }
    }

    fn key(&self, kind: &str, name: &str) -> String {
        format!("{}:{kind}:{name}", self.refs.key_prefix.as_deref().unwrap_or(&self.refs.label))
    }

    fn push(&mut self, set: &str, key: String, body: Value, reuse_by_name: bool) {
        self.items.push(BatchItem { entity_set: set.into(), local_key: Some(key), body, reuse_by_name });
    }

    /// Emits an ObservedProperty and its Datastream, both reused by name.
    /// `related` names Datastreams emitted earlier.
    fn stream(&mut self, property: &str, description: &str, unit: Value, related: &[&str]) {
        let op_key = self.key("op", property);
        self.push("ObservedProperties", op_key.clone(), json!({ "name": property, "description": description }), true);
        let rel: Vec<Value> = related.iter().map(|r| local(&self.key("ds", r))).collect();
        let body = json!({
            "name": format!("{} / {property}", self.refs.label),
            "description": description,
            "unitOfMeasurement": unit,
            "Thing": self.refs.thing.to_json(),
            "Sensor": self.refs.sensor.to_json(),
            "ObservedProperty": local(&op_key),
            "RelatedDatastreams": rel,
        });
        let ds_key = self.key("ds", property);
        self.push("Datastreams", ds_key, body, true);
    }

    /// Emits an Observation and returns its local key.
    fn observe(&mut self, property: &str, foi: Value, result: Value, related: &[String], parameters: Option<Value>) -> String {
        self.next_obs += 1;
        let key = self.key("obs", &self.next_obs.to_string());
        let mut body = Map::new();
        if let Some(t) = &self.refs.phenomenon_time {
            body.insert("phenomenonTime".into(), Value::String(t.clone()));
        }
        body.insert("result".into(), result);
        if let Some(p) = parameters {
            body.insert("parameters".into(), p);
        }
        body.insert("Datastream".into(), local(&self.key("ds", property)));
        body.insert("FeatureOfInterest".into(), foi);
        if !related.is_empty() {
            body.insert("RelatedObservations".into(), related.iter().map(|k| local(k)).collect());
        }
        self.push("Observations", key.clone(), Value::Object(body), false);
        key
    }

    fn finish(self) -> Batch {
        Batch { requests: self.items }
    }
}

fn foi_ref(refs: &GraphRefs) -> Result<Value, ReductionError> {
    refs.feature_of_interest.as_ref().map(GraphRef::to_json).ok_or(ReductionError::MissingRef("featureOfInterest"))
}

fn n_value_json(n: NValue) -> Value {
    match n {
        NValue::Value(v) => json!(v),
        other => Value::String(other.label()),
    }
}

fn determination_json(d: Determination<i64>) -> Value {
    match d {
        Determination::Determined(v) => json!(v),
        Determination::Undetermined => Value::String("undetermined".into()),
    }
}

/// Observation graph of one SPT: a linked (index, blowCount, penetration)
/// triple per drive set, n_value linked to every index, n1_60 linked to n_value.
pub fn build_spt_graph(raw: &SptRaw, refs: &GraphRefs) -> Result<Batch, ReductionError> {
    let result = raw.reduce()?;
    let unit = raw.unit()?;
    let foi = foi_ref(refs)?;
    let mut b = Builder::new(refs);
    b.stream("penetration", "Distance the sampler travels during a drive set", uom(unit.code(), unit.code()), &[]);
    b.stream("blowCount", "Number of hammer blows during a drive set", uom("blows", "blows"), &["penetration"]);
    b.stream("driveSetIndex", "Counter of drive sets", uom("count", "1"), &["blowCount", "penetration"]);
    b.stream("n_value", "Standard penetration resistance", uom("blows per foot", "blows/ft"), &["driveSetIndex"]);
    b.stream("n1_60", "Penetration resistance corrected for energy and overburden", uom("blows per foot", "blows/ft"), &["n_value"]);
    let mut indexes = Vec::new();
    for d in &raw.drive_sets {
        let pen = b.observe("penetration", foi.clone(), json!(d.penetration), &[], None);
        let blows = b.observe("blowCount", foi.clone(), json!(d.blow_count), std::slice::from_ref(&pen), None);
        indexes.push(b.observe("driveSetIndex", foi.clone(), json!(d.index), &[blows, pen], None));
    }
    let n_params = result.termination.map(|t| json!({ "terminationReason": t }));
    let n = b.observe("n_value", foi.clone(), n_value_json(result.n_value), &indexes, n_params);
    let mut params = Map::new();
    if let Some(etr) = raw.energy_transfer_ratio {
        params.insert("energyTransferRatio".into(), json!(etr));
        params.insert("overburdenFactor".into(), json!(raw.overburden_factor.unwrap_or(1.0)));
    }
    if let Some(n60) = result.n60 {
        params.insert("n60".into(), json!(n60));
    }
    let n1_60 = result.n1_60.map_or(Value::Null, |v| json!(v));
    let params = if params.is_empty() { None } else { Some(Value::Object(params)) };
    b.observe("n1_60", foi, n1_60, &[n], params);
    Ok(b.finish())
}

/// Observation graph of one Atterberg limits test. Casagrande trials are
/// linked triples feeding the liquid limit; each plastic limit container is
/// one plWaterContent observation (trial number in its parameters) feeding
/// the plastic limit; the plasticity index links to both limits only.
pub fn build_atterberg_graph(raw: &AtterbergRaw, refs: &GraphRefs) -> Result<Batch, ReductionError> {
    let result = raw.reduce()?;
    let foi = foi_ref(refs)?;
    let pct = || uom("percent", "%");
    let mut b = Builder::new(refs);
    b.stream("waterContent", "Water content of a Casagrande trial", pct(), &[]);
    b.stream("blowCount", "Blows to close the Casagrande groove", uom("blows", "blows"), &["waterContent"]);
    b.stream("manualCasagrandeTrialNumber", "Casagrande trial counter", uom("count", "1"), &["blowCount", "waterContent"]);
    b.stream("liquid_limit", "Liquid limit", pct(), &["manualCasagrandeTrialNumber"]);
    b.stream("plWaterContent", "Water content of a plastic limit container", pct(), &[]);
    b.stream("manualPlasticLimitTrialNumber", "Plastic limit container counter", uom("count", "1"), &["plWaterContent"]);
    b.stream("plastic_limit", "Plastic limit", pct(), &["manualPlasticLimitTrialNumber"]);
    b.stream("plasticity_index", "Plasticity index", pct(), &["liquid_limit", "plastic_limit"]);
    let mut trials = Vec::new();
    for t in &raw.casagrande {
        let wc = b.observe("waterContent", foi.clone(), json!(t.water_content), &[], None);
        let blows = b.observe("blowCount", foi.clone(), json!(t.blow_count), std::slice::from_ref(&wc), None);
        trials.push(b.observe("manualCasagrandeTrialNumber", foi.clone(), json!(t.trial), &[blows, wc], None));
    }
    let ll = b.observe("liquid_limit", foi.clone(), determination_json(result.liquid_limit), &trials, None);
    let mut containers = Vec::new();
    for t in &raw.plastic_limit {
        let params = json!({ "trialNumber": t.trial });
        containers.push(b.observe("plWaterContent", foi.clone(), json!(t.water_content), &[], Some(params)));
    }
    let pl = b.observe("plastic_limit", foi.clone(), determination_json(result.plastic_limit), &containers, None);
    let pi = match result.plasticity_index {
        PlasticityIndex::Value(v) => json!(v),
        PlasticityIndex::NonPlastic => Value::String("NP".into()),
    };
    b.observe("plasticity_index", foi, pi, &[ll, pl], None);
    Ok(b.finish())
}

/// CPT sounding graph: per row one point BhSampling, its feature, and three
/// independent observations. The friction ratio rides in the sleeve
/// friction observation's parameters.
pub fn build_cpt_graph(raw: &CptRaw, refs: &GraphRefs) -> Result<Batch, ReductionError> {
    let depth_unit: LengthUnit = raw.depth_uom.parse()?;
    let rows = cpt_derive_series(&raw.rows)?;
    let stress = || uom(&raw.stress_uom, &raw.stress_uom);
    let mut b = Builder::new(refs);
    let hole = b.key("ft", "Hole");
    let point = b.key("ft", "Point");
    b.push("BhFeatureTypes", hole.clone(), json!({ "name": "Hole" }), true);
    b.push("BhFeatureTypes", point.clone(), json!({ "name": "Point" }), true);
    b.stream("tipResistance", "Cone tip resistance qc", stress(), &[]);
    b.stream("sleeveFriction", "Sleeve friction fs", stress(), &[]);
    b.stream("porePressureU2", "Pore pressure behind the cone u2", stress(), &[]);
    for (i, row) in rows.iter().enumerate() {
        let name = format!("{} CPT {}", refs.label, fmt_depth(row.depth));
        let sampling = b.key("sampling", &(i + 1).to_string());
        let body = json!({
            "name": name,
            "atPosition": row.depth,
            "positionUom": depth_unit.code(),
            "BhTrajectoryThing": refs.thing.to_json(),
        });
        b.push("BhSamplings", sampling.clone(), body, false);
        let foi_key = b.key("foi", &(i + 1).to_string());
        let body = json!({
            "name": name,
            "BhSampling": local(&sampling),
            "BhFeatureTypes": [local(&hole), local(&point)],
        });
        b.push("BhFeaturesOfInterest", foi_key.clone(), body, false);
        let foi = local(&foi_key);
        b.observe("tipResistance", foi.clone(), json!(row.qc), &[], None);
        let rf = row.friction_ratio.map(|rf| json!({ "frictionRatio": rf }));
        b.observe("sleeveFriction", foi.clone(), json!(row.fs), &[], rf);
        b.observe("porePressureU2", foi, json!(row.u2), &[], None);
    }
    Ok(b.finish())
}

fn fmt_depth(d: f64) -> String {
    let s = format!("{d:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs() -> GraphRefs {
        GraphRefs {
            thing: GraphRef::Id(EntityId(2)),
            sensor: GraphRef::Id(EntityId(9)),
            feature_of_interest: Some(GraphRef::Id(EntityId(20))),
            label: "B-001-0-20".into(),
            key_prefix: None,
            phenomenon_time: None,
        }
    }

    fn count(b: &Batch, set: &str) -> usize {
        b.requests.iter().filter(|r| r.entity_set == set).count()
    }

    #[test]
    fn spt_counts() {
        let raw: SptRaw = serde_json::from_value(json!({
            "driveSets": [
                {"index": 1, "blowCount": 9, "penetration": 0.5},
                {"index": 2, "blowCount": 8, "penetration": 0.5},
                {"index": 3, "blowCount": 9, "penetration": 0.5}
            ],
            "penetrationUom": "ftUS",
            "energyTransferRatio": 84
        }))
        .unwrap();
        let r = raw.reduce().unwrap();
        assert_eq!((r.n_value, r.n60), (NValue::Value(17), Some(24)));
        let b = build_spt_graph(&raw, &refs()).unwrap();
        assert_eq!((count(&b, "Observations"), count(&b, "Datastreams")), (11, 5));
    }

    #[test]
    fn spt_needs_feature() {
        let raw = SptRaw {
            drive_sets: vec![DriveSetRaw { index: 1, blow_count: 3, penetration: 0.5, weight_of_rods: false, weight_of_hammer: false }],
            penetration_uom: "ftUS".into(),
            increment_length: None,
            energy_transfer_ratio: None,
            overburden_factor: None,
        };
        let mut r = refs();
        r.feature_of_interest = None;
        assert_eq!(build_spt_graph(&raw, &r), Err(ReductionError::MissingRef("featureOfInterest")));
    }
}
