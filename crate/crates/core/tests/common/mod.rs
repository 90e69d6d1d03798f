//! Random mutation streams over a small borehole graph, shared by the
//! property suites. Operations pick their targets by index modulo the
//! live population, so most streams mix accepted and rejected writes.

#![allow(dead_code)]

use borelog_core::model::{EntityId, EntityRef, EntityType};
use borelog_core::store::snapshot::to_document;
use borelog_core::{Batch, Principal, Store};
use proptest::prelude::*;
use serde_json::{json, Value};

pub const FEATURE_TYPES: [&str; 5] = ["Hole", "Core", "Point", "Segment", "Entirety"];

#[derive(Clone, Debug)]
pub enum Op {
    Project { public: bool },
    Collar { project: usize },
    Trajectory { collar: usize, length: u8 },
    Sampling { traj: usize, from: u8, to: u8 },
    Foi { sampling: usize, types: u8 },
    Sensor { project: Option<usize> },
    Property { name: u8 },
    Datastream { thing: usize, sensor: usize, prop: usize },
    Observation { ds: usize, foi: usize, result: i16 },
    Rename { pick: usize, name: u8 },
    Relink { ds: usize, sensor: usize },
    LinkSampled { foi: usize, target: usize },
    Publish { project: usize, public: bool },
    Delete { pick: usize },
}

pub fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        1 => any::<bool>().prop_map(|public| Op::Project { public }),
        2 => any::<usize>().prop_map(|project| Op::Collar { project }),
        2 => (any::<usize>(), 1u8..40).prop_map(|(collar, length)| Op::Trajectory { collar, length }),
        3 => (any::<usize>(), 0u8..45, 0u8..45).prop_map(|(traj, from, to)| Op::Sampling { traj, from, to }),
        3 => (any::<usize>(), 0u8..32).prop_map(|(sampling, types)| Op::Foi { sampling, types }),
        1 => proptest::option::of(any::<usize>()).prop_map(|project| Op::Sensor { project }),
        1 => (0u8..4).prop_map(|name| Op::Property { name }),
        3 => (any::<usize>(), any::<usize>(), any::<usize>())
            .prop_map(|(thing, sensor, prop)| Op::Datastream { thing, sensor, prop }),
        4 => (any::<usize>(), any::<usize>(), any::<i16>()).prop_map(|(ds, foi, result)| Op::Observation { ds, foi, result }),
        1 => (any::<usize>(), 0u8..6).prop_map(|(pick, name)| Op::Rename { pick, name }),
        1 => (any::<usize>(), any::<usize>()).prop_map(|(ds, sensor)| Op::Relink { ds, sensor }),
        2 => (any::<usize>(), any::<usize>()).prop_map(|(foi, target)| Op::LinkSampled { foi, target }),
        1 => (any::<usize>(), any::<bool>()).prop_map(|(project, public)| Op::Publish { project, public }),
        2 => any::<usize>().prop_map(|pick| Op::Delete { pick }),
    ]
}

pub fn ops(max: usize) -> impl Strategy<Value = Vec<Op>> {
    proptest::collection::vec(op(), 0..max)
}

/// Entity sets that random operations create, update and delete.
pub const MUTABLE: [EntityType; 9] = [
    EntityType::Project,
    EntityType::BhCollarThing,
    EntityType::BhTrajectoryThing,
    EntityType::BhSampling,
    EntityType::BhFeatureOfInterest,
    EntityType::Sensor,
    EntityType::ObservedProperty,
    EntityType::Datastream,
    EntityType::Observation,
];

fn pick(store: &Store, ty: EntityType, i: usize) -> Option<EntityId> {
    let g = store.graph();
    let ids: Vec<EntityId> = g.iter(ty).map(|e| e.id).collect();
    (!ids.is_empty()).then(|| ids[i % ids.len()])
}

fn pick_any(store: &Store, i: usize) -> Option<EntityRef> {
    let g = store.graph();
    let all: Vec<EntityRef> = MUTABLE.iter().flat_map(|t| g.iter(*t).map(|e| e.entity_ref())).collect();
    (!all.is_empty()).then(|| all[i % all.len()])
}

fn id_ref(id: EntityId) -> Value {
    json!({ "@iot.id": id.0 })
}

/// A store holding the feature types, one project and one full chain down
/// to an observation, so every operation has a target from the start.
pub fn seeded_store(store: Store) -> Store {
    let mut v: Vec<Value> = FEATURE_TYPES
        .iter()
        .map(|t| json!({"entitySet": "BhFeatureTypes", "localKey": format!("ft:{t}"), "body": {"name": t}}))
        .collect();
    let r = |k: &str| json!({ "@local": k });
    v.extend([
        json!({"entitySet": "Projects", "localKey": "p", "body": {"name": "seed", "public": false}}),
        json!({"entitySet": "BhCollarThings", "localKey": "c", "body": {"name": "collar", "Projects": [r("p")]}}),
        json!({"entitySet": "BhTrajectoryThings", "localKey": "t",
               "body": {"name": "traj", "lengthHole": 20, "uom": "m", "BhCollarThing": r("c")}}),
        json!({"entitySet": "BhSamplings", "localKey": "s",
               "body": {"name": "samp", "fromPosition": 1, "toPosition": 2, "positionUom": "m", "BhTrajectoryThing": r("t")}}),
        json!({"entitySet": "BhFeaturesOfInterest", "localKey": "f",
               "body": {"name": "foi", "BhSampling": r("s"), "BhFeatureTypes": [r("ft:Core"), r("ft:Segment")]}}),
        json!({"entitySet": "Sensors", "localKey": "sn", "body": {"name": "sensor", "metadata": "m", "Projects": [r("p")]}}),
        json!({"entitySet": "ObservedProperties", "localKey": "op", "body": {"name": "prop0"}}),
        json!({"entitySet": "Datastreams", "localKey": "ds",
               "body": {"name": "ds", "Thing": r("t"), "Sensor": r("sn"), "ObservedProperty": r("op")}}),
        json!({"entitySet": "Observations", "body": {"result": 0, "Datastream": r("ds"), "FeatureOfInterest": r("f")}}),
    ]);
    let batch = Batch::from_value(json!({ "requests": v })).expect("seed batch parses");
    store.batch_create(&batch, &Principal::system()).expect("seed batch loads");
    store
}

/// Applies one operation as the system principal. Returns whether the store
/// accepted it.
pub fn apply(store: &Store, op: &Op) -> bool {
    let sys = Principal::system();
    let g = |ty, i| pick(store, ty, i);
    let result = match op {
        Op::Project { public } => {
            store.create("Projects", &json!({"name": "project", "public": public}), &sys).map(drop)
        }
        Op::Collar { project } => {
            let Some(p) = g(EntityType::Project, *project) else { return false };
            store.create("BhCollarThings", &json!({"name": "collar", "Projects": [id_ref(p)]}), &sys).map(drop)
        }
        Op::Trajectory { collar, length } => {
            let Some(c) = g(EntityType::BhCollarThing, *collar) else { return false };
            let doc = json!({"name": "traj", "lengthHole": length, "uom": "m", "BhCollarThing": id_ref(c)});
            store.create("BhTrajectoryThings", &doc, &sys).map(drop)
        }
        Op::Sampling { traj, from, to } => {
            let Some(t) = g(EntityType::BhTrajectoryThing, *traj) else { return false };
            let doc = json!({"name": "samp", "fromPosition": from, "toPosition": to, "positionUom": "m",
                             "BhTrajectoryThing": id_ref(t)});
            store.create("BhSamplings", &doc, &sys).map(drop)
        }
        Op::Foi { sampling, types } => {
            let Some(s) = g(EntityType::BhSampling, *sampling) else { return false };
            let ft: Vec<Value> = {
                let graph = store.graph();
                FEATURE_TYPES
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| types & (1 << i) != 0)
                    .filter_map(|(_, n)| graph.iter(EntityType::BhFeatureType).find(|e| e.name() == Some(n)))
                    .map(|e| id_ref(e.id))
                    .collect()
            };
            let doc = json!({"name": "foi", "BhSampling": id_ref(s), "BhFeatureTypes": ft});
            store.create("BhFeaturesOfInterest", &doc, &sys).map(drop)
        }
        Op::Sensor { project } => {
            let projects: Vec<Value> = project.and_then(|p| g(EntityType::Project, p)).map(id_ref).into_iter().collect();
            store.create("Sensors", &json!({"name": "sensor", "metadata": "m", "Projects": projects}), &sys).map(drop)
        }
        Op::Property { name } => store.create("ObservedProperties", &json!({"name": format!("prop{name}")}), &sys).map(drop),
        Op::Datastream { thing, sensor, prop } => {
            let (Some(t), Some(s), Some(p)) = (
                g(EntityType::BhTrajectoryThing, *thing),
                g(EntityType::Sensor, *sensor),
                g(EntityType::ObservedProperty, *prop),
            ) else {
                return false;
            };
            let doc = json!({"name": "ds", "Thing": id_ref(t), "Sensor": id_ref(s), "ObservedProperty": id_ref(p)});
            store.create("Datastreams", &doc, &sys).map(drop)
        }
        Op::Observation { ds, foi, result } => {
            let (Some(d), Some(f)) = (g(EntityType::Datastream, *ds), g(EntityType::BhFeatureOfInterest, *foi)) else {
                return false;
            };
            let doc = json!({"result": result, "Datastream": id_ref(d), "FeatureOfInterest": id_ref(f)});
            store.create("Observations", &doc, &sys).map(drop)
        }
        Op::Rename { pick, name } => {
            let Some(r) = pick_any(store, *pick) else { return false };
            let patch = if r.entity_type == EntityType::Observation {
                json!({ "result": name })
            } else {
                json!({ "name": format!("renamed{name}") })
            };
            store.update(r.entity_type.set_name(), r.id, &patch, &sys).map(drop)
        }
        Op::Relink { ds, sensor } => {
            let (Some(d), Some(s)) = (g(EntityType::Datastream, *ds), g(EntityType::Sensor, *sensor)) else {
                return false;
            };
            store.update("Datastreams", d, &json!({ "Sensor": id_ref(s) }), &sys).map(drop)
        }
        Op::LinkSampled { foi, target } => {
            let (Some(f), Some(t)) =
                (g(EntityType::BhFeatureOfInterest, *foi), g(EntityType::BhFeatureOfInterest, *target))
            else {
                return false;
            };
            store.update("BhFeaturesOfInterest", f, &json!({ "BhSampledFeatures": [id_ref(t)] }), &sys).map(drop)
        }
        Op::Publish { project, public } => {
            let Some(p) = g(EntityType::Project, *project) else { return false };
            store.update("Projects", p, &json!({ "public": public }), &sys).map(drop)
        }
        Op::Delete { pick } => {
            let Some(r) = pick_any(store, *pick) else { return false };
            store.delete(r.entity_type.set_name(), r.id, &sys)
        }
    };
    result.is_ok()
}

/// Runs a stream against a fresh seeded store; returns the store and the
/// number of accepted operations.
pub fn run(store: Store, stream: &[Op]) -> (Store, usize) {
    let store = seeded_store(store);
    let accepted = stream.iter().filter(|op| apply(&store, op)).count();
    (store, accepted)
}

pub fn document(store: &Store) -> Value {
    to_document(&store.graph())
}
