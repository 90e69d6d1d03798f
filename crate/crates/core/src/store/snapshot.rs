use std::fs;
use std::path::Path;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::{EntityGraph, StoreError};
use crate::model::{Entity, EntityType};

const VERSION: u64 = 1;

fn payload(graph: &EntityGraph) -> Map<String, Value> {
    let mut next = Map::new();
    for (ty, hw) in graph.high_water() {
        next.insert(ty.set_name().into(), Value::from(*hw));
    }
    let mut sets = Map::new();
    for ty in EntityType::stored() {
        let items: Vec<Value> =
            graph.iter(ty).map(|e| serde_json::to_value(e).expect("entity serializes")).collect();
        if !items.is_empty() {
            sets.insert(ty.set_name().into(), Value::Array(items));
        }
    }
    let mut p = Map::new();
    p.insert("nextIds".into(), Value::Object(next));
    p.insert("entities".into(), Value::Object(sets));
    p
}

fn checksum(payload: &Map<String, Value>) -> String {
    let text = serde_json::to_string(payload).expect("payload serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Serializes the full graph with a checksum over its payload.
pub fn to_document(graph: &EntityGraph) -> Value {
    let p = payload(graph);
    let mut doc = Map::new();
    doc.insert("version".into(), Value::from(VERSION));
    doc.insert("checksum".into(), Value::String(checksum(&p)));
    doc.extend(p);
    Value::Object(doc)
}

pub fn from_document(doc: &Value) -> Result<EntityGraph, StoreError> {
    let corrupt = |m: &str| StoreError::CorruptSnapshot(m.to_string());
    let obj = doc.as_object().ok_or_else(|| corrupt("not a JSON object"))?;
    if obj.get("version").and_then(Value::as_u64) != Some(VERSION) {
        return Err(corrupt("unsupported version"));
    }
    let stored = obj.get("checksum").and_then(Value::as_str).ok_or_else(|| corrupt("missing checksum"))?;
    let mut p = Map::new();
    for key in ["nextIds", "entities"] {
        p.insert(key.into(), obj.get(key).cloned().ok_or_else(|| corrupt("missing payload"))?);
    }
    if checksum(&p) != stored {
        return Err(corrupt("checksum mismatch"));
    }
    let mut graph = EntityGraph::new();
    let sets = p["entities"].as_object().ok_or_else(|| corrupt("entities must be an object"))?;
    for items in sets.values() {
        for item in items.as_array().ok_or_else(|| corrupt("entity set must be an array"))? {
            let e: Entity = serde_json::from_value(item.clone()).map_err(|e| corrupt(&e.to_string()))?;
            graph.put(e);
        }
    }
    for (set, hw) in p["nextIds"].as_object().ok_or_else(|| corrupt("nextIds must be an object"))? {
        let ty = EntityType::from_set_name(set).ok_or_else(|| corrupt("unknown entity set"))?;
        graph.set_high_water(ty, hw.as_u64().ok_or_else(|| corrupt("nextIds values must be integers"))?);
    }
    if !graph.dangling_references().is_empty() {
        return Err(corrupt("dangling references"));
    }
    Ok(graph)
}

pub fn snapshot(graph: &EntityGraph, path: &Path) -> Result<(), StoreError> {
    let text = serde_json::to_string_pretty(&to_document(graph)).expect("document serializes");
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn restore(path: &Path) -> Result<EntityGraph, StoreError> {
    let bytes = fs::read(path)?;
    let doc: Value = serde_json::from_slice(&bytes).map_err(|e| StoreError::CorruptSnapshot(e.to_string()))?;
    from_document(&doc)
}
