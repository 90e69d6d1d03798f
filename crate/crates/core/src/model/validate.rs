use std::collections::{BTreeSet, HashMap};
use std::fmt;

use chrono::DateTime;
use serde::Serialize;
use serde_json::Value;

use super::wire::{parse_document, Draft, RefTarget};
use super::{
    owned_relations, Entity, EntityId, EntityRef, EntityType, FieldKind, ModelError, PASSWORD_HASH_FIELD,
};
use crate::linref::{self, Geometry, LengthUnit, SamplingExtent};
use crate::store::EntityGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum ViolationKind {
    MissingField,
    InvalidValue,
    UnknownField,
    /// A required relation has no reference.
    MissingReference,
    /// A reference names an entity that does not exist.
    UnresolvedReference,
    /// A cross-field or cross-entity rule does not hold.
    Constraint,
    /// A uniqueness rule would be broken.
    Conflict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub kind: ViolationKind,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, kind: ViolationKind, message: impl Into<String>) -> Self {
        Self { path: path.into(), kind, message: message.into() }
    }

    /// Creation-order problems: the document depends on something not yet stored.
    pub fn is_dependency(&self) -> bool {
        matches!(self.kind, ViolationKind::MissingReference | ViolationKind::UnresolvedReference)
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_message(&self, message: &str) -> bool {
        self.violations.iter().any(|v| v.message == message)
    }
}

/// Validates a wire document against the schema and the current graph.
pub fn validate_entity(type_name: &str, document: &Value, graph: &EntityGraph) -> Result<ValidationReport, ModelError> {
    let ty = EntityType::parse(type_name)?;
    if ty.is_view() {
        return Err(ModelError::ReadOnlyView(ty));
    }
    let draft = parse_document(ty, document);
    let id = draft.id.unwrap_or_else(|| graph.next_id(ty));
    let mut entity = Entity::new(ty, id);
    let mut violations = apply_draft(&mut entity, &draft, graph, &HashMap::new());
    if draft.password.is_some() {
        entity.fields.insert(PASSWORD_HASH_FIELD.into(), Value::String(String::new()));
    }
    violations.extend(validate_candidate(&entity, graph));
    Ok(ValidationReport { violations })
}

/// Applies a parsed draft onto `entity`: fields are replaced, explicit nulls
/// removed, and every relation present in the draft replaced wholesale.
/// Returns parse and reference-resolution problems.
pub(crate) fn apply_draft(
    entity: &mut Entity,
    draft: &Draft,
    graph: &EntityGraph,
    locals: &HashMap<String, EntityRef>,
) -> Vec<Violation> {
    let mut problems = draft.problems.clone();
    for (k, v) in &draft.fields {
        entity.fields.insert(k.clone(), v.clone());
    }
    for k in &draft.nulls {
        entity.fields.remove(k);
    }
    for (name, drafts) in &draft.refs {
        let rel = owned_relations(entity.entity_type).find(|r| r.name == *name).expect("draft relation is owned");
        let mut resolved = Vec::new();
        for d in drafts {
            let candidates = match d.type_hint {
                Some(ref t) => std::slice::from_ref(t),
                None => rel.targets,
            };
            let found = match &d.target {
                RefTarget::Id(id) => graph.find(candidates, *id).map(Entity::entity_ref),
                RefTarget::Local(key) => locals.get(key).copied().filter(|r| candidates.contains(&r.entity_type)),
            };
            match found {
                Some(r) if !resolved.contains(&r) => resolved.push(r),
                Some(_) => {}
                None => problems.push(Violation::new(
                    &d.path,
                    ViolationKind::UnresolvedReference,
                    format!("no {} matches {}", type_list(candidates), describe_target(&d.target)),
                )),
            }
        }
        if resolved.is_empty() {
            entity.links.remove(*name);
        } else {
            entity.links.insert(name.to_string(), resolved);
        }
    }
    problems
}

fn describe_target(t: &RefTarget) -> String {
    match t {
        RefTarget::Id(id) => format!("@iot.id {id}"),
        RefTarget::Local(k) => format!("local key `{k}`"),
    }
}

fn type_list(types: &[EntityType]) -> String {
    types.iter().map(|t| t.name()).collect::<Vec<_>>().join(" or ")
}

/// Checks a fully-resolved candidate against every schema rule and the
/// uniqueness rules of the graph. The candidate's own id is excluded from
/// uniqueness scans.
pub(crate) fn validate_candidate(entity: &Entity, graph: &EntityGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    check_fields(entity, &mut out);
    check_relations(entity, graph, &mut out);
    check_rules(entity, graph, &mut out);
    check_uniqueness(entity, graph, &mut out);
    out
}

fn check_fields(entity: &Entity, out: &mut Vec<Violation>) {
    let ty = entity.entity_type;
    for spec in ty.fields() {
        if spec.kind == FieldKind::Secret {
            if spec.required && !entity.fields.contains_key(PASSWORD_HASH_FIELD) {
                out.push(Violation::new(spec.name, ViolationKind::MissingField, format!("{} required", spec.name)));
            }
            continue;
        }
        let Some(value) = entity.fields.get(spec.name) else {
            if spec.required {
                out.push(Violation::new(spec.name, ViolationKind::MissingField, format!("{} required", spec.name)));
            }
            continue;
        };
        if let Err(msg) = check_kind(spec.kind, value) {
            out.push(Violation::new(spec.name, ViolationKind::InvalidValue, msg));
        } else if spec.required && spec.kind == FieldKind::Text && value.as_str().is_some_and(|s| s.trim().is_empty()) {
            out.push(Violation::new(spec.name, ViolationKind::InvalidValue, format!("{} must not be empty", spec.name)));
        }
    }
    for key in entity.fields.keys() {
        if key != PASSWORD_HASH_FIELD && !ty.fields().iter().any(|f| f.name == key) {
            out.push(Violation::new(key, ViolationKind::UnknownField, format!("unknown field for {ty}")));
        }
    }
}

fn check_kind(kind: FieldKind, value: &Value) -> Result<(), String> {
    match kind {
        FieldKind::Text => value.as_str().map(drop).ok_or_else(|| "must be text".into()),
        FieldKind::Number => match value.as_f64() {
            Some(v) if v.is_finite() => Ok(()),
            _ => Err("must be a number".into()),
        },
        FieldKind::Boolean => value.as_bool().map(drop).ok_or_else(|| "must be a boolean".into()),
        FieldKind::Object => value.as_object().map(drop).ok_or_else(|| "must be an object".into()),
        FieldKind::Geometry => Geometry::from_geojson(value).map(drop).map_err(|e| e.to_string()),
        FieldKind::Result => match value {
            Value::Null | Value::String(_) => Ok(()),
            Value::Number(n) if n.as_f64().is_some_and(f64::is_finite) => Ok(()),
            _ => Err("result must be a number, text or null".into()),
        },
        FieldKind::Time => value.as_str().ok_or_else(|| "must be ISO-8601 text".to_string()).and_then(check_time),
        FieldKind::LengthUnit => value
            .as_str()
            .ok_or_else(|| "must be a length unit code".to_string())
            .and_then(|s| s.parse::<LengthUnit>().map(drop).map_err(|e| e.to_string())),
        FieldKind::Secret => Ok(()),
    }
}

/// Accepts an RFC 3339 instant or a `start/end` interval with start ≤ end.
pub fn check_time(text: &str) -> Result<(), String> {
    let parse = |s: &str| DateTime::parse_from_rfc3339(s.trim()).map_err(|e| format!("invalid timestamp `{s}`: {e}"));
    match text.split_once('/') {
        Some((a, b)) => {
            let (a, b) = (parse(a)?, parse(b)?);
            if a > b {
                return Err("interval start is after its end".into());
            }
            Ok(())
        }
        None => parse(text).map(drop),
    }
}

fn check_relations(entity: &Entity, graph: &EntityGraph, out: &mut Vec<Violation>) {
    let ty = entity.entity_type;
    for rel in owned_relations(ty) {
        let refs = entity.refs(rel.name);
        if refs.is_empty() && rel.required {
            out.push(Violation::new(
                rel.name,
                ViolationKind::MissingReference,
                format!("{} required", rel.name.to_ascii_lowercase()),
            ));
        }
        if rel.cardinality == super::Cardinality::One && refs.len() > 1 {
            out.push(Violation::new(rel.name, ViolationKind::InvalidValue, "relation accepts a single reference"));
        }
        for r in refs {
            if !rel.targets.contains(&r.entity_type) {
                out.push(Violation::new(
                    rel.name,
                    ViolationKind::InvalidValue,
                    format!("{} cannot reference {}", rel.name, r.entity_type),
                ));
            } else if !graph.contains(*r) {
                out.push(Violation::new(rel.name, ViolationKind::UnresolvedReference, format!("{r} does not exist")));
            } else if *r == entity.entity_ref() {
                out.push(Violation::new(rel.name, ViolationKind::Constraint, "an entity cannot reference itself"));
            }
        }
    }
    for key in entity.links.keys() {
        if !owned_relations(ty).any(|r| r.name == key) {
            out.push(Violation::new(key, ViolationKind::UnknownField, format!("unknown relation for {ty}")));
        }
    }
}

fn check_rules(entity: &Entity, graph: &EntityGraph, out: &mut Vec<Violation>) {
    match entity.entity_type {
        EntityType::BhTrajectoryThing => {
            for f in ["lengthHole", "lengthCore"] {
                if entity.number(f).is_some_and(|v| v < 0.0) {
                    out.push(Violation::new(f, ViolationKind::InvalidValue, format!("{f} must be ≥ 0")));
                }
            }
        }
        EntityType::Location => {
            if let Some(enc) = entity.text("encodingType") {
                if enc != "application/geo+json" {
                    out.push(Violation::new(
                        "encodingType",
                        ViolationKind::InvalidValue,
                        "encodingType must be application/geo+json",
                    ));
                }
            }
        }
        EntityType::BhSampling => check_sampling(entity, graph, out),
        EntityType::BhFeatureOfInterest => {
            if let Some(p) = entity.number("recoveryPercentage") {
                if !(0.0..=100.0).contains(&p) {
                    out.push(Violation::new(
                        "recoveryPercentage",
                        ViolationKind::InvalidValue,
                        "recoveryPercentage must lie in [0, 100]",
                    ));
                }
            }
            if let Err(v) = validate_feature_type_axes(entity, graph) {
                out.push(v);
            }
            if sampled_feature_cycle(entity, graph) {
                out.push(Violation::new(
                    "BhSampledFeatures",
                    ViolationKind::Constraint,
                    "sampled feature links form a cycle",
                ));
            }
        }
        EntityType::Sensor => {
            if entity.text("metadata").is_some_and(|s| s.trim().is_empty()) {
                out.push(Violation::new("metadata", ViolationKind::InvalidValue, "metadata must not be empty"));
            }
        }
        EntityType::Role => {
            if let Some(name) = entity.name() {
                if crate::access::RoleName::parse(name).is_none() {
                    out.push(Violation::new(
                        "name",
                        ViolationKind::InvalidValue,
                        "role name must be one of admin, create, read, update, delete",
                    ));
                }
            }
        }
        _ => {}
    }
}

fn check_sampling(entity: &Entity, graph: &EntityGraph, out: &mut Vec<Violation>) {
    let at = entity.number("atPosition");
    let from = entity.number("fromPosition");
    let to = entity.number("toPosition");
    if at.is_some() && (from.is_some() || to.is_some()) {
        out.push(Violation::new("atPosition", ViolationKind::Constraint, "exclusive position fields"));
        return;
    }
    if from.is_some() != to.is_some() {
        out.push(Violation::new(
            if from.is_some() { "toPosition" } else { "fromPosition" },
            ViolationKind::Constraint,
            "fromPosition and toPosition must be given together",
        ));
        return;
    }
    if let (Some(f), Some(t)) = (from, to) {
        if f >= t {
            out.push(Violation::new("fromPosition", ViolationKind::Constraint, "fromPosition must be below toPosition"));
            return;
        }
    }
    for (name, v) in [("atPosition", at), ("fromPosition", from), ("toPosition", to)] {
        if v.is_some_and(|v| v < 0.0) {
            out.push(Violation::new(name, ViolationKind::InvalidValue, format!("{name} must be ≥ 0")));
            return;
        }
    }
    let Some(trajectory) = entity.single_ref("BhTrajectoryThing").and_then(|r| graph.get_ref(r)) else {
        return;
    };
    let (Ok(extent), Ok((declared, offset))) =
        (SamplingExtent::from_entity(entity), linref::trajectory_length(trajectory))
    else {
        return;
    };
    if let Some((lo, hi)) = extent.bounds_in(declared.unit) {
        for (v, name) in [(lo, "position"), (hi, "position")] {
            let shifted = v + offset;
            if !(0.0..=declared.value).contains(&shifted) {
                out.push(Violation::new(
                    name,
                    ViolationKind::Constraint,
                    format!("position {shifted} {} outside [0, {}]", declared.unit, declared.value),
                ));
                return;
            }
        }
    }
}

const MATERIAL_AXIS: [&str; 2] = ["Hole", "Core"];
const EXTENT_AXIS: [&str; 3] = ["Point", "Segment", "Entirety"];

/// A feature needs at least one material type (Hole, Core) and at least one
/// extent type (Point, Segment, Entirety); other types may be stacked on top.
pub fn validate_feature_type_axes(foi: &Entity, graph: &EntityGraph) -> Result<(), Violation> {
    let names: Vec<&str> =
        foi.refs("BhFeatureTypes").iter().filter_map(|r| graph.get_ref(*r)).filter_map(Entity::name).collect();
    let has = |axis: &[&str]| names.iter().any(|n| axis.iter().any(|a| a.eq_ignore_ascii_case(n)));
    let missing: Vec<&str> = [(has(&MATERIAL_AXIS), "material (Hole or Core)"), (has(&EXTENT_AXIS), "extent (Point, Segment or Entirety)")]
        .into_iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, label)| label)
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Violation::new(
            "BhFeatureTypes",
            ViolationKind::Constraint,
            format!("missing feature type axis: {}", missing.join(", ")),
        ))
    }
}

fn sampled_feature_cycle(foi: &Entity, graph: &EntityGraph) -> bool {
    let me = foi.entity_ref();
    let mut seen = BTreeSet::new();
    let mut stack: Vec<EntityRef> = foi.refs("BhSampledFeatures").to_vec();
    while let Some(r) = stack.pop() {
        if r == me {
            return true;
        }
        if !seen.insert(r) {
            continue;
        }
        if let Some(e) = graph.get_ref(r) {
            stack.extend(e.refs("BhSampledFeatures").iter().copied());
        }
    }
    false
}

fn check_uniqueness(entity: &Entity, graph: &EntityGraph, out: &mut Vec<Violation>) {
    let others = || graph.iter(entity.entity_type).filter(|e| e.id != entity.id);
    let key_field = match entity.entity_type {
        EntityType::BhFeatureType | EntityType::Role => Some("name"),
        EntityType::User => Some("username"),
        _ => None,
    };
    if let Some(field) = key_field {
        if let Some(v) = entity.text(field) {
            if let Some(dup) = others().find(|e| e.text(field) == Some(v)) {
                out.push(Violation::new(
                    field,
                    ViolationKind::Conflict,
                    format!("{} `{v}` already used by {}", field, dup.entity_ref()),
                ));
            }
        }
    }
    if entity.entity_type == EntityType::Datastream {
        let triple = |e: &Entity| (e.single_ref("Thing"), e.single_ref("Sensor"), e.single_ref("ObservedProperty"));
        let mine = triple(entity);
        if let Some(dup) = others().find(|e| triple(e) == mine) {
            out.push(Violation::new(
                "Thing",
                ViolationKind::Conflict,
                format!("{} already links this thing, sensor and observed property", dup.entity_ref()),
            ));
        }
    }
}

/// Explicit ids must be unused in the whole id space.
pub(crate) fn check_explicit_id(ty: EntityType, id: EntityId, graph: &EntityGraph) -> Option<Violation> {
    graph.id_in_use(ty, id).then(|| Violation::new("@iot.id", ViolationKind::Conflict, format!("id {id} already in use")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn datastream_without_thing() {
        let g = EntityGraph::new();
        let r = validate_entity("Datastreams", &json!({"name": "d"}), &g).unwrap();
        assert!(r.has_message("thing required"), "{r:?}");
    }

    #[test]
    fn well_formed_collar() {
        let g = EntityGraph::new();
        let doc = json!({
            "name": "B-001-0-20",
            "description": "Boring B-001-0-20",
            "properties": {"drillStartDate": "2018-07-19", "drillEndDate": "2018-07-19"}
        });
        assert!(validate_entity("BhCollarThing", &doc, &g).unwrap().is_ok());
    }

    #[test]
    fn exclusive_positions() {
        let g = EntityGraph::new();
        let doc = json!({"name": "s", "atPosition": 1.0, "fromPosition": 1.0, "toPosition": 2.0, "positionUom": "ftUS"});
        assert!(validate_entity("BhSamplings", &doc, &g).unwrap().has_message("exclusive position fields"));
    }

    #[test]
    fn unknown_type() {
        assert!(matches!(
            validate_entity("Widgets", &json!({}), &EntityGraph::new()),
            Err(ModelError::UnknownEntityType(_))
        ));
    }

    #[test]
    fn time_forms() {
        assert!(check_time("2018-07-19T00:00:00Z").is_ok());
        assert!(check_time("2018-07-19T00:00:00-04:00/2018-07-19T01:00:00-04:00").is_ok());
        assert!(check_time("2018-07-19T02:00:00Z/2018-07-19T01:00:00Z").is_err());
        assert!(check_time("yesterday").is_err());
    }
}
