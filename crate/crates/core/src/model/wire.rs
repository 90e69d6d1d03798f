//! JSON wire form: `@iot.id` identifiers, nested `{"@iot.id": n}` references
//! and pluralized entity-set URLs.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::{
    navigations, owned_relations, Cardinality, Entity, EntityId, EntityType, FieldKind, Violation, ViolationKind,
    PASSWORD_HASH_FIELD,
};

pub const ID_KEY: &str = "@iot.id";
pub const SELF_LINK_KEY: &str = "@iot.selfLink";
pub const NAV_LINK_SUFFIX: &str = "@iot.navigationLink";
/// Batch documents may reference an earlier item by its local key.
pub const LOCAL_KEY: &str = "@local";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RefTarget {
    Id(EntityId),
    Local(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefDraft {
    pub target: RefTarget,
    /// Set when the wire key restricts the target type (e.g. `BhTrajectoryThing` on a Datastream).
    pub type_hint: Option<EntityType>,
    /// Wire path of the reference, for violation reports.
    pub path: String,
}

/// A parsed but unresolved document.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Draft {
    pub id: Option<EntityId>,
    pub fields: BTreeMap<String, Value>,
    /// Keyed by canonical relation name. A present-but-empty list clears the relation on update.
    pub refs: BTreeMap<&'static str, Vec<RefDraft>>,
    pub password: Option<String>,
    /// Fields explicitly set to null (removed on update).
    pub nulls: Vec<String>,
    /// Structural problems found while parsing.
    pub problems: Vec<Violation>,
}

fn parse_ref(value: &Value, path: &str, type_hint: Option<EntityType>, problems: &mut Vec<Violation>) -> Option<RefDraft> {
    let Some(obj) = value.as_object() else {
        problems.push(Violation::new(path, ViolationKind::InvalidValue, "reference must be an object"));
        return None;
    };
    if let Some(id) = obj.get(ID_KEY) {
        match id.as_u64().filter(|v| *v > 0) {
            Some(v) => {
                return Some(RefDraft { target: RefTarget::Id(EntityId(v)), type_hint, path: path.to_string() })
            }
            None => {
                problems.push(Violation::new(path, ViolationKind::InvalidValue, "@iot.id must be a positive integer"));
                return None;
            }
        }
    }
    if let Some(key) = obj.get(LOCAL_KEY).and_then(Value::as_str) {
        return Some(RefDraft { target: RefTarget::Local(key.to_string()), type_hint, path: path.to_string() });
    }
    problems.push(Violation::new(
        path,
        ViolationKind::InvalidValue,
        "reference must carry @iot.id or @local (nested creation is not supported)",
    ));
    None
}

/// Parses a wire document for `ty`. Never fails outright: structural
/// problems are collected into [`Draft::problems`].
pub fn parse_document(ty: EntityType, doc: &Value) -> Draft {
    let mut draft = Draft::default();
    let Some(obj) = doc.as_object() else {
        draft.problems.push(Violation::new("", ViolationKind::InvalidValue, "document must be a JSON object"));
        return draft;
    };
    for (key, value) in obj {
        if key == ID_KEY {
            match value.as_u64().filter(|v| *v > 0) {
                Some(v) => draft.id = Some(EntityId(v)),
                None => draft.problems.push(Violation::new(
                    key,
                    ViolationKind::InvalidValue,
                    "@iot.id must be a positive integer",
                )),
            }
            continue;
        }
        if key == SELF_LINK_KEY || key.ends_with(NAV_LINK_SUFFIX) {
            continue;
        }
        if let Some(spec) = ty.fields().iter().find(|f| f.name == key).or_else(|| ty.field(key)) {
            if spec.kind == FieldKind::Secret {
                match value.as_str() {
                    Some(s) => draft.password = Some(s.to_string()),
                    None => draft.problems.push(Violation::new(key, ViolationKind::InvalidValue, "must be text")),
                }
            } else if value.is_null() && spec.kind != FieldKind::Result {
                draft.nulls.push(spec.name.to_string());
            } else {
                draft.fields.insert(spec.name.to_string(), value.clone());
            }
            continue;
        }
        let relation = owned_relations(ty).find_map(|r| {
            if r.name.eq_ignore_ascii_case(key) {
                Some((r, None))
            } else {
                r.wire_aliases.iter().find(|(alias, _)| alias.eq_ignore_ascii_case(key)).map(|(_, t)| (r, Some(*t)))
            }
        });
        let Some((relation, hint)) = relation else {
            draft.problems.push(Violation::new(key, ViolationKind::UnknownField, format!("unknown field for {ty}")));
            continue;
        };
        let entry = draft.refs.entry(relation.name).or_default();
        match value {
            Value::Array(items) => {
                if relation.cardinality == Cardinality::One && items.len() > 1 {
                    draft.problems.push(Violation::new(
                        key,
                        ViolationKind::InvalidValue,
                        "relation accepts a single reference",
                    ));
                }
                for (i, item) in items.iter().enumerate() {
                    let path = format!("{key}[{i}]");
                    if let Some(r) = parse_ref(item, &path, hint, &mut draft.problems) {
                        entry.push(r);
                    }
                }
            }
            Value::Null => {}
            other => {
                if let Some(r) = parse_ref(other, key, hint, &mut draft.problems) {
                    entry.push(r);
                }
            }
        }
    }
    draft
}

/// Options controlling how an entity is rendered.
#[derive(Clone, Copy, Debug)]
pub struct RenderOptions<'a> {
    /// Service root without trailing slash, e.g. `http://localhost:8080/v1.1`.
    pub service_root: &'a str,
    /// Canonical field/relation names to keep; `None` keeps everything.
    pub select: Option<&'a [String]>,
}

pub fn self_link(service_root: &str, ty: EntityType, id: EntityId) -> String {
    format!("{service_root}/{}({id})", ty.set_name())
}

/// Renders an entity to its JSON read form. Passwords are never emitted.
pub fn render(entity: &Entity, opts: RenderOptions<'_>) -> Map<String, Value> {
    let keep = |name: &str| opts.select.is_none_or(|s| s.iter().any(|n| n == name));
    let mut out = Map::new();
    out.insert(ID_KEY.into(), Value::from(entity.id.0));
    let link = self_link(opts.service_root, entity.entity_type, entity.id);
    for spec in entity.entity_type.fields() {
        if spec.kind == FieldKind::Secret || !keep(spec.name) {
            continue;
        }
        if let Some(v) = entity.fields.get(spec.name) {
            out.insert(spec.name.into(), v.clone());
        } else if spec.kind == FieldKind::Result && entity.entity_type == EntityType::Observation {
            out.insert(spec.name.into(), Value::Null);
        }
    }
    for nav in navigations(entity.entity_type) {
        if opts.select.is_some() && !keep(nav.name) {
            continue;
        }
        out.insert(format!("{}{NAV_LINK_SUFFIX}", nav.name), Value::String(format!("{link}/{}", nav.name)));
    }
    out.insert(SELF_LINK_KEY.into(), Value::String(link));
    debug_assert!(!out.contains_key(PASSWORD_HASH_FIELD) && !out.contains_key("password"));
    out
}
