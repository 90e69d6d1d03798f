//! Referentially-consistent entity storage with a mutation journal.
//!
//! Mutations are serialized through one writer. Each mutation works on a
//! private copy of the graph and publishes it only after validation and the
//! journal append succeed, so readers always see a consistent snapshot.

mod graph;
pub mod journal;
pub mod snapshot;

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use graph::EntityGraph;
pub use journal::{Journal, JournalRecord, Mutation};

use crate::access::{self, Action, Principal, RoleName};
use crate::model::wire::parse_document;
use crate::model::{
    apply_draft, check_explicit_id, validate_candidate, view_entity, Entity, EntityId, EntityRef, EntityType,
    ModelError, Violation, ViolationKind, PASSWORD_HASH_FIELD,
};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{0} not found")]
    NotFound(EntityRef),
    #[error("validation failed: {}", join(.0))]
    Validation(Vec<Violation>),
    #[error("dependency missing: {}", join(.0))]
    DependencyMissing(Vec<Violation>),
    #[error("conflict: {}", join(.0))]
    Conflict(Vec<Violation>),
    #[error("{entity} has dependents: {}", dependents.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", "))]
    HasDependents { entity: EntityRef, dependents: Vec<EntityRef> },
    #[error("{action} on {entity_type} is not permitted")]
    Forbidden { action: Action, entity_type: EntityType },
    #[error("authentication required to {action} {entity_type}")]
    Unauthenticated { action: Action, entity_type: EntityType },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("batch item {index}: {source}")]
    Batch { index: usize, source: Box<StoreError> },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("corrupt journal at line {line}: {message}")]
    CorruptJournal { line: usize, message: String },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl StoreError {
    /// The innermost error of a batch failure.
    pub fn root(&self) -> &StoreError {
        match self {
            StoreError::Batch { source, .. } => source.root(),
            other => other,
        }
    }

    fn from_violations(v: Vec<Violation>) -> Self {
        if v.iter().any(Violation::is_dependency) {
            StoreError::DependencyMissing(v)
        } else if v.iter().any(|x| x.kind == ViolationKind::Conflict) {
            StoreError::Conflict(v)
        } else {
            StoreError::Validation(v)
        }
    }
}

/// Source of the current time for defaulted phenomenon times.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

/// One element of a batch creation request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BatchItem {
    pub entity_set: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_key: Option<String>,
    pub body: Value,
    /// Reuse an existing entity with the same name instead of creating one.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reuse_by_name: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub requests: Vec<BatchItem>,
}

impl Batch {
    /// Accepts `{"requests": [...]}` or a bare array of items.
    pub fn from_value(v: Value) -> Result<Batch, serde_json::Error> {
        match v {
            Value::Array(_) => Ok(Batch { requests: serde_json::from_value(v)? }),
            other => serde_json::from_value(other),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchOutcome {
    /// Local key to entity, in request order.
    pub ids: Vec<(String, EntityRef)>,
    /// Newly created entities (reused ones excluded).
    pub created: Vec<EntityRef>,
}

impl BatchOutcome {
    pub fn id_of(&self, key: &str) -> Option<EntityId> {
        self.ids.iter().find(|(k, _)| k == key).map(|(_, r)| r.id)
    }
}

struct Writer {
    journal: Option<Journal>,
}

pub struct Store {
    current: RwLock<Arc<EntityGraph>>,
    writer: Mutex<Writer>,
    clock: Box<dyn Clock>,
}

impl Default for Store {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl Store {
    pub fn in_memory() -> Self {
        Self::from_graph(EntityGraph::new())
    }

    pub fn from_graph(graph: EntityGraph) -> Self {
        Self {
            current: RwLock::new(Arc::new(graph)),
            writer: Mutex::new(Writer { journal: None }),
            clock: Box::new(SystemClock),
        }
    }

    /// Opens a journal-backed store, replaying any existing records.
    pub fn open(journal_path: &Path) -> Result<Self, StoreError> {
        let (journal, graph) = Journal::open(journal_path)?;
        let store = Self::from_graph(graph);
        store.writer.lock().expect("writer lock").journal = Some(journal);
        Ok(store)
    }

    pub fn with_clock(mut self, clock: impl Clock + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    /// Immutable view of the current graph.
    pub fn graph(&self) -> Arc<EntityGraph> {
        self.current.read().expect("graph lock").clone()
    }

    pub fn snapshot(&self, path: &Path) -> Result<(), StoreError> {
        snapshot::snapshot(&self.graph(), path)
    }

    fn commit<T>(
        &self,
        f: impl FnOnce(&mut EntityGraph) -> Result<(T, Mutation), StoreError>,
    ) -> Result<T, StoreError> {
        let mut writer = self.writer.lock().expect("writer lock");
        let mut working = self.graph();
        let (out, mutation) = f(Arc::make_mut(&mut working))?;
        if let Some(j) = writer.journal.as_mut() {
            j.append(&mutation)?;
        }
        *self.current.write().expect("graph lock") = working;
        Ok(out)
    }

    pub fn create(&self, entity_set: &str, document: &Value, principal: &Principal) -> Result<Entity, StoreError> {
        let ty = EntityType::parse(entity_set)?;
        self.commit(|g| {
            let e = create_in(g, ty, document, principal, &HashMap::new(), self.clock.as_ref())?;
            Ok((e.clone(), Mutation::Create { entity: e }))
        })
    }

    /// Reads one entity (or view). Unauthorized reads are reported as not found.
    pub fn read(&self, entity_set: &str, id: EntityId, principal: &Principal) -> Result<Entity, StoreError> {
        let ty = EntityType::parse(entity_set)?;
        let g = self.graph();
        let e = if ty.is_view() { view_entity(&g, ty, id) } else { g.get(ty, id).cloned() };
        match e {
            Some(e) if access::can_read(principal, &e, &g) => Ok(e),
            _ => Err(StoreError::NotFound(EntityRef::new(ty, id))),
        }
    }

    pub fn update(
        &self,
        entity_set: &str,
        id: EntityId,
        patch: &Value,
        principal: &Principal,
    ) -> Result<Entity, StoreError> {
        let ty = EntityType::parse(entity_set)?;
        if ty.is_view() {
            return Err(ModelError::ReadOnlyView(ty).into());
        }
        self.commit(|g| {
            let e = update_in(g, ty, id, patch, principal)?;
            Ok((e.clone(), Mutation::Update { entity: e }))
        })
    }

    pub fn delete(&self, entity_set: &str, id: EntityId, principal: &Principal) -> Result<(), StoreError> {
        let ty = EntityType::parse(entity_set)?;
        if ty.is_view() {
            return Err(ModelError::ReadOnlyView(ty).into());
        }
        self.commit(|g| {
            let r = EntityRef::new(ty, id);
            let existing = g.get_ref(r).cloned().ok_or(StoreError::NotFound(r))?;
            if !access::can_read(principal, &existing, g) {
                return Err(StoreError::NotFound(r));
            }
            require(principal, Action::Delete, &existing, g)?;
            let dependents: Vec<EntityRef> = {
                let mut d: Vec<EntityRef> = g.referrers(r).map(|(s, _)| s).collect();
                d.dedup();
                d
            };
            if !dependents.is_empty() {
                return Err(StoreError::HasDependents { entity: r, dependents });
            }
            g.remove(r);
            Ok(((), Mutation::Delete { entity_type: ty, id }))
        })
    }

    /// Creates every item in order, all or nothing.
    pub fn batch_create(&self, batch: &Batch, principal: &Principal) -> Result<BatchOutcome, StoreError> {
        self.commit(|g| {
            let mut locals: HashMap<String, EntityRef> = HashMap::new();
            let mut outcome = BatchOutcome::default();
            let mut created = Vec::new();
            for (index, item) in batch.requests.iter().enumerate() {
                let wrap = |e: StoreError| StoreError::Batch { index, source: Box::new(e) };
                let ty = EntityType::parse(&item.entity_set).map_err(|e| wrap(e.into()))?;
                let reused = if item.reuse_by_name { find_by_name(g, ty, &item.body, principal) } else { None };
                let r = match reused {
                    Some(r) => r,
                    None => {
                        let e = create_in(g, ty, &item.body, principal, &locals, self.clock.as_ref()).map_err(wrap)?;
                        let r = e.entity_ref();
                        outcome.created.push(r);
                        created.push(e);
                        r
                    }
                };
                if let Some(key) = &item.local_key {
                    if locals.insert(key.clone(), r).is_some() {
                        return Err(wrap(StoreError::Validation(vec![Violation::new(
                            "localKey",
                            ViolationKind::Conflict,
                            format!("local key `{key}` used twice"),
                        )])));
                    }
                    outcome.ids.push((key.clone(), r));
                }
            }
            Ok((outcome, Mutation::Batch { entities: created }))
        })
    }

    /// Ensures the five Roles exist and that `username` is a global admin.
    pub fn bootstrap_admin(&self, username: &str, password: &str) -> Result<(), StoreError> {
        let sys = Principal::system();
        let g = self.graph();
        let mut items = Vec::new();
        for role in RoleName::ALL {
            items.push(BatchItem {
                entity_set: "Roles".into(),
                local_key: Some(role.as_str().into()),
                body: serde_json::json!({"name": role.as_str()}),
                reuse_by_name: true,
            });
        }
        if !g.iter(EntityType::User).any(|u| u.text("username") == Some(username)) {
            let roles: Vec<Value> = RoleName::ALL.iter().map(|r| serde_json::json!({"@local": r.as_str()})).collect();
            items.push(BatchItem {
                entity_set: "Users".into(),
                local_key: None,
                body: serde_json::json!({"username": username, "password": password, "Roles": roles}),
                reuse_by_name: false,
            });
        }
        self.batch_create(&Batch { requests: items }, &sys).map(drop)
    }
}

fn find_by_name(g: &EntityGraph, ty: EntityType, body: &Value, principal: &Principal) -> Option<EntityRef> {
    let key = if ty == EntityType::User { "username" } else { "name" };
    let name = body.get(key)?.as_str()?;
    g.iter(ty)
        .find(|e| e.text(key) == Some(name) && access::can_read(principal, e, g))
        .map(Entity::entity_ref)
}

fn require(principal: &Principal, action: Action, entity: &Entity, g: &EntityGraph) -> Result<(), StoreError> {
    if access::authorize_entity(principal, action, entity, g).is_allowed() {
        Ok(())
    } else if principal.is_anonymous() {
        Err(StoreError::Unauthenticated { action, entity_type: entity.entity_type })
    } else {
        Err(StoreError::Forbidden { action, entity_type: entity.entity_type })
    }
}

fn create_in(
    g: &mut EntityGraph,
    ty: EntityType,
    document: &Value,
    principal: &Principal,
    locals: &HashMap<String, EntityRef>,
    clock: &dyn Clock,
) -> Result<Entity, StoreError> {
    if ty.is_view() {
        return Err(ModelError::ReadOnlyView(ty).into());
    }
    let draft = parse_document(ty, document);
    let id = match draft.id {
        Some(id) => {
            if let Some(v) = check_explicit_id(ty, id, g) {
                return Err(StoreError::Conflict(vec![v]));
            }
            id
        }
        None => g.next_id(ty),
    };
    let mut entity = Entity::new(ty, id);
    let mut violations = apply_draft(&mut entity, &draft, g, locals);
    if let Some(pw) = &draft.password {
        entity.fields.insert(PASSWORD_HASH_FIELD.into(), Value::String(access::hash_password(pw)));
    }
    if ty == EntityType::Observation && !entity.fields.contains_key("phenomenonTime") {
        default_phenomenon_time(&mut entity, clock);
    }
    require(principal, Action::Create, &entity, g)?;
    violations.extend(validate_candidate(&entity, g));
    if !violations.is_empty() {
        return Err(StoreError::from_violations(violations));
    }
    g.put(entity.clone());
    Ok(entity)
}

fn default_phenomenon_time(entity: &mut Entity, clock: &dyn Clock) {
    let now = clock.now().to_rfc3339_opts(SecondsFormat::Secs, true);
    entity.fields.insert("phenomenonTime".into(), Value::String(now));
    let params = entity.fields.entry("parameters".to_string()).or_insert_with(|| Value::Object(Default::default()));
    if let Value::Object(m) = params {
        m.insert("phenomenonTimeDefaulted".into(), Value::Bool(true));
    }
}

fn update_in(
    g: &mut EntityGraph,
    ty: EntityType,
    id: EntityId,
    patch: &Value,
    principal: &Principal,
) -> Result<Entity, StoreError> {
    let r = EntityRef::new(ty, id);
    let existing = g.get_ref(r).cloned().ok_or(StoreError::NotFound(r))?;
    if !access::can_read(principal, &existing, g) {
        return Err(StoreError::NotFound(r));
    }
    let draft = parse_document(ty, patch);
    if draft.id.is_some_and(|d| d != id) {
        return Err(StoreError::Validation(vec![Violation::new(
            "@iot.id",
            ViolationKind::InvalidValue,
            "@iot.id cannot be changed",
        )]));
    }
    let own_password_only = ty == EntityType::User
        && principal.user == Some(id)
        && draft.password.is_some()
        && draft.fields.is_empty()
        && draft.refs.is_empty()
        && draft.nulls.is_empty();
    if !own_password_only {
        require(principal, Action::Update, &existing, g)?;
    }
    let mut merged = existing.clone();
    let mut violations = apply_draft(&mut merged, &draft, g, &HashMap::new());
    if let Some(pw) = &draft.password {
        merged.fields.insert(PASSWORD_HASH_FIELD.into(), Value::String(access::hash_password(pw)));
    }
    if !own_password_only && access::project_scope(&merged, g) != access::project_scope(&existing, g) {
        require(principal, Action::Update, &merged, g)?;
    }
    violations.extend(validate_candidate(&merged, g));
    if !violations.is_empty() {
        return Err(StoreError::from_violations(violations));
    }
    g.put(merged.clone());
    Ok(merged)
}
