//! Authentication and the project-scoped rights matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::model::{navigation, Entity, EntityId, EntityRef, EntityType, PASSWORD_HASH_FIELD};
use crate::store::EntityGraph;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AccessError {
    #[error("invalid credentials")]
    InvalidCredentials,
}

/// The five role names a Role entity may carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoleName {
    Admin,
    Create,
    Read,
    Update,
    Delete,
}

impl RoleName {
    pub const ALL: [RoleName; 5] = [RoleName::Admin, RoleName::Create, RoleName::Read, RoleName::Update, RoleName::Delete];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleName::Admin => "admin",
            RoleName::Create => "create",
            RoleName::Read => "read",
            RoleName::Update => "update",
            RoleName::Delete => "delete",
        }
    }

    pub fn parse(s: &str) -> Option<RoleName> {
        Self::ALL.into_iter().find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for RoleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Create,
    Read,
    Update,
    Delete,
    Admin,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Create, Action::Read, Action::Update, Action::Delete, Action::Admin];

    /// The role that grants this action.
    pub fn role(self) -> RoleName {
        match self {
            Action::Create => RoleName::Create,
            Action::Read => RoleName::Read,
            Action::Update => RoleName::Update,
            Action::Delete => RoleName::Delete,
            Action::Admin => RoleName::Admin,
        }
    }

    fn letter(self) -> char {
        match self {
            Action::Create => 'C',
            Action::Read => 'R',
            Action::Update => 'U',
            Action::Delete => 'D',
            Action::Admin => 'A',
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.role().as_str())
    }
}

/// An authenticated (or anonymous) caller.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Principal {
    pub user: Option<EntityId>,
    pub username: Option<String>,
    pub global_roles: BTreeSet<RoleName>,
    /// Role entities held globally or through a project grant.
    pub role_ids: BTreeSet<EntityId>,
    pub project_grants: BTreeMap<EntityId, BTreeSet<RoleName>>,
}

impl Principal {
    pub fn anonymous() -> Self {
        Self::default()
    }

    /// In-process caller with global admin rights, used by embedded tooling.
    pub fn system() -> Self {
        Self {
            username: Some("system".into()),
            global_roles: RoleName::ALL.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn is_anonymous(&self) -> bool {
        self.user.is_none() && self.global_roles.is_empty() && self.project_grants.is_empty()
    }

    pub fn is_global_admin(&self) -> bool {
        self.global_roles.contains(&RoleName::Admin)
    }

    /// Builds the principal of a stored User from its Roles and UserProjectRoles.
    pub fn for_user(graph: &EntityGraph, user: &Entity) -> Self {
        let mut p = Principal {
            user: Some(user.id),
            username: user.text("username").map(str::to_string),
            ..Principal::default()
        };
        for r in user.refs("Roles") {
            if let Some(name) = graph.get_ref(*r).and_then(Entity::name).and_then(RoleName::parse) {
                p.global_roles.insert(name);
                p.role_ids.insert(r.id);
            }
        }
        if let Some(nav) = navigation(EntityType::User, "UserProjectRoles") {
            for upr in graph.navigate(user, &nav).into_iter().filter_map(|r| graph.get_ref(r)) {
                let (Some(project), Some(role)) = (upr.single_ref("Project"), upr.single_ref("Role")) else {
                    continue;
                };
                if let Some(name) = graph.get_ref(role).and_then(Entity::name).and_then(RoleName::parse) {
                    p.project_grants.entry(project.id).or_default().insert(name);
                    p.role_ids.insert(role.id);
                }
            }
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Credentials {
    pub username: String,
    pub password: String,
}

/// Resolves credentials to a principal. No credentials yields the anonymous principal.
pub fn authenticate(graph: &EntityGraph, credentials: Option<&Credentials>) -> Result<Principal, AccessError> {
    let Some(c) = credentials else {
        return Ok(Principal::anonymous());
    };
    let user = graph
        .iter(EntityType::User)
        .find(|u| u.text("username") == Some(c.username.as_str()))
        .ok_or(AccessError::InvalidCredentials)?;
    let stored = user.text(PASSWORD_HASH_FIELD).ok_or(AccessError::InvalidCredentials)?;
    if !verify_password(stored, &c.password) {
        return Err(AccessError::InvalidCredentials);
    }
    Ok(Principal::for_user(graph, user))
}

/// Salted hash in the form `sha256$<salt hex>$<digest hex>`.
pub fn hash_password(password: &str) -> String {
    let mut salt = [0u8; 16];
    rand::rng().fill_bytes(&mut salt);
    hash_with_salt(password, &salt)
}

fn hash_with_salt(password: &str, salt: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(password.as_bytes());
    format!("sha256${}${}", hex::encode(salt), hex::encode(h.finalize()))
}

pub fn verify_password(stored: &str, password: &str) -> bool {
    let mut parts = stored.split('$');
    let (Some("sha256"), Some(salt), Some(_), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return false;
    };
    let Ok(salt) = hex::decode(salt) else { return false };
    hash_with_salt(password, &salt) == stored
}

/// Columns of the rights matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Column {
    Admin,
    GeotechExpert,
    PublicOpen,
    PublicPrivate,
    ProjectManager,
    ProjectContributor,
    ProjectMember,
}

impl Column {
    pub const ALL: [Column; 7] = [
        Column::Admin,
        Column::GeotechExpert,
        Column::PublicOpen,
        Column::PublicPrivate,
        Column::ProjectManager,
        Column::ProjectContributor,
        Column::ProjectMember,
    ];
}

/// Rows of the rights matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Row {
    Project,
    User,
    Role,
    UserProjectRole,
    ObservedProperty,
    Sensor,
    ThingAndLocation,
    FeatureSamplingPreparation,
    Datastream,
    Observation,
}

impl Row {
    pub const ALL: [Row; 10] = [
        Row::Project,
        Row::User,
        Row::Role,
        Row::UserProjectRole,
        Row::ObservedProperty,
        Row::Sensor,
        Row::ThingAndLocation,
        Row::FeatureSamplingPreparation,
        Row::Datastream,
        Row::Observation,
    ];

    pub fn of(ty: EntityType) -> Row {
        use EntityType as T;
        match ty {
            T::Project => Row::Project,
            T::User => Row::User,
            T::Role => Row::Role,
            T::UserProjectRole => Row::UserProjectRole,
            T::ObservedProperty | T::BhFeatureType => Row::ObservedProperty,
            T::Sensor => Row::Sensor,
            T::BhCollarThing | T::BhTrajectoryThing | T::Location | T::Thing => Row::ThingAndLocation,
            T::BhSampling
            | T::BhFeatureOfInterest
            | T::FeatureOfInterest
            | T::BhSampler
            | T::BhSamplingProcedure
            | T::BhPreparationProcedure
            | T::BhPreparationStep => Row::FeatureSamplingPreparation,
            T::Datastream => Row::Datastream,
            T::Observation => Row::Observation,
        }
    }

    /// Rows whose entities belong to no project.
    pub fn is_global(self) -> bool {
        matches!(self, Row::User | Row::Role | Row::ObservedProperty)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Qualifier {
    Any,
    /// Only the caller's own User, Roles or UserProjectRoles.
    OwnOnly,
    /// Every entity of the row.
    All,
    /// Only within the projects the column applies to.
    Project,
}

/// One cell of the matrix: granted action letters plus a qualifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub letters: &'static str,
    pub qualifier: Qualifier,
}

impl Cell {
    pub fn grants(&self, action: Action) -> bool {
        self.letters.contains(action.letter())
    }
}

const fn cell(letters: &'static str, qualifier: Qualifier) -> Cell {
    Cell { letters, qualifier }
}

const BLANK: Cell = cell("", Qualifier::Any);
const R: Cell = cell("R", Qualifier::Any);
const CRUD: Cell = cell("CRUD", Qualifier::Any);
const R_OWN: Cell = cell("R", Qualifier::OwnOnly);
const R_ALL: Cell = cell("R", Qualifier::All);

/// The rights matrix cell for one column and row.
pub fn matrix_cell(column: Column, row: Row) -> Cell {
    use Column as C;
    use Row as W;
    match (row, column) {
        (_, C::Admin) => cell("CRUDA", Qualifier::Any),
        (W::Project, C::GeotechExpert | C::PublicOpen | C::ProjectManager | C::ProjectContributor | C::ProjectMember) => R,
        (W::Project, C::PublicPrivate) => BLANK,
        (W::User | W::Role, C::GeotechExpert | C::ProjectContributor | C::ProjectMember) => R_OWN,
        (W::User | W::Role, C::ProjectManager) => R_ALL,
        (W::User | W::Role, C::PublicOpen | C::PublicPrivate) => BLANK,
        (W::UserProjectRole, C::GeotechExpert | C::ProjectContributor | C::ProjectMember) => R_OWN,
        (W::UserProjectRole, C::ProjectManager) => cell("CRUDA", Qualifier::Project),
        (W::UserProjectRole, C::PublicOpen | C::PublicPrivate) => BLANK,
        (W::ObservedProperty, C::GeotechExpert) => CRUD,
        (W::ObservedProperty, _) => R,
        (W::Sensor | W::ThingAndLocation, C::GeotechExpert | C::ProjectManager) => CRUD,
        (W::Sensor | W::ThingAndLocation, C::PublicOpen | C::ProjectContributor | C::ProjectMember) => R,
        (W::Sensor | W::ThingAndLocation, C::PublicPrivate) => BLANK,
        (
            W::FeatureSamplingPreparation | W::Datastream | W::Observation,
            C::GeotechExpert | C::ProjectManager | C::ProjectContributor,
        ) => CRUD,
        (W::FeatureSamplingPreparation | W::Datastream | W::Observation, C::PublicOpen | C::ProjectMember) => R,
        (W::FeatureSamplingPreparation | W::Datastream | W::Observation, C::PublicPrivate) => BLANK,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reason {
    GlobalRole(Column),
    ProjectRole(Column, EntityId),
    Public(Column),
    NoMatchingCell,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessDecision {
    Allow(Reason),
    Deny(Reason),
}

impl AccessDecision {
    pub fn is_allowed(&self) -> bool {
        matches!(self, AccessDecision::Allow(_))
    }
}

/// Everything `authorize` needs to know about the target.
#[derive(Clone, Copy, Debug)]
pub struct Target<'a> {
    pub entity_type: EntityType,
    /// Project ids from [`project_scope`]; empty means global.
    pub scope: &'a BTreeSet<EntityId>,
    /// The entity itself, for the own-record cells of the User, Role and
    /// UserProjectRole rows.
    pub subject: Option<&'a Entity>,
}

fn owns(principal: &Principal, row: Row, subject: Option<&Entity>) -> bool {
    let (Some(me), Some(s)) = (principal.user, subject) else {
        return false;
    };
    match row {
        Row::User => s.id == me,
        Row::Role => principal.role_ids.contains(&s.id),
        Row::UserProjectRole => s.single_ref("User").is_some_and(|u| u.id == me),
        _ => false,
    }
}

fn cell_allows(c: Cell, action: Action, principal: &Principal, row: Row, subject: Option<&Entity>) -> bool {
    if !c.grants(action) {
        return false;
    }
    match c.qualifier {
        Qualifier::OwnOnly => owns(principal, row, subject),
        Qualifier::Any | Qualifier::All | Qualifier::Project => true,
    }
}

/// The column a set of project roles places a caller in.
pub fn project_column(roles: &BTreeSet<RoleName>) -> Option<Column> {
    if roles.contains(&RoleName::Admin) {
        Some(Column::ProjectManager)
    } else if roles.iter().any(|r| matches!(r, RoleName::Create | RoleName::Update | RoleName::Delete)) {
        Some(Column::ProjectContributor)
    } else if roles.contains(&RoleName::Read) {
        Some(Column::ProjectMember)
    } else {
        None
    }
}

/// Decides one action. Global roles apply everywhere, project roles within
/// scope (or anywhere for global rows and unscoped entities), and public
/// projects grant their column to everyone.
pub fn authorize(principal: &Principal, action: Action, target: Target<'_>, graph: &EntityGraph) -> AccessDecision {
    let row = Row::of(target.entity_type);
    let subject = target.subject;
    if let Some(d) = global_decision(principal, action, row, subject) {
        return d;
    }
    let unscoped = row.is_global() || target.scope.is_empty();
    for (project, roles) in &principal.project_grants {
        if !unscoped && !target.scope.contains(project) {
            continue;
        }
        let Some(column) = project_column(roles) else { continue };
        let gated = roles.contains(&RoleName::Admin) || roles.contains(&action.role());
        if gated && cell_allows(matrix_cell(column, row), action, principal, row, subject) {
            return AccessDecision::Allow(Reason::ProjectRole(column, *project));
        }
    }
    let open = target
        .scope
        .iter()
        .any(|p| graph.get(EntityType::Project, *p).is_some_and(|e| e.field("public").and_then(|v| v.as_bool()) == Some(true)));
    if open && cell_allows(matrix_cell(Column::PublicOpen, row), action, principal, row, subject) {
        return AccessDecision::Allow(Reason::Public(Column::PublicOpen));
    }
    if cell_allows(matrix_cell(Column::PublicPrivate, row), action, principal, row, subject) {
        return AccessDecision::Allow(Reason::Public(Column::PublicPrivate));
    }
    AccessDecision::Deny(Reason::NoMatchingCell)
}

/// Allow from a global role; these never depend on project scope.
fn global_decision(principal: &Principal, action: Action, row: Row, subject: Option<&Entity>) -> Option<AccessDecision> {
    if principal.is_global_admin() && cell_allows(matrix_cell(Column::Admin, row), action, principal, row, subject) {
        return Some(AccessDecision::Allow(Reason::GlobalRole(Column::Admin)));
    }
    if principal.global_roles.contains(&action.role())
        && cell_allows(matrix_cell(Column::GeotechExpert, row), action, principal, row, subject)
    {
        return Some(AccessDecision::Allow(Reason::GlobalRole(Column::GeotechExpert)));
    }
    None
}

/// Convenience: scope computation plus decision for a stored or candidate entity.
pub fn authorize_entity(principal: &Principal, action: Action, entity: &Entity, graph: &EntityGraph) -> AccessDecision {
    // Skip the scope walk when a global role already decides.
    if let Some(d) = global_decision(principal, action, Row::of(entity.entity_type), Some(entity)) {
        return d;
    }
    let scope = project_scope(entity, graph);
    authorize(principal, action, Target { entity_type: entity.entity_type, scope: &scope, subject: Some(entity) }, graph)
}

pub fn can_read(principal: &Principal, entity: &Entity, graph: &EntityGraph) -> bool {
    authorize_entity(principal, Action::Read, entity, graph).is_allowed()
}

/// Project ids an entity belongs to, following the ownership chains to
/// Things and Sensors. Global entities return the empty set.
pub fn project_scope(entity: &Entity, graph: &EntityGraph) -> BTreeSet<EntityId> {
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::new();
    collect_scope(entity, graph, &mut out, &mut seen);
    out
}

fn follow<'g>(graph: &'g EntityGraph, entity: &Entity, nav_name: &str) -> Vec<&'g Entity> {
    let Some(nav) = navigation(entity.entity_type, nav_name) else { return Vec::new() };
    graph.navigate(entity, &nav).into_iter().filter_map(|r| graph.get_ref(r)).collect()
}

fn collect_scope<'g>(entity: &Entity, graph: &'g EntityGraph, out: &mut BTreeSet<EntityId>, seen: &mut BTreeSet<EntityRef>) {
    use EntityType as T;
    // Candidates not yet stored carry no inverse links, so they are not marked seen by ref alone.
    if graph.contains(entity.entity_ref()) && !seen.insert(entity.entity_ref()) {
        return;
    }
    let own_projects = |out: &mut BTreeSet<EntityId>| out.extend(entity.refs("Projects").iter().map(|r| r.id));
    let forward = |name: &str| -> Vec<&'g Entity> { entity.refs(name).iter().filter_map(|r| graph.get_ref(*r)).collect() };
    let recurse = |items: Vec<&'g Entity>, out: &mut BTreeSet<EntityId>, seen: &mut BTreeSet<EntityRef>| {
        for e in items {
            collect_scope(e, graph, out, seen);
        }
    };
    match entity.entity_type {
        T::Project => {
            out.insert(entity.id);
        }
        T::UserProjectRole => out.extend(entity.single_ref("Project").map(|r| r.id)),
        T::User | T::Role | T::ObservedProperty | T::BhFeatureType => {}
        T::BhCollarThing => own_projects(out),
        T::BhTrajectoryThing => {
            own_projects(out);
            recurse(forward("BhCollarThing"), out, seen);
        }
        T::Location => {
            let mut items = forward("BhCollarThings");
            items.extend(forward("BhTrajectoryThings"));
            recurse(items, out, seen);
        }
        T::BhSampling => recurse(forward("BhTrajectoryThing"), out, seen),
        T::BhFeatureOfInterest => recurse(forward("BhSampling"), out, seen),
        T::BhPreparationStep => recurse(forward("BhFeatureOfInterest"), out, seen),
        T::BhSampler | T::BhSamplingProcedure => recurse(follow(graph, entity, "BhSamplings"), out, seen),
        T::BhPreparationProcedure => recurse(follow(graph, entity, "BhPreparationSteps"), out, seen),
        T::Sensor => {
            own_projects(out);
            let things: Vec<&'g Entity> = follow(graph, entity, "Datastreams")
                .into_iter()
                .flat_map(|d| d.refs("Thing").iter().filter_map(|r| graph.get_ref(*r)))
                .collect();
            recurse(things, out, seen);
        }
        T::Datastream => recurse(forward("Thing"), out, seen),
        T::Observation => recurse(forward("Datastream"), out, seen),
        T::Thing | T::FeatureOfInterest => {
            if let Some(src) = crate::model::view_source(graph, entity) {
                collect_scope(&src, graph, out, seen);
            }
        }
    }
}
