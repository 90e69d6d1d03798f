//! Entity model of the geotechnical SensorThings extension.
//!
//! Entities are stored as schema-driven records: scalar fields live in a
//! field map keyed by canonical field name and navigation references live in
//! a link map keyed by canonical relation name. The static tables in this
//! module describe which fields and relations each entity type carries.

mod validate;
mod views;
pub mod wire;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

pub use validate::{validate_entity, validate_feature_type_axes, ValidationReport, Violation, ViolationKind};
pub(crate) use validate::{apply_draft, check_explicit_id, validate_candidate};
pub use validate::check_time;
pub use views::{derive_views, feature_geometry, trajectory_geometry, view_entity, view_source, views_of};

/// Positive integer identifier, the `@iot.id` of an entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u64);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("unknown entity type `{0}`")]
    UnknownEntityType(String),
    #[error("{0} is a read-only view")]
    ReadOnlyView(EntityType),
}

macro_rules! entity_types {
    ($( $variant:ident => $singular:literal, $set:literal; )*) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum EntityType {
            $( $variant, )*
        }

        impl EntityType {
            pub const ALL: &'static [EntityType] = &[ $( EntityType::$variant, )* ];

            /// Singular type name, e.g. `BhCollarThing`.
            pub fn name(self) -> &'static str {
                match self { $( EntityType::$variant => $singular, )* }
            }

            /// Pluralized entity-set name used in URLs, e.g. `BhCollarThings`.
            pub fn set_name(self) -> &'static str {
                match self { $( EntityType::$variant => $set, )* }
            }
        }
    };
}

entity_types! {
    BhCollarThing => "BhCollarThing", "BhCollarThings";
    BhTrajectoryThing => "BhTrajectoryThing", "BhTrajectoryThings";
    Location => "Location", "Locations";
    BhSampling => "BhSampling", "BhSamplings";
    BhFeatureOfInterest => "BhFeatureOfInterest", "BhFeaturesOfInterest";
    BhFeatureType => "BhFeatureType", "BhFeatureTypes";
    BhSampler => "BhSampler", "BhSamplers";
    BhSamplingProcedure => "BhSamplingProcedure", "BhSamplingProcedures";
    BhPreparationProcedure => "BhPreparationProcedure", "BhPreparationProcedures";
    BhPreparationStep => "BhPreparationStep", "BhPreparationSteps";
    Sensor => "Sensor", "Sensors";
    ObservedProperty => "ObservedProperty", "ObservedProperties";
    Datastream => "Datastream", "Datastreams";
    Observation => "Observation", "Observations";
    Project => "Project", "Projects";
    User => "User", "Users";
    Role => "Role", "Roles";
    UserProjectRole => "UserProjectRole", "UserProjectRoles";
    Thing => "Thing", "Things";
    FeatureOfInterest => "FeatureOfInterest", "FeaturesOfInterest";
}

impl EntityType {
    /// The 18 types that are created and stored; excludes the derived views.
    pub fn stored() -> impl Iterator<Item = EntityType> {
        Self::ALL.iter().copied().filter(|t| !t.is_view())
    }

    /// Thing and FeatureOfInterest are read-only projections.
    pub fn is_view(self) -> bool {
        matches!(self, EntityType::Thing | EntityType::FeatureOfInterest)
    }

    pub fn from_set_name(name: &str) -> Option<EntityType> {
        Self::ALL.iter().copied().find(|t| t.set_name().eq_ignore_ascii_case(name))
    }

    /// Accepts either the singular or the set name.
    pub fn parse(name: &str) -> Result<EntityType, ModelError> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(name) || t.set_name().eq_ignore_ascii_case(name))
            .ok_or_else(|| ModelError::UnknownEntityType(name.to_string()))
    }

    /// Collars and trajectories share the Thing id space so that a
    /// Datastream's `Thing` reference is unambiguous.
    pub fn id_space(self) -> EntityType {
        match self {
            EntityType::BhTrajectoryThing | EntityType::Thing => EntityType::BhCollarThing,
            EntityType::FeatureOfInterest => EntityType::BhFeatureOfInterest,
            other => other,
        }
    }

    pub fn fields(self) -> &'static [FieldSpec] {
        schema_fields(self)
    }

    pub fn field(self, name: &str) -> Option<&'static FieldSpec> {
        self.fields().iter().find(|f| f.name.eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for EntityType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.set_name())
    }
}

impl<'de> Deserialize<'de> for EntityType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        EntityType::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Text,
    Number,
    Boolean,
    /// Open key-value map (`properties`, `parameters`, `unitOfMeasurement`).
    Object,
    /// GeoJSON Point or LineString in WGS84.
    Geometry,
    /// Observation result: number, text or null.
    Result,
    /// ISO-8601 timestamp or `start/end` interval.
    Time,
    LengthUnit,
    /// Write-only; stored hashed and never rendered.
    Secret,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: &'static str,
    pub kind: FieldKind,
    pub required: bool,
}

const fn field(name: &'static str, kind: FieldKind, required: bool) -> FieldSpec {
    FieldSpec { name, kind, required }
}

use FieldKind as K;

const NAMED: &[FieldSpec] = &[
    field("name", K::Text, true),
    field("description", K::Text, false),
    field("properties", K::Object, false),
];

fn schema_fields(ty: EntityType) -> &'static [FieldSpec] {
    match ty {
        EntityType::BhCollarThing
        | EntityType::BhSamplingProcedure
        | EntityType::BhPreparationProcedure
        | EntityType::BhPreparationStep => NAMED,
        EntityType::BhTrajectoryThing => {
            const F: &[FieldSpec] = &[
                field("name", K::Text, true),
                field("description", K::Text, false),
                field("lengthHole", K::Number, true),
                field("lengthCore", K::Number, false),
                field("offsetHole", K::Number, false),
                field("offsetCore", K::Number, false),
                field("uom", K::LengthUnit, true),
                field("properties", K::Object, false),
            ];
            F
        }
        EntityType::Location => {
            const F: &[FieldSpec] = &[
                field("name", K::Text, true),
                field("description", K::Text, false),
                field("encodingType", K::Text, true),
                field("location", K::Geometry, true),
                field("properties", K::Object, false),
            ];
            F
        }
        EntityType::BhSampling => {
            const F: &[FieldSpec] = &[
                field("name", K::Text, true),
                field("description", K::Text, false),
                field("atPosition", K::Number, false),
                field("fromPosition", K::Number, false),
                field("toPosition", K::Number, false),
                field("positionUom", K::LengthUnit, true),
                field("time", K::Time, false),
            ];
            F
        }
        EntityType::BhFeatureOfInterest => {
            const F: &[FieldSpec] = &[
                field("name", K::Text, true),
                field("description", K::Text, false),
                field("length", K::Number, false),
                field("lengthUom", K::LengthUnit, false),
                field("recoveryPercentage", K::Number, false),
            ];
            F
        }
        EntityType::BhFeatureType | EntityType::ObservedProperty => {
            const F: &[FieldSpec] = &[
                field("name", K::Text, true),
                field("definition", K::Text, false),
                field("description", K::Text, false),
            ];
            F
        }
        EntityType::BhSampler => {
            const F: &[FieldSpec] = &[
                field("name", K::Text, true),
                field("description", K::Text, false),
                field("samplerType", K::Text, false),
                field("properties", K::Object, false),
            ];
            F
        }
        EntityType::Sensor => {
            const F: &[FieldSpec] = &[
                field("name", K::Text, true),
                field("description", K::Text, false),
                field("encodingType", K::Text, false),
                field("metadata", K::Text, true),
                field("sensorType", K::Text, false),
                field("properties", K::Object, false),
            ];
            F
        }
        EntityType::Datastream => {
            const F: &[FieldSpec] = &[
                field("name", K::Text, true),
                field("description", K::Text, false),
                field("observationType", K::Text, false),
                field("unitOfMeasurement", K::Object, false),
            ];
            F
        }
        EntityType::Observation => {
            const F: &[FieldSpec] = &[
                field("phenomenonTime", K::Time, false),
                field("result", K::Result, false),
                field("parameters", K::Object, false),
            ];
            F
        }
        EntityType::Project => {
            const F: &[FieldSpec] = &[
                field("name", K::Text, true),
                field("description", K::Text, false),
                field("properties", K::Object, false),
                field("public", K::Boolean, false),
            ];
            F
        }
        EntityType::User => {
            const F: &[FieldSpec] = &[
                field("username", K::Text, true),
                field("password", K::Secret, true),
            ];
            F
        }
        EntityType::Role => {
            const F: &[FieldSpec] = &[
                field("name", K::Text, true),
                field("description", K::Text, false),
            ];
            F
        }
        EntityType::UserProjectRole => &[],
        EntityType::Thing => {
            const F: &[FieldSpec] = &[
                field("name", K::Text, true),
                field("description", K::Text, false),
                field("properties", K::Object, false),
                field("sourceType", K::Text, true),
            ];
            F
        }
        EntityType::FeatureOfInterest => {
            const F: &[FieldSpec] = &[
                field("name", K::Text, true),
                field("description", K::Text, false),
                field("encodingType", K::Text, false),
                field("feature", K::Geometry, false),
                field("sourceType", K::Text, true),
            ];
            F
        }
    }
}

/// Internal storage field holding the salted password hash of a User.
pub const PASSWORD_HASH_FIELD: &str = "passwordHash";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cardinality {
    One,
    Many,
}

/// A navigation relation, described from the side that stores the reference.
#[derive(Debug)]
pub struct RelationSpec {
    pub owner: EntityType,
    pub name: &'static str,
    pub targets: &'static [EntityType],
    pub cardinality: Cardinality,
    pub required: bool,
    /// Navigation name on the target side; for symmetric relations this is
    /// the same as `name`.
    pub inverse: &'static str,
    /// Self-relations like `RelatedObservations` read the same in both directions.
    pub symmetric: bool,
    /// Additional accepted spellings of `inverse`.
    pub inverse_aliases: &'static [&'static str],
    /// Additional accepted wire keys on the owner side, each restricting the target type.
    pub wire_aliases: &'static [(&'static str, EntityType)],
}

use Cardinality::{Many, One};
use EntityType as T;

const fn rel(
    owner: EntityType,
    name: &'static str,
    targets: &'static [EntityType],
    cardinality: Cardinality,
    required: bool,
    inverse: &'static str,
) -> RelationSpec {
    RelationSpec {
        owner,
        name,
        targets,
        cardinality,
        required,
        inverse,
        symmetric: false,
        inverse_aliases: &[],
        wire_aliases: &[],
    }
}

const fn symmetric(owner: EntityType, name: &'static str, targets: &'static [EntityType]) -> RelationSpec {
    RelationSpec {
        owner,
        name,
        targets,
        cardinality: Many,
        required: false,
        inverse: name,
        symmetric: true,
        inverse_aliases: &[],
        wire_aliases: &[],
    }
}

pub static RELATIONS: &[RelationSpec] = &[
    rel(T::BhCollarThing, "Projects", &[T::Project], Many, false, "BhCollarThings"),
    symmetric(T::BhCollarThing, "RelatedBhCollarThings", &[T::BhCollarThing]),
    rel(T::BhTrajectoryThing, "BhCollarThing", &[T::BhCollarThing], One, true, "BhTrajectoryThings"),
    rel(T::BhTrajectoryThing, "Projects", &[T::Project], Many, false, "BhTrajectoryThings"),
    rel(T::Location, "BhCollarThings", &[T::BhCollarThing], Many, false, "Locations"),
    rel(T::Location, "BhTrajectoryThings", &[T::BhTrajectoryThing], Many, false, "Locations"),
    rel(T::BhSampling, "BhTrajectoryThing", &[T::BhTrajectoryThing], One, true, "BhSamplings"),
    rel(T::BhSampling, "BhSampler", &[T::BhSampler], One, false, "BhSamplings"),
    rel(T::BhSampling, "BhSamplingProcedure", &[T::BhSamplingProcedure], One, false, "BhSamplings"),
    RelationSpec {
        inverse_aliases: &["BhSamples"],
        ..rel(T::BhFeatureOfInterest, "BhSampling", &[T::BhSampling], One, true, "BhFeaturesOfInterest")
    },
    rel(T::BhFeatureOfInterest, "BhFeatureTypes", &[T::BhFeatureType], Many, false, "BhFeaturesOfInterest"),
    rel(T::BhFeatureOfInterest, "BhSampledFeatures", &[T::BhFeatureOfInterest], Many, false, "BhDerivedFeatures"),
    rel(T::BhPreparationStep, "BhFeatureOfInterest", &[T::BhFeatureOfInterest], One, true, "BhPreparationSteps"),
    rel(T::BhPreparationStep, "BhPreparationProcedure", &[T::BhPreparationProcedure], One, true, "BhPreparationSteps"),
    rel(T::Sensor, "Projects", &[T::Project], Many, false, "Sensors"),
    rel(T::Datastream, "Sensor", &[T::Sensor], One, true, "Datastreams"),
    rel(T::Datastream, "ObservedProperty", &[T::ObservedProperty], One, true, "Datastreams"),
    RelationSpec {
        wire_aliases: &[("BhCollarThing", T::BhCollarThing), ("BhTrajectoryThing", T::BhTrajectoryThing)],
        ..rel(T::Datastream, "Thing", &[T::BhCollarThing, T::BhTrajectoryThing], One, true, "Datastreams")
    },
    symmetric(T::Datastream, "RelatedDatastreams", &[T::Datastream]),
    rel(T::Observation, "Datastream", &[T::Datastream], One, true, "Observations"),
    RelationSpec {
        wire_aliases: &[("BhFeatureOfInterest", T::BhFeatureOfInterest)],
        ..rel(T::Observation, "FeatureOfInterest", &[T::BhFeatureOfInterest], One, true, "Observations")
    },
    symmetric(T::Observation, "RelatedObservations", &[T::Observation]),
    rel(T::User, "Roles", &[T::Role], Many, false, "Users"),
    rel(T::UserProjectRole, "User", &[T::User], One, true, "UserProjectRoles"),
    rel(T::UserProjectRole, "Project", &[T::Project], One, true, "UserProjectRoles"),
    rel(T::UserProjectRole, "Role", &[T::Role], One, true, "UserProjectRoles"),
];

/// Relations stored on entities of `ty`.
pub fn owned_relations(ty: EntityType) -> impl Iterator<Item = &'static RelationSpec> {
    RELATIONS.iter().filter(move |r| r.owner == ty)
}

pub fn owned_relation(ty: EntityType, name: &str) -> Option<&'static RelationSpec> {
    owned_relations(ty).find(|r| r.name == name)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Follow references stored on the source entity.
    Forward,
    /// Follow references stored on other entities that point at the source.
    Inverse,
    /// Both directions (symmetric self-relations).
    Both,
}

/// A resolved navigation step from one entity type.
#[derive(Clone, Copy, Debug)]
pub struct Navigation {
    pub relation: &'static RelationSpec,
    pub direction: Direction,
    /// Canonical navigation name as seen from the source type.
    pub name: &'static str,
}

impl Navigation {
    pub fn targets(&self) -> &'static [EntityType] {
        match self.direction {
            Direction::Forward | Direction::Both => self.relation.targets,
            Direction::Inverse => std::slice::from_ref(&self.relation.owner),
        }
    }

    pub fn cardinality(&self) -> Cardinality {
        match self.direction {
            Direction::Forward => self.relation.cardinality,
            Direction::Inverse | Direction::Both => Cardinality::Many,
        }
    }

    pub fn target_type(&self) -> EntityType {
        self.targets()[0]
    }
}

/// Resolves a navigation name (case-insensitive) on `ty`.
pub fn navigation(ty: EntityType, name: &str) -> Option<Navigation> {
    for r in RELATIONS {
        if r.owner == ty && r.name.eq_ignore_ascii_case(name) {
            let direction = if r.symmetric { Direction::Both } else { Direction::Forward };
            return Some(Navigation { relation: r, direction, name: r.name });
        }
    }
    for r in RELATIONS {
        if r.symmetric || !r.targets.contains(&ty) {
            continue;
        }
        if r.inverse.eq_ignore_ascii_case(name) || r.inverse_aliases.iter().any(|a| a.eq_ignore_ascii_case(name)) {
            return Some(Navigation { relation: r, direction: Direction::Inverse, name: r.inverse });
        }
    }
    None
}

/// All navigations available from `ty`, in a stable order.
pub fn navigations(ty: EntityType) -> Vec<Navigation> {
    let mut out = Vec::new();
    for r in RELATIONS {
        if r.owner == ty {
            let direction = if r.symmetric { Direction::Both } else { Direction::Forward };
            out.push(Navigation { relation: r, direction, name: r.name });
        }
    }
    for r in RELATIONS {
        if !r.symmetric && r.targets.contains(&ty) {
            out.push(Navigation { relation: r, direction: Direction::Inverse, name: r.inverse });
        }
    }
    out
}

/// Error for an unknown navigation name.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("entity type {entity_type} has no relation `{relation}`")]
pub struct UnknownRelation {
    pub entity_type: EntityType,
    pub relation: String,
}

/// Target entity type(s) and cardinality of a navigation.
pub fn resolve_navigation(
    ty: EntityType,
    relation: &str,
) -> Result<(&'static [EntityType], Cardinality), UnknownRelation> {
    navigation(ty, relation)
        .map(|n| (n.targets(), n.cardinality()))
        .ok_or_else(|| UnknownRelation { entity_type: ty, relation: relation.to_string() })
}

/// A typed reference to a stored entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityRef {
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    pub id: EntityId,
}

impl EntityRef {
    pub fn new(entity_type: EntityType, id: EntityId) -> Self {
        Self { entity_type, id }
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.entity_type.set_name(), self.id)
    }
}

/// One stored entity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    pub id: EntityId,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<String, Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub links: BTreeMap<String, Vec<EntityRef>>,
}

impl Entity {
    pub fn new(entity_type: EntityType, id: EntityId) -> Self {
        Self { entity_type, id, fields: BTreeMap::new(), links: BTreeMap::new() }
    }

    pub fn entity_ref(&self) -> EntityRef {
        EntityRef::new(self.entity_type, self.id)
    }

    pub fn field(&self, name: &str) -> Option<&Value> {
        self.fields.get(name)
    }

    pub fn text(&self, name: &str) -> Option<&str> {
        self.fields.get(name).and_then(Value::as_str)
    }

    pub fn number(&self, name: &str) -> Option<f64> {
        self.fields.get(name).and_then(Value::as_f64)
    }

    pub fn name(&self) -> Option<&str> {
        self.text("name")
    }

    pub fn refs(&self, relation: &str) -> &[EntityRef] {
        self.links.get(relation).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn single_ref(&self, relation: &str) -> Option<EntityRef> {
        self.refs(relation).first().copied()
    }

    /// All outgoing references, with their relation name.
    pub fn all_refs(&self) -> impl Iterator<Item = (&str, EntityRef)> {
        self.links.iter().flat_map(|(k, v)| v.iter().map(move |r| (k.as_str(), *r)))
    }
}
