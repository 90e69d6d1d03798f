//! Geotechnical borehole observation server core: entity model, store,
//! query engine, linear referencing, access control and test reductions.

pub mod access;
pub mod ags;
pub mod api;
pub mod linref;
pub mod log;
pub mod model;
pub mod query;
pub mod reduction;
pub mod store;

pub use access::{authenticate, authorize, project_scope, AccessDecision, Action, Credentials, Principal, RoleName};
pub use model::{Entity, EntityId, EntityRef, EntityType};
pub use store::{Batch, BatchItem, BatchOutcome, EntityGraph, Store, StoreError};
