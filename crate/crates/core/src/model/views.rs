//! Read-only Thing and FeatureOfInterest projections.

use serde_json::Value;

use super::{navigation, Entity, EntityId, EntityType};
use crate::linref::{self, Geometry, Position};
use crate::store::EntityGraph;

/// One Thing view per collar and trajectory, one FeatureOfInterest view per
/// borehole feature; each view carries the id of its source.
pub fn derive_views(graph: &EntityGraph) -> Vec<Entity> {
    let things = [EntityType::BhCollarThing, EntityType::BhTrajectoryThing]
        .into_iter()
        .flat_map(|t| graph.iter(t))
        .map(thing_view);
    let fois = graph.iter(EntityType::BhFeatureOfInterest).map(|f| foi_view(f, graph));
    let mut out: Vec<Entity> = things.chain(fois).collect();
    out.sort_by_key(|e| (e.entity_type, e.id));
    out
}

/// View of one id, if a source entity exists.
pub fn view_entity(graph: &EntityGraph, ty: EntityType, id: EntityId) -> Option<Entity> {
    match ty {
        EntityType::Thing => graph.find(&[EntityType::BhCollarThing, EntityType::BhTrajectoryThing], id).map(thing_view),
        EntityType::FeatureOfInterest => graph.get(EntityType::BhFeatureOfInterest, id).map(|f| foi_view(f, graph)),
        _ => None,
    }
}

/// All views of one type, in id order.
pub fn views_of(graph: &EntityGraph, ty: EntityType) -> Vec<Entity> {
    match ty {
        EntityType::Thing => {
            let mut v: Vec<Entity> = [EntityType::BhCollarThing, EntityType::BhTrajectoryThing]
                .into_iter()
                .flat_map(|t| graph.iter(t))
                .map(thing_view)
                .collect();
            v.sort_by_key(|e| e.id);
            v
        }
        EntityType::FeatureOfInterest => graph.iter(EntityType::BhFeatureOfInterest).map(|f| foi_view(f, graph)).collect(),
        _ => Vec::new(),
    }
}

/// The stored entity a view was derived from.
pub fn view_source(graph: &EntityGraph, view: &Entity) -> Option<Entity> {
    match view.entity_type {
        EntityType::Thing => graph.find(&[EntityType::BhCollarThing, EntityType::BhTrajectoryThing], view.id).cloned(),
        EntityType::FeatureOfInterest => graph.get(EntityType::BhFeatureOfInterest, view.id).cloned(),
        _ => None,
    }
}

fn thing_view(src: &Entity) -> Entity {
    let mut v = Entity::new(EntityType::Thing, src.id);
    for key in ["name", "description", "properties"] {
        if let Some(x) = src.fields.get(key) {
            v.fields.insert(key.into(), x.clone());
        }
    }
    v.fields.insert("sourceType".into(), Value::from(src.entity_type.name()));
    v
}

fn foi_view(src: &Entity, graph: &EntityGraph) -> Entity {
    let mut v = Entity::new(EntityType::FeatureOfInterest, src.id);
    for key in ["name", "description"] {
        if let Some(x) = src.fields.get(key) {
            v.fields.insert(key.into(), x.clone());
        }
    }
    v.fields.insert("sourceType".into(), Value::from(src.entity_type.name()));
    if let Some(g) = feature_geometry(src, graph) {
        v.fields.insert("encodingType".into(), Value::from("application/geo+json"));
        v.fields.insert("feature".into(), g.to_geojson());
    }
    v
}

/// First LineString among the Locations of a trajectory.
pub fn trajectory_geometry(graph: &EntityGraph, trajectory: &Entity) -> Option<Vec<Position>> {
    let nav = navigation(EntityType::BhTrajectoryThing, "Locations")?;
    graph.navigate(trajectory, &nav).into_iter().filter_map(|r| graph.get_ref(r)).find_map(|loc| {
        match Geometry::from_geojson(loc.field("location")?) {
            Ok(Geometry::LineString(ps)) => Some(ps),
            _ => None,
        }
    })
}

/// Geometry of a borehole feature: its sampling located on the trajectory.
pub fn feature_geometry(foi: &Entity, graph: &EntityGraph) -> Option<Geometry> {
    let sampling = graph.get_ref(foi.single_ref("BhSampling")?)?;
    let trajectory = graph.get_ref(sampling.single_ref("BhTrajectoryThing")?)?;
    let line = trajectory_geometry(graph, trajectory)?;
    linref::sampling_geometry(sampling, trajectory, &line).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EntityRef;
    use serde_json::json;

    #[test]
    fn empty_graph_has_no_views() {
        assert!(derive_views(&EntityGraph::new()).is_empty());
    }

    #[test]
    fn collar_and_trajectory_give_two_things() {
        let mut g = EntityGraph::new();
        let mut c = Entity::new(EntityType::BhCollarThing, EntityId(10));
        c.fields.insert("name".into(), json!("B-001-0-20"));
        g.put(c.clone());
        let mut t = Entity::new(EntityType::BhTrajectoryThing, EntityId(11));
        t.fields.insert("name".into(), json!("traj"));
        t.links.insert("BhCollarThing".into(), vec![EntityRef::new(EntityType::BhCollarThing, EntityId(10))]);
        g.put(t);
        let views = derive_views(&g);
        assert_eq!(views.len(), 2);
        assert!(views.iter().all(|v| v.entity_type == EntityType::Thing));
        assert_eq!(views[0].text("sourceType"), Some("BhCollarThing"));
        assert_eq!(view_entity(&g, EntityType::Thing, EntityId(11)).unwrap().name(), Some("traj"));
    }
}
