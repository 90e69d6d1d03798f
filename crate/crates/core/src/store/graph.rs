use std::collections::{BTreeMap, BTreeSet};

use crate::model::{Direction, Entity, EntityId, EntityRef, EntityType, Navigation};

/// The referentially-consistent set of stored entities.
///
/// The reverse index is derived from the forward links: an entry
/// `target -> (source, relation)` exists iff `source.links[relation]`
/// contains `target`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EntityGraph {
    entities: BTreeMap<EntityType, BTreeMap<EntityId, Entity>>,
    reverse: BTreeMap<EntityRef, BTreeSet<(EntityRef, String)>>,
    /// Highest id ever used per id space; never decreases.
    high_water: BTreeMap<EntityType, u64>,
}

impl EntityGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, ty: EntityType, id: EntityId) -> Option<&Entity> {
        self.entities.get(&ty)?.get(&id)
    }

    pub fn get_ref(&self, r: EntityRef) -> Option<&Entity> {
        self.get(r.entity_type, r.id)
    }

    pub fn contains(&self, r: EntityRef) -> bool {
        self.get_ref(r).is_some()
    }

    /// First entity with `id` among `candidates`.
    pub fn find(&self, candidates: &[EntityType], id: EntityId) -> Option<&Entity> {
        candidates.iter().find_map(|t| self.get(*t, id))
    }

    /// Entities of one stored type in ascending id order.
    pub fn iter(&self, ty: EntityType) -> impl Iterator<Item = &Entity> + '_ {
        self.entities.get(&ty).into_iter().flat_map(|m| m.values())
    }

    pub fn all(&self) -> impl Iterator<Item = &Entity> + '_ {
        self.entities.values().flat_map(|m| m.values())
    }

    pub fn count(&self, ty: EntityType) -> usize {
        self.entities.get(&ty).map_or(0, BTreeMap::len)
    }

    pub fn len(&self) -> usize {
        self.entities.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether `id` is taken anywhere in the id space of `ty`.
    pub fn id_in_use(&self, ty: EntityType, id: EntityId) -> bool {
        let space = ty.id_space();
        EntityType::stored().filter(|t| t.id_space() == space).any(|t| self.get(t, id).is_some())
    }

    pub fn next_id(&self, ty: EntityType) -> EntityId {
        EntityId(self.high_water.get(&ty.id_space()).copied().unwrap_or(0) + 1)
    }

    pub fn high_water(&self) -> &BTreeMap<EntityType, u64> {
        &self.high_water
    }

    pub(crate) fn set_high_water(&mut self, ty: EntityType, value: u64) {
        let slot = self.high_water.entry(ty.id_space()).or_insert(0);
        *slot = (*slot).max(value);
    }

    /// Entities holding a reference to `target`, with the relation name.
    pub fn referrers(&self, target: EntityRef) -> impl Iterator<Item = (EntityRef, &str)> + '_ {
        self.reverse.get(&target).into_iter().flat_map(|s| s.iter().map(|(r, n)| (*r, n.as_str())))
    }

    /// Follows one navigation from `source`; results are sorted and unique.
    pub fn navigate(&self, source: &Entity, nav: &Navigation) -> Vec<EntityRef> {
        let rel = nav.relation;
        let mut out: BTreeSet<EntityRef> = BTreeSet::new();
        if matches!(nav.direction, Direction::Forward | Direction::Both) {
            out.extend(source.refs(rel.name).iter().copied());
        }
        if matches!(nav.direction, Direction::Inverse | Direction::Both) {
            out.extend(
                self.referrers(source.entity_ref())
                    .filter(|(r, name)| r.entity_type == rel.owner && *name == rel.name)
                    .map(|(r, _)| r),
            );
        }
        out.into_iter().collect()
    }

    /// Inserts or replaces an entity, keeping the reverse index in step.
    /// Callers are responsible for validation.
    pub(crate) fn put(&mut self, entity: Entity) {
        let r = entity.entity_ref();
        self.unindex(r);
        for (name, target) in entity.all_refs() {
            self.reverse.entry(target).or_default().insert((r, name.to_string()));
        }
        self.set_high_water(entity.entity_type, entity.id.0);
        self.entities.entry(entity.entity_type).or_default().insert(entity.id, entity);
    }

    pub(crate) fn remove(&mut self, r: EntityRef) -> Option<Entity> {
        self.unindex(r);
        let map = self.entities.get_mut(&r.entity_type)?;
        let removed = map.remove(&r.id);
        if map.is_empty() {
            self.entities.remove(&r.entity_type);
        }
        removed
    }

    fn unindex(&mut self, r: EntityRef) {
        let Some(old) = self.get_ref(r) else { return };
        let targets: Vec<(EntityRef, String)> = old.all_refs().map(|(n, t)| (t, n.to_string())).collect();
        for (target, name) in targets {
            if let Some(set) = self.reverse.get_mut(&target) {
                set.remove(&(r, name));
                if set.is_empty() {
                    self.reverse.remove(&target);
                }
            }
        }
    }

    /// References that do not resolve; empty for a consistent graph.
    pub fn dangling_references(&self) -> Vec<(EntityRef, String, EntityRef)> {
        self.all()
            .flat_map(|e| e.all_refs().map(move |(n, t)| (e.entity_ref(), n.to_string(), t)))
            .filter(|(_, _, t)| !self.contains(*t))
            .collect()
    }

    /// Rebuilds the reverse index from scratch and compares.
    pub fn index_consistent(&self) -> bool {
        let mut rebuilt: BTreeMap<EntityRef, BTreeSet<(EntityRef, String)>> = BTreeMap::new();
        for e in self.all() {
            for (n, t) in e.all_refs() {
                rebuilt.entry(t).or_default().insert((e.entity_ref(), n.to_string()));
            }
        }
        rebuilt == self.reverse
    }
}
