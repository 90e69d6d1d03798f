use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EntityGraph, StoreError};
use crate::model::{Entity, EntityId, EntityRef, EntityType};

/// One state change. Entities are journaled in their stored form, so replay
/// needs no validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase")]
pub enum Mutation {
    Create { entity: Entity },
    Update { entity: Entity },
    Delete { #[serde(rename = "type")] entity_type: EntityType, id: EntityId },
    Batch { entities: Vec<Entity> },
}

impl Mutation {
    pub fn apply(&self, graph: &mut EntityGraph) {
        match self {
            Mutation::Create { entity } | Mutation::Update { entity } => graph.put(entity.clone()),
            Mutation::Delete { entity_type, id } => {
                graph.remove(EntityRef::new(*entity_type, *id));
            }
            Mutation::Batch { entities } => {
                for e in entities {
                    graph.put(e.clone());
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub seq: u64,
    pub mutation: Mutation,
}

/// Append-only JSON-lines journal.
pub struct Journal {
    path: PathBuf,
    out: BufWriter<File>,
    next_seq: u64,
}

impl Journal {
    /// Opens (creating if needed) and replays the journal at `path`.
    pub fn open(path: &Path) -> Result<(Self, EntityGraph), StoreError> {
        let (graph, next_seq) = if path.exists() { replay(path)? } else { (EntityGraph::new(), 1) };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((Self { path: path.to_path_buf(), out: BufWriter::new(file), next_seq }, graph))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, mutation: &Mutation) -> Result<u64, StoreError> {
        let record = JournalRecord { seq: self.next_seq, mutation: mutation.clone() };
        let line = serde_json::to_string(&record).map_err(|e| StoreError::Io(e.into()))?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        self.out.get_ref().sync_data()?;
        self.next_seq += 1;
        Ok(record.seq)
    }
}

/// Folds every record of a journal file into a fresh graph. Returns the
/// graph and the next sequence number.
pub fn replay(path: &Path) -> Result<(EntityGraph, u64), StoreError> {
    let mut graph = EntityGraph::new();
    let mut expected = 1;
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JournalRecord = serde_json::from_str(&line)
            .map_err(|e| StoreError::CorruptJournal { line: i + 1, message: e.to_string() })?;
        if record.seq != expected {
            return Err(StoreError::CorruptJournal {
                line: i + 1,
                message: format!("expected sequence {expected}, found {}", record.seq),
            });
        }
        record.mutation.apply(&mut graph);
        expected += 1;
    }
    Ok((graph, expected))
}
