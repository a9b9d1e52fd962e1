//! Linear undo/redo history of full graph snapshots.
//!
//! Snapshots share weight tensors through `Arc`, so a checkpoint costs one
//! copy of the node table regardless of weight size.

use crate::graph::Graph;
use crate::telemetry::now_millis;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub checkpoint_id: u64,
    pub timestamp: u64,
    pub mutation_label: String,
    pub snapshot: Graph,
    coalesce_key: Option<String>,
}

#[derive(Clone, Debug)]
pub struct CanvasHistory {
    checkpoints: Vec<Checkpoint>,
    cursor: usize,
    next_id: u64,
    /// Bumped by every state change, including undo and redo.
    version: u64,
}

impl CanvasHistory {
    /// History whose first checkpoint is the opening snapshot.
    pub fn new(initial: Graph) -> Self {
        Self {
            checkpoints: vec![Checkpoint {
                checkpoint_id: 0,
                timestamp: now_millis(),
                mutation_label: "open".to_string(),
                snapshot: initial,
                coalesce_key: None,
            }],
            cursor: 0,
            next_id: 1,
            version: 0,
        }
    }

    pub fn current(&self) -> &Graph {
        &self.checkpoints[self.cursor].snapshot
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of the checkpoint at the cursor.
    pub fn checkpoint_id(&self) -> u64 {
        self.checkpoints[self.cursor].checkpoint_id
    }

    /// Monotone counter of state changes; unlike the checkpoint id it also
    /// advances on undo and redo.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn can_undo(&self) -> bool {
        self.cursor > 0
    }

    pub fn can_redo(&self) -> bool {
        self.cursor + 1 < self.checkpoints.len()
    }

    /// Drops the redo tail and appends `graph` as the new current state.
    pub fn record(&mut self, label: &str, graph: Graph) -> &Checkpoint {
        self.push(label, graph, None)
    }

    /// Like [`record`](Self::record), but a run of records with the same key
    /// collapses into one checkpoint (consecutive drags of one node).
    pub fn record_coalescing(&mut self, label: &str, graph: Graph, key: &str) -> &Checkpoint {
        self.push(label, graph, Some(key.to_string()))
    }

    fn push(&mut self, label: &str, graph: Graph, key: Option<String>) -> &Checkpoint {
        self.checkpoints.truncate(self.cursor + 1);
        let replace = self.cursor > 0
            && key.is_some()
            && self.checkpoints[self.cursor].coalesce_key == key;
        if replace {
            self.checkpoints.pop();
        }
        self.checkpoints.push(Checkpoint {
            checkpoint_id: self.next_id,
            timestamp: now_millis(),
            mutation_label: label.to_string(),
            snapshot: graph,
            coalesce_key: key,
        });
        self.next_id += 1;
        self.cursor = self.checkpoints.len() - 1;
        self.version += 1;
        &self.checkpoints[self.cursor]
    }

    /// Steps back one checkpoint; `None` at the opening snapshot.
    pub fn undo(&mut self) -> Option<Graph> {
        if !self.can_undo() {
            return None;
        }
        self.cursor -= 1;
        self.version += 1;
        Some(self.current().clone())
    }

    /// Steps forward one checkpoint; `None` when there is nothing to redo.
    pub fn redo(&mut self) -> Option<Graph> {
        if !self.can_redo() {
            return None;
        }
        self.cursor += 1;
        self.version += 1;
        Some(self.current().clone())
    }
}
