use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::explain::ExplanationMode;

pub const GAMES_PER_BLOCK: u32 = 5;

/// A worker's sequence of session blocks. Block 0 is always the
/// no-explanation baseline; later blocks alternate with the worker's mode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerPlan {
    pub worker_id: String,
    pub mode: ExplanationMode,
    pub blocks: Vec<ExplanationMode>,
    pub games_per_block: u32,
}

fn block_mode(mode: ExplanationMode, block: u32) -> ExplanationMode {
    if block.is_multiple_of(2) {
        ExplanationMode::None
    } else {
        mode
    }
}

impl WorkerPlan {
    /// `(block, mode)` for the `play_index`-th game. Plays past the planned
    /// blocks keep alternating.
    pub fn slot(&self, play_index: u32) -> (u32, ExplanationMode) {
        let block = play_index / self.games_per_block.max(1);
        let mode = self
            .blocks
            .get(block as usize)
            .copied()
            .unwrap_or_else(|| block_mode(self.mode, block));
        (block, mode)
    }
}

pub fn assign_worker_plan(
    worker_id: &str,
    mode: ExplanationMode,
    blocks: u32,
    games_per_block: u32,
) -> WorkerPlan {
    WorkerPlan {
        worker_id: worker_id.to_string(),
        mode,
        blocks: (0..blocks).map(|b| block_mode(mode, b)).collect(),
        games_per_block,
    }
}

/// Worker plans by id. A worker keeps one explanation mode for good.
#[derive(Clone, Debug, Default)]
pub struct PlanRegistry {
    plans: HashMap<String, WorkerPlan>,
}

impl PlanRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assign(
        &mut self,
        worker_id: &str,
        mode: ExplanationMode,
        blocks: u32,
        games_per_block: u32,
    ) -> Result<&WorkerPlan, EngineError> {
        if let Some(existing) = self.plans.get(worker_id) {
            if existing.mode != mode {
                return Err(EngineError::PlanConflict {
                    worker: worker_id.to_string(),
                    existing: existing.mode,
                    requested: mode,
                });
            }
        }
        let plan = assign_worker_plan(worker_id, mode, blocks, games_per_block);
        self.plans.insert(worker_id.to_string(), plan);
        Ok(&self.plans[worker_id])
    }

    pub fn get(&self, worker_id: &str) -> Option<&WorkerPlan> {
        self.plans.get(worker_id)
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }
}
