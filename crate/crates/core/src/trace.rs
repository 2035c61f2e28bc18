//! Solver traces.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::kruskal::KruskalModel;

/// Which half of a hybrid cycle produced a trace entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Stochastic,
    Deterministic,
}

/// Cycle/stage annotation attached by the hybrid driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTag {
    pub cycle: usize,
    pub stage: Stage,
}

/// One trace record: the state after `work` work units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Cumulative work units (outer iterations or epochs) at this point.
    pub work: usize,
    /// Objective value; exact for CPAPR-MU, a sample estimate for GCP-Adam.
    pub nll: f64,
    pub nll_is_estimate: bool,
    pub kkt_violation: Option<f64>,
    pub learning_rate: Option<f64>,
    /// GCP-Adam epoch whose estimate got worse and was rolled back.
    pub rejected: bool,
    pub tag: Option<StageTag>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl TraceEntry {
    pub(crate) fn new(work: usize, nll: f64) -> Self {
        TraceEntry {
            work,
            nll,
            nll_is_estimate: false,
            kkt_violation: None,
            learning_rate: None,
            rejected: false,
            tag: None,
            elapsed: Duration::ZERO,
        }
    }

    /// Equality ignoring wall time.
    pub fn same_numerics(&self, other: &TraceEntry) -> bool {
        let strip = |e: &TraceEntry| TraceEntry { elapsed: Duration::ZERO, ..e.clone() };
        strip(self) == strip(other)
    }
}

/// A named model snapshot taken during a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub learning_rate: f64,
    pub work: usize,
    pub model: KruskalModel,
}

/// Full record of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    /// The first entry describes the initial model (work 0).
    pub entries: Vec<TraceEntry>,
    pub converged: bool,
    pub model: KruskalModel,
    pub checkpoints: Vec<Checkpoint>,
}

impl SolveTrace {
    /// Work units consumed.
    pub fn work(&self) -> usize {
        self.entries.last().map_or(0, |e| e.work)
    }

    pub fn nll_sequence(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.nll).collect()
    }

    /// Equality of everything except wall-clock fields.
    pub fn same_numerics(&self, other: &SolveTrace) -> bool {
        self.converged == other.converged
            && self.model == other.model
            && self.checkpoints == other.checkpoints
            && self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| a.same_numerics(b))
    }
}
