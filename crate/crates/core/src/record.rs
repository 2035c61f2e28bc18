//! Solve records and result sets.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kruskal::KruskalModel;
use crate::trace::SolveTrace;

/// Compact digest of a solve trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub initial_nll: Option<f64>,
    pub entries: usize,
    pub rejected_epochs: usize,
    pub final_kkt: Option<f64>,
}

impl TraceSummary {
    pub fn of(trace: &SolveTrace) -> Self {
        TraceSummary {
            initial_nll: trace.entries.first().map(|e| e.nll),
            entries: trace.entries.len(),
            rejected_epochs: trace.entries.iter().filter(|e| e.rejected).count(),
            final_kkt: trace.entries.iter().rev().find_map(|e| e.kkt_violation),
        }
    }
}

/// One multi-start outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveRecord {
    pub run_id: String,
    pub seed: u64,
    pub method: String,
    pub options_digest: String,
    /// `(j, k)` for constant-work hybrid runs.
    pub pair: Option<(usize, usize)>,
    pub model: KruskalModel,
    /// Exact NLL of `model`.
    pub nll: f64,
    pub work: usize,
    pub converged: bool,
    pub summary: TraceSummary,
    pub wall_time: Duration,
}

/// An ordered collection of records. Insertion order is the index used to
/// break ties when picking the approximate MLE.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultSet {
    pub label: String,
    pub records: Vec<SolveRecord>,
}

impl ResultSet {
    pub fn new(label: impl Into<String>) -> Self {
        ResultSet { label: label.into(), records: Vec::new() }
    }

    pub fn push(&mut self, record: SolveRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn models(&self) -> impl Iterator<Item = &KruskalModel> {
        self.records.iter().map(|r| &r.model)
    }

    /// Concatenation of several sets, in the order given.
    pub fn union<'a>(label: impl Into<String>, sets: impl IntoIterator<Item = &'a ResultSet>) -> Self {
        ResultSet {
            label: label.into(),
            records: sets.into_iter().flat_map(|s| s.records.iter().cloned()).collect(),
        }
    }

    /// Records whose `(j, k)` pair equals `pair`, in order.
    pub fn restrict_to_pair(&self, pair: (usize, usize)) -> ResultSet {
        ResultSet {
            label: format!("{}[{},{}]", self.label, pair.0, pair.1),
            records: self.records.iter().filter(|r| r.pair == Some(pair)).cloned().collect(),
        }
    }

    /// Distinct `(j, k)` pairs in first-appearance order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for p in self.records.iter().filter_map(|r| r.pair) {
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }

    pub(crate) fn ensure_non_empty(&self) -> Result<()> {
        if self.records.is_empty() {
            Err(Error::EmptySet)
        } else {
            Ok(())
        }
    }
}
