//! Review state as a fold over the decision log.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::log::{ReviewDecision, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Rejected,
    Adjusted,
}

impl ReviewStatus {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pending" => Some(Self::Pending),
            "accepted" => Some(Self::Accepted),
            "rejected" => Some(Self::Rejected),
            "adjusted" => Some(Self::Adjusted),
            _ => None,
        }
    }
}

impl From<Verdict> for ReviewStatus {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Accept => Self::Accepted,
            Verdict::Reject => Self::Rejected,
            Verdict::Adjust => Self::Adjusted,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub total: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub adjusted: usize,
    pub pending: usize,
}

/// Decision history per record; the last entry wins.
#[derive(Clone, Debug, Default)]
pub struct ReviewState {
    record_ids: Vec<String>,
    history: HashMap<String, Vec<ReviewDecision>>,
}

impl ReviewState {
    pub fn new(record_ids: impl IntoIterator<Item = String>) -> Self {
        Self {
            record_ids: record_ids.into_iter().collect(),
            history: HashMap::new(),
        }
    }

    pub fn replay(
        record_ids: impl IntoIterator<Item = String>,
        decisions: impl IntoIterator<Item = ReviewDecision>,
    ) -> Self {
        let mut state = Self::new(record_ids);
        decisions.into_iter().for_each(|d| state.apply(d));
        state
    }

    pub fn apply(&mut self, decision: ReviewDecision) {
        self.history
            .entry(decision.record_id.clone())
            .or_default()
            .push(decision);
    }

    pub fn history(&self, id: &str) -> &[ReviewDecision] {
        self.history.get(id).map_or(&[], Vec::as_slice)
    }

    pub fn latest(&self, id: &str) -> Option<&ReviewDecision> {
        self.history(id).last()
    }

    pub fn status(&self, id: &str) -> ReviewStatus {
        self.latest(id)
            .map_or(ReviewStatus::Pending, |d| d.verdict.into())
    }

    /// Counters over the dataset's records; decisions for unknown ids are
    /// kept in history but not counted.
    pub fn progress(&self) -> Progress {
        let mut p = Progress {
            total: self.record_ids.len(),
            ..Progress::default()
        };
        for id in &self.record_ids {
            match self.status(id) {
                ReviewStatus::Pending => p.pending += 1,
                ReviewStatus::Accepted => p.accepted += 1,
                ReviewStatus::Rejected => p.rejected += 1,
                ReviewStatus::Adjusted => p.adjusted += 1,
            }
        }
        p
    }
}
