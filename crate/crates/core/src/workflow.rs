//! Deterministic interview state machine.
//!
//! Every operation is a pure function from the current [`WorkflowState`] (and
//! the catalog) to a new state; nothing is mutated in place.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{CategoryId, Question, QuestionCatalog};

/// Tool-result text that tells the model a category is exhausted.
pub const SENTINEL_TEXT: &str = "All questions completed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingPriorities,
    Interviewing,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowState {
    pub phase: Phase,
    pub priority_order: Vec<CategoryId>,
    pub active_category: Option<CategoryId>,
    pub cursor: BTreeMap<CategoryId, usize>,
    pub sentinel_issued: BTreeSet<CategoryId>,
}

impl Default for WorkflowState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Retrieval {
    Question(Question),
    /// The category has no questions left.
    Exhausted,
}

impl Retrieval {
    /// Text sent back to the model on the tool-result channel.
    pub fn render(&self) -> &str {
        match self {
            Retrieval::Question(q) => &q.text,
            Retrieval::Exhausted => SENTINEL_TEXT,
        }
    }

    pub fn is_sentinel(&self) -> bool {
        matches!(self, Retrieval::Exhausted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryProgress {
    pub asked: usize,
    pub remaining: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub per_category: BTreeMap<CategoryId, CategoryProgress>,
    pub total_asked: usize,
    pub total_remaining: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkflowError {
    #[error("operation requires phase {expected:?}, session is in {actual:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("unknown category `{0}`")]
    UnknownCategory(CategoryId),
    #[error("category `{0}` listed more than once")]
    DuplicateCategory(CategoryId),
    #[error("at least one priority category is required")]
    NoPriorities,
    #[error("category `{0}` is not among the selected priorities")]
    NotPrioritized(CategoryId),
}

impl WorkflowState {
    pub fn new() -> Self {
        Self {
            phase: Phase::AwaitingPriorities,
            priority_order: Vec::new(),
            active_category: None,
            cursor: BTreeMap::new(),
            sentinel_issued: BTreeSet::new(),
        }
    }

    fn expect_phase(&self, expected: Phase) -> Result<(), WorkflowError> {
        if self.phase == expected {
            Ok(())
        } else {
            Err(WorkflowError::WrongPhase {
                expected,
                actual: self.phase,
            })
        }
    }

    /// Fixes the ranked list of categories and starts the interview.
    pub fn record_priorities(
        &self,
        catalog: &QuestionCatalog,
        ordered_ids: &[CategoryId],
    ) -> Result<WorkflowState, WorkflowError> {
        self.expect_phase(Phase::AwaitingPriorities)?;
        if ordered_ids.is_empty() {
            return Err(WorkflowError::NoPriorities);
        }
        let mut seen = HashSet::new();
        for id in ordered_ids {
            if !catalog.contains(id) {
                return Err(WorkflowError::UnknownCategory(id.clone()));
            }
            if !seen.insert(id) {
                return Err(WorkflowError::DuplicateCategory(id.clone()));
            }
        }
        Ok(WorkflowState {
            phase: Phase::Interviewing,
            priority_order: ordered_ids.to_vec(),
            active_category: Some(ordered_ids[0].clone()),
            cursor: ordered_ids.iter().map(|id| (id.clone(), 0)).collect(),
            sentinel_issued: BTreeSet::new(),
        })
    }

    /// Appends a category to the end of the ranking mid-interview.
    ///
    /// Used when the client moves on to a domain they did not rank up front.
    /// A category already in the ranking leaves the state unchanged.
    pub fn add_priority(&self, catalog: &QuestionCatalog, id: &CategoryId) -> Result<WorkflowState, WorkflowError> {
        self.expect_phase(Phase::Interviewing)?;
        if !catalog.contains(id) {
            return Err(WorkflowError::UnknownCategory(id.clone()));
        }
        let mut next = self.clone();
        if !next.priority_order.contains(id) {
            next.priority_order.push(id.clone());
            next.cursor.insert(id.clone(), 0);
        }
        Ok(next)
    }

    /// Serves the next question of `category`, or the sentinel once it is exhausted.
    ///
    /// After the last prioritized category has returned its sentinel the phase
    /// becomes `Completed`; further calls keep returning the sentinel.
    pub fn retrieve_question(
        &self,
        catalog: &QuestionCatalog,
        category: &CategoryId,
    ) -> Result<(Retrieval, WorkflowState), WorkflowError> {
        if self.phase == Phase::AwaitingPriorities {
            return Err(WorkflowError::WrongPhase {
                expected: Phase::Interviewing,
                actual: self.phase,
            });
        }
        let served = *self
            .cursor
            .get(category)
            .filter(|_| self.priority_order.contains(category))
            .ok_or_else(|| WorkflowError::NotPrioritized(category.clone()))?;
        let questions = &catalog
            .category(category)
            .ok_or_else(|| WorkflowError::UnknownCategory(category.clone()))?
            .questions;

        if self.phase == Phase::Completed {
            return Ok((Retrieval::Exhausted, self.clone()));
        }

        let mut next = self.clone();
        if let Some(question) = questions.get(served) {
            next.cursor.insert(category.clone(), served + 1);
            next.active_category = Some(category.clone());
            return Ok((Retrieval::Question(question.clone()), next));
        }

        next.sentinel_issued.insert(category.clone());
        let pending = next
            .priority_order
            .iter()
            .find(|c| !next.sentinel_issued.contains(*c))
            .cloned();
        match pending {
            Some(c) => next.active_category = Some(c),
            None => {
                next.phase = Phase::Completed;
                next.active_category = None;
            }
        }
        Ok((Retrieval::Exhausted, next))
    }

    pub fn progress(&self, catalog: &QuestionCatalog) -> Result<Progress, WorkflowError> {
        if self.phase == Phase::AwaitingPriorities {
            return Err(WorkflowError::WrongPhase {
                expected: Phase::Interviewing,
                actual: self.phase,
            });
        }
        let mut per_category = BTreeMap::new();
        let (mut total_asked, mut total_remaining) = (0, 0);
        for id in &self.priority_order {
            let size = catalog.question_count(id);
            let asked = self.cursor.get(id).copied().unwrap_or(0).min(size);
            let remaining = size - asked;
            total_asked += asked;
            total_remaining += remaining;
            per_category.insert(id.clone(), CategoryProgress { asked, remaining });
        }
        Ok(Progress {
            per_category,
            total_asked,
            total_remaining,
        })
    }

    /// Checks the structural invariants against `catalog`; returns the first violation.
    pub fn check_invariants(&self, catalog: &QuestionCatalog) -> Result<(), String> {
        let mut seen = HashSet::new();
        for id in &self.priority_order {
            if !seen.insert(id) {
                return Err(format!("category `{id}` repeated in priority_order"));
            }
            if !catalog.contains(id) {
                return Err(format!("unknown category `{id}` in priority_order"));
            }
        }
        for (id, served) in &self.cursor {
            if *served > catalog.question_count(id) {
                return Err(format!("cursor for `{id}` is past the end"));
            }
        }
        if self.active_category.is_some() != (self.phase == Phase::Interviewing) {
            return Err("active_category must be set exactly while interviewing".into());
        }
        if self.phase == Phase::Completed
            && self
                .priority_order
                .iter()
                .any(|id| self.cursor.get(id).copied().unwrap_or(0) != catalog.question_count(id))
        {
            return Err("completed with questions left".into());
        }
        Ok(())
    }
}
