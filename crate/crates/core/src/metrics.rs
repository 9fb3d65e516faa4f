//! Constraint-satisfaction metrics over decoded outputs. Matching is exact
//! contiguous token-subsequence; inflected forms are supplied as
//! alternatives.

use serde::{Deserialize, Serialize};

use crate::constraints::{ClauseStatus, ConstraintSet};
use crate::search::DecodeResult;

pub fn contains_phrase<T: PartialEq>(haystack: &[T], phrase: &[T]) -> bool {
    !phrase.is_empty() && haystack.windows(phrase.len()).any(|w| w == phrase)
}

/// Percentage of concepts with at least one alternative present in `output`.
/// 100 when there are no concepts.
pub fn coverage<T: PartialEq>(output: &[T], concepts: &[Vec<Vec<T>>]) -> f64 {
    if concepts.is_empty() {
        return 100.0;
    }
    let hit = concepts
        .iter()
        .filter(|alts| alts.iter().any(|a| contains_phrase(output, a)))
        .count();
    100.0 * hit as f64 / concepts.len() as f64
}

/// Corpus-level percentage of required terms that appear in their output.
pub fn term_use_rate<T: PartialEq>(outputs: &[Vec<T>], terms: &[Vec<Vec<T>>]) -> f64 {
    let total: usize = terms.iter().map(Vec::len).sum();
    if total == 0 {
        return 100.0;
    }
    let matched: usize = outputs
        .iter()
        .zip(terms)
        .map(|(out, ts)| ts.iter().filter(|t| contains_phrase(out, t)).count())
        .sum();
    100.0 * matched as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseReport {
    pub clause: usize,
    pub status: ClauseStatus,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionReport {
    pub clauses: Vec<ClauseReport>,
    pub satisfied: usize,
    pub unsatisfied: usize,
    /// Satisfied fraction in percent; 100 with no clauses.
    pub rate: f64,
}

/// Clause table for the best hypothesis of `result`, or `None` if it is empty.
pub fn satisfaction_report(
    result: &DecodeResult,
    cs: &ConstraintSet,
) -> Option<SatisfactionReport> {
    let best = result.best()?;
    let state = cs.state_after(best.generated());
    let clauses: Vec<ClauseReport> = state
        .statuses()
        .iter()
        .enumerate()
        .map(|(clause, &status)| ClauseReport {
            clause,
            status,
            satisfied: status.satisfied_at_end(),
        })
        .collect();
    let satisfied = state.satisfied_clause_count();
    let rate = if clauses.is_empty() {
        100.0
    } else {
        100.0 * satisfied as f64 / clauses.len() as f64
    };
    Some(SatisfactionReport {
        unsatisfied: clauses.len() - satisfied,
        satisfied,
        clauses,
        rate,
    })
}
