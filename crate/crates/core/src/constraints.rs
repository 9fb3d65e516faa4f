//! CNF lexical constraints and their incremental per-hypothesis state.
//!
//! A literal asks for a phrase to appear (positive) or not appear (negative)
//! as a contiguous token run. Each literal carries a failure-function
//! automaton, so a state can be advanced one token at a time and still
//! report how much of every phrase is matched at the frontier.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TokenId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Literal {
    pub phrase: Vec<TokenId>,
    pub polarity: Polarity,
}

impl Literal {
    pub fn positive(phrase: Vec<TokenId>) -> Self {
        Self {
            phrase,
            polarity: Polarity::Positive,
        }
    }

    pub fn negative(phrase: Vec<TokenId>) -> Self {
        Self {
            phrase,
            polarity: Polarity::Negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    pub literals: Vec<Literal>,
}

impl Clause {
    pub fn new(literals: Vec<Literal>) -> Self {
        Self { literals }
    }
}

/// Status of a clause given the tokens generated so far.
///
/// Declaration order is the join order: a clause takes the best status of
/// any of its literals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseStatus {
    IrreversiblyUnsatisfied,
    ReversiblyUnsatisfied,
    ReversiblySatisfied,
    IrreversiblySatisfied,
}

impl ClauseStatus {
    /// Whether the clause counts as satisfied if the sequence ended now.
    pub fn satisfied_at_end(self) -> bool {
        matches!(
            self,
            ClauseStatus::IrreversiblySatisfied | ClauseStatus::ReversiblySatisfied
        )
    }

    pub fn is_irreversible(self) -> bool {
        matches!(
            self,
            ClauseStatus::IrreversiblySatisfied | ClauseStatus::IrreversiblyUnsatisfied
        )
    }
}

/// Which positive literals are offered to the progress and future
/// satisfaction heuristics as still-to-be-satisfied targets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPolicy {
    /// Unmatched positive literals of every clause that is not irreversibly
    /// satisfied, including clauses currently held up by a negative literal.
    #[default]
    IncludeReversiblySatisfied,
    /// Only clauses that are currently unsatisfied.
    UnsatisfiedOnly,
}

/// Failure-function matcher for a single phrase.
#[derive(Debug, Clone)]
struct PhraseAutomaton {
    phrase: Vec<TokenId>,
    // fail[i]: length of the longest proper border of phrase[..=i]
    fail: Vec<usize>,
}

impl PhraseAutomaton {
    fn new(phrase: Vec<TokenId>) -> Self {
        let mut fail = vec![0; phrase.len()];
        let mut k = 0;
        for i in 1..phrase.len() {
            while k > 0 && phrase[i] != phrase[k] {
                k = fail[k - 1];
            }
            if phrase[i] == phrase[k] {
                k += 1;
            }
            fail[i] = k;
        }
        Self { phrase, fail }
    }

    /// Returns the new active prefix length and whether the phrase completed.
    fn advance(&self, mut len: usize, token: TokenId) -> (usize, bool) {
        while len > 0 && self.phrase[len] != token {
            len = self.fail[len - 1];
        }
        if self.phrase[len] == token {
            len += 1;
        }
        if len == self.phrase.len() {
            (self.fail[len - 1], true)
        } else {
            (len, false)
        }
    }
}

/// Reference from a target back to its literal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LiteralRef {
    pub clause: usize,
    pub literal: usize,
}

/// A positive literal whose phrase still needs to be generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target<'a> {
    pub phrase: &'a [TokenId],
    pub literal: LiteralRef,
}

/// A CNF formula over phrase literals.
#[derive(Debug, Clone, Default)]
pub struct ConstraintSet {
    clauses: Vec<Clause>,
    automata: Vec<PhraseAutomaton>,
    // flat literal index -> owning clause
    owner: Vec<usize>,
    // clause -> first flat literal index
    offsets: Vec<usize>,
}

impl ConstraintSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates that every clause is non-empty and every phrase is a
    /// non-empty run of ordinary tokens.
    pub fn new(clauses: Vec<Clause>, vocab: &Vocabulary) -> Result<Self> {
        let mut automata = Vec::new();
        let mut owner = Vec::new();
        let mut offsets = Vec::with_capacity(clauses.len());
        for (c, clause) in clauses.iter().enumerate() {
            if clause.literals.is_empty() {
                return Err(Error::InvalidInput(format!("clause {c} has no literals")));
            }
            offsets.push(automata.len());
            for lit in &clause.literals {
                if lit.phrase.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "clause {c} has an empty phrase"
                    )));
                }
                vocab.check_ids(&lit.phrase)?;
                if lit
                    .phrase
                    .iter()
                    .any(|&t| t == vocab.bos() || t == vocab.eos())
                {
                    return Err(Error::InvalidInput(format!(
                        "clause {c} has a phrase containing <bos> or <eos>"
                    )));
                }
                automata.push(PhraseAutomaton::new(lit.phrase.clone()));
                owner.push(c);
            }
        }
        Ok(Self {
            clauses,
            automata,
            owner,
            offsets,
        })
    }

    pub fn from_spec(spec: &ConstraintSpec, vocab: &Vocabulary) -> Result<Self> {
        let clauses = spec
            .0
            .iter()
            .map(|clause| {
                clause
                    .iter()
                    .map(|lit| {
                        Ok(Literal {
                            phrase: vocab.encode(&lit.phrase)?,
                            polarity: lit.polarity,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(Clause::new)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(clauses, vocab)
    }

    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let spec = ConstraintSpec::load(path)?;
        Self::from_spec(&spec, vocab).map_err(|e| Error::parse("constraints", e.to_string()))
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    fn literal(&self, flat: usize) -> &Literal {
        let c = self.owner[flat];
        &self.clauses[c].literals[flat - self.offsets[c]]
    }

    pub fn init_state(&self) -> ConstraintState {
        let mut state = ConstraintState {
            matched: vec![false; self.automata.len()],
            progress: vec![0; self.automata.len()],
            status: vec![ClauseStatus::IrreversiblyUnsatisfied; self.clauses.len()],
            max_progress: 0.0,
        };
        self.refresh(&mut state);
        state
    }

    /// Folds [`ConstraintState::advance`] over `tokens` from the initial state.
    pub fn state_after(&self, tokens: &[TokenId]) -> ConstraintState {
        tokens
            .iter()
            .fold(self.init_state(), |s, &t| s.advance(self, t))
    }

    fn refresh(&self, state: &mut ConstraintState) {
        for (c, status) in state.status.iter_mut().enumerate() {
            let range = self.offsets[c]..self.offsets[c] + self.clauses[c].literals.len();
            *status = range
                .map(|i| literal_status(self.literal(i).polarity, state.matched[i]))
                .max()
                .expect("clauses are non-empty");
        }
        state.max_progress = (0..self.automata.len())
            .filter(|&i| {
                self.literal(i).polarity == Polarity::Positive
                    && state.status[self.owner[i]] != ClauseStatus::IrreversiblySatisfied
            })
            .map(|i| state.progress[i] as f64 / self.automata[i].phrase.len() as f64)
            .fold(0.0, f64::max);
    }
}

fn literal_status(polarity: Polarity, matched: bool) -> ClauseStatus {
    match (polarity, matched) {
        (Polarity::Positive, true) => ClauseStatus::IrreversiblySatisfied,
        (Polarity::Positive, false) => ClauseStatus::ReversiblyUnsatisfied,
        (Polarity::Negative, false) => ClauseStatus::ReversiblySatisfied,
        (Polarity::Negative, true) => ClauseStatus::IrreversiblyUnsatisfied,
    }
}

/// Satisfaction and frontier progress for one hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintState {
    matched: Vec<bool>,
    progress: Vec<u32>,
    status: Vec<ClauseStatus>,
    max_progress: f64,
}

impl ConstraintState {
    /// The state after appending `token`. `self` is left untouched.
    pub fn advance(&self, cs: &ConstraintSet, token: TokenId) -> ConstraintState {
        let mut next = self.clone();
        for (i, automaton) in cs.automata.iter().enumerate() {
            let (len, done) = automaton.advance(next.progress[i] as usize, token);
            next.progress[i] = len as u32;
            next.matched[i] |= done;
        }
        cs.refresh(&mut next);
        next
    }

    pub fn statuses(&self) -> &[ClauseStatus] {
        &self.status
    }

    /// Whether each flat literal's phrase has occurred.
    pub fn matched(&self) -> &[bool] {
        &self.matched
    }

    /// Active prefix length of each flat literal.
    pub fn active_prefix_lengths(&self) -> &[u32] {
        &self.progress
    }

    /// Largest `|matched prefix| / |phrase|` over positive literals of
    /// clauses that are not irreversibly satisfied; 0 if there are none.
    pub fn prefix_progress(&self) -> f64 {
        self.max_progress
    }

    pub fn is_pruned(&self) -> bool {
        self.status.contains(&ClauseStatus::IrreversiblyUnsatisfied)
    }

    pub fn satisfied_clause_count(&self) -> usize {
        self.status.iter().filter(|s| s.satisfied_at_end()).count()
    }

    pub fn unsatisfied_clause_count(&self) -> usize {
        self.status.len() - self.satisfied_clause_count()
    }

    pub fn violated_clause_count(&self) -> usize {
        self.status
            .iter()
            .filter(|s| **s == ClauseStatus::IrreversiblyUnsatisfied)
            .count()
    }

    /// Sorted indices of the irreversibly satisfied clauses.
    pub fn group_key(&self) -> GroupKey {
        GroupKey(
            self.status
                .iter()
                .enumerate()
                .filter(|(_, s)| **s == ClauseStatus::IrreversiblySatisfied)
                .map(|(i, _)| i)
                .collect(),
        )
    }

    pub fn unsatisfied_targets<'a>(
        &self,
        cs: &'a ConstraintSet,
        policy: TargetPolicy,
    ) -> Vec<Target<'a>> {
        (0..cs.automata.len())
            .filter(|&i| {
                let status = self.status[cs.owner[i]];
                cs.literal(i).polarity == Polarity::Positive
                    && !self.matched[i]
                    && match policy {
                        TargetPolicy::IncludeReversiblySatisfied => {
                            status != ClauseStatus::IrreversiblySatisfied
                        }
                        TargetPolicy::UnsatisfiedOnly => {
                            status == ClauseStatus::ReversiblyUnsatisfied
                        }
                    }
            })
            .map(|i| Target {
                phrase: &cs.automata[i].phrase,
                literal: LiteralRef {
                    clause: cs.owner[i],
                    literal: i - cs.offsets[cs.owner[i]],
                },
            })
            .collect()
    }
}

/// Canonical encoding of the set of irreversibly satisfied clauses.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct GroupKey(pub Vec<usize>);

/// Constraint file contents before token strings are resolved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ConstraintSpec(pub Vec<Vec<LiteralSpec>>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiteralSpec {
    pub polarity: Polarity,
    pub phrase: Vec<String>,
}

impl ConstraintSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::from_json)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}
