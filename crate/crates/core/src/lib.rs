//! Lookahead-heuristic decoding for autoregressive sequence models.
//!
//! Candidates are ranked by their prefix log-probability plus an estimate of
//! the future computed from short lookahead continuations, in the spirit of
//! A* search. Lexical constraints are CNF formulas over phrases; the
//! constrained decoder adds a progress reward and a lookahead estimate of
//! how likely each unsatisfied phrase is to appear soon.
//!
//! The crate ships two toy models (conditional tables and add-k n-grams) and
//! an exhaustive oracle so decoders can be checked against exact search.

pub mod constraints;
pub mod error;
pub mod fixtures;
pub mod heuristics;
pub mod lookahead;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod search;

pub use constraints::{
    Clause, ClauseStatus, ConstraintSet, ConstraintSpec, ConstraintState, Literal, Polarity,
    TargetPolicy,
};
pub use error::{Error, Result};
pub use heuristics::{Aggregation, HeuristicWeights};
pub use lookahead::{Continuation, LookaheadConfig, Strategy};
pub use model::{
    sequence_logprob, NGramModel, StepDistribution, StepScorer, TableModel, TokenId, TokenMixture,
    Vocabulary,
};
pub use oracle::{exact_argmax, exact_q, OracleBudget, OracleResult};
pub use search::{decode, topk_sample_decode, DecodeMode, DecodeParams, DecodeResult};
