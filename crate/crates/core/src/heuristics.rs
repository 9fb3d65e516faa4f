//! Future-score estimates computed from lookahead continuations.

use serde::{Deserialize, Serialize};

use crate::constraints::Target;
use crate::error::{Error, Result};
use crate::lookahead::Continuation;
use crate::model::{StepScorer, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicWeights {
    /// Weight on the lookahead likelihood (unconstrained decoding).
    pub lambda: f64,
    /// Weight on partial progress through a constraint phrase.
    pub lambda1: f64,
    /// Weight on the log-probability of satisfying a constraint ahead.
    pub lambda2: f64,
    /// Penalty per clause left unsatisfied at end of sequence.
    pub lambda_prime: f64,
}

impl Default for HeuristicWeights {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            lambda1: 0.1,
            lambda2: 0.1,
            lambda_prime: 10.0,
        }
    }
}

impl HeuristicWeights {
    pub fn zero() -> Self {
        Self {
            lambda: 0.0,
            lambda1: 0.0,
            lambda2: 0.0,
            lambda_prime: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("lambda", self.lambda),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda_prime", self.lambda_prime),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidParams(format!(
                    "weights.{name} must be finite and >= 0, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// How per-continuation values are combined over the lookahead set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

impl Aggregation {
    fn combine(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            Aggregation::Max => values.fold(f64::NEG_INFINITY, f64::max),
            Aggregation::Mean => {
                let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
                if n == 0 {
                    f64::NEG_INFINITY
                } else {
                    sum / n as f64
                }
            }
        }
    }
}

/// `lambda` times the best lookahead log-likelihood.
pub fn unconstrained_h(continuations: &[Continuation], lambda: f64, agg: Aggregation) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda * agg.combine(continuations.iter().map(Continuation::logprob))
}

/// Log-probability of force-feeding `phrase` after `context`.
pub fn phrase_prob_from<M: StepScorer + ?Sized>(
    model: &M,
    context: &[TokenId],
    phrase: &[TokenId],
) -> Result<f64> {
    crate::model::conditional_logprob(model, context, phrase)
}

/// `lambda2` times the best log-probability of generating any target phrase
/// starting at some offset inside a continuation.
///
/// For a continuation of length `n` the phrase may start right after the
/// prefix (offset 0) or after any of the continuation's first `n` tokens,
/// except after eos. The phrase itself may run past the horizon.
pub fn future_satisfaction_h<M: StepScorer + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    continuations: &[Continuation],
    targets: &[Target<'_>],
    lambda2: f64,
    agg: Aggregation,
) -> Result<f64> {
    if targets.is_empty() || lambda2 == 0.0 {
        return Ok(0.0);
    }
    let eos = model.vocab().eos();
    let mut per_cont = Vec::with_capacity(continuations.len());
    let mut context = prefix.to_vec();
    for cont in continuations {
        context.truncate(prefix.len());
        let mut best = f64::NEG_INFINITY;
        for offset in 0..=cont.tokens.len() {
            if offset > 0 {
                let tok = cont.tokens[offset - 1];
                if tok == eos {
                    break;
                }
                context.push(tok);
            }
            for target in targets {
                best = best.max(phrase_prob_from(model, &context, target.phrase)?);
            }
        }
        per_cont.push(best);
    }
    Ok(lambda2 * agg.combine(per_cont.into_iter()))
}

/// Candidate ranking score: prefix log-probability plus progress reward
/// plus whichever lookahead heuristic is active.
pub fn combined_candidate_score(
    s_prefix: f64,
    progress: f64,
    h_unc: f64,
    h_fut: f64,
    weights: &HeuristicWeights,
) -> f64 {
    let reward = if weights.lambda1 == 0.0 {
        0.0
    } else {
        weights.lambda1 * progress
    };
    s_prefix + reward + h_fut + h_unc
}
