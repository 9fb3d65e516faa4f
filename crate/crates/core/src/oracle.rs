//! Exhaustive reference search over every eos-terminated completion.
//!
//! Depth-first, in ascending token-id order, skipping only branches whose
//! log-probability is already `-inf`. Meant for tests on tiny instances.

use crate::constraints::{ConstraintSet, ConstraintState};
use crate::error::{Error, Result};
use crate::model::{StepScorer, TokenId};

pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    /// Maximum number of generated tokens, eos included.
    pub max_len: usize,
    /// Upper bound on `|emittable|^max_len`.
    pub cap: u128,
}

impl OracleBudget {
    pub fn new(max_len: usize) -> Self {
        Self {
            max_len,
            cap: DEFAULT_ENUMERATION_CAP,
        }
    }

    fn check(&self, emittable: usize, remaining: usize) -> Result<()> {
        let required = (emittable as u128)
            .checked_pow(remaining as u32)
            .unwrap_or(u128::MAX);
        if required > self.cap {
            return Err(Error::BudgetExceeded {
                required,
                cap: self.cap,
            });
        }
        Ok(())
    }
}

/// Best completion found by exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Generated tokens, eos included.
    pub tokens: Vec<TokenId>,
    pub logprob: f64,
    /// Log-probability minus `lambda_prime` per unsatisfied clause.
    pub objective: f64,
}

struct Search<'a, M: ?Sized> {
    model: &'a M,
    cs: &'a ConstraintSet,
    lambda_prime: f64,
    max_len: usize,
    seq: Vec<TokenId>,
    context_len: usize,
    best: Option<OracleResult>,
}

impl<M: StepScorer + ?Sized> Search<'_, M> {
    fn finish(&mut self, logprob: f64, state: &ConstraintState) {
        let unsat = state.unsatisfied_clause_count();
        let objective = if unsat == 0 {
            logprob
        } else {
            logprob - self.lambda_prime * unsat as f64
        };
        let generated = &self.seq[self.context_len..];
        let better = match &self.best {
            None => true,
            Some(b) => {
                objective > b.objective || (objective == b.objective && generated < &b.tokens[..])
            }
        };
        if better {
            self.best = Some(OracleResult {
                tokens: generated.to_vec(),
                logprob,
                objective,
            });
        }
    }

    fn visit(&mut self, logprob: f64, state: &ConstraintState) -> Result<()> {
        let vocab = self.model.vocab();
        let eos = vocab.eos();
        let depth = self.seq.len() - self.context_len;
        let dist = self.model.step(&self.seq)?;
        let last = depth + 1 >= self.max_len;
        for tok in vocab.emittable() {
            if last && tok != eos {
                continue;
            }
            let lp = dist.logprob(tok);
            if lp == f64::NEG_INFINITY {
                continue;
            }
            let next_state = state.advance(self.cs, tok);
            self.seq.push(tok);
            if tok == eos {
                self.finish(logprob + lp, &next_state);
            } else {
                self.visit(logprob + lp, &next_state)?;
            }
            self.seq.pop();
        }
        Ok(())
    }
}

fn run<M: StepScorer + ?Sized>(
    model: &M,
    cs: &ConstraintSet,
    context: Vec<TokenId>,
    generated: &[TokenId],
    lambda_prime: f64,
    budget: OracleBudget,
) -> Result<Option<OracleResult>> {
    let vocab = model.vocab();
    let eos = vocab.eos();
    vocab.check_prefix(&context)?;
    vocab.check_ids(generated)?;
    if generated.len() > budget.max_len {
        return Err(Error::InvalidInput("prefix is longer than max_len".into()));
    }
    if generated.iter().rev().skip(1).any(|&t| t == eos) {
        return Err(Error::InvalidInput("eos may only end a sequence".into()));
    }
    budget.check(vocab.len() - 1, budget.max_len - generated.len())?;

    let logprob = crate::model::conditional_logprob(model, &context, generated)?;
    let state = cs.state_after(generated);
    let context_len = context.len();
    let mut seq = context;
    seq.extend_from_slice(generated);
    let mut search = Search {
        model,
        cs,
        lambda_prime,
        max_len: budget.max_len,
        seq,
        context_len,
        best: None,
    };
    if logprob == f64::NEG_INFINITY {
        return Ok(None);
    }
    if generated.last() == Some(&eos) {
        search.finish(logprob, &state);
    } else if generated.len() < budget.max_len {
        search.visit(logprob, &state)?;
    }
    Ok(search.best)
}

/// Maximizer of `logprob - lambda_prime * unsatisfied` over all
/// eos-terminated continuations of `prompt` with at most `budget.max_len`
/// generated tokens. Ties go to the lexicographically smallest sequence.
pub fn exact_argmax<M: StepScorer + ?Sized>(
    model: &M,
    cs: &ConstraintSet,
    prompt: &[TokenId],
    lambda_prime: f64,
    budget: OracleBudget,
) -> Result<OracleResult> {
    let mut context = vec![model.vocab().bos()];
    context.extend_from_slice(prompt);
    run(model, cs, context, &[], lambda_prime, budget)?
        .ok_or_else(|| Error::InvalidInput("no completion has non-zero probability".into()))
}

/// Best objective over every completion of `generated ∘ token`, where
/// `generated` are tokens already produced after the prompt. Returns `-inf`
/// when no completion has non-zero probability.
pub fn exact_q<M: StepScorer + ?Sized>(
    model: &M,
    cs: &ConstraintSet,
    prompt: &[TokenId],
    generated: &[TokenId],
    token: TokenId,
    lambda_prime: f64,
    budget: OracleBudget,
) -> Result<f64> {
    let mut context = vec![model.vocab().bos()];
    context.extend_from_slice(prompt);
    let mut path = generated.to_vec();
    path.push(token);
    Ok(run(model, cs, context, &path, lambda_prime, budget)?
        .map_or(f64::NEG_INFINITY, |r| r.objective))
}
