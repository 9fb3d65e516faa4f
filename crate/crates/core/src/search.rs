//! Decoding drivers: plain beam search, beam search with a lookahead
//! likelihood heuristic, NeuroLogic constrained beam search, and its
//! lookahead variant, plus heuristic-adjusted top-k sampling.
//!
//! Every step expands the beam into candidates, scores them according to the
//! mode, and selects the next beam. Candidate scoring may run on a rayon
//! pool; results are merged by candidate index and every sampled lookahead
//! draws from a stream keyed on (seed, step, candidate index), so the worker
//! count never changes the output.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{ClauseStatus, ConstraintSet, ConstraintState, TargetPolicy};
use crate::error::{Error, Result};
use crate::heuristics::{
    combined_candidate_score, future_satisfaction_h, unconstrained_h, Aggregation, HeuristicWeights,
};
use crate::lookahead::{self, derive_seed, sample_index, LookaheadConfig, Strategy};
use crate::model::{StepScorer, TokenId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Rank by prefix log-probability only.
    #[default]
    Plain,
    /// Prefix log-probability plus the weighted lookahead likelihood.
    UnconstrainedAstar,
    /// Constrained beam search with the prefix-progress reward.
    Neurologic,
    /// Constrained beam search with progress reward and the lookahead
    /// estimate of future constraint satisfaction.
    NeurologicAstar,
}

impl DecodeMode {
    pub fn is_constrained(self) -> bool {
        matches!(self, DecodeMode::Neurologic | DecodeMode::NeurologicAstar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeParams {
    pub beam_size: usize,
    /// Maximum number of generated tokens, eos included. Eos is forced on
    /// the last position.
    pub max_len: usize,
    pub weights: HeuristicWeights,
    pub lookahead: LookaheadConfig,
    /// Fraction of candidates kept by prefix log-probability.
    pub alpha: f64,
    /// Fraction of candidates kept by satisfied clause count.
    pub beta: f64,
    pub grouping: bool,
    pub mode: DecodeMode,
    /// Support size for top-k sampling.
    pub topk: usize,
    pub seed: Option<u64>,
    pub aggregation: Aggregation,
    pub target_policy: TargetPolicy,
    /// Lookahead runs only for the best `beam_size * fanout` unfinished
    /// candidates by prefix log-probability; `None` runs it for all.
    pub lookahead_fanout: Option<usize>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            beam_size: 4,
            max_len: 20,
            weights: HeuristicWeights::default(),
            lookahead: LookaheadConfig::default(),
            alpha: 0.5,
            beta: 0.5,
            grouping: true,
            mode: DecodeMode::Plain,
            topk: 10,
            seed: None,
            aggregation: Aggregation::Max,
            target_policy: TargetPolicy::IncludeReversiblySatisfied,
            lookahead_fanout: Some(20),
        }
    }
}

impl DecodeParams {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::InvalidParams("beam_size must be >= 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::InvalidParams("max_len must be >= 1".into()));
        }
        for (name, f) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must lie in (0, 1], got {f}"
                )));
            }
        }
        if self.lookahead_fanout == Some(0) {
            return Err(Error::InvalidParams("lookahead_fanout must be >= 1".into()));
        }
        if self.lookahead.strategy == Strategy::Sampling && self.seed.is_none() {
            return Err(Error::InvalidParams(
                "seed is required for sampling lookahead".into(),
            ));
        }
        self.weights.validate()?;
        self.lookahead.validate()
    }

    fn uses_lookahead(&self) -> bool {
        match self.mode {
            DecodeMode::UnconstrainedAstar => self.weights.lambda != 0.0,
            DecodeMode::NeurologicAstar => self.weights.lambda2 != 0.0,
            _ => false,
        }
    }
}

/// A partial (or finished) sequence in the beam.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// bos, the conditioning prompt, then the generated tokens.
    pub tokens: Vec<TokenId>,
    /// Length of the bos + prompt part of `tokens`.
    pub context_len: usize,
    /// Log-probability of the generated tokens given the context.
    pub logprob: f64,
    /// Constraint state over the generated tokens.
    pub cstate: ConstraintState,
    pub finished: bool,
    /// Most recent ranking score (diagnostic).
    pub last_score: f64,
}

impl Hypothesis {
    pub fn root(context: Vec<TokenId>, cs: &ConstraintSet) -> Self {
        Self {
            context_len: context.len(),
            tokens: context,
            logprob: 0.0,
            cstate: cs.init_state(),
            finished: false,
            last_score: 0.0,
        }
    }

    pub fn generated(&self) -> &[TokenId] {
        &self.tokens[self.context_len..]
    }

    /// Objective with the end-of-sequence clause penalty.
    pub fn objective(&self, lambda_prime: f64) -> f64 {
        let unsat = self.cstate.unsatisfied_clause_count();
        if unsat == 0 {
            self.logprob
        } else {
            self.logprob - lambda_prime * unsat as f64
        }
    }
}

/// A one-token extension of a beam entry (or a finished entry carried over).
#[derive(Debug, Clone)]
pub struct Candidate {
    pub parent: usize,
    /// `None` for a finished hypothesis passed through unexpanded.
    pub token: Option<TokenId>,
    pub hyp: Hypothesis,
}

impl Candidate {
    fn newly_finished(&self) -> bool {
        self.token.is_some() && self.hyp.finished
    }
}

#[derive(Debug, Clone)]
pub struct ScoredCandidate {
    pub cand: Candidate,
    pub score: f64,
}

#[derive(Debug, Default)]
pub struct Expansion {
    pub candidates: Vec<Candidate>,
    /// Highest-likelihood candidate dropped for violating a clause.
    pub best_violating: Option<Hypothesis>,
}

/// Builds the candidate grid. Zero-probability extensions are skipped, and in
/// constrained modes so are extensions that violate a clause.
pub fn expand<M: StepScorer + ?Sized>(
    hyps: &[Hypothesis],
    model: &M,
    cs: &ConstraintSet,
    params: &DecodeParams,
) -> Result<Expansion> {
    let vocab = model.vocab();
    let eos = vocab.eos();
    let mut out = Expansion::default();
    for (parent, hyp) in hyps.iter().enumerate() {
        if hyp.finished {
            out.candidates.push(Candidate {
                parent,
                token: None,
                hyp: hyp.clone(),
            });
            continue;
        }
        let dist = model.step(&hyp.tokens)?;
        let last_slot = hyp.generated().len() + 1 >= params.max_len;
        let choices: Vec<TokenId> = if last_slot {
            vec![eos]
        } else {
            vocab.emittable().collect()
        };
        for tok in choices {
            let lp = dist.logprob(tok);
            if lp == f64::NEG_INFINITY {
                continue;
            }
            let mut tokens = hyp.tokens.clone();
            tokens.push(tok);
            let next = Hypothesis {
                tokens,
                context_len: hyp.context_len,
                logprob: hyp.logprob + lp,
                cstate: hyp.cstate.advance(cs, tok),
                finished: tok == eos,
                last_score: 0.0,
            };
            if params.mode.is_constrained() && next.cstate.is_pruned() {
                if out
                    .best_violating
                    .as_ref()
                    .is_none_or(|b| next.logprob > b.logprob)
                {
                    out.best_violating = Some(next);
                }
                continue;
            }
            out.candidates.push(Candidate {
                parent,
                token: Some(tok),
                hyp: next,
            });
        }
    }
    Ok(out)
}

/// Scores candidates for `step` (1-based) according to the decode mode.
pub fn score_candidates<M: StepScorer + ?Sized>(
    cands: Vec<Candidate>,
    model: &M,
    cs: &ConstraintSet,
    params: &DecodeParams,
    step: usize,
) -> Result<Vec<ScoredCandidate>> {
    let eligible = lookahead_eligible(&cands, params);
    let step_seed = derive_seed(params.seed.unwrap_or(0), &[step as u64]);
    let scores = cands
        .par_iter()
        .enumerate()
        .map(|(idx, cand)| score_one(cand, model, cs, params, eligible[idx], step_seed, idx))
        .collect::<Result<Vec<f64>>>()?;
    Ok(cands
        .into_iter()
        .zip(scores)
        .map(|(mut cand, score)| {
            cand.hyp.last_score = score;
            ScoredCandidate { cand, score }
        })
        .collect())
}

fn lookahead_eligible(cands: &[Candidate], params: &DecodeParams) -> Vec<bool> {
    if !params.uses_lookahead() {
        return vec![false; cands.len()];
    }
    let Some(fanout) = params.lookahead_fanout else {
        return cands.iter().map(|c| !c.hyp.finished).collect();
    };
    let mut open: Vec<usize> = (0..cands.len())
        .filter(|&i| !cands[i].hyp.finished)
        .collect();
    open.sort_by(|&a, &b| {
        let (x, y) = (&cands[a].hyp, &cands[b].hyp);
        y.logprob
            .total_cmp(&x.logprob)
            .then_with(|| x.tokens.cmp(&y.tokens))
    });
    let mut eligible = vec![false; cands.len()];
    for &i in open.iter().take(params.beam_size.saturating_mul(fanout)) {
        eligible[i] = true;
    }
    eligible
}

fn score_one<M: StepScorer + ?Sized>(
    cand: &Candidate,
    model: &M,
    cs: &ConstraintSet,
    params: &DecodeParams,
    eligible: bool,
    step_seed: u64,
    idx: usize,
) -> Result<f64> {
    let hyp = &cand.hyp;
    let w = &params.weights;
    if hyp.finished {
        return Ok(if params.mode.is_constrained() {
            hyp.objective(w.lambda_prime)
        } else {
            hyp.logprob
        });
    }
    let budget = Some(params.max_len - hyp.generated().len());
    let lookahead_cfg = LookaheadConfig {
        seed: step_seed,
        ..params.lookahead.clone()
    };
    let rollouts =
        |model: &M| lookahead::generate(model, &hyp.tokens, &lookahead_cfg, budget, idx as u64);
    let progress = hyp.cstate.prefix_progress();
    let score = match params.mode {
        DecodeMode::Plain => hyp.logprob,
        DecodeMode::Neurologic => combined_candidate_score(hyp.logprob, progress, 0.0, 0.0, w),
        DecodeMode::UnconstrainedAstar => {
            let h = if w.lambda == 0.0 {
                0.0
            } else if eligible {
                unconstrained_h(&rollouts(model)?, w.lambda, params.aggregation)
            } else {
                f64::NEG_INFINITY
            };
            hyp.logprob + h
        }
        DecodeMode::NeurologicAstar => {
            let targets = hyp.cstate.unsatisfied_targets(cs, params.target_policy);
            let h = if w.lambda2 == 0.0 || targets.is_empty() {
                0.0
            } else if eligible {
                future_satisfaction_h(
                    model,
                    &hyp.tokens,
                    &rollouts(model)?,
                    &targets,
                    w.lambda2,
                    params.aggregation,
                )?
            } else {
                f64::NEG_INFINITY
            };
            combined_candidate_score(hyp.logprob, progress, 0.0, h, w)
        }
    };
    Ok(score)
}

/// Best first: score, then log-probability, then lexicographic tokens.
fn rank(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.cand.hyp.logprob.total_cmp(&a.cand.hyp.logprob))
        .then_with(|| a.cand.hyp.tokens.cmp(&b.cand.hyp.tokens))
}

/// Picks the next beam. Constrained modes apply likelihood/satisfaction
/// pruning and, if enabled, round-robin selection across groups of
/// candidates that share the same irreversibly satisfied clauses.
pub fn select(mut scored: Vec<ScoredCandidate>, params: &DecodeParams) -> Vec<ScoredCandidate> {
    let k = params.beam_size;
    if !params.mode.is_constrained() {
        scored.sort_by(rank);
        scored.truncate(k);
        return scored;
    }

    let n = scored.len();
    let mut keep = vec![false; n];
    let take_alpha = ((params.alpha * n as f64).ceil() as usize).min(n);
    let take_beta = ((params.beta * n as f64).ceil() as usize).min(n);
    let mut by_lp: Vec<usize> = (0..n).collect();
    by_lp.sort_by(|&a, &b| {
        let (x, y) = (&scored[a].cand.hyp, &scored[b].cand.hyp);
        y.logprob
            .total_cmp(&x.logprob)
            .then_with(|| x.tokens.cmp(&y.tokens))
    });
    by_lp.iter().take(take_alpha).for_each(|&i| keep[i] = true);
    let mut by_sat: Vec<usize> = (0..n).collect();
    by_sat.sort_by(|&a, &b| {
        let (x, y) = (&scored[a].cand.hyp, &scored[b].cand.hyp);
        y.cstate
            .satisfied_clause_count()
            .cmp(&x.cstate.satisfied_clause_count())
            .then_with(|| y.logprob.total_cmp(&x.logprob))
            .then_with(|| x.tokens.cmp(&y.tokens))
    });
    by_sat.iter().take(take_beta).for_each(|&i| keep[i] = true);
    let survivors: Vec<ScoredCandidate> = scored
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect();

    if !params.grouping {
        let mut survivors = survivors;
        survivors.sort_by(rank);
        survivors.truncate(k);
        return survivors;
    }

    let mut groups: BTreeMap<_, Vec<ScoredCandidate>> = BTreeMap::new();
    for c in survivors {
        groups
            .entry(c.cand.hyp.cstate.group_key())
            .or_default()
            .push(c);
    }
    let mut groups: Vec<Vec<ScoredCandidate>> = groups
        .into_values()
        .map(|mut g| {
            g.sort_by(rank);
            g
        })
        .collect();
    groups.sort_by(|a, b| rank(&a[0], &b[0]));

    let mut queues: Vec<std::vec::IntoIter<ScoredCandidate>> =
        groups.into_iter().map(Vec::into_iter).collect();
    let mut beam = Vec::with_capacity(k);
    while beam.len() < k {
        let mut took = false;
        for q in queues.iter_mut() {
            if beam.len() == k {
                break;
            }
            if let Some(c) = q.next() {
                beam.push(c);
                took = true;
            }
        }
        if !took {
            break;
        }
    }
    beam
}

/// A finished sequence with its objective and clause report.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedHypothesis {
    pub tokens: Vec<TokenId>,
    pub context_len: usize,
    pub logprob: f64,
    /// Log-probability minus the penalty for unsatisfied clauses.
    pub objective: f64,
    pub satisfied: usize,
    pub unsatisfied: usize,
    pub clause_statuses: Vec<ClauseStatus>,
}

impl RankedHypothesis {
    fn from_hyp(h: &Hypothesis, lambda_prime: f64) -> Self {
        Self {
            tokens: h.tokens.clone(),
            context_len: h.context_len,
            logprob: h.logprob,
            objective: h.objective(lambda_prime),
            satisfied: h.cstate.satisfied_clause_count(),
            unsatisfied: h.cstate.unsatisfied_clause_count(),
            clause_statuses: h.cstate.statuses().to_vec(),
        }
    }

    /// Generated tokens, eos included.
    pub fn generated(&self) -> &[TokenId] {
        &self.tokens[self.context_len..]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodeResult {
    /// Finished hypotheses, best objective first.
    pub hypotheses: Vec<RankedHypothesis>,
}

impl DecodeResult {
    pub fn best(&self) -> Option<&RankedHypothesis> {
        self.hypotheses.first()
    }
}

fn context_for<M: StepScorer + ?Sized>(model: &M, prompt: &[TokenId]) -> Result<Vec<TokenId>> {
    let mut ctx = vec![model.vocab().bos()];
    ctx.extend_from_slice(prompt);
    model.vocab().check_prefix(&ctx)?;
    Ok(ctx)
}

/// Runs expand, score and select until every beam entry has emitted eos.
/// Returns every hypothesis that finished while in the beam, ranked by
/// objective (ties: log-probability, then tokens).
pub fn decode<M: StepScorer + ?Sized>(
    model: &M,
    cs: &ConstraintSet,
    prompt: &[TokenId],
    params: &DecodeParams,
) -> Result<DecodeResult> {
    params.validate()?;
    let mut beam = vec![Hypothesis::root(context_for(model, prompt)?, cs)];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for step in 1..=params.max_len {
        let Expansion {
            candidates,
            best_violating,
        } = expand(&beam, model, cs, params)?;
        if candidates.is_empty() {
            return Err(Error::EmptyBeam {
                best_violating: best_violating.map(Box::new),
            });
        }
        let scored = score_candidates(candidates, model, cs, params, step)?;
        let chosen = select(scored, params);
        beam = Vec::with_capacity(chosen.len());
        for c in chosen {
            if c.cand.newly_finished() {
                finished.push(c.cand.hyp.clone());
            }
            beam.push(c.cand.hyp);
        }
        if beam.iter().all(|h| h.finished) {
            break;
        }
    }
    Ok(rank_finished(&finished, params.weights.lambda_prime))
}

fn rank_finished(finished: &[Hypothesis], lambda_prime: f64) -> DecodeResult {
    let mut hypotheses: Vec<RankedHypothesis> = finished
        .iter()
        .map(|h| RankedHypothesis::from_hyp(h, lambda_prime))
        .collect();
    hypotheses.sort_by(|a, b| {
        b.objective
            .total_cmp(&a.objective)
            .then_with(|| b.logprob.total_cmp(&a.logprob))
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    DecodeResult { hypotheses }
}

/// The renormalized sampling distribution for top-k sampling after
/// `prefix`: the `topk` most probable tokens, each scored by its
/// log-probability plus the weighted lookahead likelihood, pushed through a
/// softmax. `budget` is the number of tokens still allowed, eos included.
pub fn adjusted_topk_distribution<M: StepScorer + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    params: &DecodeParams,
    budget: usize,
    step_seed: u64,
) -> Result<Vec<(TokenId, f64)>> {
    if params.topk == 0 {
        return Err(Error::InvalidParams("topk must be >= 1".into()));
    }
    let vocab = model.vocab();
    let eos = vocab.eos();
    let dist = model.step(prefix)?;
    let support: Vec<TokenId> = if budget <= 1 {
        vec![eos]
    } else {
        let mut toks: Vec<TokenId> = vocab
            .emittable()
            .filter(|&t| dist.logprob(t) > f64::NEG_INFINITY)
            .collect();
        toks.sort_by(|&a, &b| dist.logprob(b).total_cmp(&dist.logprob(a)).then(a.cmp(&b)));
        toks.truncate(params.topk);
        toks
    };
    let cfg = LookaheadConfig {
        seed: step_seed,
        ..params.lookahead.clone()
    };
    let lambda = params.weights.lambda;
    let scores = support
        .par_iter()
        .enumerate()
        .map(|(i, &tok)| {
            let lp = dist.logprob(tok);
            if lambda == 0.0 || tok == eos {
                return Ok(lp);
            }
            let mut seq = prefix.to_vec();
            seq.push(tok);
            let conts = lookahead::generate(model, &seq, &cfg, Some(budget - 1), i as u64)?;
            Ok(lp + unconstrained_h(&conts, lambda, params.aggregation))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = if max == f64::NEG_INFINITY {
        support.iter().map(|&t| dist.logprob(t).exp()).collect()
    } else {
        scores.iter().map(|s| (s - max).exp()).collect()
    };
    let total: f64 = weights.iter().sum();
    Ok(support
        .into_iter()
        .zip(weights)
        .map(|(t, w)| (t, w / total))
        .collect())
}

/// Ancestral sampling from [`adjusted_topk_distribution`] at every step.
pub fn topk_sample_decode<M: StepScorer + ?Sized>(
    model: &M,
    prompt: &[TokenId],
    params: &DecodeParams,
) -> Result<DecodeResult> {
    params.validate()?;
    if params.topk == 0 {
        return Err(Error::InvalidParams("topk must be >= 1".into()));
    }
    let seed = params
        .seed
        .ok_or_else(|| Error::InvalidParams("seed is required for top-k sampling".into()))?;
    let cs = ConstraintSet::empty();
    let mut hyp = Hypothesis::root(context_for(model, prompt)?, &cs);
    let eos = model.vocab().eos();
    for step in 1..=params.max_len {
        let budget = params.max_len - hyp.generated().len();
        let step_seed = derive_seed(seed, &[step as u64]);
        let adjusted = adjusted_topk_distribution(model, &hyp.tokens, params, budget, step_seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(step_seed, &[u64::MAX]));
        let weights: Vec<f64> = adjusted.iter().map(|(_, p)| *p).collect();
        let tok = adjusted[sample_index(&weights, &mut rng) as usize].0;
        hyp.logprob += model.step(&hyp.tokens)?.logprob(tok);
        hyp.tokens.push(tok);
        if tok == eos {
            hyp.finished = true;
            break;
        }
    }
    Ok(rank_finished(&[hyp], params.weights.lambda_prime))
}
