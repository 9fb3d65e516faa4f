//! Continuation generators used to look past a candidate prefix.
//!
//! Every generator stops at eos and, when a length budget is given, forces
//! eos on the last position the budget allows, so a continuation never
//! extends past the end of a complete sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{StepDistribution, StepScorer, TokenId, TokenMixture};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    Soft,
    Beam,
    Sampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LookaheadConfig {
    pub strategy: Strategy,
    /// Number of tokens to look ahead.
    pub horizon: usize,
    /// Number of sampled rollouts (sampling only).
    pub rollouts: usize,
    /// Width of the lookahead beam (beam only).
    pub beam_width: usize,
    /// Softmax temperature (soft only); 0 means a one-hot argmax.
    pub temperature: f64,
    pub seed: u64,
}

impl Default for LookaheadConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Greedy,
            horizon: 0,
            rollouts: 1,
            beam_width: 1,
            temperature: 0.0,
            seed: 0,
        }
    }
}

impl LookaheadConfig {
    pub fn greedy(horizon: usize) -> Self {
        Self {
            horizon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rollouts == 0 {
            return Err(Error::InvalidParams(
                "lookahead.rollouts must be >= 1".into(),
            ));
        }
        if self.beam_width == 0 {
            return Err(Error::InvalidParams(
                "lookahead.beam_width must be >= 1".into(),
            ));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::InvalidParams(
                "lookahead.temperature must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// A lookahead continuation with its per-token log-probabilities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Continuation {
    pub tokens: Vec<TokenId>,
    pub step_logprobs: Vec<f64>,
    /// Temperature-relaxed input at each position (soft strategy only).
    pub soft_steps: Option<Vec<TokenMixture>>,
}

impl Continuation {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn logprob(&self) -> f64 {
        self.step_logprobs.iter().sum()
    }
}

/// How far a continuation may go: `horizon` tokens, further capped by
/// `budget` tokens left in the sequence (eos included), if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub horizon: usize,
    pub budget: Option<usize>,
}

impl Span {
    pub fn new(horizon: usize, budget: Option<usize>) -> Self {
        Self { horizon, budget }
    }

    pub fn unbounded(horizon: usize) -> Self {
        Self {
            horizon,
            budget: None,
        }
    }

    fn steps(&self) -> usize {
        self.budget.map_or(self.horizon, |b| b.min(self.horizon))
    }

    /// Whether position `i` (0-based) of the continuation must be eos.
    fn forces_eos(&self, i: usize) -> bool {
        self.budget == Some(i + 1)
    }
}

fn ends_in_eos(prefix: &[TokenId], eos: TokenId) -> bool {
    prefix.len() > 1 && prefix.last() == Some(&eos)
}

/// Runs the configured strategy from `prefix`. `stream` selects the
/// sampling RNG stream, so callers expanding many candidates can give each
/// one its own reproducible stream.
pub fn generate<M: StepScorer + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    cfg: &LookaheadConfig,
    budget: Option<usize>,
    stream: u64,
) -> Result<Vec<Continuation>> {
    let span = Span::new(cfg.horizon, budget);
    match cfg.strategy {
        Strategy::Greedy => greedy_lookahead(model, prefix, span),
        Strategy::Soft => soft_lookahead(model, prefix, span, cfg.temperature),
        Strategy::Beam => beam_lookahead(model, prefix, span, cfg.beam_width),
        Strategy::Sampling => sampling_lookahead(
            model,
            prefix,
            span,
            cfg.rollouts,
            derive_seed(cfg.seed, &[stream]),
        ),
    }
}

pub fn greedy_lookahead<M: StepScorer + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    span: Span,
) -> Result<Vec<Continuation>> {
    let eos = model.vocab().eos();
    let mut seq = prefix.to_vec();
    let mut cont = Continuation::default();
    if !ends_in_eos(prefix, eos) {
        for i in 0..span.steps() {
            let dist = model.step(&seq)?;
            let tok = if span.forces_eos(i) {
                eos
            } else {
                dist.argmax()
            };
            cont.tokens.push(tok);
            cont.step_logprobs.push(dist.logprob(tok));
            seq.push(tok);
            if tok == eos {
                break;
            }
        }
    }
    Ok(vec![cont])
}

/// Temperature softmax of a log-distribution. `temperature == 0` gives the
/// one-hot argmax.
pub fn tempered(dist: &StepDistribution, temperature: f64) -> TokenMixture {
    let lps = dist.logprobs();
    if temperature == 0.0 {
        return TokenMixture::one_hot(lps.len(), dist.argmax());
    }
    let max = lps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lps
        .iter()
        .map(|lp| ((lp - max) / temperature).exp())
        .collect();
    let total: f64 = w.iter().sum();
    TokenMixture::new(w.into_iter().map(|x| x / total).collect())
        .expect("softmax output is a distribution")
}

/// Feeds the temperature-relaxed distribution forward as a mixture input.
/// The reported token is the mixture argmax and its score is the log of its
/// mixture weight.
pub fn soft_lookahead<M: StepScorer + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    span: Span,
    temperature: f64,
) -> Result<Vec<Continuation>> {
    if temperature > 0.0 && !model.supports_soft_step() {
        return Err(Error::UnsupportedCapability("soft_step"));
    }
    let vocab = model.vocab();
    let eos = vocab.eos();
    let mut cont = Continuation {
        soft_steps: Some(Vec::new()),
        ..Continuation::default()
    };
    let mut mixtures: Vec<TokenMixture> = Vec::new();
    let mut hard = prefix.to_vec();
    if !ends_in_eos(prefix, eos) {
        for i in 0..span.steps() {
            let dist = if temperature == 0.0 {
                model.step(&hard)?
            } else {
                model.soft_step(prefix, &mixtures)?
            };
            let mix = if span.forces_eos(i) {
                TokenMixture::one_hot(vocab.len(), eos)
            } else {
                tempered(&dist, temperature)
            };
            let tok = mix.argmax();
            cont.tokens.push(tok);
            cont.step_logprobs.push(mix.weights()[tok as usize].ln());
            hard.push(tok);
            mixtures.push(mix);
            if tok == eos {
                break;
            }
        }
    }
    cont.soft_steps = Some(mixtures);
    Ok(vec![cont])
}

/// Beam search of width `width` over the span. Results are ranked by total
/// log-probability, ties broken by lexicographic token ids.
pub fn beam_lookahead<M: StepScorer + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    span: Span,
    width: usize,
) -> Result<Vec<Continuation>> {
    let eos = model.vocab().eos();
    if ends_in_eos(prefix, eos) || span.steps() == 0 {
        return Ok(vec![Continuation::default()]);
    }
    struct Item {
        cont: Continuation,
        total: f64,
        done: bool,
    }
    let mut beam = vec![Item {
        cont: Continuation::default(),
        total: 0.0,
        done: false,
    }];
    let mut seq = prefix.to_vec();
    for i in 0..span.steps() {
        if beam.iter().all(|it| it.done) {
            break;
        }
        let mut next = Vec::new();
        for item in beam {
            if item.done {
                next.push(item);
                continue;
            }
            seq.truncate(prefix.len());
            seq.extend_from_slice(&item.cont.tokens);
            let dist = model.step(&seq)?;
            let choices: Vec<TokenId> = if span.forces_eos(i) {
                vec![eos]
            } else {
                model.vocab().emittable().collect()
            };
            for tok in choices {
                let lp = dist.logprob(tok);
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let mut cont = item.cont.clone();
                cont.tokens.push(tok);
                cont.step_logprobs.push(lp);
                next.push(Item {
                    cont,
                    total: item.total + lp,
                    done: tok == eos,
                });
            }
        }
        next.sort_by(|a, b| {
            b.total
                .total_cmp(&a.total)
                .then_with(|| a.cont.tokens.cmp(&b.cont.tokens))
        });
        next.truncate(width);
        beam = next;
    }
    Ok(beam.into_iter().map(|it| it.cont).collect())
}

/// `rollouts` independent ancestral samples. Duplicates are kept.
pub fn sampling_lookahead<M: StepScorer + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    span: Span,
    rollouts: usize,
    seed: u64,
) -> Result<Vec<Continuation>> {
    let eos = model.vocab().eos();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(rollouts);
    for _ in 0..rollouts {
        let mut seq = prefix.to_vec();
        let mut cont = Continuation::default();
        if !ends_in_eos(prefix, eos) {
            for i in 0..span.steps() {
                let dist = model.step(&seq)?;
                let tok = if span.forces_eos(i) {
                    eos
                } else {
                    sample_index(&dist.probs(), &mut rng)
                };
                cont.tokens.push(tok);
                cont.step_logprobs.push(dist.logprob(tok));
                seq.push(tok);
                if tok == eos {
                    break;
                }
            }
        }
        out.push(cont);
    }
    Ok(out)
}

/// Inverse-CDF draw from unnormalized non-negative weights. Zero-weight
/// entries are never returned.
pub(crate) fn sample_index<R: Rng>(weights: &[f64], rng: &mut R) -> TokenId {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i as TokenId;
        }
    }
    last as TokenId
}

/// Mixes a base seed with stream coordinates (splitmix64 finalizer per word).
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    coords.iter().fold(mix(seed), |acc, &c| mix(acc ^ mix(c)))
}
