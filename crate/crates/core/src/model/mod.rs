//! The step-scorer contract consumed by every decoder, plus the two toy
//! models (conditional tables and add-k n-grams) used to exercise it.
//!
//! All probabilities are natural-log. A probability of zero is `-inf`, which
//! propagates through sums without producing NaN.

mod ngram;
mod table;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ngram::NGramModel;
pub use table::TableModel;

pub type TokenId = u32;

pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";

/// Largest vocabulary the toy models accept.
pub const MAX_VOCAB: usize = 1 << 16;

/// Tolerance for a log-distribution to count as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Ordered token strings with a dense id bijection and the two special ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
    bos: TokenId,
    eos: TokenId,
}

impl Vocabulary {
    /// Builds a vocabulary from a full token list, which must contain
    /// [`BOS_TOKEN`] and [`EOS_TOKEN`] exactly once each.
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.len() > MAX_VOCAB {
            return Err(Error::InvalidInput(format!(
                "vocabulary of {} tokens exceeds the cap of {MAX_VOCAB}",
                tokens.len()
            )));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "empty token string at index {i}"
                )));
            }
            if ids.insert(tok.clone(), i as TokenId).is_some() {
                return Err(Error::InvalidInput(format!("duplicate token {tok:?}")));
            }
        }
        let bos = *ids
            .get(BOS_TOKEN)
            .ok_or_else(|| Error::InvalidInput(format!("vocabulary lacks {BOS_TOKEN}")))?;
        let eos = *ids
            .get(EOS_TOKEN)
            .ok_or_else(|| Error::InvalidInput(format!("vocabulary lacks {EOS_TOKEN}")))?;
        Ok(Self {
            tokens,
            ids,
            bos,
            eos,
        })
    }

    /// `<bos>`, then `words` in order, then `<eos>`.
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all = vec![BOS_TOKEN.to_string()];
        all.extend(words.into_iter().map(Into::into));
        all.push(EOS_TOKEN.to_string());
        Self::new(all)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Every id the model may emit, i.e. everything except bos, ascending.
    pub fn emittable(&self) -> impl Iterator<Item = TokenId> + '_ {
        let bos = self.bos;
        (0..self.tokens.len() as TokenId).filter(move |&id| id != bos)
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<TokenId>> {
        words
            .iter()
            .map(|w| {
                self.id(w.as_ref())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown token {:?}", w.as_ref())))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or("<unk>").to_string())
            .collect()
    }

    pub(crate) fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= self.tokens.len()) {
            Some(id) => Err(Error::InvalidInput(format!(
                "token id {id} out of range for vocabulary of {}",
                self.tokens.len()
            ))),
            None => Ok(()),
        }
    }

    pub(crate) fn check_prefix(&self, prefix: &[TokenId]) -> Result<()> {
        if prefix.first() != Some(&self.bos) {
            return Err(Error::InvalidInput("prefix must begin with <bos>".into()));
        }
        self.check_ids(prefix)
    }
}

/// Next-token log-probabilities over the whole vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    logprobs: Vec<f64>,
}

impl StepDistribution {
    /// Validates that `logprobs` is normalized and gives bos zero mass.
    pub fn from_logprobs(vocab: &Vocabulary, logprobs: Vec<f64>) -> Result<Self> {
        if logprobs.len() != vocab.len() {
            return Err(Error::InvalidInput(format!(
                "distribution has {} entries, vocabulary has {}",
                logprobs.len(),
                vocab.len()
            )));
        }
        if logprobs.iter().any(|lp| lp.is_nan() || *lp > 0.0) {
            return Err(Error::InvalidInput("log-probabilities must be <= 0".into()));
        }
        if logprobs[vocab.bos() as usize] != f64::NEG_INFINITY {
            return Err(Error::InvalidInput(
                "<bos> must have zero probability".into(),
            ));
        }
        let total: f64 = logprobs.iter().map(|lp| lp.exp()).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidInput(format!(
                "distribution sums to {total}, expected 1"
            )));
        }
        Ok(Self { logprobs })
    }

    /// Linear-space probabilities; renormalized after a `tol` check so the
    /// stored log-distribution meets [`NORMALIZATION_TOL`].
    pub fn from_probs(vocab: &Vocabulary, probs: &[f64], tol: f64) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInput(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        if probs.get(vocab.bos() as usize).copied().unwrap_or(0.0) != 0.0 {
            return Err(Error::InvalidInput(
                "<bos> must have zero probability".into(),
            ));
        }
        Self::from_logprobs(vocab, probs.iter().map(|p| (p / total).ln()).collect())
    }

    /// Uniform over every emittable token.
    pub fn uniform(vocab: &Vocabulary) -> Self {
        let lp = -((vocab.len() - 1) as f64).ln();
        let mut logprobs = vec![lp; vocab.len()];
        logprobs[vocab.bos() as usize] = f64::NEG_INFINITY;
        Self { logprobs }
    }

    pub(crate) fn from_raw(logprobs: Vec<f64>) -> Self {
        Self { logprobs }
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub fn logprob(&self, token: TokenId) -> f64 {
        self.logprobs[token as usize]
    }

    pub fn probs(&self) -> Vec<f64> {
        self.logprobs.iter().map(|lp| lp.exp()).collect()
    }

    pub fn len(&self) -> usize {
        self.logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logprobs.is_empty()
    }

    /// Highest-probability token; ties go to the lowest id.
    pub fn argmax(&self) -> TokenId {
        argmax(&self.logprobs)
    }
}

/// Index of the largest entry, lowest index on ties.
pub(crate) fn argmax(values: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best as TokenId
}

/// A probability vector over the vocabulary used as a relaxed input position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenMixture {
    weights: Vec<f64>,
}

impl TokenMixture {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "mixture weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidInput(format!(
                "mixture sums to {total}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn one_hot(len: usize, token: TokenId) -> Self {
        let mut weights = vec![0.0; len];
        weights[token as usize] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn argmax(&self) -> TokenId {
        argmax(&self.weights)
    }

    /// Tokens with non-zero weight, ascending by id.
    pub fn support(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| (i as TokenId, *w))
    }
}

/// An autoregressive model seen one step at a time.
///
/// Implementations are immutable after construction and may be queried from
/// several threads at once.
pub trait StepScorer: Send + Sync {
    fn vocab(&self) -> &Vocabulary;

    /// Next-token distribution after `prefix`, which must begin with bos.
    fn step(&self, prefix: &[TokenId]) -> Result<StepDistribution>;

    fn supports_soft_step(&self) -> bool {
        false
    }

    /// Next-token distribution after `hard_prefix` followed by mixture-valued
    /// positions. With all-one-hot mixtures this must equal [`Self::step`] on
    /// the flattened prefix bit for bit.
    fn soft_step(
        &self,
        _hard_prefix: &[TokenId],
        _soft_suffix: &[TokenMixture],
    ) -> Result<StepDistribution> {
        Err(Error::UnsupportedCapability("soft_step"))
    }
}

impl<M: StepScorer + ?Sized> StepScorer for &M {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }
    fn step(&self, prefix: &[TokenId]) -> Result<StepDistribution> {
        (**self).step(prefix)
    }
    fn supports_soft_step(&self) -> bool {
        (**self).supports_soft_step()
    }
    fn soft_step(&self, hard: &[TokenId], soft: &[TokenMixture]) -> Result<StepDistribution> {
        (**self).soft_step(hard, soft)
    }
}

impl<M: StepScorer + ?Sized> StepScorer for Box<M> {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }
    fn step(&self, prefix: &[TokenId]) -> Result<StepDistribution> {
        (**self).step(prefix)
    }
    fn supports_soft_step(&self) -> bool {
        (**self).supports_soft_step()
    }
    fn soft_step(&self, hard: &[TokenId], soft: &[TokenMixture]) -> Result<StepDistribution> {
        (**self).soft_step(hard, soft)
    }
}

/// Log-probability of `tokens[1..]` given `tokens[0] == bos`.
pub fn sequence_logprob<M: StepScorer + ?Sized>(model: &M, tokens: &[TokenId]) -> Result<f64> {
    model.vocab().check_prefix(tokens)?;
    conditional_logprob(model, &tokens[..1], &tokens[1..])
}

/// Log-probability of `continuation` force-fed after `context`.
pub fn conditional_logprob<M: StepScorer + ?Sized>(
    model: &M,
    context: &[TokenId],
    continuation: &[TokenId],
) -> Result<f64> {
    model.vocab().check_ids(continuation)?;
    let mut seq = context.to_vec();
    let mut total = 0.0;
    for &tok in continuation {
        let lp = model.step(&seq)?.logprob(tok);
        total += lp;
        if total == f64::NEG_INFINITY {
            return Ok(total);
        }
        seq.push(tok);
    }
    Ok(total)
}

/// The last `order` tokens of `prefix`, left-padded with bos.
pub(crate) fn context_window(prefix: &[TokenId], order: usize, bos: TokenId) -> Vec<TokenId> {
    let take = prefix.len().min(order);
    let mut ctx = vec![bos; order - take];
    ctx.extend_from_slice(&prefix[prefix.len() - take..]);
    ctx
}

/// Soft-step semantics shared by the count-based models.
///
/// The next-step distribution is the mixture-weighted expectation of the
/// model's distributions over every context completion consistent with the
/// mixture positions that fall inside the context window. For `order <= 2`
/// every mixture position in the window is enumerated; for longer contexts
/// only the final position keeps its mixture and earlier mixture positions
/// collapse to their argmax.
pub(crate) fn mixed_context_step<F>(
    vocab: &Vocabulary,
    order: usize,
    hard_prefix: &[TokenId],
    soft_suffix: &[TokenMixture],
    lookup: F,
) -> Result<StepDistribution>
where
    F: Fn(&[TokenId]) -> StepDistribution,
{
    vocab.check_prefix(hard_prefix)?;
    if let Some(m) = soft_suffix.iter().find(|m| m.weights.len() != vocab.len()) {
        return Err(Error::InvalidInput(format!(
            "mixture has {} weights, vocabulary has {}",
            m.weights.len(),
            vocab.len()
        )));
    }

    // Window slots: either a fixed token or a list of (token, weight) options.
    let total_len = hard_prefix.len() + soft_suffix.len();
    let start = total_len.saturating_sub(order);
    let mut slots: Vec<Vec<(TokenId, f64)>> =
        vec![vec![(vocab.bos(), 1.0)]; order.saturating_sub(total_len)];
    for pos in start..total_len {
        if pos < hard_prefix.len() {
            slots.push(vec![(hard_prefix[pos], 1.0)]);
        } else {
            let mix = &soft_suffix[pos - hard_prefix.len()];
            if order <= 2 || pos + 1 == total_len {
                slots.push(mix.support().collect());
            } else {
                slots.push(vec![(mix.argmax(), 1.0)]);
            }
        }
    }

    let combos: usize = slots.iter().map(Vec::len).product();
    if combos == 1 {
        let ctx: Vec<TokenId> = slots.iter().map(|s| s[0].0).collect();
        let only_weight: f64 = slots.iter().map(|s| s[0].1).product();
        if only_weight == 1.0 {
            return Ok(lookup(&ctx));
        }
    }

    let mut acc = vec![0.0; vocab.len()];
    let mut ctx = vec![0; slots.len()];
    let mut idx = vec![0usize; slots.len()];
    'outer: loop {
        let mut weight = 1.0;
        for (i, slot) in slots.iter().enumerate() {
            let (tok, w) = slot[idx[i]];
            ctx[i] = tok;
            weight *= w;
        }
        let dist = lookup(&ctx);
        for (a, lp) in acc.iter_mut().zip(dist.logprobs()) {
            *a += weight * lp.exp();
        }
        // odometer increment, last slot fastest
        for i in (0..slots.len()).rev() {
            idx[i] += 1;
            if idx[i] < slots[i].len() {
                continue 'outer;
            }
            idx[i] = 0;
        }
        break;
    }
    let total: f64 = acc.iter().sum();
    let logprobs = acc.iter().map(|p| (p / total).ln()).collect();
    Ok(StepDistribution::from_raw(logprobs))
}
