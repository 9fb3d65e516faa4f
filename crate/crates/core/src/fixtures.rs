//! Small hand-built and randomly generated table models for tests, demos and
//! experiments.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{StepDistribution, TableModel, TokenId, Vocabulary};

/// Context-free table over `A`, `B`, eos with probabilities 0.6, 0.3, 0.1.
pub fn abc_table() -> TableModel {
    let vocab = Vocabulary::from_words(["A", "B"]).expect("valid vocabulary");
    let dist = StepDistribution::from_probs(&vocab, &[0.0, 0.6, 0.3, 0.1], 1e-12)
        .expect("valid distribution");
    TableModel::context_free(vocab, dist).expect("valid table")
}

/// Context-free uniform table over `words` plus eos.
pub fn uniform_table(words: &[&str]) -> TableModel {
    let vocab = Vocabulary::from_words(words.iter().copied()).expect("valid vocabulary");
    let dist = StepDistribution::uniform(&vocab);
    TableModel::context_free(vocab, dist).expect("valid table")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomTableSpec {
    /// Ordinary words; the vocabulary adds bos and eos.
    pub words: usize,
    pub order: usize,
    /// Standard deviation of the Gaussian logits. Larger is peakier.
    pub sharpness: f64,
    /// Added to the eos logit. Negative values make sequences longer.
    pub eos_bias: f64,
}

impl Default for RandomTableSpec {
    fn default() -> Self {
        Self {
            words: 4,
            order: 1,
            sharpness: 1.5,
            eos_bias: -1.0,
        }
    }
}

fn random_row<R: Rng>(vocab: &Vocabulary, spec: &RandomTableSpec, rng: &mut R) -> StepDistribution {
    let normal = Normal::new(0.0, spec.sharpness.max(1e-12)).expect("finite sigma");
    let logits: Vec<f64> = (0..vocab.len() as TokenId)
        .map(|t| {
            if t == vocab.bos() {
                f64::NEG_INFINITY
            } else if t == vocab.eos() {
                normal.sample(rng) + spec.eos_bias
            } else {
                normal.sample(rng)
            }
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + total.ln();
    let logprobs: Vec<f64> = logits.iter().map(|l| l - lse).collect();
    StepDistribution::from_logprobs(vocab, logprobs).expect("softmax is normalized")
}

/// A table with a random row for every context over bos and the emittable
/// tokens. Words are named `w0`, `w1`, ...
pub fn random_table<R: Rng>(spec: &RandomTableSpec, rng: &mut R) -> TableModel {
    let vocab =
        Vocabulary::from_words((0..spec.words).map(|i| format!("w{i}"))).expect("valid vocabulary");
    let mut rows = HashMap::new();
    let alphabet: Vec<TokenId> = (0..vocab.len() as TokenId).collect();
    let mut ctx = vec![0usize; spec.order];
    if spec.order > 0 {
        loop {
            let context: Vec<TokenId> = ctx.iter().map(|&i| alphabet[i]).collect();
            rows.insert(context, random_row(&vocab, spec, rng));
            let mut i = spec.order;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                ctx[i] += 1;
                if ctx[i] < alphabet.len() {
                    break;
                }
                ctx[i] = 0;
                if i == 0 {
                    i = usize::MAX;
                    break;
                }
            }
            if i == usize::MAX {
                break;
            }
        }
    }
    let default = random_row(&vocab, spec, rng);
    TableModel::new(vocab, spec.order, rows, default).expect("valid random table")
}
