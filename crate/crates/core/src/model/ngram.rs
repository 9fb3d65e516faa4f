use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    context_window, mixed_context_step, StepDistribution, StepScorer, TokenId, TokenMixture,
    Vocabulary, BOS_TOKEN, EOS_TOKEN,
};
use crate::error::{Error, Result};

/// Add-k smoothed n-gram model. `order` is the context length, so an
/// order-1 model conditions on the previous token.
///
/// `p(w | ctx) = (count(ctx, w) + k) / (total(ctx) + k * |emittable|)` where
/// the emittable tokens are the vocabulary minus bos.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    vocab: Vocabulary,
    order: usize,
    k: f64,
    counts: BTreeMap<Vec<TokenId>, BTreeMap<TokenId, u64>>,
    totals: BTreeMap<Vec<TokenId>, u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NGramFile {
    order: usize,
    k: f64,
    vocab: Vec<String>,
    counts: Vec<CountEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CountEntry {
    context: Vec<String>,
    token: String,
    count: u64,
}

impl NGramModel {
    pub fn new(vocab: Vocabulary, order: usize, k: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParams("n-gram order must be >= 1".into()));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidParams(format!(
                "smoothing k must be > 0, got {k}"
            )));
        }
        Ok(Self {
            vocab,
            order,
            k,
            counts: BTreeMap::new(),
            totals: BTreeMap::new(),
        })
    }

    /// Trains on whitespace-tokenized lines. Blank lines are skipped. The
    /// vocabulary is bos, then words in order of first appearance, then eos.
    pub fn train<S: AsRef<str>>(lines: &[S], order: usize, k: f64) -> Result<Self> {
        let sentences: Vec<Vec<&str>> = lines
            .iter()
            .map(|l| l.as_ref().split_whitespace().collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect();
        let mut words: Vec<&str> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for w in sentences.iter().flatten() {
            if *w == BOS_TOKEN || *w == EOS_TOKEN {
                return Err(Error::InvalidInput(format!(
                    "corpus contains reserved token {w}"
                )));
            }
            if seen.insert(*w) {
                words.push(w);
            }
        }
        let mut model = Self::new(Vocabulary::from_words(words)?, order, k)?;
        let (bos, eos) = (model.vocab.bos(), model.vocab.eos());
        for s in &sentences {
            let mut seq = vec![bos];
            seq.extend(model.vocab.encode(s)?);
            seq.push(eos);
            for i in 1..seq.len() {
                let ctx = context_window(&seq[..i], order, bos);
                model.add_count(ctx, seq[i], 1);
            }
        }
        Ok(model)
    }

    pub fn train_file(path: impl AsRef<Path>, order: usize, k: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let lines: Vec<&str> = text.lines().collect();
        Self::train(&lines, order, k)
    }

    fn add_count(&mut self, ctx: Vec<TokenId>, token: TokenId, n: u64) {
        *self.totals.entry(ctx.clone()).or_default() += n;
        *self
            .counts
            .entry(ctx)
            .or_default()
            .entry(token)
            .or_default() += n;
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn count(&self, ctx: &[TokenId], token: TokenId) -> u64 {
        self.counts
            .get(ctx)
            .and_then(|row| row.get(&token))
            .copied()
            .unwrap_or(0)
    }

    pub fn context_total(&self, ctx: &[TokenId]) -> u64 {
        self.totals.get(ctx).copied().unwrap_or(0)
    }

    fn distribution(&self, ctx: &[TokenId]) -> StepDistribution {
        let v = self.vocab.len();
        let denom = self.context_total(ctx) as f64 + self.k * (v - 1) as f64;
        let row = self.counts.get(ctx);
        let logprobs = (0..v as TokenId)
            .map(|tok| {
                if tok == self.vocab.bos() {
                    return f64::NEG_INFINITY;
                }
                let c = row.and_then(|r| r.get(&tok)).copied().unwrap_or(0);
                ((c as f64 + self.k) / denom).ln()
            })
            .collect();
        StepDistribution::from_raw(logprobs)
    }

    pub fn to_json_string(&self) -> String {
        let counts = self
            .counts
            .iter()
            .flat_map(|(ctx, row)| {
                row.iter().map(move |(&tok, &count)| CountEntry {
                    context: self.vocab.decode(ctx),
                    token: self.vocab.decode(&[tok]).remove(0),
                    count,
                })
            })
            .collect();
        let file = NGramFile {
            order: self.order,
            k: self.k,
            vocab: self.vocab.tokens().to_vec(),
            counts,
        };
        serde_json::to_string_pretty(&file).expect("n-gram model serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: NGramFile = serde_json::from_str(text).map_err(Error::from_json)?;
        let vocab = Vocabulary::new(file.vocab.iter().cloned())
            .map_err(|e| Error::parse("vocab", e.to_string()))?;
        let mut model = Self::new(vocab, file.order, file.k)
            .map_err(|e| Error::parse("order/k", e.to_string()))?;
        for (i, entry) in file.counts.iter().enumerate() {
            let at = format!("counts[{i}]");
            if entry.context.len() != file.order {
                return Err(Error::parse(
                    at,
                    format!(
                        "context has {} tokens, order is {}",
                        entry.context.len(),
                        file.order
                    ),
                ));
            }
            let ctx = model
                .vocab
                .encode(&entry.context)
                .map_err(|e| Error::parse(at.clone(), e.to_string()))?;
            let tok = model
                .vocab
                .encode(std::slice::from_ref(&entry.token))
                .map_err(|e| Error::parse(at.clone(), e.to_string()))?[0];
            if tok == model.vocab.bos() {
                return Err(Error::parse(at, "<bos> cannot be a predicted token"));
            }
            if model.count(&ctx, tok) != 0 {
                return Err(Error::parse(at, "duplicate (context, token) entry"));
            }
            model.add_count(ctx, tok, entry.count);
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

impl StepScorer for NGramModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn step(&self, prefix: &[TokenId]) -> Result<StepDistribution> {
        self.vocab.check_prefix(prefix)?;
        Ok(self.distribution(&context_window(prefix, self.order, self.vocab.bos())))
    }

    fn supports_soft_step(&self) -> bool {
        true
    }

    fn soft_step(&self, hard: &[TokenId], soft: &[TokenMixture]) -> Result<StepDistribution> {
        if soft.is_empty() {
            return self.step(hard);
        }
        mixed_context_step(&self.vocab, self.order, hard, soft, |ctx| {
            self.distribution(ctx)
        })
    }
}
