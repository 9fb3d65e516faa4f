//! Small independent re-implementations used as references.

use lookahead_core::{StepScorer, TokenId};

/// Textbook beam search: expand every open entry with every emittable
/// token (only eos on the last slot), keep finished entries in the pool of
/// candidates, keep the `k` most likely, stop once all kept entries ended.
/// Returns the most likely finished sequence among those that were kept.
pub fn beam_search<M: StepScorer>(
    model: &M,
    prompt: &[TokenId],
    k: usize,
    max_len: usize,
) -> Vec<TokenId> {
    let vocab = model.vocab();
    let eos = vocab.eos();
    let mut start = vec![vocab.bos()];
    start.extend_from_slice(prompt);
    let base = start.len();
    // (sequence, logprob, done)
    let mut beam: Vec<(Vec<TokenId>, f64, bool)> = vec![(start, 0.0, false)];
    let mut done: Vec<(Vec<TokenId>, f64)> = Vec::new();
    for _ in 0..max_len {
        let mut pool = Vec::new();
        for (seq, lp, fin) in &beam {
            if *fin {
                pool.push((seq.clone(), *lp, true));
                continue;
            }
            let dist = model.step(seq).unwrap();
            let last = seq.len() - base + 1 == max_len;
            for tok in 1..vocab.len() as TokenId {
                if last && tok != eos {
                    continue;
                }
                let l = dist.logprob(tok);
                if l == f64::NEG_INFINITY {
                    continue;
                }
                let mut s = seq.clone();
                s.push(tok);
                pool.push((s, lp + l, tok == eos));
            }
        }
        pool.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        pool.truncate(k);
        for (seq, lp, fin) in &pool {
            if *fin && !done.iter().any(|(s, _)| s == seq) {
                done.push((seq.clone(), *lp));
            }
        }
        beam = pool;
        if beam.iter().all(|e| e.2) {
            break;
        }
    }
    done.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    done.into_iter().next().map(|(s, _)| s).unwrap_or_default()
}

pub fn contains(seq: &[TokenId], phrase: &[TokenId]) -> bool {
    seq.windows(phrase.len()).any(|w| w == phrase)
}

/// Length of the longest proper prefix of `phrase` that ends `seq`.
pub fn frontier(seq: &[TokenId], phrase: &[TokenId]) -> u32 {
    (0..phrase.len())
        .rev()
        .find(|&k| seq.ends_with(&phrase[..k]))
        .unwrap_or(0) as u32
}
