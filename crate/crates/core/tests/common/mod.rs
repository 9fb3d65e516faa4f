#![allow(dead_code)]

use lookahead_core::fixtures::{random_table, RandomTableSpec};
use lookahead_core::{Clause, ConstraintSet, Literal, StepScorer, TableModel, TokenId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn model(seed: u64, words: usize, order: usize) -> TableModel {
    let spec = RandomTableSpec {
        words,
        order,
        ..RandomTableSpec::default()
    };
    random_table(&spec, &mut rng(seed))
}

pub fn random_prefix<R: Rng>(rng: &mut R, model: &TableModel, max_extra: usize) -> Vec<TokenId> {
    let vocab = model.vocab();
    let words: Vec<TokenId> = vocab.emittable().filter(|&t| t != vocab.eos()).collect();
    let n = rng.random_range(0..=max_extra);
    let mut p = vec![vocab.bos()];
    p.extend((0..n).map(|_| words[rng.random_range(0..words.len())]));
    p
}

/// Random positive-only clauses with phrases of length 1..=max_phrase.
pub fn positive_constraints<R: Rng>(
    rng: &mut R,
    model: &TableModel,
    clauses: usize,
    max_phrase: usize,
) -> ConstraintSet {
    let vocab = model.vocab();
    let words: Vec<TokenId> = vocab.emittable().filter(|&t| t != vocab.eos()).collect();
    let cl = (0..clauses)
        .map(|_| {
            let n_lits = rng.random_range(1..=2);
            Clause::new(
                (0..n_lits)
                    .map(|_| {
                        let len = rng.random_range(1..=max_phrase);
                        Literal::positive(
                            (0..len)
                                .map(|_| words[rng.random_range(0..words.len())])
                                .collect(),
                        )
                    })
                    .collect(),
            )
        })
        .collect();
    ConstraintSet::new(cl, vocab).unwrap()
}

/// Every eos-terminated continuation of `prefix` with at most `budget`
/// tokens (eos forced at the last slot), with its log-probability.
pub fn completions<M: StepScorer>(
    model: &M,
    prefix: &[TokenId],
    budget: usize,
) -> Vec<(Vec<TokenId>, f64)> {
    let mut out = Vec::new();
    let mut seq = prefix.to_vec();
    walk(model, &mut seq, prefix.len(), budget, 0.0, &mut out);
    out
}

fn walk<M: StepScorer>(
    model: &M,
    seq: &mut Vec<TokenId>,
    base: usize,
    budget: usize,
    lp: f64,
    out: &mut Vec<(Vec<TokenId>, f64)>,
) {
    let eos = model.vocab().eos();
    let used = seq.len() - base;
    if used > 0 && seq.last() == Some(&eos) {
        out.push((seq[base..].to_vec(), lp));
        return;
    }
    if used == budget {
        return;
    }
    let dist = model.step(seq).unwrap();
    let choices: Vec<TokenId> = if used + 1 == budget {
        vec![eos]
    } else {
        model.vocab().emittable().collect()
    };
    for t in choices {
        let l = dist.logprob(t);
        if l == f64::NEG_INFINITY {
            continue;
        }
        seq.push(t);
        walk(model, seq, base, budget, lp + l, out);
        seq.pop();
    }
}
