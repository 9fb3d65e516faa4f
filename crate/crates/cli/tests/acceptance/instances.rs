//! Random problem instances.

use lookahead_core::fixtures::{random_table, RandomTableSpec};
use lookahead_core::{Clause, ConstraintSet, Literal, StepScorer, TableModel, TokenId};
use rand::Rng;

pub fn table<R: Rng>(rng: &mut R, words: usize, order: usize) -> TableModel {
    let spec = RandomTableSpec {
        words,
        order,
        sharpness: rng.random_range(0.5..2.5),
        eos_bias: rng.random_range(-2.0..0.0),
    };
    random_table(&spec, rng)
}

pub fn words_of(model: &TableModel) -> Vec<TokenId> {
    let v = model.vocab();
    v.emittable().filter(|&t| t != v.eos()).collect()
}

pub fn phrase<R: Rng>(rng: &mut R, words: &[TokenId], max_len: usize) -> Vec<TokenId> {
    let n = rng.random_range(1..=max_len);
    (0..n)
        .map(|_| words[rng.random_range(0..words.len())])
        .collect()
}

pub fn prompt<R: Rng>(rng: &mut R, words: &[TokenId], max_len: usize) -> Vec<TokenId> {
    let n = rng.random_range(0..=max_len);
    (0..n)
        .map(|_| words[rng.random_range(0..words.len())])
        .collect()
}

/// Up to `max_clauses` clauses. Each has one or two positive literals and,
/// sometimes, a negative literal alongside them.
pub fn mixed_constraints<R: Rng>(
    rng: &mut R,
    model: &TableModel,
    max_clauses: usize,
) -> ConstraintSet {
    let words = words_of(model);
    let n = rng.random_range(0..=max_clauses);
    let clauses = (0..n)
        .map(|_| {
            let mut lits: Vec<Literal> = (0..rng.random_range(1..=2))
                .map(|_| Literal::positive(phrase(rng, &words, 2)))
                .collect();
            if rng.random_bool(0.3) {
                lits.push(Literal::negative(phrase(rng, &words, 2)));
            }
            Clause::new(lits)
        })
        .collect();
    ConstraintSet::new(clauses, model.vocab()).unwrap()
}

/// `n` clauses, each a single positive literal.
pub fn single_literal_constraints<R: Rng>(
    rng: &mut R,
    model: &TableModel,
    n: usize,
    max_phrase: usize,
) -> ConstraintSet {
    let words = words_of(model);
    let clauses = (0..n)
        .map(|_| Clause::new(vec![Literal::positive(phrase(rng, &words, max_phrase))]))
        .collect();
    ConstraintSet::new(clauses, model.vocab()).unwrap()
}
