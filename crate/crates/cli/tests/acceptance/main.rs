//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod instances;
mod reference;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lookahead_core::fixtures::abc_table;
use lookahead_core::lookahead::{
    beam_lookahead, greedy_lookahead, sampling_lookahead, soft_lookahead, Span,
};
use lookahead_core::search::{adjusted_topk_distribution, expand, score_candidates, Hypothesis};
use lookahead_core::{
    decode, exact_argmax, exact_q, topk_sample_decode, Clause, ConstraintSet, DecodeMode,
    DecodeParams, HeuristicWeights, Literal, LookaheadConfig, OracleBudget, Polarity, StepScorer,
    Strategy, TokenId, Vocabulary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn within(limit: Duration, start: Instant, detail: String) -> Outcome {
    let t = start.elapsed();
    if t > limit {
        Err(format!("{detail}; took {t:.2?}, limit {limit:?}"))
    } else {
        Ok(format!("{detail}; {t:.2?}"))
    }
}

fn beam_degeneracy() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    for case in 0..500 {
        let words = r.random_range(1..=8);
        let order = r.random_range(0..=2);
        let model = instances::table(&mut r, words, order);
        let prompt = instances::prompt(&mut r, &instances::words_of(&model), 3);
        let k = r.random_range(1..=5);
        let max_len = r.random_range(1..=12);
        let want = reference::beam_search(&model, &prompt, k, max_len);
        let cs = ConstraintSet::empty();
        for mode in [DecodeMode::Plain, DecodeMode::UnconstrainedAstar] {
            let params = DecodeParams {
                beam_size: k,
                max_len,
                mode,
                weights: HeuristicWeights::zero(),
                lookahead: LookaheadConfig::greedy(0),
                ..DecodeParams::default()
            };
            let got = decode(&model, &cs, &prompt, &params).map_err(|e| e.to_string())?;
            let got = &got.best().ok_or("no hypothesis")?.tokens;
            if *got != want {
                return Err(format!(
                    "case {case} ({mode:?}): {got:?} != reference {want:?}"
                ));
            }
        }
    }
    within(
        Duration::from_secs(10),
        start,
        "500 instances token-exact".into(),
    )
}

fn exhaustive_params(max_len: usize, mode: DecodeMode) -> DecodeParams {
    DecodeParams {
        beam_size: 1 << 20,
        max_len,
        mode,
        weights: HeuristicWeights {
            lambda: 1.0,
            lambda1: 0.1,
            lambda2: 0.5,
            lambda_prime: 10.0,
        },
        lookahead: LookaheadConfig {
            strategy: Strategy::Beam,
            horizon: max_len,
            beam_width: 1 << 20,
            ..LookaheadConfig::default()
        },
        alpha: 1.0,
        beta: 1.0,
        lookahead_fanout: None,
        ..DecodeParams::default()
    }
}

fn oracle_optimality() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let words = r.random_range(1..=3);
        let order = r.random_range(0..=2);
        let model = instances::table(&mut r, words, order);
        let cs = instances::mixed_constraints(&mut r, &model, 2);
        let prompt = instances::prompt(&mut r, &instances::words_of(&model), 2);
        let max_len = r.random_range(1..=6);
        let params = exhaustive_params(max_len, DecodeMode::NeurologicAstar);
        let got = decode(&model, &cs, &prompt, &params).map_err(|e| format!("case {case}: {e}"))?;
        let got = got.best().ok_or("no hypothesis")?.objective;
        let want = exact_argmax(&model, &cs, &prompt, 10.0, OracleBudget::new(max_len))
            .map_err(|e| e.to_string())?
            .objective;
        let gap = (got - want).abs();
        worst = worst.max(gap);
        if gap > 1e-9 {
            return Err(format!("case {case}: F = {got}, oracle = {want}"));
        }
    }
    within(
        Duration::from_secs(60),
        start,
        format!("100 instances, max |ΔF| = {worst:.1e}"),
    )
}

fn heuristic_convergence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for case in 0..50 {
        let words = r.random_range(1..=4);
        let order = r.random_range(0..=2);
        let model = instances::table(&mut r, words, order);
        let prompt = instances::prompt(&mut r, &instances::words_of(&model), 2);
        let max_len = r.random_range(1..=6);
        let cs = ConstraintSet::empty();
        let params = exhaustive_params(max_len, DecodeMode::UnconstrainedAstar);
        let mut ctx = vec![model.vocab().bos()];
        ctx.extend_from_slice(&prompt);
        let root = Hypothesis::root(ctx, &cs);
        let cands = expand(&[root], &model, &cs, &params)
            .map_err(|e| e.to_string())?
            .candidates;
        let scored = score_candidates(cands, &model, &cs, &params, 1).map_err(|e| e.to_string())?;
        for c in scored {
            let tok = c.cand.token.ok_or("unexpanded candidate")?;
            let q = exact_q(
                &model,
                &cs,
                &prompt,
                &[],
                tok,
                0.0,
                OracleBudget::new(max_len),
            )
            .map_err(|e| e.to_string())?;
            let gap = (c.score - q).abs();
            worst = worst.max(gap);
            checked += 1;
            if gap > 1e-9 {
                return Err(format!(
                    "case {case}, token {tok}: estimate {} vs exact {q}",
                    c.score
                ));
            }
        }
    }
    within(
        Duration::from_secs(60),
        start,
        format!("{checked} step-1 candidates, max gap {worst:.1e}"),
    )
}

struct SuiteRun {
    satisfaction: Vec<f64>,
    objective: Vec<f64>,
}

fn lift_suite(mode: DecodeMode, horizon: usize) -> Result<SuiteRun, String> {
    let mut r = rng(4);
    let mut run = SuiteRun {
        satisfaction: Vec::new(),
        objective: Vec::new(),
    };
    for case in 0..200 {
        let model = instances::table(&mut r, 6, 1);
        let cs = instances::single_literal_constraints(&mut r, &model, 2, 2);
        let params = DecodeParams {
            beam_size: 4,
            max_len: 10,
            mode,
            weights: HeuristicWeights {
                lambda2: 0.5,
                ..HeuristicWeights::default()
            },
            lookahead: LookaheadConfig::greedy(horizon),
            ..DecodeParams::default()
        };
        let res = decode(&model, &cs, &[], &params).map_err(|e| format!("case {case}: {e}"))?;
        let best = res.best().ok_or("no hypothesis")?;
        run.satisfaction
            .push(100.0 * best.satisfied as f64 / cs.len() as f64);
        run.objective.push(best.objective);
    }
    Ok(run)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// One-sided paired t-test p-value for the alternative `mean(a - b) < 0`.
fn paired_p_below(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return if m < 0.0 { 0.0 } else { 1.0 };
    }
    let t = m / (var / n).sqrt();
    StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t)
}

fn satisfaction_lift() -> Outcome {
    let start = Instant::now();
    let base = lift_suite(DecodeMode::Neurologic, 4)?;
    let astar = lift_suite(DecodeMode::NeurologicAstar, 4)?;
    let (sb, sa) = (mean(&base.satisfaction), mean(&astar.satisfaction));
    let (fb, fa) = (mean(&base.objective), mean(&astar.objective));
    let p = paired_p_below(&astar.objective, &base.objective);
    let detail = format!(
        "satisfaction {sa:.2}% vs {sb:.2}%, mean F {fa:.4} vs {fb:.4}, p(F lower) = {p:.3}"
    );
    if sa < sb {
        return Err(format!("{detail}: lookahead satisfies fewer clauses"));
    }
    if p < 0.05 {
        return Err(format!("{detail}: lookahead F significantly lower"));
    }
    within(Duration::from_secs(300), start, detail)
}

fn horizon_ablation() -> Outcome {
    let start = Instant::now();
    let at = |h| lift_suite(DecodeMode::NeurologicAstar, h).map(|r| mean(&r.objective));
    let f0 = at(0)?;
    let mut parts = vec![format!("ℓ=0: {f0:.4}")];
    let mut bad = Vec::new();
    for h in [1, 2, 4] {
        let f = at(h)?;
        parts.push(format!("ℓ={h}: {f:.4}"));
        if f < f0 {
            bad.push(h);
        }
    }
    let detail = parts.join(", ");
    if !bad.is_empty() {
        return Err(format!("{detail}: below ℓ=0 at {bad:?}"));
    }
    within(Duration::from_secs(300), start, detail)
}

fn strategy_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(6);
    for case in 0..1000 {
        let words = r.random_range(1..=6);
        let order = r.random_range(0..=2);
        let model = instances::table(&mut r, words, order);
        let mut prefix = vec![model.vocab().bos()];
        prefix.extend(instances::prompt(&mut r, &instances::words_of(&model), 5));
        let horizon = r.random_range(0..=8);
        let budget = r.random_bool(0.5).then(|| r.random_range(1..=8));
        let span = Span::new(horizon, budget);
        let g = greedy_lookahead(&model, &prefix, span).map_err(|e| e.to_string())?;
        let b = beam_lookahead(&model, &prefix, span, 1).map_err(|e| e.to_string())?;
        let s = soft_lookahead(&model, &prefix, span, 0.0).map_err(|e| e.to_string())?;
        if g[0].tokens != b[0].tokens || g[0].tokens != s[0].tokens {
            return Err(format!(
                "case {case}: greedy {:?}, beam {:?}, soft {:?}",
                g[0].tokens, b[0].tokens, s[0].tokens
            ));
        }
    }
    within(
        Duration::from_secs(60),
        start,
        "1000 triples token-exact".into(),
    )
}

fn automaton_rescan() -> Outcome {
    let start = Instant::now();
    let mut r = rng(7);
    let vocab = Vocabulary::from_words(["a", "b", "c"]).unwrap();
    let alphabet: Vec<TokenId> = vec![1, 2, 3];
    let mut overlapping = 0;
    for case in 0..1000 {
        let letters = r.random_range(1..=3);
        let clauses: Vec<Clause> = (0..r.random_range(1..=3))
            .map(|_| {
                Clause::new(
                    (0..r.random_range(1..=3))
                        .map(|_| {
                            let p = instances::phrase(&mut r, &alphabet[..letters], 4);
                            if r.random_bool(0.5) {
                                Literal::positive(p)
                            } else {
                                Literal::negative(p)
                            }
                        })
                        .collect(),
                )
            })
            .collect();
        let lits: Vec<&Literal> = clauses.iter().flat_map(|c| &c.literals).collect();
        if lits
            .iter()
            .any(|l| (1..l.phrase.len()).any(|k| l.phrase.ends_with(&l.phrase[..k])))
        {
            overlapping += 1;
        }
        let seq = instances::prompt(&mut r, &alphabet[..letters], 20);
        let cs = ConstraintSet::new(clauses.clone(), &vocab).unwrap();
        let mut state = cs.init_state();
        for i in 0..=seq.len() {
            if i > 0 {
                state = state.advance(&cs, seq[i - 1]);
            }
            let prefix = &seq[..i];
            for (j, lit) in lits.iter().enumerate() {
                let matched = reference::contains(prefix, &lit.phrase);
                if state.matched()[j] != matched
                    || state.active_prefix_lengths()[j] != reference::frontier(prefix, &lit.phrase)
                {
                    return Err(format!("case {case}: literal {j} differs after {prefix:?}"));
                }
            }
            for (c, clause) in clauses.iter().enumerate() {
                let sat_pos = clause.literals.iter().any(|l| {
                    l.polarity == Polarity::Positive && reference::contains(prefix, &l.phrase)
                });
                let sat_neg = clause.literals.iter().any(|l| {
                    l.polarity == Polarity::Negative && !reference::contains(prefix, &l.phrase)
                });
                let has_pos = clause
                    .literals
                    .iter()
                    .any(|l| l.polarity == Polarity::Positive);
                let st = state.statuses()[c];
                let ok = st.satisfied_at_end() == (sat_pos || sat_neg)
                    && st.is_irreversible() == (sat_pos || !(sat_neg || has_pos));
                if !ok {
                    return Err(format!(
                        "case {case}: clause {c} is {st:?} after {prefix:?}"
                    ));
                }
            }
        }
    }
    within(
        Duration::from_secs(60),
        start,
        format!("1000 pairs, {overlapping} with self-overlapping phrases"),
    )
}

fn topk_sampling() -> Outcome {
    let start = Instant::now();
    let mut r = rng(8);
    for case in 0..200 {
        let words = r.random_range(2..=6);
        let model = instances::table(&mut r, words, 1);
        let mut prefix = vec![model.vocab().bos()];
        prefix.extend(instances::prompt(&mut r, &instances::words_of(&model), 3));
        let k = r.random_range(1..=6);
        let params = DecodeParams {
            topk: k,
            weights: HeuristicWeights {
                lambda: r.random_range(0.0..2.0),
                ..HeuristicWeights::default()
            },
            lookahead: LookaheadConfig::greedy(r.random_range(0..=3)),
            ..DecodeParams::default()
        };
        let budget = r.random_range(1..=6);
        let adj = adjusted_topk_distribution(&model, &prefix, &params, budget, 0)
            .map_err(|e| e.to_string())?;
        let total: f64 = adj.iter().map(|(_, q)| q).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("case {case}: mass {total}"));
        }
        let dist = model.step(&prefix).map_err(|e| e.to_string())?;
        let mut ranked: Vec<TokenId> = model.vocab().emittable().collect();
        ranked.sort_by(|&a, &b| dist.logprob(b).total_cmp(&dist.logprob(a)).then(a.cmp(&b)));
        let allowed: &[TokenId] = if budget == 1 {
            &[model.vocab().eos()]
        } else {
            &ranked[..k.min(ranked.len())]
        };
        if adj.len() > k || adj.iter().any(|(t, _)| !allowed.contains(t)) {
            return Err(format!("case {case}: support {adj:?} outside top-{k}"));
        }
    }

    let fixture = abc_table();
    for k in 1..=3 {
        let params = DecodeParams {
            topk: k,
            weights: HeuristicWeights::zero(),
            ..DecodeParams::default()
        };
        let adj =
            adjusted_topk_distribution(&fixture, &[0], &params, 5, 0).map_err(|e| e.to_string())?;
        let probs = [0.6, 0.3, 0.1];
        let norm: f64 = probs[..k].iter().sum();
        for (i, (t, q)) in adj.iter().enumerate() {
            if *t != i as TokenId + 1 || (q - probs[i] / norm).abs() > 1e-12 {
                return Err(format!("k={k}: {adj:?} is not plain top-k"));
            }
        }
    }

    let model = instances::table(&mut rng(88), 5, 1);
    let params = DecodeParams {
        seed: Some(99),
        max_len: 10,
        topk: 3,
        weights: HeuristicWeights {
            lambda: 1.0,
            ..HeuristicWeights::default()
        },
        lookahead: LookaheadConfig {
            strategy: Strategy::Sampling,
            horizon: 3,
            rollouts: 4,
            ..LookaheadConfig::default()
        },
        ..DecodeParams::default()
    };
    let runs: Vec<String> = [1, 1, 4]
        .iter()
        .map(|&n| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap();
            pool.install(|| format!("{:?}", topk_sample_decode(&model, &[], &params)))
        })
        .collect();
    if runs.iter().any(|x| x != &runs[0]) {
        return Err("seeded runs differ".into());
    }
    within(
        Duration::from_secs(60),
        start,
        "200 random steps, fixtures exact, seeded runs identical".into(),
    )
}

fn sampling_statistics() -> Outcome {
    let start = Instant::now();
    let model = abc_table();
    let mut freqs = Vec::new();
    for seed in [1, 2, 3] {
        let rolls = sampling_lookahead(&model, &[0], Span::unbounded(1), 10_000, seed)
            .map_err(|e| e.to_string())?;
        let p = rolls.iter().filter(|c| c.tokens == [1]).count() as f64 / rolls.len() as f64;
        freqs.push(p);
        if (p - 0.6).abs() > 0.02 {
            return Err(format!("seed {seed}: p(A) = {p:.4}"));
        }
    }
    within(
        Duration::from_secs(60),
        start,
        format!("p(A) = {freqs:.4?}"),
    )
}

fn cli_reproducibility() -> Outcome {
    let start = Instant::now();
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo");
    let golden = std::fs::read(demo.join("expected.jsonl")).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (run, workers) in [(1, "1"), (2, "1"), (3, "4"), (4, "4")] {
        let out = dir.path().join(format!("run{run}.jsonl"));
        let status = Command::new(env!("CARGO_BIN_EXE_lookahead"))
            .args(["decode", "--config"])
            .arg(demo.join("config.json"))
            .arg("--out")
            .arg(&out)
            .args(["--workers", workers])
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("run {run} exited with {status}"));
        }
        if std::fs::read(&out).map_err(|e| e.to_string())? != golden {
            return Err(format!(
                "run {run} (workers {workers}) differs from the golden file"
            ));
        }
    }
    within(
        Duration::from_secs(60),
        start,
        "4 runs byte-identical to golden".into(),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("beam-search degeneracy", beam_degeneracy),
        ("oracle optimality", oracle_optimality),
        ("heuristic convergence", heuristic_convergence),
        ("constraint-satisfaction lift", satisfaction_lift),
        ("horizon ablation", horizon_ablation),
        ("lookahead-strategy equivalences", strategy_equivalence),
        ("constraint automaton", automaton_rescan),
        ("top-k heuristic sampling", topk_sampling),
        ("sampling lookahead statistics", sampling_statistics),
        ("CLI reproducibility", cli_reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS criterion {}: {name} ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({detail})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
