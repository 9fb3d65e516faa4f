use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use lookahead_core::metrics::{coverage, term_use_rate};
use lookahead_core::oracle::DEFAULT_ENUMERATION_CAP;
use lookahead_core::{
    decode, exact_argmax, topk_sample_decode, ClauseStatus, ConstraintSet, ConstraintSpec,
    DecodeParams, DecodeResult, Error, NGramModel, OracleBudget, Polarity, StepScorer, TokenId,
    Vocabulary,
};
use serde::{Deserialize, Serialize};

use crate::config::{Config, Decoder};
use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
pub struct ParamsEcho<'a> {
    pub decoder: Decoder,
    #[serde(flatten)]
    pub params: &'a DecodeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Generated words, without the trailing eos.
    pub tokens: Vec<String>,
    pub logprob: f64,
    pub objective: f64,
    pub clause_statuses: Vec<ClauseStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_violating: Option<Vec<String>>,
}

#[derive(Debug, Serialize)]
struct DecodeRecord<'a> {
    input: usize,
    prompt: &'a [String],
    constraints: &'a ConstraintSpec,
    outputs: Vec<OutputRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorRecord>,
    params_echo: &'a ParamsEcho<'a>,
    seed: Option<u64>,
}

/// The subset of a decode record that `eval` reads back.
#[derive(Debug, Deserialize)]
struct ResultLine {
    #[serde(default)]
    constraints: ConstraintSpec,
    #[serde(default)]
    outputs: Vec<OutputRecord>,
    #[serde(default)]
    error: Option<ErrorRecord>,
}

fn words(vocab: &Vocabulary, ids: &[TokenId]) -> Vec<String> {
    vocab
        .decode(ids)
        .into_iter()
        .filter(|w| w != vocab.token(vocab.eos()).unwrap_or_default())
        .collect()
}

fn thread_pool(workers: Option<usize>) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::config(format!("workers: {e}")))
}

fn prepare(
    cfg: &Config,
    model: &dyn StepScorer,
    i: usize,
) -> CliResult<(Vec<TokenId>, ConstraintSpec, ConstraintSet)> {
    let vocab = model.vocab();
    let prompt = vocab
        .encode(&cfg.inputs[i].prompt)
        .map_err(|e| CliError::config(format!("inputs[{i}].prompt: {e}")))?;
    let spec = cfg.constraints_for(i);
    let cs = ConstraintSet::from_spec(&spec, vocab)
        .map_err(|e| CliError::config(format!("inputs[{i}].constraints: {e}")))?;
    Ok((prompt, spec, cs))
}

fn write_output(out: &Path, text: &str) -> CliResult<()> {
    if out == Path::new("-") {
        print!("{text}");
        return Ok(());
    }
    std::fs::write(out, text).map_err(|source| CliError::Write {
        path: out.display().to_string(),
        source,
    })
}

/// Decodes every input of the config and returns the JSONL text.
pub fn decode_to_string(cfg: &Config, workers: Option<usize>) -> CliResult<String> {
    let model = cfg.load_model()?;
    let model: &dyn StepScorer = model.as_ref();
    let vocab = model.vocab();
    let pool = thread_pool(workers.or(cfg.workers))?;
    let echo = ParamsEcho {
        decoder: cfg.decoder,
        params: &cfg.params,
    };
    let mut text = String::new();
    for i in 0..cfg.inputs.len() {
        let (prompt, spec, cs) = prepare(cfg, model, i)?;
        let result = pool.install(|| match cfg.decoder {
            Decoder::Beam => decode(model, &cs, &prompt, &cfg.params),
            Decoder::TopkSampling => topk_sample_decode(model, &prompt, &cfg.params),
        });
        let (outputs, error) = match result {
            Ok(DecodeResult { hypotheses }) => (
                hypotheses
                    .iter()
                    .take(cfg.params.beam_size)
                    .map(|h| OutputRecord {
                        tokens: words(vocab, h.generated()),
                        logprob: h.logprob,
                        objective: h.objective,
                        clause_statuses: h.clause_statuses.clone(),
                    })
                    .collect(),
                None,
            ),
            Err(e @ Error::EmptyBeam { .. }) => {
                let best_violating = match &e {
                    Error::EmptyBeam { best_violating } => {
                        best_violating.as_ref().map(|h| words(vocab, h.generated()))
                    }
                    _ => None,
                };
                let err = ErrorRecord {
                    kind: "empty_beam".into(),
                    message: e.to_string(),
                    best_violating,
                };
                (Vec::new(), Some(err))
            }
            Err(e) => return Err(e.into()),
        };
        let record = DecodeRecord {
            input: i,
            prompt: &cfg.inputs[i].prompt,
            constraints: &spec,
            outputs,
            error,
            params_echo: &echo,
            seed: cfg.params.seed,
        };
        let line = serde_json::to_string(&record).expect("records serialize");
        writeln!(text, "{line}").expect("writing to a String cannot fail");
    }
    Ok(text)
}

pub fn cmd_decode(config: &Path, out: &Path, workers: Option<usize>) -> CliResult<()> {
    let cfg = Config::load(config)?;
    if workers == Some(0) {
        return Err(CliError::config("--workers must be >= 1"));
    }
    let text = decode_to_string(&cfg, workers)?;
    write_output(out, &text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: usize,
    pub errors: usize,
    /// Mean percentage of satisfied clauses per record.
    pub satisfaction_rate: f64,
    /// Percentage of records with every clause satisfied.
    pub fully_satisfied: f64,
    /// Mean percentage of clauses with a positive phrase present.
    pub coverage: f64,
    /// Corpus-level percentage of positive phrases that were produced.
    pub term_use: f64,
}

fn positive_phrases(clause: &[lookahead_core::constraints::LiteralSpec]) -> Vec<Vec<String>> {
    clause
        .iter()
        .filter(|l| l.polarity == Polarity::Positive)
        .map(|l| l.phrase.clone())
        .collect()
}

pub fn evaluate(results: &str, constraints: Option<&ConstraintSpec>) -> CliResult<EvalReport> {
    let mut lines = Vec::new();
    for (n, line) in results
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let rec: ResultLine = serde_json::from_str(line)
            .map_err(|e| CliError::config(format!("results line {}: {e}", n + 1)))?;
        lines.push(rec);
    }
    let mut sat_total = 0.0;
    let mut full = 0usize;
    let mut cov_total = 0.0;
    let mut outputs = Vec::new();
    let mut terms = Vec::new();
    for rec in &lines {
        let spec = constraints.unwrap_or(&rec.constraints);
        let output: Vec<String> = rec
            .outputs
            .first()
            .map(|o| o.tokens.clone())
            .unwrap_or_default();
        let mut words: BTreeSet<&str> = output.iter().map(String::as_str).collect();
        words.extend(
            spec.0
                .iter()
                .flatten()
                .flat_map(|l| l.phrase.iter().map(String::as_str)),
        );
        let vocab = Vocabulary::from_words(words).map_err(|e| CliError::config(e.to_string()))?;
        let cs = ConstraintSet::from_spec(spec, &vocab)
            .map_err(|e| CliError::config(format!("constraints: {e}")))?;
        let ids = vocab
            .encode(&output)
            .map_err(|e| CliError::config(e.to_string()))?;
        let state = cs.state_after(&ids);
        let rate = if cs.is_empty() {
            100.0
        } else {
            100.0 * state.satisfied_clause_count() as f64 / cs.len() as f64
        };
        sat_total += rate;
        if state.unsatisfied_clause_count() == 0 {
            full += 1;
        }
        let concepts: Vec<Vec<Vec<String>>> = spec
            .0
            .iter()
            .map(|c| positive_phrases(c))
            .filter(|alts| !alts.is_empty())
            .collect();
        cov_total += coverage(&output, &concepts);
        terms.push(
            spec.0
                .iter()
                .flat_map(|c| positive_phrases(c))
                .collect::<Vec<_>>(),
        );
        outputs.push(output);
    }
    let n = lines.len();
    let mean = |total: f64| if n == 0 { 0.0 } else { total / n as f64 };
    Ok(EvalReport {
        records: n,
        errors: lines.iter().filter(|r| r.error.is_some()).count(),
        satisfaction_rate: mean(sat_total),
        fully_satisfied: mean(100.0 * full as f64),
        coverage: mean(cov_total),
        term_use: term_use_rate(&outputs, &terms),
    })
}

pub fn cmd_eval(results: &Path, constraints: Option<&Path>) -> CliResult<()> {
    let text = std::fs::read_to_string(results)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", results.display())))?;
    let spec = constraints
        .map(|p| ConstraintSpec::load(p).map_err(|e| CliError::config(format!("constraints: {e}"))))
        .transpose()?;
    let report = evaluate(&text, spec.as_ref())?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

pub fn cmd_train_ngram(corpus: &Path, order: usize, k: f64, out: &Path) -> CliResult<()> {
    let model = NGramModel::train_file(corpus, order, k).map_err(|e| match e {
        Error::Io(io) => CliError::config(format!("cannot read {}: {io}", corpus.display())),
        other => CliError::config(other.to_string()),
    })?;
    write_output(out, &model.to_json_string())
}

#[derive(Debug, Serialize)]
struct OracleRecord<'a> {
    input: usize,
    prompt: &'a [String],
    tokens: Vec<String>,
    logprob: f64,
    objective: f64,
}

pub fn cmd_oracle(config: &Path, out: &Path) -> CliResult<()> {
    let cfg = Config::load(config)?;
    let model = cfg.load_model()?;
    let model: &dyn StepScorer = model.as_ref();
    let budget = OracleBudget {
        max_len: cfg.params.max_len,
        cap: cfg.oracle_cap.map_or(DEFAULT_ENUMERATION_CAP, u128::from),
    };
    let mut text = String::new();
    for i in 0..cfg.inputs.len() {
        let (prompt, _, cs) = prepare(&cfg, model, i)?;
        let best = exact_argmax(model, &cs, &prompt, cfg.params.weights.lambda_prime, budget)?;
        let rec = OracleRecord {
            input: i,
            prompt: &cfg.inputs[i].prompt,
            tokens: words(model.vocab(), &best.tokens),
            logprob: best.logprob,
            objective: best.objective,
        };
        let line = serde_json::to_string(&rec).expect("records serialize");
        writeln!(text, "{line}").expect("writing to a String cannot fail");
    }
    write_output(out, &text)
}
