//! Job configuration files.
//!
//! A config is a single JSON document:
//!
//! ```json
//! {
//!   "model": { "kind": "ngram", "path": "model.json" },
//!   "constraints": "constraints.json",
//!   "params": { "mode": "neurologic_astar", "beam_size": 4, "seed": 7 },
//!   "inputs": [ { "prompt": ["the"], "constraints": [[{"polarity": "+", "phrase": ["dog"]}]] } ],
//!   "workers": 2
//! }
//! ```
//!
//! Paths are relative to the config file. Every `params` field is optional;
//! `mode` may also be `topk_sampling`, which needs a `seed`. Per-input
//! `constraints` replace the file-level constraint set for that input.

use std::path::{Path, PathBuf};

use lookahead_core::{ConstraintSpec, DecodeParams, NGramModel, StepScorer, Strategy, TableModel};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Table,
    Ngram,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRef {
    pub kind: ModelKind,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Input {
    #[serde(default)]
    pub prompt: Vec<String>,
    #[serde(default)]
    pub constraints: Option<ConstraintSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    Beam,
    TopkSampling,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: ModelRef,
    #[serde(default)]
    constraints: Option<PathBuf>,
    #[serde(default)]
    params: Option<Value>,
    inputs: Vec<Input>,
    #[serde(default)]
    workers: Option<usize>,
    #[serde(default)]
    oracle_cap: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub base_dir: PathBuf,
    pub model: ModelRef,
    pub constraints: Option<ConstraintSpec>,
    pub decoder: Decoder,
    pub params: DecodeParams,
    pub inputs: Vec<Input>,
    pub workers: Option<usize>,
    pub oracle_cap: Option<u64>,
}

fn path_error<E: std::fmt::Display>(prefix: &str, err: serde_path_to_error::Error<E>) -> CliError {
    let path = err.path().to_string();
    let field = match (prefix.is_empty(), path.as_str()) {
        (true, p) => p.to_string(),
        (false, ".") => prefix.to_string(),
        (false, p) => format!("{prefix}.{p}"),
    };
    CliError::config(format!("{field}: {}", err.inner()))
}

fn parse_params(value: Option<Value>) -> CliResult<(Decoder, DecodeParams)> {
    let mut value = value.unwrap_or_else(|| Value::Object(Default::default()));
    let mut decoder = Decoder::Beam;
    if let Some(obj) = value.as_object_mut() {
        if obj.get("mode").and_then(Value::as_str) == Some("topk_sampling") {
            obj.remove("mode");
            decoder = Decoder::TopkSampling;
        }
    }
    let params: DecodeParams =
        serde_path_to_error::deserialize(value).map_err(|e| path_error("params", e))?;
    params
        .validate()
        .map_err(|e| CliError::config(format!("params: {e}")))?;
    if decoder == Decoder::TopkSampling {
        if params.seed.is_none() {
            return Err(CliError::config("params.seed: required for topk_sampling"));
        }
        if params.topk == 0 {
            return Err(CliError::config("params.topk: must be >= 1"));
        }
    }
    Ok((decoder, params))
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_str(text: &str, base_dir: &Path) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| path_error("", e))?;
        let (decoder, params) = parse_params(raw.params)?;
        if raw.workers == Some(0) {
            return Err(CliError::config("workers: must be >= 1"));
        }
        let constraints = raw
            .constraints
            .map(|p| {
                ConstraintSpec::load(base_dir.join(p))
                    .map_err(|e| CliError::config(format!("constraints: {e}")))
            })
            .transpose()?;
        Ok(Self {
            base_dir: base_dir.to_path_buf(),
            model: raw.model,
            constraints,
            decoder,
            params,
            inputs: raw.inputs,
            workers: raw.workers,
            oracle_cap: raw.oracle_cap,
        })
    }

    pub fn load_model(&self) -> CliResult<Box<dyn StepScorer>> {
        let path = self.base_dir.join(&self.model.path);
        let loaded = match self.model.kind {
            ModelKind::Table => TableModel::load(&path).map(|m| Box::new(m) as Box<dyn StepScorer>),
            ModelKind::Ngram => NGramModel::load(&path).map(|m| Box::new(m) as Box<dyn StepScorer>),
        }
        .map_err(|e| CliError::config(format!("model {}: {e}", path.display())))?;
        if self.params.lookahead.strategy == Strategy::Soft
            && self.params.lookahead.temperature > 0.0
            && !loaded.supports_soft_step()
        {
            return Err(CliError::config(
                "params.lookahead.strategy: model does not support soft lookahead",
            ));
        }
        Ok(loaded)
    }

    /// Constraint spec in force for input `i`.
    pub fn constraints_for(&self, i: usize) -> ConstraintSpec {
        self.inputs[i]
            .constraints
            .clone()
            .or_else(|| self.constraints.clone())
            .unwrap_or_default()
    }
}
