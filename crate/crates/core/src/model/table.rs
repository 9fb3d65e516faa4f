use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    context_window, mixed_context_step, StepDistribution, StepScorer, TokenId, TokenMixture,
    Vocabulary,
};
use crate::error::{Error, Result};

/// Row-sum tolerance applied to linear-space probabilities in table files.
pub const TABLE_FILE_TOL: f64 = 1e-6;

/// A conditional probability table keyed on the last `order` tokens.
#[derive(Debug, Clone)]
pub struct TableModel {
    vocab: Vocabulary,
    order: usize,
    table: HashMap<Vec<TokenId>, StepDistribution>,
    default: StepDistribution,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableFile {
    order: usize,
    vocab: Vec<String>,
    rows: Vec<TableRow>,
    default: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRow {
    context: Vec<String>,
    probs: Vec<f64>,
}

impl TableModel {
    pub fn new(
        vocab: Vocabulary,
        order: usize,
        table: HashMap<Vec<TokenId>, StepDistribution>,
        default: StepDistribution,
    ) -> Result<Self> {
        for (ctx, dist) in table
            .iter()
            .chain(std::iter::once((&vec![0; order], &default)))
        {
            if ctx.len() != order {
                return Err(Error::InvalidInput(format!(
                    "context of length {} in an order-{order} table",
                    ctx.len()
                )));
            }
            vocab.check_ids(ctx)?;
            if dist.len() != vocab.len() {
                return Err(Error::InvalidInput("distribution size mismatch".into()));
            }
        }
        Ok(Self {
            vocab,
            order,
            table,
            default,
        })
    }

    /// An order-0 model that returns `dist` after every prefix.
    pub fn context_free(vocab: Vocabulary, dist: StepDistribution) -> Result<Self> {
        Self::new(vocab, 0, HashMap::new(), dist)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rows(&self) -> &HashMap<Vec<TokenId>, StepDistribution> {
        &self.table
    }

    pub fn default_row(&self) -> &StepDistribution {
        &self.default
    }

    fn lookup(&self, ctx: &[TokenId]) -> &StepDistribution {
        self.table.get(ctx).unwrap_or(&self.default)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: TableFile = serde_json::from_str(text).map_err(Error::from_json)?;
        let vocab = Vocabulary::new(file.vocab.iter().cloned())
            .map_err(|e| Error::parse("vocab", e.to_string()))?;
        let default = StepDistribution::from_probs(&vocab, &file.default, TABLE_FILE_TOL)
            .map_err(|e| Error::parse("default", e.to_string()))?;
        let mut table = HashMap::with_capacity(file.rows.len());
        for (i, row) in file.rows.iter().enumerate() {
            let at = format!("rows[{i}]");
            if row.context.len() != file.order {
                return Err(Error::parse(
                    at,
                    format!(
                        "context has {} tokens, order is {}",
                        row.context.len(),
                        file.order
                    ),
                ));
            }
            let ctx = vocab
                .encode(&row.context)
                .map_err(|e| Error::parse(at.clone(), e.to_string()))?;
            let dist = StepDistribution::from_probs(&vocab, &row.probs, TABLE_FILE_TOL)
                .map_err(|e| Error::parse(at.clone(), e.to_string()))?;
            if table.insert(ctx, dist).is_some() {
                return Err(Error::parse(at, "duplicate context"));
            }
        }
        Self::new(vocab, file.order, table, default)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Serializes to the table-file format, rows sorted by context.
    pub fn to_json_string(&self) -> String {
        let mut contexts: Vec<_> = self.table.keys().collect();
        contexts.sort();
        let file = TableFile {
            order: self.order,
            vocab: self.vocab.tokens().to_vec(),
            rows: contexts
                .into_iter()
                .map(|ctx| TableRow {
                    context: self.vocab.decode(ctx),
                    probs: self.table[ctx].probs(),
                })
                .collect(),
            default: self.default.probs(),
        };
        serde_json::to_string_pretty(&file).expect("table serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

impl StepScorer for TableModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn step(&self, prefix: &[TokenId]) -> Result<StepDistribution> {
        self.vocab.check_prefix(prefix)?;
        let ctx = context_window(prefix, self.order, self.vocab.bos());
        Ok(self.lookup(&ctx).clone())
    }

    fn supports_soft_step(&self) -> bool {
        true
    }

    fn soft_step(&self, hard: &[TokenId], soft: &[TokenMixture]) -> Result<StepDistribution> {
        if soft.is_empty() {
            return self.step(hard);
        }
        mixed_context_step(&self.vocab, self.order, hard, soft, |ctx| {
            self.lookup(ctx).clone()
        })
    }
}
