use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{HashedEmbedder, PolicyError, PolicyModel};
use crate::smiles::{TokenId, Vocab};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
struct NextCounts {
    total: u64,
    counts: Vec<(TokenId, u64)>,
}

/// Additively smoothed n-gram model over SMILES tokens.
///
/// Counts are kept for every context length up to `order - 1`; prediction
/// uses the longest suffix of the prefix that was seen in training.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    smoothing: f64,
    vocab: Vocab,
    embedder: HashedEmbedder,
    sequences: usize,
    table: HashMap<Vec<TokenId>, NextCounts>,
}

#[derive(Serialize, Deserialize)]
struct ContextRecord {
    ctx: Vec<TokenId>,
    next: Vec<(TokenId, u64)>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    order: usize,
    smoothing: f64,
    sequences: usize,
    vocab: Vocab,
    embedder: HashedEmbedder,
    contexts: Vec<ContextRecord>,
}

impl NGramModel {
    pub const DEFAULT_ORDER: usize = 6;
    pub const DEFAULT_SMOOTHING: f64 = 0.01;

    /// Trains on `corpus` with the default embedder.
    pub fn train<S: AsRef<str>>(
        corpus: &[S],
        order: usize,
        smoothing: f64,
        vocab: Vocab,
    ) -> Result<Self, PolicyError> {
        Self::train_with_embedder(corpus, order, smoothing, vocab, HashedEmbedder::default())
    }

    pub fn train_with_embedder<S: AsRef<str>>(
        corpus: &[S],
        order: usize,
        smoothing: f64,
        vocab: Vocab,
        embedder: HashedEmbedder,
    ) -> Result<Self, PolicyError> {
        if order == 0 {
            return Err(PolicyError::InvalidOrder(order));
        }
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(PolicyError::InvalidSmoothing(smoothing));
        }
        if corpus.is_empty() {
            return Err(PolicyError::EmptyCorpus);
        }
        let mut raw: HashMap<Vec<TokenId>, HashMap<TokenId, u64>> = HashMap::new();
        for line in corpus {
            let mut seq = vec![vocab.bos()];
            seq.extend(vocab.tokenize_ids(line.as_ref())?);
            seq.push(vocab.eos());
            for j in 1..seq.len() {
                for len in 0..=j.min(order - 1) {
                    *raw.entry(seq[j - len..j].to_vec())
                        .or_default()
                        .entry(seq[j])
                        .or_default() += 1;
                }
            }
        }
        let table = raw
            .into_iter()
            .map(|(ctx, next)| {
                let mut counts: Vec<_> = next.into_iter().collect();
                counts.sort_unstable();
                let total = counts.iter().map(|&(_, c)| c).sum();
                (ctx, NextCounts { total, counts })
            })
            .collect();
        Ok(NGramModel {
            order,
            smoothing,
            vocab,
            embedder,
            sequences: corpus.len(),
            table,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn embedder(&self) -> &HashedEmbedder {
        &self.embedder
    }

    pub fn sequence_count(&self) -> usize {
        self.sequences
    }

    fn check_ids(&self, prefix: &[TokenId]) -> Result<(), PolicyError> {
        match prefix.iter().find(|&&t| !self.vocab.contains_id(t)) {
            Some(&t) => Err(PolicyError::UnknownTokenId(t)),
            None => Ok(()),
        }
    }

    /// Serializes to the versioned JSON model format; contexts are sorted so
    /// the output is byte-stable.
    pub fn to_json(&self) -> String {
        let mut contexts: Vec<ContextRecord> = self
            .table
            .iter()
            .map(|(ctx, n)| ContextRecord {
                ctx: ctx.clone(),
                next: n.counts.clone(),
            })
            .collect();
        contexts.sort_by(|a, b| a.ctx.cmp(&b.ctx));
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            order: self.order,
            smoothing: self.smoothing,
            sequences: self.sequences,
            vocab: self.vocab.clone(),
            embedder: self.embedder,
            contexts,
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header =
            serde_json::from_str(text).map_err(|e| PolicyError::MalformedModel(e.to_string()))?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(PolicyError::VersionMismatch {
                found: header.format_version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| PolicyError::MalformedModel(e.to_string()))?;
        if file.order == 0 {
            return Err(PolicyError::InvalidOrder(0));
        }
        if !(file.smoothing > 0.0 && file.smoothing.is_finite()) {
            return Err(PolicyError::InvalidSmoothing(file.smoothing));
        }
        HashedEmbedder::new(file.embedder.dim, file.embedder.ngram_max, file.embedder.seed)?;
        let mut table = HashMap::with_capacity(file.contexts.len());
        for rec in file.contexts {
            let ids_ok = rec.ctx.len() < file.order
                && rec.ctx.iter().all(|&t| file.vocab.contains_id(t))
                && rec
                    .next
                    .iter()
                    .all(|&(t, c)| file.vocab.contains_id(t) && c >= 1);
            if !ids_ok {
                return Err(PolicyError::MalformedModel(format!(
                    "invalid context entry {:?}",
                    rec.ctx
                )));
            }
            let total = rec.next.iter().map(|&(_, c)| c).sum();
            table.insert(
                rec.ctx,
                NextCounts {
                    total,
                    counts: rec.next,
                },
            );
        }
        if !table.contains_key(&Vec::new()) {
            return Err(PolicyError::MalformedModel("missing empty context".into()));
        }
        Ok(NGramModel {
            order: file.order,
            smoothing: file.smoothing,
            vocab: file.vocab,
            embedder: file.embedder,
            sequences: file.sequences,
            table,
        })
    }
}

impl PolicyModel for NGramModel {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn embed_dim(&self) -> usize {
        self.embedder.dim
    }

    fn logits(&self, prefix: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        self.check_ids(prefix)?;
        let longest = prefix.len().min(self.order - 1);
        let next = (0..=longest)
            .rev()
            .find_map(|len| self.table.get(&prefix[prefix.len() - len..]))
            .expect("empty context is always present");
        let v = self.vocab.len() as f64;
        let log_denominator = (next.total as f64 + self.smoothing * v).ln();
        let mut out = vec![self.smoothing.ln() - log_denominator; self.vocab.len()];
        for &(t, c) in &next.counts {
            out[t as usize] = (c as f64 + self.smoothing).ln() - log_denominator;
        }
        Ok(out)
    }

    fn embed(&self, prefix: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        self.check_ids(prefix)?;
        Ok(self.embedder.embed(prefix))
    }

    fn embed_candidates(&self, prefix: &[TokenId]) -> Result<Vec<Vec<f64>>, PolicyError> {
        self.check_ids(prefix)?;
        Ok(self.embedder.embed_extensions(prefix, self.vocab.len()))
    }
}
