//! Autoregressive token policies: next-token logits plus prefix embeddings.

mod embed;
mod ngram;

pub use embed::HashedEmbedder;
pub use ngram::{NGramModel, MODEL_FORMAT_VERSION};

use rand::Rng;
use thiserror::Error;

use crate::adapters::AdapterError;
use crate::smiles::{SmilesError, TokenId, Vocab};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("token id {0} is outside the vocabulary")]
    UnknownTokenId(TokenId),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("smoothing constant must be finite and > 0, got {0}")]
    InvalidSmoothing(f64),
    #[error("n-gram order must be >= 1, got {0}")]
    InvalidOrder(usize),
    #[error("embedding dimension must be >= 8, got {0}")]
    InvalidDimension(usize),
    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed model file: {0}")]
    MalformedModel(String),
    #[error("temperature must be finite and > 0, got {0}")]
    InvalidTemperature(f64),
    #[error(transparent)]
    Remote(#[from] AdapterError),
}

/// Source of next-token logits and prefix embeddings.
///
/// Prefixes always start with the vocabulary's BOS id.
pub trait PolicyModel: Send + Sync {
    fn vocab(&self) -> &Vocab;

    fn embed_dim(&self) -> usize;

    /// One finite logit per vocabulary entry.
    fn logits(&self, prefix: &[TokenId]) -> Result<Vec<f64>, PolicyError>;

    /// Embedding of length `embed_dim()`.
    fn embed(&self, prefix: &[TokenId]) -> Result<Vec<f64>, PolicyError>;

    /// `embed(prefix ⊕ i)` for every token id `i`, in id order.
    fn embed_candidates(&self, prefix: &[TokenId]) -> Result<Vec<Vec<f64>>, PolicyError> {
        let mut ext = prefix.to_vec();
        ext.push(0);
        let last = ext.len() - 1;
        (0..self.vocab().len() as TokenId)
            .map(|i| {
                ext[last] = i;
                self.embed(&ext)
            })
            .collect()
    }
}

impl<M: PolicyModel + ?Sized> PolicyModel for std::sync::Arc<M> {
    fn vocab(&self) -> &Vocab {
        (**self).vocab()
    }
    fn embed_dim(&self) -> usize {
        (**self).embed_dim()
    }
    fn logits(&self, prefix: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        (**self).logits(prefix)
    }
    fn embed(&self, prefix: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        (**self).embed(prefix)
    }
    fn embed_candidates(&self, prefix: &[TokenId]) -> Result<Vec<Vec<f64>>, PolicyError> {
        (**self).embed_candidates(prefix)
    }
}

/// Numerically stable softmax of `logits / tau`.
pub fn softmax(logits: &[f64], tau: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&u| ((u - max) / tau).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

/// Inverse-CDF draw from a probability vector. Zero-probability entries are
/// never selected.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last_positive = i;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Samples tokens from `softmax(logits / tau)` until EOS or `max_len` tokens.
/// The result excludes BOS and includes EOS when it was drawn.
pub fn sample_unconditional<M, R>(
    model: &M,
    tau: f64,
    max_len: usize,
    rng: &mut R,
) -> Result<Vec<TokenId>, PolicyError>
where
    M: PolicyModel + ?Sized,
    R: Rng + ?Sized,
{
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(PolicyError::InvalidTemperature(tau));
    }
    let vocab = model.vocab();
    let mut prefix = vec![vocab.bos()];
    while prefix.len() - 1 < max_len {
        let probs = softmax(&model.logits(&prefix)?, tau);
        let next = sample_index(&probs, rng) as TokenId;
        prefix.push(next);
        if next == vocab.eos() {
            break;
        }
    }
    prefix.remove(0);
    Ok(prefix)
}
