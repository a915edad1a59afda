use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::smiles::TokenId;

/// Magnitude of the constant last coordinate; keeps every norm positive.
const BIAS: f64 = 1e-3;

/// Signed-hash bag of token n-grams.
///
/// The last coordinate is a constant bias, the other `dim - 1` buckets hold
/// signed n-gram counts. All bucket values are small integers, so adding the
/// n-grams of one extra token to a prefix embedding reproduces the full
/// embedding exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedEmbedder {
    pub dim: usize,
    pub ngram_max: usize,
    pub seed: u64,
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        HashedEmbedder {
            dim: 256,
            ngram_max: 3,
            seed: 0x6d6f_6c67,
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl HashedEmbedder {
    pub fn new(dim: usize, ngram_max: usize, seed: u64) -> Result<Self, PolicyError> {
        if dim < 8 {
            return Err(PolicyError::InvalidDimension(dim));
        }
        if ngram_max == 0 {
            return Err(PolicyError::InvalidOrder(0));
        }
        Ok(HashedEmbedder {
            dim,
            ngram_max,
            seed,
        })
    }

    fn add_gram(&self, v: &mut [f64], gram: &[TokenId]) {
        let h = gram
            .iter()
            .fold(mix(self.seed ^ gram.len() as u64), |h, &t| {
                mix(h ^ t as u64)
            });
        let bucket = (h % (self.dim as u64 - 1)) as usize;
        let w = gram.len() as f64;
        v[bucket] += if h >> 63 == 0 { w } else { -w };
    }

    pub fn embed(&self, tokens: &[TokenId]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        v[self.dim - 1] = BIAS;
        for end in 1..=tokens.len() {
            for n in 1..=self.ngram_max.min(end) {
                self.add_gram(&mut v, &tokens[end - n..end]);
            }
        }
        v
    }

    /// Embeddings of `prefix ⊕ t` for every `t < vocab_len`, derived from
    /// the prefix embedding by adding only the n-grams that end at `t`.
    pub fn embed_extensions(&self, prefix: &[TokenId], vocab_len: usize) -> Vec<Vec<f64>> {
        let base = self.embed(prefix);
        let keep = prefix.len().min(self.ngram_max - 1);
        let mut gram: Vec<TokenId> = prefix[prefix.len() - keep..].to_vec();
        gram.push(0);
        (0..vocab_len as TokenId)
            .map(|t| {
                let mut v = base.clone();
                *gram.last_mut().unwrap() = t;
                for n in 1..=gram.len() {
                    self.add_gram(&mut v, &gram[gram.len() - n..]);
                }
                v
            })
            .collect()
    }
}
