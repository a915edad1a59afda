//! Similarity-tilted decoding.
//!
//! At every step the base logits `u` are mixed with the mean cosine
//! similarity `S̄` between each one-token extension of the current prefix and
//! the equally long prefixes of the guide molecules:
//! `p = softmax(((1 - α) u + α S̄) / τ)`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{sample_index, softmax, PolicyError, PolicyModel};
use crate::rff::{RffError, RffProjection, RffSettings};
use crate::smiles::{canonicalize, SmilesError, TokenId, Vocab};

/// Lower bound on the standard deviation used for z-scoring.
const SD_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("guide set is empty")]
    EmptyGuideSet,
    #[error("logits have length {logits}, similarities {similarity}")]
    LengthMismatch { logits: usize, similarity: usize },
    #[error("non-finite value in tilt input")]
    NonFiniteInput,
    #[error("invalid guidance configuration: {0}")]
    InvalidConfig(String),
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("guide {index} is invalid: {source}")]
    InvalidGuide { index: usize, source: SmilesError },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Rff(#[from] RffError),
    #[error("failed to write step trace: {0}")]
    Trace(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub alpha: f64,
    pub tau: f64,
    pub standardize: bool,
    pub rff: Option<RffSettings>,
    pub top_k: Option<usize>,
    pub max_len: usize,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            alpha: 0.4,
            tau: 0.25,
            standardize: true,
            rff: None,
            top_k: None,
            max_len: 128,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<(), GuidanceError> {
        let bad = |m: String| Err(GuidanceError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be finite and > 0, got {}", self.tau));
        }
        if self.max_len == 0 {
            return bad("max_len must be >= 1".into());
        }
        if self.top_k == Some(0) {
            return bad("top_k must be >= 1".into());
        }
        Ok(())
    }
}

/// Guide molecules as token sequences, each terminated by EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct GuideSet {
    guides: Vec<Vec<TokenId>>,
}

impl GuideSet {
    /// Canonicalizes and tokenizes each guide.
    pub fn from_smiles<S: AsRef<str>>(smiles: &[S], vocab: &Vocab) -> Result<Self, GuidanceError> {
        let guides = smiles
            .iter()
            .enumerate()
            .map(|(index, s)| {
                let wrap = |source| GuidanceError::InvalidGuide { index, source };
                let canon = canonicalize(s.as_ref()).map_err(wrap)?;
                let mut ids = vocab.tokenize_ids(&canon).map_err(wrap)?;
                ids.push(vocab.eos());
                Ok(ids)
            })
            .collect::<Result<Vec<_>, GuidanceError>>()?;
        Self::from_token_sequences(guides)
    }

    /// Takes sequences as given; they should end with EOS.
    pub fn from_token_sequences(guides: Vec<Vec<TokenId>>) -> Result<Self, GuidanceError> {
        if guides.is_empty() || guides.iter().any(Vec::is_empty) {
            return Err(GuidanceError::EmptyGuideSet);
        }
        Ok(GuideSet { guides })
    }

    pub fn len(&self) -> usize {
        self.guides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.guides.is_empty()
    }

    pub fn sequences(&self) -> &[Vec<TokenId>] {
        &self.guides
    }

    /// BOS followed by the first `min(t, len)` guide tokens.
    pub fn prefix(&self, guide: usize, t: usize, bos: TokenId) -> Vec<TokenId> {
        let g = &self.guides[guide];
        let mut p = Vec::with_capacity(t.min(g.len()) + 1);
        p.push(bos);
        p.extend_from_slice(&g[..t.min(g.len())]);
        p
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity, exactly 1 for identical nonzero vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = (dot(a, a) * dot(b, b)).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    (dot(a, b) / denom).clamp(-1.0, 1.0)
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    if n == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| x / n).collect()
}

/// Representation compared by cosine: the raw embedding, or random features
/// of the unit-normalized embedding.
fn features(v: &[f64], rff: Option<&RffProjection>) -> Result<Vec<f64>, GuidanceError> {
    match rff {
        None => Ok(v.to_vec()),
        Some(p) => Ok(p.transform(&normalized(v))?),
    }
}

/// Mean over guides of the cosine between each candidate extension of
/// `prefix` and the guide prefix of length `t`.
pub fn step_similarity<M: PolicyModel + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    guides: &GuideSet,
    t: usize,
    rff: Option<&RffProjection>,
) -> Result<Vec<f64>, GuidanceError> {
    if guides.is_empty() {
        return Err(GuidanceError::EmptyGuideSet);
    }
    let bos = model.vocab().bos();
    let targets = (0..guides.len())
        .map(|j| features(&model.embed(&guides.prefix(j, t, bos))?, rff))
        .collect::<Result<Vec<_>, _>>()?;
    mean_similarity(model, prefix, &targets, rff)
}

fn mean_similarity<M: PolicyModel + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    targets: &[Vec<f64>],
    rff: Option<&RffProjection>,
) -> Result<Vec<f64>, GuidanceError> {
    let candidates = model.embed_candidates(prefix)?;
    let Some(anchor) = candidates.first() else {
        return Ok(Vec::new());
    };
    let scorer = AnchoredScorer::new(anchor, targets, rff)?;
    let limit = anchor.len() / SPARSE_DIVISOR;
    let mut delta = Vec::with_capacity(limit + 1);
    candidates
        .iter()
        .map(|c| {
            delta.clear();
            if c.len() == anchor.len() {
                for (j, (a, b)) in c.iter().zip(anchor).enumerate() {
                    if a != b {
                        delta.push((j, a - b));
                        if delta.len() > limit {
                            break;
                        }
                    }
                }
            }
            if c.len() != anchor.len() || delta.len() > limit {
                scorer.dense(c)
            } else {
                Ok(scorer.sparse(&delta))
            }
        })
        .collect()
}

/// Candidates are scored as sparse deltas from the first candidate when
/// they differ from it in at most `dim / SPARSE_DIVISOR` coordinates.
const SPARSE_DIVISOR: usize = 8;

/// Precomputed products of one anchor embedding with every target.
struct AnchoredScorer<'a> {
    anchor: &'a [f64],
    targets: &'a [Vec<f64>],
    rff: Option<&'a RffProjection>,
    anchor_sq: f64,
    /// Raw: `anchor · target`. RFF: unused.
    anchor_dots: Vec<f64>,
    target_norms: Vec<f64>,
    /// RFF only: `W · anchor`.
    anchor_proj: Vec<f64>,
}

impl<'a> AnchoredScorer<'a> {
    fn new(
        anchor: &'a [f64],
        targets: &'a [Vec<f64>],
        rff: Option<&'a RffProjection>,
    ) -> Result<Self, GuidanceError> {
        let anchor_proj = match rff {
            Some(p) => p.project(anchor)?,
            None => Vec::new(),
        };
        let anchor_dots = match rff {
            Some(_) => Vec::new(),
            None => targets.iter().map(|y| dot(anchor, y)).collect(),
        };
        Ok(AnchoredScorer {
            anchor,
            targets,
            rff,
            anchor_sq: dot(anchor, anchor),
            anchor_dots,
            target_norms: targets.iter().map(|y| dot(y, y)).collect(),
            anchor_proj,
        })
    }

    fn mean_cosine(&self, x_sq: f64, dots: impl Iterator<Item = f64>) -> f64 {
        let total: f64 = dots
            .zip(&self.target_norms)
            .map(|(d, &yy)| {
                let denom = (x_sq * yy).sqrt();
                if denom == 0.0 {
                    0.0
                } else {
                    (d / denom).clamp(-1.0, 1.0)
                }
            })
            .sum();
        total / self.targets.len() as f64
    }

    fn dense(&self, c: &[f64]) -> Result<f64, GuidanceError> {
        let x = features(c, self.rff)?;
        Ok(self.targets.iter().map(|y| cosine(&x, y)).sum::<f64>() / self.targets.len() as f64)
    }

    fn sparse(&self, delta: &[(usize, f64)]) -> f64 {
        let x_sq = (self.anchor_sq
            + delta
                .iter()
                .map(|&(j, d)| d * (2.0 * self.anchor[j] + d))
                .sum::<f64>())
        .max(0.0);
        match self.rff {
            None => {
                let dots = self.targets.iter().zip(&self.anchor_dots).map(|(y, &a)| {
                    a + delta.iter().map(|&(j, d)| d * y[j]).sum::<f64>()
                });
                self.mean_cosine(x_sq, dots)
            }
            Some(p) => {
                let mut wx = self.anchor_proj.clone();
                for &(j, d) in delta {
                    p.add_column(&mut wx, j, d);
                }
                let norm = if x_sq == 0.0 { 1.0 } else { x_sq.sqrt() };
                let z = p.features_from_projection(&wx, norm);
                let z_sq = dot(&z, &z);
                let dots = self.targets.iter().map(|y| dot(&z, y));
                self.mean_cosine(z_sq, dots)
            }
        }
    }
}

fn zscore(v: &[f64], idx: &[usize]) -> Vec<f64> {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| v[i]).sum::<f64>() / n;
    let var = idx.iter().map(|&i| (v[i] - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(SD_FLOOR);
    idx.iter().map(|&i| (v[i] - mean) / sd).collect()
}

/// Tilted next-token distribution. Tokens outside the top-k of `u` (when
/// `top_k` is set) get probability 0.
pub fn tilt(u: &[f64], s: &[f64], cfg: &GuidanceConfig) -> Result<Vec<f64>, GuidanceError> {
    if u.len() != s.len() {
        return Err(GuidanceError::LengthMismatch {
            logits: u.len(),
            similarity: s.len(),
        });
    }
    if u.iter().chain(s).any(|x| !x.is_finite()) {
        return Err(GuidanceError::NonFiniteInput);
    }
    let mut idx: Vec<usize> = (0..u.len()).collect();
    if let Some(k) = cfg.top_k.filter(|&k| k < u.len()) {
        idx.sort_by(|&a, &b| u[b].total_cmp(&u[a]).then(a.cmp(&b)));
        idx.truncate(k);
        idx.sort_unstable();
    }
    let (uu, ss) = if cfg.standardize {
        (zscore(u, &idx), zscore(s, &idx))
    } else {
        (
            idx.iter().map(|&i| u[i]).collect(),
            idx.iter().map(|&i| s[i]).collect::<Vec<_>>(),
        )
    };
    let mixed: Vec<f64> = uu
        .iter()
        .zip(&ss)
        .map(|(a, b)| (1.0 - cfg.alpha) * a + cfg.alpha * b)
        .collect();
    let p_sel = softmax(&mixed, cfg.tau);
    let mut p = vec![0.0; u.len()];
    for (&i, q) in idx.iter().zip(p_sel) {
        p[i] = q;
    }
    Ok(p)
}

/// One decoding outcome; `canonical` is `None` when the text does not parse.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub tokens: Vec<TokenId>,
    pub smiles: String,
    pub canonical: Option<String>,
    pub hit_eos: bool,
}

impl Generation {
    fn from_tokens(tokens: Vec<TokenId>, vocab: &Vocab) -> Self {
        let hit_eos = tokens.last() == Some(&vocab.eos());
        let smiles = vocab.detokenize(&tokens);
        let canonical = if smiles.is_empty() {
            None
        } else {
            canonicalize(&smiles).ok()
        };
        Generation {
            tokens,
            smiles,
            canonical,
            hit_eos,
        }
    }
}

/// Per-step diagnostic state.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub t: usize,
    pub base_logits: Vec<f64>,
    pub similarity: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub chosen: TokenId,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    t: usize,
    top: Vec<(&'a str, f64)>,
    chosen: &'a str,
}

impl StepTrace {
    /// One JSON object: step, ten most probable tokens, chosen token.
    pub fn write_json_line(&self, vocab: &Vocab, sink: &mut dyn Write) -> std::io::Result<()> {
        let mut order: Vec<usize> = (0..self.probabilities.len()).collect();
        order.sort_by(|&a, &b| {
            self.probabilities[b]
                .total_cmp(&self.probabilities[a])
                .then(a.cmp(&b))
        });
        let line = TraceLine {
            t: self.t,
            top: order
                .iter()
                .take(10)
                .map(|&i| (vocab.text(i as TokenId), self.probabilities[i]))
                .collect(),
            chosen: vocab.text(self.chosen),
        };
        serde_json::to_writer(&mut *sink, &line)?;
        sink.write_all(b"\n")
    }
}

/// Guided decoder bound to one model and guide set. Guide features are
/// cached per prefix length across calls.
pub struct GuidedSampler<'m, M: PolicyModel + ?Sized> {
    model: &'m M,
    guides: GuideSet,
    cfg: GuidanceConfig,
    rff: Option<RffProjection>,
    guide_features: Vec<Vec<Option<Vec<f64>>>>,
}

impl<'m, M: PolicyModel + ?Sized> GuidedSampler<'m, M> {
    pub fn new(model: &'m M, guides: GuideSet, cfg: GuidanceConfig) -> Result<Self, GuidanceError> {
        cfg.validate()?;
        let v = model.vocab().len() as TokenId;
        if let Some(&bad) = guides.sequences().iter().flatten().find(|&&t| t >= v) {
            return Err(PolicyError::UnknownTokenId(bad).into());
        }
        let rff = cfg
            .rff
            .map(|s| RffProjection::new(model.embed_dim(), s))
            .transpose()?;
        let guide_features = guides
            .sequences()
            .iter()
            .map(|g| vec![None; g.len() + 1])
            .collect();
        Ok(GuidedSampler {
            model,
            guides,
            cfg,
            rff,
            guide_features,
        })
    }

    pub fn config(&self) -> &GuidanceConfig {
        &self.cfg
    }

    /// Switches α/τ while keeping the cached guide features.
    pub fn set_alpha_tau(&mut self, alpha: f64, tau: f64) -> Result<(), GuidanceError> {
        let next = GuidanceConfig {
            alpha,
            tau,
            ..self.cfg.clone()
        };
        next.validate()?;
        self.cfg = next;
        Ok(())
    }

    fn targets(&mut self, t: usize) -> Result<Vec<Vec<f64>>, GuidanceError> {
        let bos = self.model.vocab().bos();
        let mut out = Vec::with_capacity(self.guides.len());
        for j in 0..self.guides.len() {
            let len = t.min(self.guides.sequences()[j].len());
            if self.guide_features[j][len].is_none() {
                let e = self.model.embed(&self.guides.prefix(j, len, bos))?;
                self.guide_features[j][len] = Some(features(&e, self.rff.as_ref())?);
            }
            out.push(self.guide_features[j][len].clone().unwrap());
        }
        Ok(out)
    }

    /// Mean guide similarity for every extension of `prefix`.
    pub fn similarity(&mut self, prefix: &[TokenId]) -> Result<Vec<f64>, GuidanceError> {
        let targets = self.targets(prefix.len())?;
        mean_similarity(self.model, prefix, &targets, self.rff.as_ref())
    }

    pub fn generate<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Generation, GuidanceError> {
        self.generate_traced(rng, None)
    }

    pub fn generate_traced<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        mut trace: Option<&mut dyn Write>,
    ) -> Result<Generation, GuidanceError> {
        let vocab = self.model.vocab();
        let (bos, eos) = (vocab.bos(), vocab.eos());
        let mut prefix = vec![bos];
        while prefix.len() <= self.cfg.max_len {
            let u = self.model.logits(&prefix)?;
            if u.len() != vocab.len() {
                return Err(GuidanceError::LengthMismatch {
                    logits: u.len(),
                    similarity: vocab.len(),
                });
            }
            // similarity carries zero weight at alpha = 0
            let s = if self.cfg.alpha == 0.0 {
                vec![0.0; u.len()]
            } else {
                self.similarity(&prefix)?
            };
            let p = tilt(&u, &s, &self.cfg)?;
            let next = sample_index(&p, rng) as TokenId;
            if let Some(sink) = trace.as_deref_mut() {
                StepTrace {
                    t: prefix.len(),
                    base_logits: u,
                    similarity: s,
                    probabilities: p,
                    chosen: next,
                }
                .write_json_line(vocab, sink)?;
            }
            prefix.push(next);
            if next == eos {
                break;
            }
        }
        prefix.remove(0);
        Ok(Generation::from_tokens(prefix, vocab))
    }
}

/// One guided generation with a fresh sampler.
pub fn generate_guided<M, R>(
    model: &M,
    guides: &GuideSet,
    cfg: &GuidanceConfig,
    rng: &mut R,
) -> Result<Generation, GuidanceError>
where
    M: PolicyModel + ?Sized,
    R: Rng + ?Sized,
{
    GuidedSampler::new(model, guides.clone(), cfg.clone())?.generate(rng)
}

fn check_distribution(p: &[f64]) -> Result<(), GuidanceError> {
    if p.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(GuidanceError::NotADistribution(
            "entries must be finite and >= 0".into(),
        ));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(GuidanceError::NotADistribution(format!(
            "entries sum to {total}"
        )));
    }
    Ok(())
}

/// `(1 - α) Σ p K - KL_gen(p ‖ softmax(u)^α)` with
/// `KL_gen(p ‖ q) = Σ p log(p / q) + Σ q - 1`.
pub fn appendix_objective(p: &[f64], k: &[f64], u: &[f64], alpha: f64) -> Result<f64, GuidanceError> {
    if p.len() != k.len() || p.len() != u.len() {
        return Err(GuidanceError::LengthMismatch {
            logits: u.len(),
            similarity: k.len(),
        });
    }
    check_distribution(p)?;
    let log_ref = log_softmax(u);
    let mut kl = -1.0;
    let mut gain = 0.0;
    for i in 0..p.len() {
        let log_q = alpha * log_ref[i];
        kl += log_q.exp();
        if p[i] > 0.0 {
            kl += p[i] * (p[i].ln() - log_q);
        }
        gain += p[i] * k[i];
    }
    Ok((1.0 - alpha) * gain - kl)
}

/// Maximizer of [`appendix_objective`]: `p ∝ exp((1 - α) K + α log softmax(u))`.
pub fn appendix_maximizer(k: &[f64], u: &[f64], alpha: f64) -> Vec<f64> {
    let log_ref = log_softmax(u);
    let scores: Vec<f64> = k
        .iter()
        .zip(&log_ref)
        .map(|(ki, lr)| (1.0 - alpha) * ki + alpha * lr)
        .collect();
    softmax(&scores, 1.0)
}

fn log_softmax(u: &[f64]) -> Vec<f64> {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + u.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    u.iter().map(|x| x - lse).collect()
}
