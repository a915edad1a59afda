//! Budget-accounted evolutionary optimization driven by guided generation.
//!
//! Each generation picks the best scored molecules as guides, samples
//! guided offspring around each of them, filters the offspring by
//! fingerprint similarity to the incumbent, adds exploration candidates, and
//! sends the unseen ones to the oracle. Every distinct canonical SMILES is
//! scored at most once and the number of oracle calls never exceeds the
//! budget.

mod auc;
mod config;
mod crossover;

pub use auc::auc_topk;
pub use config::{
    apply_setting, parse_run_config, render_run_config, validate_pair, ConfigError, GaConfig,
};
pub use crossover::{all_children, crossover, cuttable_bonds, join_fragments};

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{fingerprint, tanimoto, Fingerprint};
use crate::guidance::{GuidanceConfig, GuidanceError, GuideSet, GuidedSampler};
use crate::oracles::{Oracle, OracleError};
use crate::policy::PolicyModel;
use crate::smiles::{canonicalize, lex, parse, write_canonical, MolGraph};

#[derive(Debug, Error)]
pub enum GaError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corpus has {available} distinct parseable molecules, {needed} needed")]
    CorpusTooSmall { needed: usize, available: usize },
    #[error("initial pool of {needed} exceeds the budget of {budget}")]
    BudgetExhausted { needed: usize, budget: usize },
    #[error("trajectory has no records")]
    EmptyTrajectory,
    #[error("oracle failed after {} oracle calls: {source}", partial.oracle_calls)]
    Oracle {
        source: OracleError,
        partial: Box<RunOutcome>,
    },
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub generation: usize,
    pub budget_spent: usize,
    pub avg_topk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
    NoProgress,
    OracleFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredMolecule {
    pub smiles: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    /// Best `report_k` molecules, best first.
    pub top: Vec<ScoredMolecule>,
    pub termination: Termination,
    pub oracle_calls: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub smiles: String,
    pub score: f64,
    pub fingerprint: Fingerprint,
}

impl Individual {
    /// `smiles` must already be canonical.
    pub fn new(smiles: String, score: f64) -> Option<Self> {
        let g = parse(&smiles).ok()?;
        Some(Individual {
            fingerprint: fingerprint(&g),
            smiles,
            score,
        })
    }
}

/// Best-first order: score descending, then SMILES ascending.
fn rank_order(a: &Individual, b: &Individual) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.smiles.cmp(&b.smiles))
}

/// Scored molecules kept in best-first order.
#[derive(Debug, Clone, Default)]
pub struct Population {
    members: Vec<Individual>,
    index: HashSet<String>,
}

impl Population {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, smiles: &str) -> bool {
        self.index.contains(smiles)
    }

    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    pub fn best(&self) -> Option<&Individual> {
        self.members.first()
    }

    /// Returns false when the molecule is already present.
    pub fn insert(&mut self, ind: Individual) -> bool {
        if !self.index.insert(ind.smiles.clone()) {
            return false;
        }
        let pos = self
            .members
            .partition_point(|m| rank_order(m, &ind) == Ordering::Less);
        self.members.insert(pos, ind);
        true
    }

    /// Sum of the best `k` scores divided by `k`; missing entries count as 0.
    pub fn avg_topk(&self, k: usize) -> f64 {
        self.members.iter().take(k).map(|m| m.score).sum::<f64>() / k as f64
    }

    pub fn top(&self, k: usize) -> Vec<ScoredMolecule> {
        self.members
            .iter()
            .take(k)
            .map(|m| ScoredMolecule {
                smiles: m.smiles.clone(),
                score: m.score,
            })
            .collect()
    }
}

/// Memoizing, budget-enforcing front of an oracle.
pub struct OracleCache<'o> {
    oracle: &'o dyn Oracle,
    scores: HashMap<String, f64>,
    budget: usize,
    hits: usize,
}

impl<'o> OracleCache<'o> {
    pub fn new(oracle: &'o dyn Oracle, budget: usize) -> Self {
        OracleCache {
            oracle,
            scores: HashMap::new(),
            budget,
            hits: 0,
        }
    }

    /// Number of oracle evaluations so far.
    pub fn calls(&self) -> usize {
        self.scores.len()
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.scores.len()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.scores.contains_key(key)
    }

    /// Counts a lookup of an already-scored key without returning it.
    pub fn note_hit(&mut self) {
        self.hits += 1;
    }

    /// Cached score, or a fresh evaluation when budget remains. A failed
    /// evaluation consumes no budget.
    pub fn score(&mut self, key: &str) -> Result<Option<f64>, OracleError> {
        if let Some(&s) = self.scores.get(key) {
            self.hits += 1;
            return Ok(Some(s));
        }
        if self.remaining() == 0 {
            return Ok(None);
        }
        let s = self.oracle.score(key)?;
        self.scores.insert(key.to_owned(), s);
        Ok(Some(s))
    }
}

/// Canonical, de-duplicated corpus in first-occurrence order. Lines that do
/// not parse are dropped.
pub fn prepare_corpus<S: AsRef<str> + Sync>(lines: &[S]) -> Vec<String> {
    let canon: Vec<Option<String>> = lines
        .par_iter()
        .map(|s| canonicalize(s.as_ref()).ok())
        .collect();
    let mut seen = HashSet::new();
    canon
        .into_iter()
        .flatten()
        .filter(|s| seen.insert(s.clone()))
        .collect()
}

fn oracle_failure(source: OracleError, state: &RunState) -> GaError {
    GaError::Oracle {
        source,
        partial: Box::new(state.outcome(Termination::OracleFailure)),
    }
}

/// Scores `size` distinct corpus molecules drawn uniformly without
/// replacement. `corpus` must come from [`prepare_corpus`].
pub fn init_population<R: Rng + ?Sized>(
    corpus: &[String],
    size: usize,
    cache: &mut OracleCache<'_>,
    rng: &mut R,
) -> Result<Population, GaError> {
    if size > corpus.len() {
        return Err(GaError::CorpusTooSmall {
            needed: size,
            available: corpus.len(),
        });
    }
    if size > cache.remaining() {
        return Err(GaError::BudgetExhausted {
            needed: size,
            budget: cache.remaining(),
        });
    }
    let mut picks = sample(rng, corpus.len(), size).into_vec();
    picks.sort_unstable();
    let mut pop = Population::new();
    for i in picks {
        let s = &corpus[i];
        let score = cache.score(s).map_err(|source| GaError::Oracle {
            source,
            partial: Box::new(RunOutcome {
                records: Vec::new(),
                top: pop.top(usize::MAX),
                termination: Termination::OracleFailure,
                oracle_calls: cache.calls(),
                cache_hits: cache.hits(),
            }),
        })?;
        if let (Some(score), Some(ind)) = (score, Individual::new(s.clone(), 0.0)) {
            pop.insert(Individual { score, ..ind });
        }
    }
    Ok(pop)
}

/// Top `num_guides` molecules, minus those scoring below
/// `guide_prune_pct`% of the best (the best always stays), followed by up to
/// `diversity_guides` molecules chosen greedily to maximize the minimum
/// Tanimoto distance to the guides picked so far.
pub fn select_guides(pop: &Population, cfg: &GaConfig) -> Vec<Individual> {
    let Some(best) = pop.best() else {
        return Vec::new();
    };
    let threshold = cfg.guide_prune_pct / 100.0 * best.score;
    let mut guides: Vec<Individual> = pop
        .members()
        .iter()
        .take(cfg.num_guides)
        .enumerate()
        .filter(|(i, m)| *i == 0 || m.score >= threshold)
        .map(|(_, m)| m.clone())
        .collect();
    let mut chosen: HashSet<&str> = guides.iter().map(|g| g.smiles.as_str()).collect();
    let mut picked = Vec::new();
    for _ in 0..cfg.diversity_guides {
        let mut best_pick: Option<(f64, &Individual)> = None;
        for m in pop.members() {
            if chosen.contains(m.smiles.as_str()) {
                continue;
            }
            let min_dist = guides
                .iter()
                .chain(picked.iter())
                .map(|g: &Individual| 1.0 - tanimoto(&m.fingerprint, &g.fingerprint).unwrap())
                .fold(f64::INFINITY, f64::min);
            // members are best-first, so strict > keeps the higher score on ties
            if best_pick.is_none_or(|(d, _)| min_dist > d) {
                best_pick = Some((min_dist, m));
            }
        }
        match best_pick {
            Some((_, m)) => {
                chosen.insert(m.smiles.as_str());
                picked.push(m.clone());
            }
            None => break,
        }
    }
    guides.extend(picked);
    guides
}

/// Canonical offspring not yet scored, in guide order.
pub struct Offspring {
    pub molecules: Vec<(String, Fingerprint)>,
    /// Nonparseable raw generations, kept only when invalid output is not
    /// discarded.
    pub invalid: Vec<String>,
}

/// `gen_per_guide` guided generations around each guide, each guide acting
/// as its own single-molecule guide set. Generation runs in parallel across
/// guides with one seed per guide. Outputs already scored, duplicated, or
/// unparseable (when discarded) are dropped and the result is truncated to
/// `max_gen_size`.
pub fn mutate_via_guidance<M: PolicyModel + ?Sized>(
    model: &M,
    guides: &[Individual],
    guidance: &GuidanceConfig,
    cfg: &GaConfig,
    seeds: &[u64],
    cache: &mut OracleCache<'_>,
) -> Result<Offspring, GaError> {
    let per_guide: Vec<Vec<(String, Option<String>)>> = guides
        .par_iter()
        .zip(seeds)
        .map(|(guide, &seed)| {
            let set = match GuideSet::from_smiles(&[guide.smiles.as_str()], model.vocab()) {
                Ok(set) => set,
                Err(GuidanceError::InvalidGuide { .. }) => {
                    log::debug!("guide {} is outside the model vocabulary", guide.smiles);
                    return Ok(Vec::new());
                }
                Err(e) => return Err(e),
            };
            let mut sampler = GuidedSampler::new(model, set, guidance.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..cfg.gen_per_guide)
                .map(|_| sampler.generate(&mut rng).map(|g| (g.smiles, g.canonical)))
                .collect()
        })
        .collect::<Result<_, GuidanceError>>()?;

    let mut seen = HashSet::new();
    let mut out = Offspring {
        molecules: Vec::new(),
        invalid: Vec::new(),
    };
    for (raw, canonical) in per_guide.into_iter().flatten() {
        let key = match &canonical {
            Some(c) => c.clone(),
            None if cfg.discard_invalid || raw.is_empty() => continue,
            None => raw,
        };
        if cache.contains(&key) {
            cache.note_hit();
            continue;
        }
        if !seen.insert(key.clone()) {
            continue;
        }
        if out.molecules.len() + out.invalid.len() >= cfg.max_gen_size {
            break;
        }
        match canonical {
            Some(_) => {
                let fp = fingerprint(&parse(&key).expect("canonical output parses"));
                out.molecules.push((key, fp));
            }
            None => out.invalid.push(key),
        }
    }
    Ok(out)
}

/// Similarity of the `prune_topk`-th best molecule to the best one, or 0
/// when the population is smaller than `prune_topk`.
pub fn prune_threshold(pop: &Population, cfg: &GaConfig) -> f64 {
    let members = pop.members();
    if members.len() < cfg.prune_topk || members.is_empty() {
        return 0.0;
    }
    tanimoto(
        &members[cfg.prune_topk - 1].fingerprint,
        &members[0].fingerprint,
    )
    .unwrap()
}

/// Keeps offspring strictly more similar to the best molecule than
/// [`prune_threshold`].
pub fn prune_offspring(
    offspring: Vec<(String, Fingerprint)>,
    pop: &Population,
    cfg: &GaConfig,
) -> Vec<(String, Fingerprint)> {
    let Some(best) = pop.best() else {
        return offspring;
    };
    let theta = prune_threshold(pop, cfg);
    offspring
        .into_iter()
        .filter(|(_, fp)| tanimoto(fp, &best.fingerprint).unwrap() > theta)
        .collect()
}

struct RunState {
    pop: Population,
    records: Vec<RunRecord>,
    calls: usize,
    hits: usize,
    report_k: usize,
}

impl RunState {
    fn outcome(&self, termination: Termination) -> RunOutcome {
        RunOutcome {
            records: self.records.clone(),
            top: self.pop.top(self.report_k),
            termination,
            oracle_calls: self.calls,
            cache_hits: self.hits,
        }
    }
}

/// Exploration candidates: crossover children of the guides, or unscored
/// corpus molecules. Skips anything in `taken` or already scored, and
/// children longer than `max_tokens` tokens.
fn exploration<R: Rng + ?Sized>(
    guides: &[Individual],
    corpus: &[String],
    cfg: &GaConfig,
    max_tokens: usize,
    cache: &OracleCache<'_>,
    taken: &HashSet<String>,
    rng: &mut R,
) -> Vec<(String, Fingerprint)> {
    let mut out: Vec<(String, Fingerprint)> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let fresh = |s: &str, seen: &HashSet<String>| {
        !cache.contains(s) && !taken.contains(s) && !seen.contains(s)
    };
    if cfg.crossover_enabled {
        let graphs: Vec<MolGraph> = guides.iter().filter_map(|g| parse(&g.smiles).ok()).collect();
        if graphs.is_empty() {
            return out;
        }
        for _ in 0..cfg.exploration_candidates * 4 {
            if out.len() >= cfg.exploration_candidates {
                break;
            }
            let a = &graphs[rng.random_range(0..graphs.len())];
            let b = &graphs[rng.random_range(0..graphs.len())];
            if let Some(child) = crossover(a, b, rng) {
                let s = write_canonical(&child);
                if fresh(&s, &seen) && lex(&s).is_ok_and(|t| t.len() <= max_tokens) {
                    seen.insert(s.clone());
                    out.push((s, fingerprint(&child)));
                }
            }
        }
    } else {
        let unscored: Vec<&String> = corpus.iter().filter(|s| fresh(s, &seen)).collect();
        let n = cfg.exploration_candidates.min(unscored.len());
        let mut picks = sample(rng, unscored.len(), n).into_vec();
        picks.sort_unstable();
        for i in picks {
            let s = unscored[i];
            let fp = fingerprint(&parse(s).expect("prepared corpus parses"));
            out.push((s.clone(), fp));
        }
    }
    out
}

/// Runs the optimizer until the budget is spent or `stop_no_change`
/// consecutive generations bring no improvement of the top-K average.
///
/// `corpus` must come from [`prepare_corpus`]. `injected` molecules (for
/// target-seeded runs) are scored ahead of the initial sample.
pub fn run<M: PolicyModel + ?Sized>(
    model: &M,
    oracle: &dyn Oracle,
    corpus: &[String],
    cfg: &GaConfig,
    guidance: &GuidanceConfig,
    injected: &[String],
    rng: &mut ChaCha8Rng,
) -> Result<RunOutcome, GaError> {
    cfg.validate().map_err(GaError::InvalidConfig)?;
    guidance.validate()?;
    let mut cache = OracleCache::new(oracle, cfg.budget);
    let mut state = RunState {
        pop: Population::new(),
        records: Vec::new(),
        calls: 0,
        hits: 0,
        report_k: cfg.report_k,
    };

    let mut injected_canon = Vec::new();
    for s in injected {
        let c = canonicalize(s)
            .map_err(|e| GaError::InvalidConfig(format!("injected molecule {s:?}: {e}")))?;
        if !injected_canon.contains(&c) {
            injected_canon.push(c);
        }
    }
    if injected_canon.len() + cfg.init_pool_size > cfg.budget {
        return Err(GaError::BudgetExhausted {
            needed: injected_canon.len() + cfg.init_pool_size,
            budget: cfg.budget,
        });
    }
    for c in &injected_canon {
        let score = cache
            .score(c)
            .map_err(|e| oracle_failure(e, &state))?
            .expect("budget checked above");
        state.pop.insert(Individual::new(c.clone(), score).expect("canonical parses"));
    }
    let remaining_corpus: Vec<String> = corpus
        .iter()
        .filter(|s| !state.pop.contains(s))
        .cloned()
        .collect();
    let init = init_population(&remaining_corpus, cfg.init_pool_size, &mut cache, rng)?;
    for ind in init.members {
        state.pop.insert(ind);
    }
    state.calls = cache.calls();
    state.hits = cache.hits();
    state.records.push(RunRecord {
        generation: 0,
        budget_spent: cache.calls(),
        avg_topk: state.pop.avg_topk(cfg.report_k),
    });

    let mut current = guidance.clone();
    let mut exploiting = false;
    let mut best_avg = state.pop.avg_topk(cfg.report_k);
    let mut stale = 0usize;
    let mut generation = 0usize;
    let termination = loop {
        if cache.remaining() == 0 {
            break Termination::BudgetExhausted;
        }
        if stale >= cfg.stop_no_change {
            break Termination::NoProgress;
        }
        generation += 1;
        if !exploiting
            && state
                .pop
                .best()
                .is_some_and(|b| b.score >= cfg.exploitation_trigger)
        {
            exploiting = true;
            current.alpha = cfg.exploitation_alpha;
            current.tau = cfg.exploitation_tau;
            log::info!("generation {generation}: switching to exploitation schedule");
        }

        let guides = select_guides(&state.pop, cfg);
        let seeds: Vec<u64> = guides.iter().map(|_| rng.random()).collect();
        let offspring = mutate_via_guidance(model, &guides, &current, cfg, &seeds, &mut cache)?;
        let kept = prune_offspring(offspring.molecules, &state.pop, cfg);
        let taken: HashSet<String> = kept
            .iter()
            .map(|(s, _)| s.clone())
            .chain(offspring.invalid.iter().cloned())
            .collect();
        let explore = exploration(&guides, corpus, cfg, current.max_len, &cache, &taken, rng);

        let cap = cfg.max_gen_size.min(cache.remaining());
        let mut batch: Vec<(String, Option<Fingerprint>)> = kept
            .into_iter()
            .chain(explore)
            .map(|(s, fp)| (s, Some(fp)))
            .chain(offspring.invalid.into_iter().map(|s| (s, None)))
            .collect();
        batch.truncate(cap);

        for (s, fp) in batch {
            let scored = cache.score(&s);
            state.calls = cache.calls();
            state.hits = cache.hits();
            let score = match scored {
                Ok(Some(x)) => x,
                Ok(None) => break,
                Err(e) => return Err(oracle_failure(e, &state)),
            };
            if let Some(fingerprint) = fp {
                state.pop.insert(Individual {
                    smiles: s,
                    score,
                    fingerprint,
                });
            }
        }
        let avg = state.pop.avg_topk(cfg.report_k);
        state.records.push(RunRecord {
            generation,
            budget_spent: cache.calls(),
            avg_topk: avg,
        });
        log::debug!(
            "generation {generation}: {} calls, avg top-{} {avg:.4}",
            cache.calls(),
            cfg.report_k
        );
        if avg > best_avg {
            best_avg = avg;
            stale = 0;
        } else {
            stale += 1;
        }
    };
    state.calls = cache.calls();
    state.hits = cache.hits();
    Ok(state.outcome(termination))
}
