//! End-to-end acceptance checks, one test per criterion. Each prints a
//! single PASS/FAIL line to stderr. Tests hold a shared lock so that the
//! measured runtimes are not inflated by each other.

mod common;

use std::collections::HashSet;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use common::{bundled_model, chi_square_two_sample, corpus, heldout, isomorphic, mann_whitney_greater, report};
use molguide::adapters::{Endpoint, RemoteModel, DEFAULT_TIMEOUT};
use molguide::fingerprint::{fingerprint, tanimoto};
use molguide::ga::{auc_topk, prepare_corpus, run, GaConfig, RunOutcome, RunRecord};
use molguide::guidance::{
    appendix_maximizer, appendix_objective, cosine, tilt, GuidanceConfig, GuideSet, GuidedSampler,
};
use molguide::oracles::{MedianOracle, Oracle, OracleError, RediscoveryOracle};
use molguide::policy::{sample_unconditional, softmax, PolicyModel};
use molguide::rff::{gaussian_kernel, RffProjection, RffSettings};
use molguide::smiles::{canonicalize, parse, write_canonical, TokenId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

/// Target whose scaffold relatives are in the corpus but which is not.
const REDISCOVERY_TARGET: &str = "O=C(O)c1ccccc1Oc1ccccc1F";
const SEEDS: u64 = 5;

fn exclusive() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn finish(criterion: u32, pass: bool, started: Instant, limit: Option<Duration>, detail: String) {
    let elapsed = started.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    let timing = match limit {
        Some(l) => format!("{:.1}s, limit {}s", elapsed.as_secs_f64(), l.as_secs()),
        None => format!("{:.1}s", elapsed.as_secs_f64()),
    };
    report(criterion, pass && in_time, &format!("{detail} [{timing}]"));
    assert!(pass, "criterion {criterion}: {detail}");
    assert!(in_time, "criterion {criterion} took {elapsed:?}, limit {limit:?}");
}

fn guide_tokens(smiles: &str) -> Vec<TokenId> {
    bundled_model().vocab().tokenize_ids(smiles).unwrap()
}

fn with_bos(tokens: &[TokenId]) -> Vec<TokenId> {
    let mut v = vec![bundled_model().vocab().bos()];
    v.extend_from_slice(tokens);
    v
}

/// Random decoding states: prefixes of unconditional samples cut at a
/// uniformly chosen position.
fn random_prefixes(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<TokenId>> {
    let model = bundled_model();
    let eos = model.vocab().eos();
    (0..n)
        .map(|_| {
            let mut toks = sample_unconditional(model, 1.0, 128, rng).unwrap();
            if toks.last() == Some(&eos) {
                toks.pop();
            }
            let cut = rng.random_range(0..=toks.len());
            with_bos(&toks[..cut])
        })
        .collect()
}

#[test]
fn criterion_01_degenerate_tilt_is_the_base_policy() {
    let model = bundled_model();
    let _g = exclusive();
    let started = Instant::now();
    let cfg = GuidanceConfig {
        alpha: 0.0,
        tau: 1.0,
        standardize: false,
        ..Default::default()
    };
    let guides = GuideSet::from_smiles(&[heldout()[0].as_str()], model.vocab()).unwrap();
    let mut sampler = GuidedSampler::new(model, guides.clone(), cfg.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for prefix in random_prefixes(1000, &mut rng) {
        let u = model.logits(&prefix).unwrap();
        let s = sampler.similarity(&prefix).unwrap();
        let p = tilt(&u, &s, &cfg).unwrap();
        let q = softmax(&u, 1.0);
        worst = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }

    // category of a generation: its first two tokens (EOS or end counted)
    let v = model.vocab().len();
    let category = |toks: &[TokenId]| {
        let first = toks.first().map_or(v, |&t| t as usize);
        let second = toks.get(1).map_or(v, |&t| t as usize);
        first * (v + 1) + second
    };
    let n = 10_000;
    let mut guided = vec![0u64; (v + 1) * (v + 1)];
    let mut plain = guided.clone();
    let mut rng_g = ChaCha8Rng::seed_from_u64(101);
    let mut rng_u = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..n {
        guided[category(&sampler.generate(&mut rng_g).unwrap().tokens)] += 1;
        plain[category(&sample_unconditional(model, 1.0, cfg.max_len, &mut rng_u).unwrap())] += 1;
    }
    let (stat, df, p) = chi_square_two_sample(&guided, &plain);
    let pass = worst <= 1e-12 && p >= 0.01;
    finish(
        1,
        pass,
        started,
        Some(Duration::from_secs(60)),
        format!("max |tilt - softmax| {worst:.2e}; chi-square {stat:.1} on {df} df, p = {p:.3}"),
    );
}

#[test]
fn criterion_02_closed_form_maximizer_beats_random_distributions() {
    let _g = exclusive();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for alpha in [0.25, 0.5, 0.75] {
        for _ in 0..20 {
            let v = rng.random_range(2..=6);
            let k: Vec<f64> = (0..v).map(|_| rng.random_range(-1.0..1.0)).collect();
            let u: Vec<f64> = (0..v).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let best = appendix_objective(&appendix_maximizer(&k, &u, alpha), &k, &u, alpha).unwrap();
            for _ in 0..10_000 {
                // normalized unit exponentials are flat-Dirichlet draws
                let p: Vec<f64> = (0..v).map(|_| rng.sample(Exp1)).collect();
                let total: f64 = p.iter().sum();
                let p: Vec<f64> = p.iter().map(|x| x / total).collect();
                let value = appendix_objective(&p, &k, &u, alpha).unwrap();
                tightest = tightest.min(best - value);
                if value > best {
                    violations += 1;
                }
            }
        }
    }
    finish(
        2,
        violations == 0,
        started,
        Some(Duration::from_secs(60)),
        format!("{violations} of 600000 samples exceed the maximizer; smallest gap {tightest:.2e}"),
    );
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn rff_mae(features: usize, temperature: f64, pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let dim = pairs[0].0.len();
    let proj = RffProjection::new(
        dim,
        RffSettings {
            num_features: features,
            temperature,
            seed: 5,
        },
    )
    .unwrap();
    pairs
        .iter()
        .map(|(x, y)| {
            let (zx, zy) = (proj.transform(x).unwrap(), proj.transform(y).unwrap());
            let approx: f64 = zx.iter().zip(&zy).map(|(a, b)| a * b).sum();
            (approx - gaussian_kernel(x, y, temperature)).abs()
        })
        .sum::<f64>()
        / pairs.len() as f64
}

#[test]
fn criterion_03_random_features_approximate_the_kernel() {
    let _g = exclusive();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 32;
    let temperature = 0.5;
    // pairs spread over distances by mixing a shared direction with noise
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..1000)
        .map(|_| {
            let x = unit_vector(dim, &mut rng);
            let noise = unit_vector(dim, &mut rng);
            let w: f64 = rng.random_range(0.0..1.0);
            let y: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| (1.0 - w) * a + w * b).collect();
            let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            (x, y.into_iter().map(|v| v / n).collect())
        })
        .collect();
    let wide = rff_mae(768, temperature, &pairs);
    let narrow = rff_mae(64, temperature, &pairs);
    finish(
        3,
        wide < 0.05 && narrow < 0.15,
        started,
        Some(Duration::from_secs(30)),
        format!("MAE {wide:.4} at 768 features, {narrow:.4} at 64 features"),
    );
}

fn guided_embeddings(guide: &str, alpha: f64, tau: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let model = bundled_model();
    let cfg = GuidanceConfig {
        alpha,
        tau,
        ..Default::default()
    };
    let guides = GuideSet::from_smiles(&[guide], model.vocab()).unwrap();
    let mut sampler = GuidedSampler::new(model, guides, cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eos = model.vocab().eos();
    (0..n)
        .map(|_| {
            let g = sampler.generate(&mut rng).unwrap();
            let body: Vec<TokenId> = g.tokens.into_iter().filter(|&t| t != eos).collect();
            model.embed(&with_bos(&body)).unwrap()
        })
        .collect()
}

fn total_variance(xs: &[Vec<f64>]) -> f64 {
    let n = xs.len() as f64;
    let dim = xs[0].len();
    (0..dim)
        .map(|j| {
            let mean = xs.iter().map(|x| x[j]).sum::<f64>() / n;
            xs.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .sum()
}

#[test]
fn criterion_04_mixing_weight_tightens_and_temperature_spreads() {
    let model = bundled_model();
    let _g = exclusive();
    let started = Instant::now();
    let guide = heldout()[0].clone();
    let target = model.embed(&with_bos(&guide_tokens(&guide))).unwrap();
    let cosines: Vec<Vec<f64>> = [0.0, 0.25, 0.5]
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            guided_embeddings(&guide, alpha, 0.2, 200, 40 + i as u64)
                .iter()
                .map(|e| cosine(e, &target))
                .collect()
        })
        .collect();
    let means: Vec<f64> = cosines.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let p_low = mann_whitney_greater(&cosines[1], &cosines[0]);
    let p_high = mann_whitney_greater(&cosines[2], &cosines[1]);
    let var_hot = total_variance(&guided_embeddings(&guide, 0.25, 0.4, 200, 50));
    let var_cold = total_variance(&guided_embeddings(&guide, 0.25, 0.2, 200, 51));
    let pass = means[0] < means[1] && means[1] < means[2] && p_low < 0.05 && p_high < 0.05 && var_hot > var_cold;
    finish(
        4,
        pass,
        started,
        Some(Duration::from_secs(300)),
        format!(
            "mean cosine {:.3} < {:.3} < {:.3} (p = {p_low:.1e}, {p_high:.1e}); variance {var_hot:.4} at tau 0.4 vs {var_cold:.4} at 0.2",
            means[0], means[1], means[2]
        ),
    );
}

/// Mean Tanimoto to `target` of the 100 most similar distinct valid
/// molecules, missing places counted as 0.
fn top100_mean(molecules: impl Iterator<Item = String>, target: &str) -> f64 {
    let tfp = fingerprint(&parse(target).unwrap());
    let mut seen = HashSet::new();
    let mut sims: Vec<f64> = molecules
        .filter(|c| seen.insert(c.clone()))
        .map(|c| tanimoto(&fingerprint(&parse(&c).unwrap()), &tfp).unwrap())
        .collect();
    sims.sort_by(|a, b| b.total_cmp(a));
    sims.iter().take(100).sum::<f64>() / 100.0
}

#[test]
fn criterion_05_guided_generation_beats_unconditional() {
    let model = bundled_model();
    let _g = exclusive();
    let started = Instant::now();
    let n = 5000;
    let cfg = GuidanceConfig {
        alpha: 0.25,
        tau: 0.4,
        ..Default::default()
    };
    let mut rows = Vec::new();
    let mut wins = 0;
    for (i, target) in heldout().iter().enumerate() {
        let guides = GuideSet::from_smiles(&[target.as_str()], model.vocab()).unwrap();
        let mut sampler = GuidedSampler::new(model, guides, cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(500 + i as u64);
        let guided = top100_mean(
            (0..n).filter_map(|_| sampler.generate(&mut rng).unwrap().canonical),
            target,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(600 + i as u64);
        let plain = top100_mean(
            (0..n).filter_map(|_| {
                let toks = sample_unconditional(model, 1.0, cfg.max_len, &mut rng).unwrap();
                canonicalize(&model.vocab().detokenize(&toks)).ok()
            }),
            target,
        );
        if guided > plain {
            wins += 1;
        }
        rows.push(format!("{guided:.3}/{plain:.3}"));
    }
    finish(
        5,
        wins == rows.len(),
        started,
        Some(Duration::from_secs(600)),
        format!("guided/unconditional top-100 mean per target: {}", rows.join(" ")),
    );
}

/// Records every string it is asked to score.
struct Recording<'o> {
    inner: &'o dyn Oracle,
    seen: Mutex<Vec<String>>,
}

impl<'o> Recording<'o> {
    fn new(inner: &'o dyn Oracle) -> Self {
        Recording {
            inner,
            seen: Mutex::new(Vec::new()),
        }
    }
}

impl Oracle for Recording<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn score(&self, smiles: &str) -> Result<f64, OracleError> {
        self.seen.lock().unwrap().push(smiles.to_owned());
        self.inner.score(smiles)
    }
}

fn records_csv(records: &[RunRecord]) -> String {
    let mut s = String::from("generation,budget_spent,avg_topk\n");
    for r in records {
        s.push_str(&format!("{},{},{}\n", r.generation, r.budget_spent, r.avg_topk));
    }
    s
}

fn soundness_setting(i: u64) -> (GaConfig, GuidanceConfig) {
    let ga = GaConfig {
        budget: 500,
        num_guides: 1 + (i % 3) as usize,
        diversity_guides: (i % 3) as usize,
        gen_per_guide: 5 + 5 * (i % 4) as usize,
        crossover_enabled: i % 2 == 0,
        exploration_candidates: [0, 10, 40][(i % 3) as usize],
        discard_invalid: i % 5 != 0,
        init_pool_size: 50 + 10 * (i % 5) as usize,
        stop_no_change: 50,
        ..Default::default()
    };
    let guidance = GuidanceConfig {
        top_k: (i % 4 == 1).then_some(12),
        rff: (i % 4 == 3).then_some(RffSettings {
            num_features: 128,
            ..Default::default()
        }),
        ..Default::default()
    };
    (ga, guidance)
}

#[test]
fn criterion_06_optimizer_is_budget_sound_and_reproducible() {
    let model = bundled_model();
    let pool = prepare_corpus(corpus());
    let _g = exclusive();
    let started = Instant::now();
    let targets = heldout();
    let mut problems = Vec::new();
    let mut total_calls = 0;
    for i in 0..20u64 {
        let (ga, guidance) = soundness_setting(i);
        let base: Box<dyn Oracle> = if i % 4 == 2 {
            Box::new(MedianOracle::new("median", &targets[0], &targets[3]).unwrap())
        } else {
            Box::new(RediscoveryOracle::new("rediscovery", &targets[(i % 5) as usize]).unwrap())
        };
        let oracle = Recording::new(base.as_ref());
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let out = run(model, &oracle, &pool, &ga, &guidance, &[], &mut rng).unwrap();
        let seen = oracle.seen.into_inner().unwrap();
        total_calls += seen.len();
        let distinct: HashSet<&String> = seen.iter().collect();
        if seen.len() > ga.budget || seen.len() != out.oracle_calls {
            problems.push(format!("run {i}: {} calls, {} reported", seen.len(), out.oracle_calls));
        }
        if distinct.len() != seen.len() {
            problems.push(format!("run {i}: {} repeated scorings", seen.len() - distinct.len()));
        }
        let monotone = out.records.windows(2).all(|w| {
            w[1].avg_topk >= w[0].avg_topk && w[1].budget_spent >= w[0].budget_spent
        });
        if !monotone {
            problems.push(format!("run {i}: trajectory decreases"));
        }
        if i < 5 {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let again = run(model, base.as_ref(), &pool, &ga, &guidance, &[], &mut rng).unwrap();
            if records_csv(&again.records) != records_csv(&out.records) {
                problems.push(format!("run {i}: rerun differs"));
            }
        }
    }
    finish(
        6,
        problems.is_empty(),
        started,
        Some(Duration::from_secs(300)),
        if problems.is_empty() {
            format!("20 runs, {total_calls} oracle calls, 5 reruns identical")
        } else {
            problems.join("; ")
        },
    )
}

struct RediscoveryRuns {
    guided: Vec<Scored>,
    random: Vec<Scored>,
}

const REDISCOVERY_BUDGET: usize = 2000;

/// One run plus every oracle score in call order.
struct Scored {
    outcome: RunOutcome,
    scores: Vec<f64>,
}

fn rediscovery(ga: &GaConfig, seed: u64) -> Scored {
    let target = RediscoveryOracle::new("rediscovery", REDISCOVERY_TARGET).unwrap();
    let oracle = Recording::new(&target);
    let pool = prepare_corpus(corpus());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcome = run(bundled_model(), &oracle, &pool, ga, &GuidanceConfig::default(), &[], &mut rng).unwrap();
    let scores = oracle
        .seen
        .into_inner()
        .unwrap()
        .iter()
        .map(|s| target.score(s).unwrap())
        .collect();
    Scored { outcome, scores }
}

/// Oracle calls until the first score of at least `threshold`.
fn calls_to_reach(scores: &[f64], threshold: f64) -> Option<usize> {
    scores.iter().position(|&s| s >= threshold).map(|i| i + 1)
}

/// Default-configuration runs and the random-sampling baseline, shared by
/// criteria 7 and 8.
fn rediscovery_runs() -> &'static RediscoveryRuns {
    static RUNS: OnceLock<RediscoveryRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let full = GaConfig {
            budget: REDISCOVERY_BUDGET,
            ..Default::default()
        };
        let random = GaConfig {
            budget: REDISCOVERY_BUDGET,
            init_pool_size: REDISCOVERY_BUDGET,
            ..Default::default()
        };
        RediscoveryRuns {
            guided: (0..SEEDS).map(|s| rediscovery(&full, s)).collect(),
            random: (0..SEEDS).map(|s| rediscovery(&random, s)).collect(),
        }
    })
}

#[test]
fn criterion_07_guided_optimizer_rediscovers_a_held_out_target() {
    assert!(!corpus().iter().any(|s| canonicalize(s).ok().as_deref() == Some(REDISCOVERY_TARGET)));
    bundled_model();
    let _g = exclusive();
    let started = Instant::now();
    let runs = rediscovery_runs();
    let mut hits = 0;
    let mut margins = 0;
    let mut rows = Vec::new();
    for (g, r) in runs.guided.iter().zip(&runs.random) {
        let (g, r) = (&g.outcome, &r.outcome);
        let top1 = g.top[0].score;
        let auc = auc_topk(&g.records, REDISCOVERY_BUDGET).unwrap();
        let base = auc_topk(&r.records, REDISCOVERY_BUDGET).unwrap();
        hits += usize::from(top1 >= 0.8 && g.oracle_calls <= REDISCOVERY_BUDGET);
        margins += usize::from(auc - base >= 0.05);
        rows.push(format!("{top1:.2}/{auc:.3}/{base:.3}"));
    }
    finish(
        7,
        hits >= 4 && margins >= 4,
        started,
        Some(Duration::from_secs(900)),
        format!(
            "top-1 >= 0.8 in {hits}/5, AUC margin >= 0.05 in {margins}/5 (top-1/AUC/random AUC: {})",
            rows.join(" ")
        ),
    );
}

#[test]
fn criterion_08_crossover_and_diversity_do_not_hurt() {
    bundled_model();
    let _g = exclusive();
    let started = Instant::now();
    let full = &rediscovery_runs().guided;
    let guided_only = GaConfig {
        budget: REDISCOVERY_BUDGET,
        crossover_enabled: false,
        exploration_candidates: 0,
        diversity_guides: 0,
        ..Default::default()
    };
    let ablated: Vec<Scored> = (0..SEEDS).map(|s| rediscovery(&guided_only, s)).collect();
    let mean_auc = |runs: &[Scored]| {
        runs.iter()
            .map(|r| auc_topk(&r.outcome.records, REDISCOVERY_BUDGET).unwrap())
            .sum::<f64>()
            / runs.len() as f64
    };
    let (a_full, a_gg) = (mean_auc(full), mean_auc(&ablated));
    finish(
        8,
        a_full >= a_gg,
        started,
        Some(Duration::from_secs(1800)),
        format!("mean AUC with crossover and diversity {a_full:.4}, guided generation only {a_gg:.4}"),
    );
}

#[test]
fn optimizer_reaches_threshold_sooner_than_random_sampling() {
    bundled_model();
    let _g = exclusive();
    let runs = rediscovery_runs();
    let threshold = 0.8;
    let never = REDISCOVERY_BUDGET + 1;
    let sooner = runs
        .guided
        .iter()
        .zip(&runs.random)
        .filter(|(g, r)| {
            calls_to_reach(&g.scores, threshold).unwrap_or(never) < calls_to_reach(&r.scores, threshold).unwrap_or(never)
        })
        .count();
    assert!(sooner >= 4, "guided reached {threshold} first in only {sooner} of {SEEDS} seeds");
}

/// Unit-step integration: call `c` (1-based) carries the value of the first
/// record whose budget reaches `c`, or of the last record.
fn brute_force_auc(records: &[RunRecord], budget: usize) -> f64 {
    let mut total = 0.0;
    for c in 1..=budget {
        let r = records
            .iter()
            .find(|r| r.budget_spent >= c)
            .unwrap_or(records.last().unwrap());
        total += r.avg_topk;
    }
    total / budget as f64
}

#[test]
fn criterion_09_auc_matches_brute_force_integration() {
    let _g = exclusive();
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let budget = rng.random_range(1..=3000);
        let n = rng.random_range(1..=60);
        let mut spent = 0;
        let mut value: f64 = 0.0;
        let records: Vec<RunRecord> = (0..n)
            .map(|generation| {
                spent = (spent + rng.random_range(0..=budget / 10 + 1)).min(budget);
                value = (value + rng.random_range(0.0..0.1)).min(1.0);
                RunRecord {
                    generation,
                    budget_spent: spent,
                    avg_topk: value,
                }
            })
            .collect();
        let diff = (auc_topk(&records, budget).unwrap() - brute_force_auc(&records, budget)).abs();
        worst = worst.max(diff);
    }
    finish(
        9,
        worst <= 1e-12,
        started,
        None,
        format!("100 trajectories, max deviation {worst:.2e}"),
    );
}

#[test]
fn criterion_10_parser_canonicalizer_and_similarity_suites() {
    let _g = exclusive();
    let started = Instant::now();
    let molecules = corpus();
    let mut not_isomorphic = 0;
    let mut not_idempotent = 0;
    let mut graphs = Vec::with_capacity(molecules.len());
    for smi in molecules {
        let g = parse(smi).unwrap();
        let canon = write_canonical(&g);
        let back = parse(&canon).unwrap();
        not_isomorphic += usize::from(!isomorphic(&g, &back));
        not_idempotent += usize::from(canonicalize(&canon).unwrap() != canon);
        graphs.push(g);
    }
    let fps: Vec<_> = graphs.iter().map(fingerprint).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut bad_pairs = 0;
    for _ in 0..10_000 {
        let (a, b) = (&fps[rng.random_range(0..fps.len())], &fps[rng.random_range(0..fps.len())]);
        let ab = tanimoto(a, b).unwrap();
        let ok = ab == tanimoto(b, a).unwrap()
            && (0.0..=1.0).contains(&ab)
            && tanimoto(a, a).unwrap() == 1.0;
        bad_pairs += usize::from(!ok);
    }
    finish(
        10,
        not_isomorphic == 0 && not_idempotent == 0 && bad_pairs == 0,
        started,
        None,
        format!(
            "{} molecules: {not_isomorphic} round-trip mismatches, {not_idempotent} unstable canonical forms; {bad_pairs} of 10000 pairs violate similarity axioms",
            molecules.len()
        ),
    );
}

#[test]
fn criterion_11_remote_model_reproduces_bundled_run() {
    let model = bundled_model();
    let pool = prepare_corpus(corpus());
    let _g = exclusive();
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    std::fs::write(&path, model.to_json()).unwrap();
    let endpoint: Endpoint = format!("stdio:{} model {}", env!("CARGO_BIN_EXE_molguide-stub"), path.display())
        .parse()
        .unwrap();
    let remote = RemoteModel::connect(&endpoint, DEFAULT_TIMEOUT).unwrap();
    let oracle = RediscoveryOracle::new("rediscovery", &heldout()[1]).unwrap();
    let ga = GaConfig {
        budget: 600,
        ..Default::default()
    };
    let guidance = GuidanceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let local = run(model, &oracle, &pool, &ga, &guidance, &[], &mut rng).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let served = run(&remote, &oracle, &pool, &ga, &guidance, &[], &mut rng).unwrap();
    finish(
        11,
        local.records == served.records && local.top == served.top,
        started,
        None,
        format!(
            "{} records over {} oracle calls, bundled and served runs {}",
            local.records.len(),
            local.oracle_calls,
            if local.records == served.records { "identical" } else { "differ" }
        ),
    );
}
