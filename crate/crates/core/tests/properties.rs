//! Invariants checked over generated inputs and the bundled corpus.

mod common;

use molguide::fingerprint::{fingerprint, tanimoto};
use molguide::ga::{auc_topk, prepare_corpus, run, GaConfig, RunRecord};
use molguide::guidance::{tilt, GuidanceConfig};
use molguide::oracles::{ConstantOracle, IsomerOracle, MedianOracle, Oracle, RediscoveryOracle};
use molguide::policy::{softmax, PolicyModel};
use molguide::smiles::{parse, write_canonical};
use proptest::prelude::*;
use proptest::sample::{select, subsequence};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn logits(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    len.prop_flat_map(|n| prop::collection::vec(-50.0f64..50.0, n))
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(u in logits(1..=40), tau in 0.05f64..5.0) {
        let p = softmax(&u, tau);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn tilt_is_a_distribution(
        (u, s) in (2usize..=40).prop_flat_map(|n| (
            prop::collection::vec(-30.0f64..30.0, n),
            prop::collection::vec(-1.0f64..1.0, n),
        )),
        alpha in 0.0f64..=1.0,
        tau in 0.05f64..3.0,
        standardize: bool,
        top_k in prop::option::of(1usize..50),
    ) {
        let cfg = GuidanceConfig { alpha, tau, standardize, top_k, ..Default::default() };
        let p = tilt(&u, &s, &cfg).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        if let Some(k) = top_k {
            prop_assert!(p.iter().filter(|&&x| x > 0.0).count() <= k);
        }
    }

    #[test]
    fn auc_is_bounded_and_monotone(
        steps in prop::collection::vec((0usize..200, 0.0f64..0.2), 1..40),
        extra in 0usize..500,
        bump in 0.0f64..0.5,
        which in any::<prop::sample::Index>(),
    ) {
        let mut spent = 0;
        let mut value: f64 = 0.0;
        let mut records: Vec<RunRecord> = steps
            .iter()
            .enumerate()
            .map(|(generation, &(calls, gain))| {
                spent += calls;
                value = (value + gain).min(1.0);
                RunRecord { generation, budget_spent: spent, avg_topk: value }
            })
            .collect();
        let budget = spent.max(1) + extra;
        let auc = auc_topk(&records, budget).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
        let i = which.index(records.len());
        records[i].avg_topk = (records[i].avg_topk + bump).min(1.0);
        prop_assert!(auc_topk(&records, budget).unwrap() >= auc);
    }
}

fn corpus_graph() -> impl Strategy<Value = String> {
    select(common::corpus()[..2000].to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fingerprint_and_canonical_form_ignore_atom_order(smiles in corpus_graph(), seed: u64) {
        let g = parse(&smiles).unwrap();
        let mut perm: Vec<usize> = (0..g.atom_count()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let h = g.relabeled(&perm);
        prop_assert!(common::isomorphic(&g, &h));
        prop_assert_eq!(fingerprint(&g), fingerprint(&h));
        prop_assert_eq!(write_canonical(&g), write_canonical(&h));
    }

    #[test]
    fn embeddings_depend_only_on_the_prefix(
        tokens in subsequence((2u32..30).collect::<Vec<_>>(), 0..12),
        other in subsequence((2u32..30).collect::<Vec<_>>(), 0..12),
    ) {
        let model = common::bundled_model();
        let v = model.vocab().len() as u32;
        let mut p = vec![model.vocab().bos()];
        p.extend(tokens.iter().map(|t| t % v));
        let mut q = vec![model.vocab().bos()];
        q.extend(other.iter().map(|t| t % v));
        let first = model.embed(&p).unwrap();
        model.embed(&q).unwrap();
        prop_assert_eq!(&first, &model.embed(&p).unwrap());
        prop_assert_eq!(first.len(), model.embed_dim());
    }
}

#[test]
fn canonical_strings_always_tokenize() {
    let vocab = common::bundled_model().vocab();
    for smiles in common::corpus() {
        let canon = write_canonical(&parse(smiles).unwrap());
        assert!(vocab.tokenize(&canon).is_ok(), "{canon}");
    }
}

#[test]
fn corpus_similarity_is_reflexive_and_symmetric() {
    let fps: Vec<_> = common::corpus()
        .iter()
        .map(|s| fingerprint(&parse(s).unwrap()))
        .collect();
    for (i, fp) in fps.iter().enumerate() {
        assert_eq!(tanimoto(fp, fp).unwrap(), 1.0);
        let other = &fps[(i * 7919 + 13) % fps.len()];
        let t = tanimoto(fp, other).unwrap();
        assert_eq!(t, tanimoto(other, fp).unwrap());
        assert!((0.0..=1.0).contains(&t));
    }
}

/// Mix of corpus molecules, single-character corruptions of them and
/// strings of random SMILES characters.
fn fuzz_strings(n: usize, seed: u64) -> Vec<String> {
    const ALPHABET: &[u8] = b"CNOSFPIBrcl()[]=#123456789%+-@H/\\.nos ";
    let corpus = common::corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| match i % 3 {
            0 => corpus[rng.random_range(0..corpus.len())].clone(),
            1 => {
                let mut b = corpus[rng.random_range(0..corpus.len())].clone().into_bytes();
                let at = rng.random_range(0..b.len());
                b[at] = ALPHABET[rng.random_range(0..ALPHABET.len())];
                String::from_utf8(b).unwrap()
            }
            _ => {
                let len = rng.random_range(0..24);
                (0..len)
                    .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
                    .collect()
            }
        })
        .collect()
}

#[test]
fn built_in_oracles_stay_in_range_and_are_repeatable() {
    let targets = common::heldout();
    let oracles: Vec<Box<dyn Oracle>> = vec![
        Box::new(RediscoveryOracle::new("rediscovery", &targets[0]).unwrap()),
        Box::new(IsomerOracle::new("isomer", "C9H10N2O2".parse().unwrap()).unwrap()),
        Box::new(MedianOracle::new("median", &targets[1], &targets[2]).unwrap()),
        Box::new(ConstantOracle::new("constant", 0.3).unwrap()),
    ];
    let inputs = fuzz_strings(100_000, 4);
    for oracle in &oracles {
        for s in &inputs {
            let x = oracle.score(s).unwrap();
            assert!((0.0..=1.0).contains(&x), "{} scored {s:?} as {x}", oracle.name());
        }
        for s in inputs.iter().step_by(97) {
            assert_eq!(oracle.score(s).unwrap(), oracle.score(s).unwrap());
        }
    }
}

#[test]
fn best_score_never_decreases_across_generations() {
    let model = common::bundled_model();
    let pool = prepare_corpus(common::corpus());
    let target = &common::heldout()[3];
    let oracle = RediscoveryOracle::new("rediscovery", target).unwrap();
    for seed in 0..3 {
        // with report_k = 1 every record carries the current best score
        let ga = GaConfig {
            budget: 300,
            report_k: 1,
            stop_no_change: 30,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = run(model, &oracle, &pool, &ga, &GuidanceConfig::default(), &[], &mut rng).unwrap();
        assert!(out.records.windows(2).all(|w| w[1].avg_topk >= w[0].avg_topk));
        assert_eq!(out.records.last().unwrap().avg_topk, out.top[0].score);
        assert!(out.oracle_calls <= ga.budget);
    }
}
