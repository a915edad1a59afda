//! Helpers shared by the integration tests: bundled data, an independent
//! graph isomorphism check, and the two statistical tests.

#![allow(dead_code)]

use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;

use molguide::policy::NGramModel;
use molguide::smiles::{read_corpus, MolGraph, Vocab};
use petgraph::graph::UnGraph;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn corpus() -> &'static [String] {
    static CORPUS: OnceLock<Vec<String>> = OnceLock::new();
    CORPUS.get_or_init(|| {
        read_corpus(&std::fs::read_to_string(data_path("corpus.smi")).expect("bundled corpus"))
    })
}

pub fn heldout() -> Vec<String> {
    read_corpus(&std::fs::read_to_string(data_path("heldout.smi")).expect("bundled targets"))
}

/// The bundled model at default order and smoothing, trained once per test
/// binary.
pub fn bundled_model() -> &'static NGramModel {
    static MODEL: OnceLock<NGramModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let c = corpus();
        let vocab = Vocab::from_corpus(c.iter().map(String::as_str)).unwrap();
        NGramModel::train(c, NGramModel::DEFAULT_ORDER, NGramModel::DEFAULT_SMOOTHING, vocab).unwrap()
    })
}

/// Labelled-graph isomorphism through petgraph's VF2, independent of the
/// canonical writer.
pub fn isomorphic(a: &MolGraph, b: &MolGraph) -> bool {
    let to_pg = |g: &MolGraph| {
        let mut pg = UnGraph::new_undirected();
        let nodes: Vec<_> = g.atoms().iter().map(|&atom| pg.add_node(atom)).collect();
        for bond in g.bonds() {
            pg.add_edge(nodes[bond.a], nodes[bond.b], bond.order);
        }
        pg
    };
    let (ga, gb) = (to_pg(a), to_pg(b));
    petgraph::algo::is_isomorphic_matching(&ga, &gb, |x, y| x == y, |x, y| x == y)
}

/// One-sided Mann–Whitney U test of `x` tending to exceed `y`; normal
/// approximation with tie and continuity corrections. Returns the p-value.
pub fn mann_whitney_greater(x: &[f64], y: &[f64]) -> f64 {
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let mut all: Vec<(f64, bool)> = x
        .iter()
        .map(|&v| (v, true))
        .chain(y.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = all.len();
    let mut rank_sum_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_x += shared * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_x - n1 * (n1 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let nn = n1 + n2;
    let var = n1 * n2 / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = (u - mean - 0.5) / var.sqrt();
    1.0 - Normal::new(0.0, 1.0).unwrap().cdf(z)
}

/// Chi-square test of homogeneity between two count vectors over the same
/// categories. Categories with expected count below 5 in either sample are
/// pooled into one. Returns `(statistic, degrees of freedom, p-value)`.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> (f64, usize, f64) {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let total = na + nb;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if col * na.min(nb) / total < 5.0 {
            pooled.0 += x as f64;
            pooled.1 += y as f64;
        } else {
            cells.push((x as f64, y as f64));
        }
    }
    if pooled.0 + pooled.1 > 0.0 {
        cells.push(pooled);
    }
    let stat: f64 = cells
        .iter()
        .map(|&(x, y)| {
            let col = x + y;
            let (ea, eb) = (col * na / total, col * nb / total);
            (x - ea).powi(2) / ea + (y - eb).powi(2) / eb
        })
        .sum();
    let df = cells.len().saturating_sub(1).max(1);
    let p = 1.0 - ChiSquared::new(df as f64).unwrap().cdf(stat);
    (stat, df, p)
}

/// Writes one result line straight to stderr, bypassing test output
/// capture so that it appears in every run.
pub fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {criterion:>2}: {verdict}  {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}
