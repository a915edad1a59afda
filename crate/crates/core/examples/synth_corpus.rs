//! Regenerates `data/corpus.smi` and `data/heldout.smi`.
//!
//! Molecules are assembled from a head group, a ring core with up to two
//! decorated positions, and an optional linker to a second decorated ring.
//! Held-out targets use the same grammar and never appear in the corpus, but
//! every single-component variant of a target is kept so that each target
//! has close scaffold relatives.
//!
//! Usage: `cargo run --release --example synth_corpus -- [OUT_DIR] [SIZE]`

use std::collections::HashSet;
use std::path::PathBuf;

use molguide::smiles::canonicalize;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HEADS: &[&str] = &[
    "", "C", "CC", "CCC", "CC(C)", "O", "CO", "N", "CN", "CN(C)", "F", "Cl", "Br", "OC(=O)",
    "NC(=O)", "COC(=O)", "N#C", "CC(=O)", "FC(F)(F)", "OCC", "NCC", "CS",
];

/// Ring cores written from their attachment atom; `{}` marks a decorable
/// position, `9` and `8` are ring labels renumbered on use.
const CORES: &[&str] = &[
    "c9c{}c{}c{}cc9",
    "c9c{}cnc{}c9",
    "c9ccc{}nc9",
    "c9cnc{}nc9",
    "c9cc{}cs9",
    "c9cc{}co9",
    "C9CC{}CC{}C9",
    "N9CCC{}CC9",
    "N9CCOCC9",
    "N9CCN{}CC9",
    "C9CC9",
    "c9ccc8ccccc8c9",
    "c9ccc8[nH]ccc8c9",
    "C9CCN{}C9",
];

const SUBS: &[&str] = &[
    "C", "CC", "C(C)C", "O", "OC", "OCC", "N", "NC", "N(C)C", "F", "Cl", "Br", "C(=O)O",
    "C(=O)N", "C(=O)OC", "C(=O)C", "C#N", "C(F)(F)F", "CO", "CCO", "CN", "NC(=O)C", "SC",
];

const LINKERS: &[&str] = &[
    "", "C", "CC", "O", "N", "C(=O)N", "NC(=O)", "OC", "CO", "S", "CN", "NC", "C(=O)", "CCN",
];

/// Indices into the tables above; `None` leaves a slot or the second ring
/// empty.
#[derive(Clone, PartialEq, Eq, Hash)]
struct Recipe {
    head: usize,
    core: usize,
    subs: [Option<usize>; 3],
    link: Option<(usize, usize, [Option<usize>; 3])>,
}

fn slot_count(core: &str) -> usize {
    core.matches("{}").count()
}

fn decorate(core: &str, subs: &[Option<usize>; 3], labels: (char, char), tail: Option<String>) -> String {
    let core = core.replace('9', &labels.0.to_string()).replace('8', &labels.1.to_string());
    let mut out = String::new();
    let mut parts = core.split("{}");
    out.push_str(parts.next().unwrap());
    let mut tail = tail;
    for (i, part) in parts.enumerate() {
        // the linked ring hangs off the first empty slot
        match (subs[i], tail.take()) {
            (Some(s), t) => {
                tail = t;
                out.push_str(&format!("({})", SUBS[s]));
            }
            (None, Some(t)) => out.push_str(&format!("({t})")),
            (None, None) => {}
        }
        out.push_str(part);
    }
    if let Some(t) = tail {
        // no free slot: attach after the whole core
        out.push_str(&format!(".{t}"));
    }
    out
}

fn render(r: &Recipe) -> Option<String> {
    let second = r.link.as_ref().map(|(l, c, s)| {
        format!("{}{}", LINKERS[*l], decorate(CORES[*c], s, ('2', '4'), None))
    });
    let body = decorate(CORES[r.core], &r.subs, ('1', '3'), second);
    if body.contains('.') {
        return None;
    }
    Some(format!("{}{}", HEADS[r.head], body))
}

fn random_subs(rng: &mut ChaCha8Rng, core: usize) -> [Option<usize>; 3] {
    let mut s = [None; 3];
    for slot in s.iter_mut().take(slot_count(CORES[core])) {
        if rng.random_bool(0.35) {
            *slot = Some(rng.random_range(0..SUBS.len()));
        }
    }
    s
}

fn random_recipe(rng: &mut ChaCha8Rng) -> Recipe {
    let core = rng.random_range(0..CORES.len());
    let link = rng.random_bool(0.6).then(|| {
        let c = rng.random_range(0..CORES.len());
        (rng.random_range(0..LINKERS.len()), c, random_subs(rng, c))
    });
    Recipe {
        head: rng.random_range(0..HEADS.len()),
        core,
        subs: random_subs(rng, core),
        link,
    }
}

/// Recipes differing from `r` in exactly one component.
fn neighbors(r: &Recipe) -> Vec<Recipe> {
    let mut out = Vec::new();
    for h in 0..HEADS.len() {
        out.push(Recipe { head: h, ..r.clone() });
    }
    for i in 0..slot_count(CORES[r.core]) {
        for s in std::iter::once(None).chain((0..SUBS.len()).map(Some)) {
            let mut n = r.clone();
            n.subs[i] = s;
            out.push(n);
        }
    }
    if let Some((l, c, s)) = r.link {
        for l2 in 0..LINKERS.len() {
            out.push(Recipe {
                link: Some((l2, c, s)),
                ..r.clone()
            });
        }
        for i in 0..slot_count(CORES[c]) {
            for x in std::iter::once(None).chain((0..SUBS.len()).map(Some)) {
                let mut s2 = s;
                s2[i] = x;
                out.push(Recipe {
                    link: Some((l, c, s2)),
                    ..r.clone()
                });
            }
        }
    }
    out.retain(|n| n != r);
    out
}

fn targets() -> Vec<Recipe> {
    let find = |table: &[&str], s: &str| table.iter().position(|t| *t == s).unwrap();
    let sub = |s: &str| Some(find(SUBS, s));
    vec![
        // amide-linked tolyl / pyridyl
        Recipe {
            head: find(HEADS, "C"),
            core: 0,
            subs: [None, None, None],
            link: Some((find(LINKERS, "NC(=O)"), 2, [None; 3])),
        },
        // methoxyphenethyl morpholine
        Recipe {
            head: find(HEADS, "CO"),
            core: 0,
            subs: [None, None, None],
            link: Some((find(LINKERS, "CC"), 8, [None; 3])),
        },
        // fluorinated diaryl ether acid
        Recipe {
            head: find(HEADS, "OC(=O)"),
            core: 0,
            subs: [None, None, None],
            link: Some((find(LINKERS, "O"), 0, [sub("F"), None, None])),
        },
        // chlorophenyl piperidine
        Recipe {
            head: find(HEADS, "CC(C)"),
            core: 7,
            subs: [None, None, None],
            link: Some((find(LINKERS, ""), 0, [None, None, sub("Cl")])),
        },
        // cyano benzamide of cyclohexylamine
        Recipe {
            head: find(HEADS, "N#C"),
            core: 0,
            subs: [None, None, None],
            link: Some((find(LINKERS, "C(=O)N"), 6, [None; 3])),
        },
    ]
}

fn main() {
    let mut args = std::env::args().skip(1);
    let out_dir = PathBuf::from(args.next().unwrap_or_else(|| "data".into()));
    let size: usize = args.next().map_or(10_000, |s| s.parse().expect("SIZE must be an integer"));
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_607);

    let targets = targets();
    let held: Vec<String> = targets
        .iter()
        .map(|t| canonicalize(&render(t).unwrap()).expect("target parses"))
        .collect();
    let excluded: HashSet<&String> = held.iter().collect();

    let mut seen = HashSet::new();
    let mut corpus = Vec::new();
    // stored canonical so that models and guides share one spelling
    let mut push = |s: String, corpus: &mut Vec<String>| {
        if let Ok(c) = canonicalize(&s) {
            if !excluded.contains(&c) && seen.insert(c.clone()) {
                corpus.push(c);
            }
        }
    };
    for t in &targets {
        let mut rel = neighbors(t);
        rel.shuffle(&mut rng);
        for r in rel.into_iter().take(60) {
            if let Some(s) = render(&r) {
                push(s, &mut corpus);
            }
        }
    }
    while corpus.len() < size {
        if let Some(s) = render(&random_recipe(&mut rng)) {
            push(s, &mut corpus);
        }
    }
    corpus.shuffle(&mut rng);

    std::fs::create_dir_all(&out_dir).expect("create output directory");
    std::fs::write(out_dir.join("corpus.smi"), corpus.join("\n") + "\n").expect("write corpus");
    std::fs::write(out_dir.join("heldout.smi"), held.join("\n") + "\n").expect("write targets");
    eprintln!("{} corpus molecules, {} held-out targets", corpus.len(), held.len());
}
