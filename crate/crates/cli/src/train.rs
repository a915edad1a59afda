use std::path::{Path, PathBuf};

use anyhow::anyhow;
use chrono::Utc;
use molguide::policy::{NGramModel, PolicyModel};
use molguide::smiles::{read_corpus, Vocab};

use crate::manifest::{InputRef, RunManifest};
use crate::support::{input, read_text, sha256_hex, write_atomic, CmdResult};

#[derive(clap::Args)]
pub struct Args {
    /// SMILES corpus, one molecule per line.
    corpus: PathBuf,
    /// Model file to write; the manifest goes next to it.
    #[arg(long)]
    out: PathBuf,
    /// n-gram order (context length + 1).
    #[arg(long, default_value_t = NGramModel::DEFAULT_ORDER)]
    order: usize,
    /// Additive smoothing constant.
    #[arg(long, default_value_t = NGramModel::DEFAULT_SMOOTHING)]
    smoothing: f64,
}

/// `model.json` → `model.json.manifest.json`.
pub fn manifest_path(model: &Path) -> PathBuf {
    let mut p = model.as_os_str().to_owned();
    p.push(".manifest.json");
    PathBuf::from(p)
}

pub fn run(args: Args) -> CmdResult {
    let started = Utc::now();
    if args.order == 0 {
        return Err(input(anyhow!("--order must be >= 1")));
    }
    let text = read_text(&args.corpus)?;
    let corpus = read_corpus(&text);
    if corpus.is_empty() {
        return Err(input(anyhow!("{} contains no molecules", args.corpus.display())));
    }
    let vocab = Vocab::from_corpus(corpus.iter().map(String::as_str)).map_err(input)?;
    let model = NGramModel::train(&corpus, args.order, args.smoothing, vocab).map_err(input)?;
    let json = model.to_json();
    write_atomic(&args.out, json.as_bytes())?;
    println!(
        "vocabulary size {}, {} sequences",
        model.vocab().len(),
        model.sequence_count()
    );

    let mut m = RunManifest::new("train", started);
    m.set("order", args.order);
    m.set("smoothing", args.smoothing);
    m.inputs.insert(
        "corpus".into(),
        InputRef {
            source: args.corpus.display().to_string(),
            sha256: sha256_hex(text.as_bytes()),
        },
    );
    m.outputs.insert("model".into(), args.out.display().to_string());
    m.result("model_sha256", sha256_hex(json.as_bytes()));
    m.result("vocab_size", model.vocab().len());
    m.result("sequences", model.sequence_count());
    m.finish(&manifest_path(&args.out))
}
