use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use chrono::Utc;
use molguide::fingerprint::{fingerprint, tanimoto};
use molguide::ga::{render_run_config, GaConfig};
use molguide::guidance::{GuidanceConfig, GuideSet, GuidedSampler};
use molguide::policy::{sample_unconditional, PolicyModel};
use molguide::smiles::{canonicalize, parse, read_corpus};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::flags::GuidanceFlags;
use crate::manifest::{InputRef, RunManifest, MANIFEST_FILE};
use crate::support::{
    create_dir, input, load_model, model_arg_missing, read_text, runtime, sha256_hex,
    write_atomic, CmdResult,
};

#[derive(clap::Args)]
pub struct Args {
    /// Model file, or a `stdio:`/`tcp://` endpoint serving one.
    #[arg(long, env = "MOLGUIDE_MODEL")]
    model: Option<String>,
    /// Guide molecules, one SMILES per line; each is a separate target.
    #[arg(long)]
    guides: PathBuf,
    /// Generations per guide.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for generations, report and manifest.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    guidance: GuidanceFlags,
}

/// Top-k statistics of one guide's unique valid generations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub guide: usize,
    pub guide_smiles: String,
    pub k: usize,
    /// Molecules entering the statistic: `min(k, unique valid)`.
    pub count: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// `1, 10, 100, ...` up to `n`.
pub fn report_ks(n: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |k| k.checked_mul(10))
        .take_while(|&k| k <= n)
        .collect()
}

/// Rows for each `k` from similarities of distinct molecules.
pub fn report_rows(guide: usize, guide_smiles: &str, mut sims: Vec<f64>, n: usize) -> Vec<ReportRow> {
    sims.sort_by(|a, b| b.total_cmp(a));
    report_ks(n)
        .into_iter()
        .map(|k| {
            let top = &sims[..k.min(sims.len())];
            let (min, mean, max) = if top.is_empty() {
                (0.0, 0.0, 0.0)
            } else {
                (
                    top[top.len() - 1],
                    top.iter().sum::<f64>() / top.len() as f64,
                    top[0],
                )
            };
            ReportRow {
                guide,
                guide_smiles: guide_smiles.to_owned(),
                k,
                count: top.len(),
                min,
                mean,
                max,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct GenerationRow<'a> {
    guide: usize,
    sample: usize,
    smiles: &'a str,
    canonical: &'a str,
    tanimoto: Option<f64>,
}

pub fn run(args: Args) -> CmdResult {
    let started = Utc::now();
    let spec = args.model.as_deref().ok_or_else(model_arg_missing)?;
    if args.n == 0 {
        return Err(input(anyhow!("--n must be >= 1")));
    }
    let mut ga = GaConfig::default();
    let mut cfg = GuidanceConfig::default();
    args.guidance.apply(&mut ga, &mut cfg)?;
    cfg.validate().map_err(input)?;

    let guides_text = read_text(&args.guides)?;
    let guides = read_corpus(&guides_text);
    if guides.is_empty() {
        return Err(input(anyhow!("{} contains no guides", args.guides.display())));
    }
    let guide_fps = guides
        .iter()
        .enumerate()
        .map(|(i, g)| {
            parse(g)
                .map(|m| fingerprint(&m))
                .with_context(|| format!("guide {} ({g:?}) does not parse", i + 1))
                .map_err(input)
        })
        .collect::<CmdResult<Vec<_>>>()?;
    let loaded = load_model(spec)?;
    let model: &dyn PolicyModel = &*loaded.model;
    let unconditional = cfg.alpha == 0.0;

    create_dir(&args.out)?;
    let mut table = csv::WriterBuilder::new().delimiter(b'\t').from_writer(Vec::new());
    let mut report = Vec::new();
    for (gi, guide) in guides.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        rng.set_stream(gi as u64);
        let mut sampler = if unconditional {
            None
        } else {
            let set = GuideSet::from_smiles(&[guide.as_str()], model.vocab())
                .with_context(|| format!("guide {}", gi + 1))
                .map_err(input)?;
            Some(GuidedSampler::new(model, set, cfg.clone()).map_err(input)?)
        };
        let mut seen = HashSet::new();
        let mut sims = Vec::new();
        for sample in 0..args.n {
            let (smiles, canonical) = match sampler.as_mut() {
                Some(s) => {
                    let g = s.generate(&mut rng).map_err(runtime)?;
                    (g.smiles, g.canonical)
                }
                None => {
                    let toks = sample_unconditional(model, cfg.tau, cfg.max_len, &mut rng)
                        .map_err(runtime)?;
                    let smiles = model.vocab().detokenize(&toks);
                    let canonical = canonicalize(&smiles).ok().filter(|_| !smiles.is_empty());
                    (smiles, canonical)
                }
            };
            let sim = canonical.as_deref().map(|c| {
                let fp = fingerprint(&parse(c).expect("canonical output parses"));
                tanimoto(&fp, &guide_fps[gi]).expect("same fingerprint shape")
            });
            if let (Some(c), Some(s)) = (&canonical, sim) {
                if seen.insert(c.clone()) {
                    sims.push(s);
                }
            }
            table
                .serialize(GenerationRow {
                    guide: gi,
                    sample,
                    smiles: &smiles,
                    canonical: canonical.as_deref().unwrap_or(""),
                    tanimoto: sim,
                })
                .map_err(runtime)?;
        }
        report.extend(report_rows(gi, guide, sims, args.n));
    }

    let generations = args.out.join("generations.tsv");
    let report_path = args.out.join("report.csv");
    write_atomic(&generations, &table.into_inner().map_err(|e| runtime(anyhow!("{e}")))?)?;
    let mut rw = csv::Writer::from_writer(Vec::new());
    for row in &report {
        rw.serialize(row).map_err(runtime)?;
    }
    write_atomic(&report_path, &rw.into_inner().map_err(|e| runtime(anyhow!("{e}")))?)?;
    print!("{}", render_report(&report));

    let mut m = RunManifest::new("generate", started);
    m.seed = Some(args.seed);
    m.set("mode", if unconditional { "unconditional" } else { "guided" });
    m.set("n", args.n);
    for line in render_run_config(&ga, &cfg, false).lines() {
        let (k, v) = line.split_once(" = ").expect("rendered as key = value");
        if GUIDANCE_KEYS.contains(&k) {
            m.set(k, v);
        }
    }
    m.model = Some(InputRef {
        source: loaded.source,
        sha256: loaded.hash,
    });
    m.inputs.insert(
        "guides".into(),
        InputRef {
            source: args.guides.display().to_string(),
            sha256: sha256_hex(guides_text.as_bytes()),
        },
    );
    m.outputs.insert("generations".into(), path_str(&generations));
    m.outputs.insert("report".into(), path_str(&report_path));
    m.finish(&args.out.join(MANIFEST_FILE))
}

const GUIDANCE_KEYS: [&str; 8] = [
    "alpha", "tau", "standardize", "top_k", "max_len", "rff_dim", "rff_temp", "rff_seed",
];

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn render_report(rows: &[ReportRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>5} {:>7} {:>6} {:>7} {:>7} {:>7}  guide", "guide", "k", "count", "min", "mean", "max");
    for r in rows {
        let _ = writeln!(
            s,
            "{:>5} {:>7} {:>6} {:>7.4} {:>7.4} {:>7.4}  {}",
            r.guide, r.k, r.count, r.min, r.mean, r.max, r.guide_smiles
        );
    }
    s
}
