use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use chrono::Utc;
use molguide::ga::{
    auc_topk, parse_run_config, prepare_corpus, render_run_config, run as run_ga, validate_pair,
    GaConfig, GaError, RunOutcome,
};
use molguide::guidance::GuidanceConfig;
use molguide::oracles::{OracleDefinition, OracleError};
use molguide::smiles::read_corpus;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::flags::{GaFlags, GuidanceFlags};
use crate::manifest::{InputRef, RunManifest, MANIFEST_FILE};
use crate::support::{
    create_dir, input, load_model, model_arg_missing, read_text, runtime, sha256_hex,
    write_atomic, CmdResult, Failure,
};

pub const RECORDS_FILE: &str = "records.csv";
pub const TOP_FILE: &str = "top.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const RECORDS_HEADER: [&str; 3] = ["generation", "budget_spent", "avg_topk"];

#[derive(clap::Args)]
pub struct Args {
    /// Model file, or a `stdio:`/`tcp://` endpoint serving one.
    #[arg(long, env = "MOLGUIDE_MODEL")]
    model: Option<String>,
    /// Oracle definition file (JSON).
    #[arg(long)]
    oracle: PathBuf,
    /// Molecule pool for the initial population and random exploration.
    #[arg(long)]
    corpus: PathBuf,
    /// Run configuration (`key = value` lines); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for records, top molecules and manifest.
    #[arg(long)]
    out: PathBuf,
    /// Free-form name stored in the manifest and shown by `bench`.
    #[arg(long)]
    label: Option<String>,
    /// Score the oracle's own target molecules first. Not a black-box run.
    #[arg(long)]
    target_seeded: bool,
    #[command(flatten)]
    ga: GaFlags,
    #[command(flatten)]
    guidance: GuidanceFlags,
}

fn oracle_failure(e: OracleError) -> Failure {
    match e {
        OracleError::InvalidDefinition(_) | OracleError::InvalidTarget(_) => input(e),
        other => runtime(other),
    }
}

/// Hash of everything that defines a setting except seed, budget and task.
pub fn config_hash(ga: &GaConfig, g: &GuidanceConfig, model: &str, corpus: &str, seeded: bool) -> String {
    let text = format!(
        "{}model = {model}\ncorpus = {corpus}\ntarget_seeded = {seeded}\n",
        render_run_config(ga, g, false)
    );
    sha256_hex(text.as_bytes())
}

pub fn run(args: Args) -> CmdResult {
    let started = Utc::now();
    let spec = args.model.as_deref().ok_or_else(model_arg_missing)?;
    let config_text = match &args.config {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    let (mut ga, mut guidance) = parse_run_config(&config_text)
        .map_err(|e| input(anyhow!("config line {}: {}", e.line, e.message)))?;
    args.ga.apply(&mut ga, &mut guidance)?;
    args.guidance.apply(&mut ga, &mut guidance)?;
    validate_pair(&ga, &guidance).map_err(|e| input(anyhow!("{}", e.message)))?;

    let def_text = read_text(&args.oracle)?;
    let def = OracleDefinition::from_json(&def_text)
        .with_context(|| format!("oracle definition {}", args.oracle.display()))
        .map_err(input)?;
    let corpus_text = read_text(&args.corpus)?;
    let corpus = prepare_corpus(&read_corpus(&corpus_text));
    let loaded = load_model(spec)?;
    let oracle = def.build().map_err(oracle_failure)?;
    let injected = if args.target_seeded {
        def.target_molecules()
    } else {
        Vec::new()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let result = run_ga(&*loaded.model, oracle.as_ref(), &corpus, &ga, &guidance, &injected, &mut rng);
    let (outcome, failure) = match result {
        Ok(o) => (o, None),
        Err(GaError::Oracle { source, partial }) => (*partial, Some(runtime(source))),
        Err(e @ (GaError::InvalidConfig(_) | GaError::CorpusTooSmall { .. } | GaError::BudgetExhausted { .. })) => {
            return Err(input(e))
        }
        Err(e) => return Err(runtime(e)),
    };

    create_dir(&args.out)?;
    let paths = write_outputs(&args.out, &outcome, &ga, &guidance)?;
    let auc = auc_topk(&outcome.records, ga.budget).ok();

    let corpus_hash = sha256_hex(corpus_text.as_bytes());
    let mut m = RunManifest::new("optimize", started);
    m.seed = Some(args.seed);
    m.label = args.label.clone();
    m.config_hash = Some(config_hash(&ga, &guidance, &loaded.hash, &corpus_hash, args.target_seeded));
    for line in render_run_config(&ga, &guidance, true).lines() {
        let (k, v) = line.split_once(" = ").expect("rendered as key = value");
        m.set(k, v);
    }
    m.set("target_seeded", args.target_seeded);
    m.model = Some(InputRef {
        source: loaded.source,
        sha256: loaded.hash,
    });
    m.oracle = Some(oracle.name().to_owned());
    m.inputs.insert(
        "oracle".into(),
        InputRef {
            source: args.oracle.display().to_string(),
            sha256: sha256_hex(def_text.as_bytes()),
        },
    );
    m.inputs.insert(
        "corpus".into(),
        InputRef {
            source: args.corpus.display().to_string(),
            sha256: corpus_hash,
        },
    );
    if let Some(p) = &args.config {
        m.inputs.insert(
            "config".into(),
            InputRef {
                source: p.display().to_string(),
                sha256: sha256_hex(config_text.as_bytes()),
            },
        );
    }
    for (k, p) in paths {
        m.outputs.insert(k.into(), p.display().to_string());
    }
    m.result("black_box", !args.target_seeded);
    m.result("termination", outcome.termination);
    m.result("oracle_calls", outcome.oracle_calls);
    m.result("cache_hits", outcome.cache_hits);
    m.result("generations", outcome.records.last().map_or(0, |r| r.generation));
    m.result("auc_topk", auc);
    if let Some(f) = &failure {
        m.result("error", format!("{:#}", f.error));
    }
    m.finish(&args.out.join(MANIFEST_FILE))?;

    println!(
        "oracle calls {}, termination {}, auc_top{} {}",
        outcome.oracle_calls,
        serde_json::to_value(outcome.termination).expect("serializable").as_str().unwrap_or("?"),
        ga.report_k,
        auc.map_or("n/a".into(), |a| format!("{a:.6}"))
    );
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn write_outputs(
    dir: &Path,
    outcome: &RunOutcome,
    ga: &GaConfig,
    guidance: &GuidanceConfig,
) -> CmdResult<Vec<(&'static str, PathBuf)>> {
    // header written explicitly so that an empty trajectory still has one
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(RECORDS_HEADER).map_err(runtime)?;
    for r in &outcome.records {
        w.serialize(r).map_err(runtime)?;
    }
    let records = dir.join(RECORDS_FILE);
    write_atomic(&records, &w.into_inner().map_err(|e| runtime(anyhow!("{e}")))?)?;
    let top = dir.join(TOP_FILE);
    let mut text = serde_json::to_string_pretty(&outcome.top).expect("serializable");
    text.push('\n');
    write_atomic(&top, text.as_bytes())?;
    let config = dir.join(CONFIG_FILE);
    write_atomic(&config, render_run_config(ga, guidance, true).as_bytes())?;
    Ok(vec![("records", records), ("top", top), ("config", config)])
}
