use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use molguide::adapters::{Endpoint, RemoteModel, DEFAULT_TIMEOUT};
use molguide::policy::{NGramModel, PolicyModel};
use sha2::{Digest, Sha256};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure {
        code: EXIT_INPUT,
        error: e.into(),
    }
}

pub fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        error: e.into(),
    }
}

pub fn read_text(path: &Path) -> CmdResult<String> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(input)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CmdResult {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)
        .and_then(|()| fs::rename(&tmp, path))
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(runtime)
}

pub fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(runtime)
}

/// A policy together with a fingerprint of where it came from.
pub struct LoadedModel {
    pub model: Box<dyn PolicyModel>,
    pub source: String,
    pub hash: String,
}

/// Loads a model file, or connects to a served model when `spec` starts
/// with `stdio:` or `tcp://`.
pub fn load_model(spec: &str) -> CmdResult<LoadedModel> {
    if spec.starts_with("stdio:") || spec.starts_with("tcp://") {
        let endpoint: Endpoint = spec.parse().map_err(input)?;
        let remote = RemoteModel::connect(&endpoint, remote_timeout())
            .with_context(|| format!("model endpoint {spec}"))
            .map_err(runtime)?;
        // the handshake determines everything the client relies on
        let identity = serde_json::to_vec(&(remote.vocab().tokens(), remote.embed_dim()))
            .expect("serializable");
        return Ok(LoadedModel {
            hash: sha256_hex(&identity),
            source: spec.to_owned(),
            model: Box::new(remote),
        });
    }
    let path = Path::new(spec);
    let text = read_text(path)?;
    let model = NGramModel::from_json(&text)
        .with_context(|| format!("cannot load model {}", path.display()))
        .map_err(input)?;
    Ok(LoadedModel {
        hash: sha256_hex(text.as_bytes()),
        source: spec.to_owned(),
        model: Box::new(model),
    })
}

fn remote_timeout() -> Duration {
    std::env::var("MOLGUIDE_TIMEOUT_SECS")
        .ok()
        .and_then(|s| s.parse::<f64>().ok())
        .filter(|s| *s > 0.0)
        .map_or(DEFAULT_TIMEOUT, Duration::from_secs_f64)
}

pub fn model_arg_missing() -> Failure {
    input(anyhow!("no model given: pass --model or set MOLGUIDE_MODEL"))
}
