//! Scoring functions. Optimizers see an oracle only through [`Oracle`].

use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::adapters::{AdapterError, Endpoint, Session, DEFAULT_TIMEOUT, PROTOCOL_VERSION};
use crate::fingerprint::{fingerprint, tanimoto, Fingerprint};
use crate::smiles::{parse, Formula, SmilesError};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle protocol error: {0}")]
    Protocol(String),
    #[error("oracle timed out: {0}")]
    Timeout(String),
    #[error("could not reach oracle: {0}")]
    Connect(String),
    #[error("invalid oracle definition: {0}")]
    InvalidDefinition(String),
    #[error("invalid target: {0}")]
    InvalidTarget(#[from] SmilesError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<AdapterError> for OracleError {
    fn from(e: AdapterError) -> Self {
        match e {
            AdapterError::Timeout(m) => OracleError::Timeout(m),
            AdapterError::Connect { endpoint, reason } => {
                OracleError::Connect(format!("{endpoint}: {reason}"))
            }
            AdapterError::Io(e) => OracleError::Io(e),
            other => OracleError::Protocol(other.to_string()),
        }
    }
}

/// Black-box molecule scorer with values in [0, 1].
pub trait Oracle: Send + Sync {
    fn name(&self) -> &str;

    fn score(&self, smiles: &str) -> Result<f64, OracleError>;
}

fn fp_of(smiles: &str) -> Option<Fingerprint> {
    parse(smiles).ok().map(|g| fingerprint(&g))
}

/// Tanimoto similarity to a hidden target.
pub struct RediscoveryOracle {
    name: String,
    target: Fingerprint,
}

impl RediscoveryOracle {
    pub fn new(name: impl Into<String>, target_smiles: &str) -> Result<Self, OracleError> {
        Ok(RediscoveryOracle {
            name: name.into(),
            target: fingerprint(&parse(target_smiles)?),
        })
    }
}

impl Oracle for RediscoveryOracle {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, smiles: &str) -> Result<f64, OracleError> {
        Ok(fp_of(smiles).map_or(0.0, |f| {
            tanimoto(&f, &self.target).expect("default widths")
        }))
    }
}

/// `exp(-Σ_e |n_e - target_e| / 2)` over element counts including H.
pub struct IsomerOracle {
    name: String,
    target: Formula,
}

impl IsomerOracle {
    pub fn new(name: impl Into<String>, target: Formula) -> Result<Self, OracleError> {
        if target.is_empty() {
            return Err(OracleError::InvalidDefinition("empty target formula".into()));
        }
        Ok(IsomerOracle {
            name: name.into(),
            target,
        })
    }
}

impl Oracle for IsomerOracle {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, smiles: &str) -> Result<f64, OracleError> {
        Ok(parse(smiles).map_or(0.0, |g| {
            (-(g.formula().distance(&self.target) as f64) / 2.0).exp()
        }))
    }
}

/// Geometric mean of the similarities to two targets.
pub struct MedianOracle {
    name: String,
    targets: [Fingerprint; 2],
}

impl MedianOracle {
    pub fn new(name: impl Into<String>, a: &str, b: &str) -> Result<Self, OracleError> {
        Ok(MedianOracle {
            name: name.into(),
            targets: [fingerprint(&parse(a)?), fingerprint(&parse(b)?)],
        })
    }
}

impl Oracle for MedianOracle {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, smiles: &str) -> Result<f64, OracleError> {
        Ok(fp_of(smiles).map_or(0.0, |f| {
            let a = tanimoto(&f, &self.targets[0]).expect("default widths");
            let b = tanimoto(&f, &self.targets[1]).expect("default widths");
            (a * b).sqrt()
        }))
    }
}

/// Returns the same value for every parseable molecule.
pub struct ConstantOracle {
    name: String,
    value: f64,
}

impl ConstantOracle {
    pub fn new(name: impl Into<String>, value: f64) -> Result<Self, OracleError> {
        if !(0.0..=1.0).contains(&value) {
            return Err(OracleError::InvalidDefinition(format!(
                "constant {value} outside [0, 1]"
            )));
        }
        Ok(ConstantOracle {
            name: name.into(),
            value,
        })
    }
}

impl Oracle for ConstantOracle {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, smiles: &str) -> Result<f64, OracleError> {
        Ok(if parse(smiles).is_ok() { self.value } else { 0.0 })
    }
}

/// Oracle served out of process over the JSON-lines protocol.
pub struct ExternalOracle {
    name: String,
    session: Mutex<Session>,
}

impl ExternalOracle {
    pub fn connect(endpoint: &Endpoint, timeout: Duration) -> Result<Self, OracleError> {
        Self::from_session(Session::connect(endpoint, timeout)?)
    }

    pub fn from_session(mut session: Session) -> Result<Self, OracleError> {
        let reply = session.request(&json!({ "op": "handshake", "version": PROTOCOL_VERSION }))?;
        let version = reply.get("version").and_then(Value::as_u64);
        if version != Some(PROTOCOL_VERSION as u64) {
            return Err(OracleError::Protocol(format!(
                "unsupported protocol version {version:?}"
            )));
        }
        let name = reply
            .get("name")
            .and_then(Value::as_str)
            .unwrap_or("external")
            .to_owned();
        Ok(ExternalOracle {
            name,
            session: Mutex::new(session),
        })
    }
}

impl Oracle for ExternalOracle {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, smiles: &str) -> Result<f64, OracleError> {
        let reply = self
            .session
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .request(&json!({ "op": "score", "smiles": smiles }))?;
        match reply.get("score").and_then(Value::as_f64) {
            Some(x) if (0.0..=1.0).contains(&x) => Ok(x),
            Some(x) => Err(OracleError::Protocol(format!("score {x} outside [0, 1]"))),
            None => Err(OracleError::Protocol("response lacks a numeric score".into())),
        }
    }
}

/// Oracle definition file: `{"type", "name", "params"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDefinition {
    #[serde(rename = "type")]
    pub kind: String,
    pub name: String,
    #[serde(default)]
    pub params: OracleParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_smiles: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<f64>,
}

impl OracleDefinition {
    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        serde_json::from_str(text).map_err(|e| OracleError::InvalidDefinition(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn param<'a, T>(&self, v: &'a Option<T>, key: &str) -> Result<&'a T, OracleError> {
        v.as_ref().ok_or_else(|| {
            OracleError::InvalidDefinition(format!("{} oracle needs params.{key}", self.kind))
        })
    }

    pub fn build(&self) -> Result<Box<dyn Oracle>, OracleError> {
        let p = &self.params;
        Ok(match self.kind.as_str() {
            "rediscovery" => Box::new(RediscoveryOracle::new(
                &self.name,
                self.param(&p.target_smiles, "target_smiles")?,
            )?),
            "isomer" => {
                let f = self.param(&p.formula, "formula")?;
                Box::new(IsomerOracle::new(&self.name, f.parse()?)?)
            }
            "median" => {
                let t = self.param(&p.targets, "targets")?;
                if t.len() != 2 {
                    return Err(OracleError::InvalidDefinition(
                        "median oracle needs exactly two targets".into(),
                    ));
                }
                Box::new(MedianOracle::new(&self.name, &t[0], &t[1])?)
            }
            "constant" => Box::new(ConstantOracle::new(
                &self.name,
                *self.param(&p.value, "value")?,
            )?),
            "external" => {
                let endpoint: Endpoint = self.param(&p.endpoint, "endpoint")?.parse()?;
                let timeout = p
                    .timeout_secs
                    .map_or(DEFAULT_TIMEOUT, Duration::from_secs_f64);
                Box::new(ExternalOracle::connect(&endpoint, timeout)?)
            }
            other => {
                return Err(OracleError::InvalidDefinition(format!(
                    "unknown oracle type {other:?}"
                )))
            }
        })
    }

    /// Target molecules named by the definition, for target-seeded runs.
    pub fn target_molecules(&self) -> Vec<String> {
        let p = &self.params;
        p.target_smiles
            .iter()
            .cloned()
            .chain(p.targets.iter().flatten().cloned())
            .collect()
    }
}
