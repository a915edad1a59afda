use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use super::transport::number_array;
use super::{AdapterError, Endpoint, Session, PROTOCOL_VERSION};
use crate::policy::{PolicyError, PolicyModel};
use crate::smiles::{TokenId, Vocab};

/// Policy served by an external process. Calls from several threads are
/// serialized on the single session.
#[derive(Debug)]
pub struct RemoteModel {
    session: Mutex<Session>,
    vocab: Vocab,
    embed_dim: usize,
}

fn handshake_field<'a>(v: &'a Value, field: &str) -> Result<&'a Value, AdapterError> {
    v.get(field)
        .ok_or_else(|| AdapterError::MalformedHandshake(format!("missing field {field:?}")))
}

fn handshake_uint(v: &Value, field: &str) -> Result<u64, AdapterError> {
    handshake_field(v, field)?
        .as_u64()
        .ok_or_else(|| AdapterError::MalformedHandshake(format!("{field:?} is not an unsigned integer")))
}

impl RemoteModel {
    pub fn connect(endpoint: &Endpoint, timeout: Duration) -> Result<Self, AdapterError> {
        Self::from_session(Session::connect(endpoint, timeout)?)
    }

    /// Performs the handshake on an open session.
    pub fn from_session(mut session: Session) -> Result<Self, AdapterError> {
        let reply = session
            .request(&json!({ "op": "handshake", "version": PROTOCOL_VERSION }))
            .map_err(|e| match e {
                AdapterError::Protocol(m) => AdapterError::MalformedHandshake(m),
                other => other,
            })?;
        let version = handshake_uint(&reply, "version")?;
        if version != PROTOCOL_VERSION as u64 {
            return Err(AdapterError::VersionMismatch {
                found: version as u32,
                expected: PROTOCOL_VERSION,
            });
        }
        let tokens = handshake_field(&reply, "tokens")?
            .as_array()
            .ok_or_else(|| AdapterError::MalformedHandshake("\"tokens\" is not an array".into()))?
            .iter()
            .map(|t| {
                t.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| AdapterError::MalformedHandshake(format!("token {t} is not a string")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let bos = handshake_uint(&reply, "bos")? as TokenId;
        let eos = handshake_uint(&reply, "eos")? as TokenId;
        let embed_dim = handshake_uint(&reply, "embed_dim")? as usize;
        if embed_dim == 0 {
            return Err(AdapterError::MalformedHandshake("embed_dim must be > 0".into()));
        }
        let vocab = Vocab::new(tokens, bos, eos).map_err(AdapterError::MalformedHandshake)?;
        Ok(RemoteModel {
            session: Mutex::new(session),
            vocab,
            embed_dim,
        })
    }

    fn call(&self, op: &str, field: &str, prefix: &[TokenId], len: usize) -> Result<Vec<f64>, AdapterError> {
        let reply = self
            .session
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .request(&json!({ "op": op, "tokens": prefix }))?;
        let v = number_array(&reply, field)?;
        if v.len() != len {
            return Err(AdapterError::LengthMismatch {
                expected: len,
                found: v.len(),
            });
        }
        Ok(v)
    }
}

impl PolicyModel for RemoteModel {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    fn logits(&self, prefix: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        Ok(self.call("logits", "logits", prefix, self.vocab.len())?)
    }

    fn embed(&self, prefix: &[TokenId]) -> Result<Vec<f64>, PolicyError> {
        Ok(self.call("embed", "vector", prefix, self.embed_dim)?)
    }
}
