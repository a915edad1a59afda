//! Reference server side of the protocol, shared by the stub binary and
//! tests.

use std::io::{self, BufRead, Write};

use serde_json::{json, Value};

use super::PROTOCOL_VERSION;
use crate::oracles::Oracle;
use crate::policy::PolicyModel;
use crate::smiles::TokenId;

/// Answers each request line with `handler(request)` until EOF.
/// Unparseable lines get an `error` response.
pub fn serve_lines<R, W, F>(reader: R, mut writer: W, mut handler: F) -> io::Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&Value) -> Value,
{
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Value>(&line) {
            Ok(req) => handler(&req),
            Err(e) => json!({ "error": format!("unparseable request: {e}") }),
        };
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

fn token_ids(req: &Value) -> Result<Vec<TokenId>, String> {
    req.get("tokens")
        .and_then(Value::as_array)
        .ok_or("missing tokens array")?
        .iter()
        .map(|t| {
            t.as_u64()
                .and_then(|x| TokenId::try_from(x).ok())
                .ok_or_else(|| format!("invalid token id {t}"))
        })
        .collect()
}

/// Serves `model` over the model protocol.
pub fn serve_model<M, R, W>(model: &M, reader: R, writer: W) -> io::Result<()>
where
    M: PolicyModel + ?Sized,
    R: BufRead,
    W: Write,
{
    serve_lines(reader, writer, |req| {
        let result = match req.get("op").and_then(Value::as_str) {
            Some("handshake") => {
                let v = model.vocab();
                Ok(json!({
                    "version": PROTOCOL_VERSION,
                    "tokens": v.tokens(),
                    "bos": v.bos(),
                    "eos": v.eos(),
                    "embed_dim": model.embed_dim(),
                }))
            }
            Some("logits") => token_ids(req).and_then(|t| {
                model
                    .logits(&t)
                    .map(|l| json!({ "logits": l }))
                    .map_err(|e| e.to_string())
            }),
            Some("embed") => token_ids(req).and_then(|t| {
                model
                    .embed(&t)
                    .map(|v| json!({ "vector": v }))
                    .map_err(|e| e.to_string())
            }),
            other => Err(format!("unsupported op {other:?}")),
        };
        result.unwrap_or_else(|e| json!({ "error": e }))
    })
}

/// Serves `oracle` over the oracle protocol.
pub fn serve_oracle<O, R, W>(oracle: &O, reader: R, writer: W) -> io::Result<()>
where
    O: Oracle + ?Sized,
    R: BufRead,
    W: Write,
{
    serve_lines(reader, writer, |req| {
        match req.get("op").and_then(Value::as_str) {
            Some("handshake") => json!({ "version": PROTOCOL_VERSION, "name": oracle.name() }),
            Some("score") => match req.get("smiles").and_then(Value::as_str) {
                Some(s) => match oracle.score(s) {
                    Ok(x) => json!({ "score": x }),
                    Err(e) => json!({ "error": e.to_string() }),
                },
                None => json!({ "error": "missing smiles" }),
            },
            other => json!({ "error": format!("unsupported op {other:?}") }),
        }
    })
}
