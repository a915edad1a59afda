//! Reference peer for the JSON-lines protocol.
//!
//! ```text
//! molguide-stub model <model.json> [--tcp ADDR]
//! molguide-stub oracle <definition.json> [--tcp ADDR]
//! ```
//!
//! Without `--tcp` one session is served on stdin/stdout. With `--tcp` the
//! bound address is printed as `listening tcp://HOST:PORT` and connections
//! are served one after another.

use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::ExitCode;

use molguide::adapters::{serve_model, serve_oracle};
use molguide::oracles::{Oracle, OracleDefinition};
use molguide::policy::NGramModel;

enum Served {
    Model(NGramModel),
    Oracle(Box<dyn Oracle>),
}

impl Served {
    fn serve<R: io::BufRead, W: Write>(&self, reader: R, writer: W) -> io::Result<()> {
        match self {
            Served::Model(m) => serve_model(m, reader, writer),
            Served::Oracle(o) => serve_oracle(o.as_ref(), reader, writer),
        }
    }
}

const USAGE: &str = "usage: molguide-stub (model <model.json> | oracle <definition.json>) [--tcp ADDR]";

fn load(kind: &str, path: &Path) -> Result<Served, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    match kind {
        "model" => NGramModel::from_json(&text)
            .map(Served::Model)
            .map_err(|e| e.to_string()),
        "oracle" => OracleDefinition::from_json(&text)
            .and_then(|d| d.build())
            .map(Served::Oracle)
            .map_err(|e| e.to_string()),
        _ => Err(USAGE.into()),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (kind, path, tcp) = match args.as_slice() {
        [k, p] => (k, p, None),
        [k, p, flag, addr] if flag == "--tcp" => (k, p, Some(addr)),
        _ => {
            eprintln!("{USAGE}");
            return ExitCode::from(2);
        }
    };
    let served = match load(kind, Path::new(path)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("molguide-stub: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match tcp {
        None => served.serve(io::stdin().lock(), io::stdout().lock()),
        Some(addr) => serve_tcp(&served, addr),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("molguide-stub: {e}");
            ExitCode::from(3)
        }
    }
}

fn serve_tcp(served: &Served, addr: &str) -> io::Result<()> {
    let listener = TcpListener::bind(addr)?;
    println!("listening tcp://{}", listener.local_addr()?);
    io::stdout().flush()?;
    for stream in listener.incoming() {
        let stream = stream?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        // a peer hanging up mid-session ends only that session
        if let Err(e) = served.serve(reader, stream) {
            eprintln!("molguide-stub: session ended: {e}");
        }
    }
    Ok(())
}
