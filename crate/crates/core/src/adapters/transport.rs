use std::fmt;
use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::AdapterError;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Where a JSON-lines peer lives: `stdio:<program> [args...]` or
/// `tcp://<host>:<port>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Stdio { program: String, args: Vec<String> },
    Tcp(String),
}

impl FromStr for Endpoint {
    type Err = AdapterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err(AdapterError::Protocol("empty tcp address".into()));
            }
            return Ok(Endpoint::Tcp(addr.to_owned()));
        }
        if let Some(cmd) = s.strip_prefix("stdio:") {
            let mut parts = cmd.split_whitespace().map(str::to_owned);
            let program = parts
                .next()
                .ok_or_else(|| AdapterError::Protocol("empty stdio command".into()))?;
            return Ok(Endpoint::Stdio {
                program,
                args: parts.collect(),
            });
        }
        Err(AdapterError::Protocol(format!(
            "endpoint {s:?} must start with tcp:// or stdio:"
        )))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Tcp(addr) => write!(f, "tcp://{addr}"),
            Endpoint::Stdio { program, args } => {
                write!(f, "stdio:{program}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
        }
    }
}

/// One exclusive request/response channel. Requests are strictly
/// sequential: each call writes one line and waits for one line.
pub struct Session {
    writer: Option<Box<dyn Write + Send>>,
    lines: Receiver<io::Result<String>>,
    child: Option<Child>,
    timeout: Duration,
    label: String,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session").field("peer", &self.label).finish()
    }
}

fn spawn_reader<R: BufRead + Send + 'static>(mut reader: R) -> Receiver<io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || loop {
        let mut line = String::new();
        let msg = match reader.read_line(&mut line) {
            Ok(0) => Err(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "peer closed the connection",
            )),
            Ok(_) => Ok(line),
            Err(e) => Err(e),
        };
        let stop = msg.is_err();
        if tx.send(msg).is_err() || stop {
            break;
        }
    });
    rx
}

impl Session {
    pub fn connect(endpoint: &Endpoint, timeout: Duration) -> Result<Self, AdapterError> {
        let connect_err = |e: io::Error| AdapterError::Connect {
            endpoint: endpoint.to_string(),
            reason: e.to_string(),
        };
        match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(connect_err)?;
                stream.set_nodelay(true).ok();
                let reader = BufReader::new(stream.try_clone().map_err(connect_err)?);
                Ok(Session::from_streams(
                    reader,
                    stream,
                    timeout,
                    endpoint.to_string(),
                ))
            }
            Endpoint::Stdio { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(connect_err)?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
                let mut s = Session::from_streams(stdout, stdin, timeout, endpoint.to_string());
                s.child = Some(child);
                Ok(s)
            }
        }
    }

    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration, label: String) -> Self
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        Session {
            writer: Some(Box::new(writer)),
            lines: spawn_reader(reader),
            child: None,
            timeout,
            label,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Sends one request line and returns the parsed response object. A
    /// response carrying an `error` field is a protocol error.
    pub fn request<T: Serialize>(&mut self, req: &T) -> Result<Value, AdapterError> {
        let mut line = serde_json::to_vec(req).map_err(|e| AdapterError::Protocol(e.to_string()))?;
        line.push(b'\n');
        let writer = self.writer.as_mut().expect("writer present until drop");
        writer.write_all(&line)?;
        writer.flush()?;
        let text = match self.lines.recv_timeout(self.timeout) {
            Ok(r) => r.map_err(|e| AdapterError::Protocol(format!("{}: {e}", self.label)))?,
            Err(RecvTimeoutError::Timeout) => return Err(AdapterError::Timeout(self.label.clone())),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(AdapterError::Protocol(format!("{}: connection closed", self.label)))
            }
        };
        let value: Value = serde_json::from_str(text.trim_end())
            .map_err(|e| AdapterError::Protocol(format!("unparseable response: {e}")))?;
        if !value.is_object() {
            return Err(AdapterError::Protocol("response is not a JSON object".into()));
        }
        if let Some(err) = value.get("error") {
            return Err(AdapterError::Protocol(format!("peer reported: {err}")));
        }
        Ok(value)
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved child exit on its own
        self.writer.take();
        if let Some(mut child) = self.child.take() {
            for _ in 0..50 {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Reads a JSON array of finite numbers from `field` of `value`.
pub(crate) fn number_array(value: &Value, field: &str) -> Result<Vec<f64>, AdapterError> {
    let arr = value
        .get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| AdapterError::Protocol(format!("response lacks array field {field:?}")))?;
    arr.iter()
        .map(|x| {
            x.as_f64()
                .filter(|v| v.is_finite())
                .ok_or_else(|| AdapterError::Protocol(format!("non-finite or non-numeric entry {x}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_parsing() {
        assert_eq!(
            "tcp://127.0.0.1:9000".parse::<Endpoint>().unwrap(),
            Endpoint::Tcp("127.0.0.1:9000".into())
        );
        let e: Endpoint = "stdio:python3 serve.py --x".parse().unwrap();
        assert_eq!(e.to_string(), "stdio:python3 serve.py --x");
        assert!("http://x".parse::<Endpoint>().is_err());
        assert!("stdio:".parse::<Endpoint>().is_err());
    }

    #[test]
    fn connection_refused_is_connect_error() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let err = Session::connect(&Endpoint::Tcp(addr.to_string()), DEFAULT_TIMEOUT).unwrap_err();
        assert!(matches!(err, AdapterError::Connect { .. }));
    }

    #[test]
    fn silent_peer_times_out() {
        let (reader, _keep) = {
            let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            let client = TcpStream::connect(listener.local_addr().unwrap()).unwrap();
            let server = listener.accept().unwrap().0;
            (client, server)
        };
        let mut s = Session::from_streams(
            BufReader::new(reader.try_clone().unwrap()),
            reader,
            Duration::from_millis(50),
            "silent".into(),
        );
        assert!(matches!(
            s.request(&serde_json::json!({"op": "score"})),
            Err(AdapterError::Timeout(_))
        ));
    }
}
