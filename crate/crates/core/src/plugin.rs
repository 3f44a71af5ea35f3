//! Client side of the external classifier protocol: newline-delimited JSON
//! over a child process's stdin/stdout, one request in flight at a time.
//! See `protocol.md` at the crate root for the message catalogue.
//!
//! [`serve`] implements the server side around the builtin learner. It backs
//! the `plugin-mock` subcommand, which lets the harness exercise the wire
//! path without a transformer install.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command as Process, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::classifier::{BuiltinLearner, Item, LabeledItem, Learner};
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::features::{DenseVector, SparseVector, Vocabulary};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireExample {
    pub id: u64,
    pub text: String,
    pub label: Label,
    #[serde(default)]
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", content = "payload", rename_all = "snake_case")]
pub enum Command {
    Hello {},
    Train { examples: Vec<WireExample>, seed: u64 },
    Predict { texts: Vec<String> },
    Embed { texts: Vec<String> },
    Reset {},
    Shutdown {},
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Hello {} => "hello",
            Command::Train { .. } => "train",
            Command::Predict { .. } => "predict",
            Command::Embed { .. } => "embed",
            Command::Reset {} => "reset",
            Command::Shutdown {} => "shutdown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub v: u32,
    #[serde(flatten)]
    pub command: Command,
}

impl Request {
    pub fn new(command: Command) -> Self {
        Request {
            v: PROTOCOL_VERSION,
            command,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub v: u32,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(flatten)]
    pub body: Map<String, Value>,
}

impl Response {
    pub fn ok<T: Serialize>(body: &T) -> Result<Self> {
        let body = match serde_json::to_value(body)? {
            Value::Object(m) => m,
            Value::Null => Map::new(),
            other => {
                return Err(Error::Plugin(format!("response body must be an object, got {other}")));
            }
        };
        Ok(Response {
            v: PROTOCOL_VERSION,
            ok: true,
            error: None,
            body,
        })
    }

    pub fn error(message: impl Into<String>) -> Self {
        Response {
            v: PROTOCOL_VERSION,
            ok: false,
            error: Some(message.into()),
            body: Map::new(),
        }
    }

    /// The typed body of a successful response.
    pub fn into_body<T: DeserializeOwned>(self) -> Result<T> {
        if !self.ok {
            return Err(Error::Plugin(self.error.unwrap_or_else(|| "unspecified error".into())));
        }
        Ok(serde_json::from_value(Value::Object(self.body))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelloBody {
    pub protocol_version: u32,
    pub embedding_dim: usize,
    #[serde(default)]
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainBody {
    pub n_train: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictBody {
    pub probs: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedBody {
    pub vectors: Vec<Vec<f64>>,
}

/// Serializes a message as one line. JSON string escaping guarantees the
/// only raw newline is the terminator.
pub fn encode<T: Serialize>(msg: &T) -> Result<String> {
    let mut line = serde_json::to_string(msg)?;
    line.push('\n');
    Ok(line)
}

pub fn decode<T: DeserializeOwned>(line: &str) -> Result<T> {
    Ok(serde_json::from_str(line.trim_end_matches(['\n', '\r']))?)
}

/// A running plugin process.
pub struct PluginClient {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    pub hello: HelloBody,
}

impl PluginClient {
    /// Spawns `command` and performs the `hello` handshake.
    pub fn spawn(command: &[String], timeout_secs: u64) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Plugin("empty plugin command".into()))?;
        let mut child = Process::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Plugin(format!("failed to start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut client = PluginClient {
            child,
            stdin,
            lines: rx,
            timeout: Duration::from_secs(timeout_secs.max(1)),
            hello: HelloBody {
                protocol_version: 0,
                embedding_dim: 0,
                name: String::new(),
            },
        };
        let hello: HelloBody = client.call(Command::Hello {})?;
        if hello.protocol_version != PROTOCOL_VERSION {
            return Err(Error::Plugin(format!(
                "protocol version mismatch: plugin speaks {}, harness speaks {PROTOCOL_VERSION}",
                hello.protocol_version
            )));
        }
        client.hello = hello;
        Ok(client)
    }

    pub fn call<T: DeserializeOwned>(&mut self, command: Command) -> Result<T> {
        let name = command.name();
        let line = encode(&Request::new(command))?;
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Plugin(format!("{name}: write failed: {e}")))?;
        let reply = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(Error::Plugin(format!("{name}: read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Plugin(format!("{name}: timed out after {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Plugin(format!("{name}: plugin exited")));
            }
        };
        let response: Response = decode(&reply)?;
        if response.v != PROTOCOL_VERSION {
            return Err(Error::Plugin(format!("{name}: response has protocol version {}", response.v)));
        }
        response.into_body()
    }

    pub fn shutdown(mut self) -> Result<()> {
        let _: Value = self.call(Command::Shutdown {})?;
        let _ = self.child.wait();
        Ok(())
    }
}

impl Drop for PluginClient {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.stdin.write_all(encode(&Request::new(Command::Shutdown {})).unwrap_or_default().as_bytes());
            let _ = self.stdin.flush();
            thread::sleep(Duration::from_millis(20));
            if let Ok(None) = self.child.try_wait() {
                let _ = self.child.kill();
            }
            let _ = self.child.wait();
        }
    }
}

/// A [`Learner`] backed by a plugin process. Embeddings come from the
/// current model, so they are recomputed every iteration.
pub struct PluginLearner {
    client: PluginClient,
}

impl PluginLearner {
    pub fn spawn(command: &[String], timeout_secs: u64) -> Result<Self> {
        Ok(PluginLearner {
            client: PluginClient::spawn(command, timeout_secs)?,
        })
    }

    pub fn client(&mut self) -> &mut PluginClient {
        &mut self.client
    }
}

impl Learner for PluginLearner {
    fn fit(&mut self, examples: &[LabeledItem<'_>], seed: u64) -> Result<()> {
        let examples = examples
            .iter()
            .map(|e| WireExample {
                id: e.item.id,
                text: e.item.text.to_string(),
                label: e.label,
                batch: e.batch,
            })
            .collect();
        let _: TrainBody = self.client.call(Command::Train { examples, seed })?;
        Ok(())
    }

    fn predict_proba(&mut self, items: &[Item<'_>]) -> Result<Vec<[f64; 2]>> {
        let texts = items.iter().map(|i| i.text.to_string()).collect();
        let body: PredictBody = self.client.call(Command::Predict { texts })?;
        if body.probs.len() != items.len() {
            return Err(Error::Plugin(format!(
                "predict returned {} rows for {} texts",
                body.probs.len(),
                items.len()
            )));
        }
        Ok(body.probs)
    }

    fn embed(&mut self, items: &[Item<'_>]) -> Result<Vec<DenseVector>> {
        let texts = items.iter().map(|i| i.text.to_string()).collect();
        let body: EmbedBody = self.client.call(Command::Embed { texts })?;
        let dim = self.client.hello.embedding_dim;
        if body.vectors.len() != items.len() {
            return Err(Error::Plugin(format!(
                "embed returned {} rows for {} texts",
                body.vectors.len(),
                items.len()
            )));
        }
        body.vectors
            .into_iter()
            .map(|v| {
                if v.len() != dim {
                    Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: v.len(),
                    })
                } else {
                    Ok(DenseVector(v))
                }
            })
            .collect()
    }

    fn embedding_dim(&self) -> usize {
        self.client.hello.embedding_dim
    }

    fn static_embeddings(&self) -> bool {
        false
    }
}

/// Handles one request against the builtin learner.
fn handle(command: Command, learner: &mut BuiltinLearner, vocab: &Vocabulary) -> Result<Response> {
    match command {
        Command::Hello {} => Response::ok(&HelloBody {
            protocol_version: PROTOCOL_VERSION,
            embedding_dim: learner.embedding_dim(),
            name: "builtin-linear".into(),
        }),
        Command::Train { examples, seed } => {
            let feats: Vec<SparseVector> = examples.iter().map(|e| vocab.transform(&e.text)).collect();
            let items: Vec<LabeledItem<'_>> = examples
                .iter()
                .zip(&feats)
                .map(|(e, f)| LabeledItem {
                    item: Item {
                        id: e.id,
                        text: &e.text,
                        features: f,
                    },
                    label: e.label,
                    batch: e.batch,
                })
                .collect();
            learner.fit(&items, seed)?;
            Response::ok(&TrainBody { n_train: items.len() })
        }
        Command::Predict { texts } => {
            let feats: Vec<SparseVector> = texts.iter().map(|t| vocab.transform(t)).collect();
            let items = as_items(&texts, &feats);
            Response::ok(&PredictBody {
                probs: learner.predict_proba(&items)?,
            })
        }
        Command::Embed { texts } => {
            let feats: Vec<SparseVector> = texts.iter().map(|t| vocab.transform(t)).collect();
            let items = as_items(&texts, &feats);
            let vectors = learner.embed(&items)?.into_iter().map(|v| v.0).collect();
            Response::ok(&EmbedBody { vectors })
        }
        Command::Reset {} => {
            learner.take_model();
            Response::ok(&Map::new())
        }
        Command::Shutdown {} => Response::ok(&Map::new()),
    }
}

fn as_items<'a>(texts: &'a [String], feats: &'a [SparseVector]) -> Vec<Item<'a>> {
    texts
        .iter()
        .zip(feats)
        .enumerate()
        .map(|(i, (t, f))| Item {
            id: i as u64,
            text: t,
            features: f,
        })
        .collect()
}

/// Serves the protocol on `input`/`output` until `shutdown` or end of input.
pub fn serve(
    input: impl BufRead,
    mut output: impl Write,
    mut learner: BuiltinLearner,
    vocab: &Vocabulary,
) -> Result<()> {
    learner.set_vocabulary(vocab);
    for line in input.lines() {
        let line = line.map_err(|e| Error::Plugin(format!("read failed: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let (response, stop) = match decode::<Request>(&line) {
            Ok(req) if req.v != PROTOCOL_VERSION => (
                Response::error(format!("unsupported protocol version {}", req.v)),
                false,
            ),
            Ok(req) => {
                let stop = matches!(req.command, Command::Shutdown {});
                let resp = handle(req.command, &mut learner, vocab).unwrap_or_else(|e| Response::error(e.to_string()));
                (resp, stop)
            }
            Err(e) => (Response::error(format!("malformed request: {e}")), false),
        };
        output
            .write_all(encode(&response)?.as_bytes())
            .and_then(|_| output.flush())
            .map_err(|e| Error::Plugin(format!("write failed: {e}")))?;
        if stop {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassifierSpec;
    use crate::features::fit_tfidf;

    #[test]
    fn request_wire_format() {
        let line = encode(&Request::new(Command::Hello {})).unwrap();
        assert_eq!(line, "{\"v\":1,\"cmd\":\"hello\",\"payload\":{}}\n");
        let line = encode(&Request::new(Command::Predict {
            texts: vec!["a\nb".into()],
        }))
        .unwrap();
        assert_eq!(line.matches('\n').count(), 1);
        let back: Request = decode(&line).unwrap();
        assert_eq!(back.command, Command::Predict { texts: vec!["a\nb".into()] });
    }

    #[test]
    fn response_wire_format() {
        let r = Response::ok(&TrainBody { n_train: 3 }).unwrap();
        assert_eq!(encode(&r).unwrap(), "{\"v\":1,\"ok\":true,\"n_train\":3}\n");
        let e = Response::error("boom");
        assert_eq!(encode(&e).unwrap(), "{\"v\":1,\"ok\":false,\"error\":\"boom\"}\n");
        assert!(matches!(e.into_body::<TrainBody>(), Err(Error::Plugin(m)) if m == "boom"));
    }

    #[test]
    fn in_process_server_session() {
        let vocab = fit_tfidf(&["bad idiot", "nice day", "idiot fool", "sunny day"]).unwrap();
        let learner = BuiltinLearner::new(ClassifierSpec::default(), &vocab, 8, 1);
        let reqs = [
            Request::new(Command::Hello {}),
            Request::new(Command::Train {
                examples: vec![
                    WireExample { id: 0, text: "bad idiot".into(), label: Label::Abuse, batch: 0 },
                    WireExample { id: 1, text: "nice day".into(), label: Label::NonAbuse, batch: 0 },
                ],
                seed: 1,
            }),
            Request::new(Command::Predict { texts: vec!["idiot".into(), "day".into()] }),
            Request::new(Command::Embed { texts: vec!["idiot".into()] }),
            Request { v: 2, command: Command::Reset {} },
            Request::new(Command::Shutdown {}),
            Request::new(Command::Hello {}),
        ];
        let input: String = reqs.iter().map(|r| encode(r).unwrap()).collect();
        let mut out = Vec::new();
        serve(input.as_bytes(), &mut out, learner, &vocab).unwrap();
        let lines: Vec<Response> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| decode(l).unwrap())
            .collect();
        // nothing is answered after shutdown
        assert_eq!(lines.len(), 6);
        let hello: HelloBody = lines[0].clone().into_body().unwrap();
        assert_eq!(hello.embedding_dim, 8);
        let probs: PredictBody = lines[2].clone().into_body().unwrap();
        assert!(probs.probs[0][1] > probs.probs[1][1]);
        for p in &probs.probs {
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
        let emb: EmbedBody = lines[3].clone().into_body().unwrap();
        assert_eq!(emb.vectors[0].len(), 8);
        assert!(!lines[4].ok);
        assert!(lines[5].ok);
    }

    #[test]
    fn predict_before_train_is_an_error_response() {
        let vocab = fit_tfidf(&["a b"]).unwrap();
        let learner = BuiltinLearner::new(ClassifierSpec::default(), &vocab, 4, 1);
        let input = encode(&Request::new(Command::Predict { texts: vec!["a".into()] })).unwrap() + "not json\n";
        let mut out = Vec::new();
        serve(input.as_bytes(), &mut out, learner, &vocab).unwrap();
        let text = String::from_utf8(out).unwrap();
        let resp: Vec<Response> = text.lines().map(|l| decode(l).unwrap()).collect();
        assert!(!resp[0].ok);
        assert!(resp[1].error.as_deref().unwrap().starts_with("malformed request"));
    }
}
