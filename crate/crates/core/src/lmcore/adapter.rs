//! Adapter for an externally hosted generator, such as a pretrained decoder
//! checkpoint driven from another runtime.
//!
//! The adapter program is spawned once and spoken to over stdin/stdout, one
//! JSON object per line in each direction. Requests carry an `"op"` field:
//!
//! | request | response |
//! |---|---|
//! | `{"op":"hello"}` | `{"context_len": n}` |
//! | `{"op":"load","path":p}` | `{}` |
//! | `{"op":"count","input":s,"target":t}` | `{"tokens": n}` |
//! | `{"op":"train_step","learning_rate":lr,"batch":[{"input":s,"target":t}]}` | `{"loss_sum": x, "tokens": n}` |
//! | `{"op":"generate","input":s,"max_len":n}` | `{"text": s}` |
//! | `{"op":"save","path":p}` | `{}` |
//!
//! Any response may instead be `{"error": message}`.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{GeneratorBackend, StepLoss};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::linearize::LinearizedSample;

pub const CHECKPOINT_FORMAT: &str = "compex-adapter";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct ProcessBackend {
    program: PathBuf,
    channel: Mutex<Channel>,
    context_len: usize,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    program: PathBuf,
    state: PathBuf,
}

impl ProcessBackend {
    pub fn spawn(program: impl AsRef<Path>) -> Result<Self> {
        let program = program.as_ref().to_path_buf();
        let mut child = Command::new(&program)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot start {}: {e}", program.display())))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut backend = ProcessBackend {
            program,
            channel: Mutex::new(Channel {
                child,
                stdin,
                stdout,
            }),
            context_len: 0,
        };
        let hello = backend.call(json!({"op": "hello"}))?;
        backend.context_len = field_usize(&hello, "context_len")?;
        Ok(backend)
    }

    fn call(&self, request: Value) -> Result<Value> {
        let mut channel = self
            .channel
            .lock()
            .map_err(|_| Error::Backend("adapter channel poisoned".into()))?;
        let mut line = serde_json::to_string(&request)?;
        line.push('\n');
        channel
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| channel.stdin.flush())
            .map_err(|e| Error::Backend(format!("write to adapter: {e}")))?;
        let mut reply = String::new();
        let n = channel
            .stdout
            .read_line(&mut reply)
            .map_err(|e| Error::Backend(format!("read from adapter: {e}")))?;
        if n == 0 {
            return Err(Error::Backend("adapter closed its output".into()));
        }
        let value: Value = serde_json::from_str(&reply)
            .map_err(|e| Error::Backend(format!("bad adapter reply {reply:?}: {e}")))?;
        if let Some(message) = value.get("error") {
            return Err(Error::Backend(
                message.as_str().unwrap_or("unknown error").to_string(),
            ));
        }
        Ok(value)
    }

    /// Asks the adapter to store its state at `state` and writes a
    /// checkpoint file at `path` pointing to it.
    pub fn save(&self, path: impl AsRef<Path>, state: impl AsRef<Path>) -> Result<()> {
        let state = state.as_ref();
        self.call(json!({"op": "save", "path": state}))?;
        let checkpoint = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            program: self.program.clone(),
            state: state.to_path_buf(),
        };
        write_atomic(path, &serde_json::to_vec_pretty(&checkpoint)?)
    }

    pub(crate) fn from_checkpoint_json(bytes: &[u8]) -> Result<Self> {
        let checkpoint: Checkpoint = serde_json::from_slice(bytes)
            .map_err(|e| Error::Checkpoint(format!("unreadable adapter checkpoint: {e}")))?;
        if checkpoint.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported adapter checkpoint v{}",
                checkpoint.version
            )));
        }
        let backend = Self::spawn(&checkpoint.program)?;
        backend.call(json!({"op": "load", "path": checkpoint.state}))?;
        Ok(backend)
    }
}

fn field_usize(value: &Value, name: &str) -> Result<usize> {
    value
        .get(name)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| Error::Backend(format!("adapter reply lacks {name:?}")))
}

impl GeneratorBackend for ProcessBackend {
    fn context_len(&self) -> usize {
        self.context_len
    }

    fn sample_tokens(&self, sample: &LinearizedSample) -> Result<usize> {
        let reply = self.call(json!({
            "op": "count",
            "input": sample.input_text,
            "target": sample.target_text,
        }))?;
        field_usize(&reply, "tokens")
    }

    fn train_step(&mut self, batch: &[&LinearizedSample], learning_rate: f64) -> Result<StepLoss> {
        let items: Vec<Value> = batch
            .iter()
            .map(|s| json!({"input": s.input_text, "target": s.target_text}))
            .collect();
        let reply = self.call(json!({
            "op": "train_step",
            "learning_rate": learning_rate,
            "batch": items,
        }))?;
        let loss_sum = reply
            .get("loss_sum")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Backend("adapter reply lacks \"loss_sum\"".into()))?;
        Ok(StepLoss {
            loss_sum,
            tokens: field_usize(&reply, "tokens")?,
        })
    }

    fn generate(&self, prompted_input: &str, max_len: usize) -> Result<String> {
        let reply =
            self.call(json!({"op": "generate", "input": prompted_input, "max_len": max_len}))?;
        reply
            .get("text")
            .and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| Error::Backend("adapter reply lacks \"text\"".into()))
    }
}

impl Drop for ProcessBackend {
    fn drop(&mut self) {
        if let Ok(channel) = self.channel.get_mut() {
            let _ = channel.child.kill();
            let _ = channel.child.wait();
        }
    }
}
