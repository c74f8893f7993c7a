//! Line-delimited JSON over a child process's stdin/stdout.
//!
//! Each request is one JSON object with an `"op"` key, written on one line.
//! The child answers with one line: `{"ok":true, ...}` or
//! `{"ok":false,"error":"..."}`. Generator backends use the ops `fine_tune`
//! and `synthesize`; external classifiers use `train` and `predict`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde_json::{Map, Value};

use super::pretrained::{FineTuneRequest, SynthesizeRequest, TextModel};
use super::BackendError;

pub struct ExternalProcess {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl ExternalProcess {
    /// Starts `command` (split with POSIX shell quoting rules, no shell).
    pub fn spawn(command: &str) -> Result<Self, BackendError> {
        let unavailable = |reason: String| BackendError::Unavailable {
            command: command.to_string(),
            reason,
        };
        let argv = shlex::split(command)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| unavailable("cannot parse command line".into()))?;
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| unavailable(e.to_string()))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            command: command.to_string(),
            child,
            stdin,
            stdout,
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    /// Sends `{"op": op, ..fields}` and returns the reply object on `ok:true`.
    pub fn request(&mut self, op: &str, fields: Value) -> Result<Map<String, Value>, BackendError> {
        let protocol = |message: String| BackendError::Protocol {
            op: op.to_string(),
            message,
        };
        let mut msg = Map::new();
        msg.insert("op".into(), Value::String(op.into()));
        match fields {
            Value::Object(obj) => msg.extend(obj),
            Value::Null => {}
            other => return Err(protocol(format!("request body must be an object, got {other}"))),
        }
        let line = serde_json::to_string(&Value::Object(msg)).map_err(|e| protocol(e.to_string()))?;
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| protocol("stdin already closed".into()))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|e| protocol(format!("write failed: {e}")))?;

        let mut reply = String::new();
        let n = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| protocol(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(protocol("backend closed its output".into()));
        }
        let value: Value = serde_json::from_str(reply.trim_end())
            .map_err(|e| protocol(format!("malformed reply {:?}: {e}", reply.trim_end())))?;
        let Value::Object(obj) = value else {
            return Err(protocol(format!("reply is not an object: {}", reply.trim_end())));
        };
        match obj.get("ok") {
            Some(Value::Bool(true)) => Ok(obj),
            Some(Value::Bool(false)) => Err(BackendError::Remote {
                op: op.to_string(),
                message: obj
                    .get("error")
                    .and_then(Value::as_str)
                    .unwrap_or("unspecified error")
                    .to_string(),
            }),
            _ => Err(protocol("reply lacks a boolean \"ok\"".into())),
        }
    }
}

impl Drop for ExternalProcess {
    fn drop(&mut self) {
        // closing stdin is the shutdown signal
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl TextModel for ExternalProcess {
    fn fine_tune(&mut self, request: &FineTuneRequest) -> Result<(), BackendError> {
        let body = serde_json::to_value(request).map_err(|e| BackendError::Protocol {
            op: "fine_tune".into(),
            message: e.to_string(),
        })?;
        self.request("fine_tune", body).map(|_| ())
    }

    fn generate(&mut self, request: &SynthesizeRequest) -> Result<String, BackendError> {
        let body = serde_json::to_value(request).map_err(|e| BackendError::Protocol {
            op: "synthesize".into(),
            message: e.to_string(),
        })?;
        let reply = self.request("synthesize", body)?;
        reply
            .get("text")
            .and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| BackendError::Protocol {
                op: "synthesize".into(),
                message: "reply lacks \"text\"".into(),
            })
    }
}
