//! Bridge to an external codec over newline-delimited JSON.
//!
//! ```text
//! -> {"cmd":"init","width":W,"height":H}
//! <- {"ok":true}
//! -> {"cmd":"encode","frame":t,"type":"P","ref":r}
//! <- {"bits":B,"loss":L}
//! -> {"cmd":"close"}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendState, EncodeOutcome};
use crate::error::{Error, Result};
use crate::gop::FrameType;

pub const DEFAULT_RPC_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "cmd", rename_all = "lowercase")]
enum Request<'a> {
    Init { width: usize, height: usize },
    Encode(&'a EncodeRequest),
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeRequest {
    pub frame: usize,
    #[serde(rename = "type")]
    pub frame_type: FrameType,
    #[serde(rename = "ref")]
    pub reference: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
}

impl EncodeRequest {
    /// The exact line written to the child, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(&Request::Encode(self)).expect("request serializes")
    }
}

#[derive(Debug, Deserialize)]
struct InitResponse {
    ok: bool,
    #[serde(default)]
    supports_pr: bool,
}

#[derive(Debug, Deserialize)]
struct EncodeResponse {
    bits: f64,
    loss: f64,
    #[serde(default)]
    state: Option<String>,
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    broken: bool,
}

impl Channel {
    fn send(&mut self, line: &str) -> Result<()> {
        let res = writeln!(self.stdin, "{line}").and_then(|_| self.stdin.flush());
        res.map_err(|e| Error::Backend(format!("write to child failed: {e}")))
    }

    fn receive(&mut self, timeout: Duration) -> Result<String> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Error::Backend(format!("read from child failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                self.broken = true;
                let _ = self.child.kill();
                Err(Error::Timeout(timeout))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.broken = true;
                let status = self.child.wait().ok();
                Err(Error::Backend(match status {
                    Some(s) if !s.success() => format!("child exited with {s}"),
                    Some(_) => "child closed its output".to_string(),
                    None => "child output closed".to_string(),
                }))
            }
        }
    }

    fn call(&mut self, line: &str, timeout: Duration) -> Result<String> {
        if self.broken {
            return Err(Error::Backend("channel is unusable after an earlier failure".into()));
        }
        self.send(line)?;
        self.receive(timeout)
    }
}

/// One child process; requests are serialized through a mutex.
pub struct SubprocessBackend {
    channel: Mutex<Channel>,
    width: usize,
    height: usize,
    timeout: Duration,
    supports_pr: bool,
}

impl SubprocessBackend {
    /// Spawns `program args...` and performs the init handshake.
    pub fn spawn(program: &str, args: &[String], width: usize, height: usize, timeout: Duration) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Backend(format!("cannot spawn '{program}': {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut channel = Channel {
            child,
            stdin,
            lines: rx,
            broken: false,
        };
        let init = serde_json::to_string(&Request::Init { width, height })?;
        let reply = channel.call(&init, timeout)?;
        let resp: InitResponse = serde_json::from_str(&reply)
            .map_err(|e| Error::Backend(format!("malformed init response '{reply}': {e}")))?;
        if !resp.ok {
            return Err(Error::Backend("child refused init".into()));
        }
        Ok(Self {
            channel: Mutex::new(channel),
            width,
            height,
            timeout,
            supports_pr: resp.supports_pr,
        })
    }

    /// Runs `command` through `sh -c`.
    pub fn spawn_shell(command: &str, width: usize, height: usize, timeout: Duration) -> Result<Self> {
        Self::spawn("sh", &["-c".to_string(), command.to_string()], width, height, timeout)
    }
}

impl Backend for SubprocessBackend {
    fn encode(&self, state: &BackendState, t: usize, frame_type: FrameType) -> Result<EncodeOutcome> {
        state.check_frame(t)?;
        let req = EncodeRequest {
            frame: t,
            frame_type,
            reference: state.ref_index,
            state: state.extension.clone(),
        };
        let reply = self
            .channel
            .lock()
            .map_err(|_| Error::Backend("channel lock poisoned".into()))?
            .call(&req.to_line(), self.timeout)?;
        let resp: EncodeResponse = serde_json::from_str(&reply)
            .map_err(|e| Error::Backend(format!("malformed encode response '{reply}': {e}")))?;
        if !resp.bits.is_finite() || resp.bits < 0.0 || !resp.loss.is_finite() {
            return Err(Error::Backend(format!("invalid costs in response '{reply}'")));
        }
        let mut new_state = state.advance(t, frame_type);
        if resp.state.is_some() {
            new_state.extension = resp.state;
        }
        Ok(EncodeOutcome {
            bits: resp.bits,
            task_loss: resp.loss,
            new_state,
        })
    }

    fn frame_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn supports_pr(&self) -> bool {
        self.supports_pr
    }
}

impl Drop for SubprocessBackend {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            if !ch.broken {
                let close = serde_json::to_string(&Request::Close).unwrap_or_default();
                let _ = ch.send(&close);
                for _ in 0..50 {
                    if let Ok(Some(_)) = ch.child.try_wait() {
                        return;
                    }
                    std::thread::sleep(Duration::from_millis(2));
                }
            }
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}
