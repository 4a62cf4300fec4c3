use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendState, EncodeOutcome};
use crate::error::{Error, Result};
use crate::gop::FrameType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub t: usize,
    #[serde(rename = "ref")]
    pub reference: i64,
    #[serde(rename = "type")]
    pub frame_type: FrameType,
    pub bits: f64,
    pub loss: f64,
}

/// Measured per-frame costs keyed by frame, reference and type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<TraceEntry>,
}

impl TraceFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

type Key = (usize, i64, FrameType);

#[derive(Debug, Clone)]
pub struct TraceBackend {
    width: usize,
    height: usize,
    entries: HashMap<Key, (f64, f64)>,
    has_pr: bool,
}

impl TraceBackend {
    pub fn new(trace: &TraceFile) -> Result<Self> {
        let mut entries = HashMap::with_capacity(trace.frames.len());
        for e in &trace.frames {
            if !e.bits.is_finite() || !e.loss.is_finite() || e.bits < 0.0 {
                return Err(Error::invalid(format!("trace entry for frame {} has invalid costs", e.t)));
            }
            entries.insert((e.t, e.reference, e.frame_type), (e.bits, e.loss));
        }
        Ok(Self {
            width: trace.width,
            height: trace.height,
            has_pr: trace.frames.iter().any(|e| e.frame_type == FrameType::Pr),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(&TraceFile::read(path)?)
    }
}

pub fn trace_encode(state: &BackendState, t: usize, frame_type: FrameType, trace: &TraceBackend) -> Result<EncodeOutcome> {
    state.check_frame(t)?;
    let &(bits, task_loss) = trace
        .entries
        .get(&(t, state.ref_index, frame_type))
        .ok_or(Error::MissingTraceEntry {
            t,
            reference: state.ref_index,
            frame_type,
        })?;
    Ok(EncodeOutcome {
        bits,
        task_loss,
        new_state: state.advance(t, frame_type),
    })
}

impl Backend for TraceBackend {
    fn encode(&self, state: &BackendState, t: usize, frame_type: FrameType) -> Result<EncodeOutcome> {
        trace_encode(state, t, frame_type, self)
    }

    fn frame_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn supports_pr(&self) -> bool {
        self.has_pr
    }
}

/// Records every `(t, ref, type)` reachable inside a GoP of `n` frames.
pub fn export_trace(backend: &dyn Backend, n: usize) -> Result<TraceFile> {
    let (width, height) = backend.frame_size();
    let mut frames = Vec::new();
    let mut record = |t: usize, reference: i64, frame_type: FrameType| -> Result<()> {
        let o = backend.encode(&BackendState::with_ref(reference), t, frame_type)?;
        frames.push(TraceEntry {
            t,
            reference,
            frame_type,
            bits: o.bits,
            loss: o.task_loss,
        });
        Ok(())
    };
    if n > 0 {
        record(0, -1, FrameType::I)?;
    }
    let mut types = vec![FrameType::P, FrameType::Pm];
    if backend.supports_pr() {
        types.push(FrameType::Pr);
    }
    for t in 1..n {
        for reference in 0..t as i64 {
            for &ft in &types {
                record(t, reference, ft)?;
            }
        }
    }
    Ok(TraceFile { width, height, frames })
}
