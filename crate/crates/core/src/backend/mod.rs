//! Codec backends.
//!
//! Every backend maps `(state, frame index, frame type)` to the bits spent,
//! the downstream task loss and the next state. State is passed in and out
//! by value so a search can hold many branches of the same GoP at once.

mod mock;
mod subprocess;
mod trace;

use serde::{Deserialize, Serialize};

pub use mock::{mock_encode, MockBackend, MockParams};
pub use subprocess::{EncodeRequest, SubprocessBackend, DEFAULT_RPC_TIMEOUT};
pub use trace::{export_trace, trace_encode, TraceBackend, TraceEntry, TraceFile};

use crate::error::{Error, Result};
use crate::gop::{FrameType, GopStructure};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackendState {
    /// Index of the current reference frame, `-1` before the I frame.
    pub ref_index: i64,
    /// Opaque payload owned by external backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extension: Option<String>,
}

impl BackendState {
    pub fn initial() -> Self {
        Self {
            ref_index: -1,
            extension: None,
        }
    }

    pub fn with_ref(ref_index: i64) -> Self {
        Self {
            ref_index,
            extension: None,
        }
    }

    /// State after coding frame `t` as `frame_type`.
    pub fn advance(&self, t: usize, frame_type: FrameType) -> Self {
        if frame_type.updates_reference() {
            Self {
                ref_index: t as i64,
                extension: self.extension.clone(),
            }
        } else {
            self.clone()
        }
    }

    pub(crate) fn check_frame(&self, t: usize) -> Result<()> {
        if (t as i64) <= self.ref_index {
            return Err(Error::invalid(format!(
                "frame {t} does not follow reference {}",
                self.ref_index
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeOutcome {
    pub bits: f64,
    pub task_loss: f64,
    pub new_state: BackendState,
}

pub trait Backend: Send + Sync {
    fn encode(&self, state: &BackendState, t: usize, frame_type: FrameType) -> Result<EncodeOutcome>;

    /// Frame width and height in pixels, used for bpp.
    fn frame_size(&self) -> (usize, usize);

    fn supports_pr(&self) -> bool {
        false
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn encode(&self, state: &BackendState, t: usize, frame_type: FrameType) -> Result<EncodeOutcome> {
        (**self).encode(state, t, frame_type)
    }

    fn frame_size(&self) -> (usize, usize) {
        (**self).frame_size()
    }

    fn supports_pr(&self) -> bool {
        (**self).supports_pr()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn encode(&self, state: &BackendState, t: usize, frame_type: FrameType) -> Result<EncodeOutcome> {
        (**self).encode(state, t, frame_type)
    }

    fn frame_size(&self) -> (usize, usize) {
        (**self).frame_size()
    }

    fn supports_pr(&self) -> bool {
        (**self).supports_pr()
    }
}

/// Codes every frame of `structure`, I frame included.
pub fn roll_out(backend: &dyn Backend, structure: &GopStructure) -> Result<Vec<EncodeOutcome>> {
    let mut state = BackendState::initial();
    let mut out = Vec::with_capacity(structure.len());
    for (t, &ft) in structure.frames().iter().enumerate() {
        let o = backend.encode(&state, t, ft)?;
        state = o.new_state.clone();
        out.push(o);
    }
    Ok(out)
}
