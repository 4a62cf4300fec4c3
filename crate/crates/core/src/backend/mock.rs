use serde::{Deserialize, Serialize};

use super::{Backend, BackendState, EncodeOutcome};
use crate::error::{Error, Result};
use crate::gop::FrameType;

fn default_size() -> usize {
    64
}

fn default_true() -> bool {
    true
}

/// Analytic codec model. With `D` the motion accumulated since the current
/// reference frame:
///
/// * `I`: `bits_i`, loss `base_loss`
/// * `P`: `bits_p + motion_coupling * D`, loss `base_loss`
/// * `Pm`: `bits_m`, loss `base_loss + degradation * D`
/// * `Pr`: 0 bits, loss `base_loss + 1.5 * degradation * D`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockParams {
    pub bits_i: f64,
    pub bits_p: f64,
    pub bits_m: f64,
    pub motion_coupling: f64,
    pub base_loss: f64,
    pub degradation: f64,
    /// Per-frame motion intensity, indexed by frame.
    pub motion: Vec<f64>,
    #[serde(default = "default_size")]
    pub width: usize,
    #[serde(default = "default_size")]
    pub height: usize,
    #[serde(default = "default_true")]
    pub supports_pr: bool,
}

impl MockParams {
    /// Unit-scale parameters: `b_I = 4, b_P = 1, b_m = 0.1, γ = 0, l_P = 0.2,
    /// κ = 1`, no motion.
    pub fn unit() -> Self {
        Self {
            bits_i: 4.0,
            bits_p: 1.0,
            bits_m: 0.1,
            motion_coupling: 0.0,
            base_loss: 0.2,
            degradation: 1.0,
            motion: Vec::new(),
            width: default_size(),
            height: default_size(),
            supports_pr: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [
            self.bits_i,
            self.bits_p,
            self.bits_m,
            self.motion_coupling,
            self.base_loss,
            self.degradation,
        ];
        if scalars.iter().chain(&self.motion).any(|v| !v.is_finite()) {
            return Err(Error::invalid("mock parameters must be finite"));
        }
        if self.degradation < 0.0 || self.motion.iter().any(|&m| m < 0.0) {
            return Err(Error::invalid("mock degradation and motion must be non-negative"));
        }
        Ok(())
    }
}

pub fn mock_encode(state: &BackendState, t: usize, frame_type: FrameType, params: &MockParams) -> Result<EncodeOutcome> {
    state.check_frame(t)?;
    if t >= params.motion.len() {
        return Err(Error::invalid(format!(
            "mock has motion for {} frames, frame {t} requested",
            params.motion.len()
        )));
    }
    let first = (state.ref_index + 1).max(0) as usize;
    let accumulated: f64 = params.motion[first..=t].iter().sum();
    let (bits, task_loss) = match frame_type {
        FrameType::I => (params.bits_i, params.base_loss),
        FrameType::P => (params.bits_p + params.motion_coupling * accumulated, params.base_loss),
        FrameType::Pm => (params.bits_m, params.base_loss + params.degradation * accumulated),
        FrameType::Pr => {
            if !params.supports_pr {
                return Err(Error::Backend("Pr frames are disabled for this mock".into()));
            }
            (0.0, params.base_loss + 1.5 * params.degradation * accumulated)
        }
    };
    Ok(EncodeOutcome {
        bits,
        task_loss,
        new_state: state.advance(t, frame_type),
    })
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    params: MockParams,
}

impl MockBackend {
    pub fn new(params: MockParams) -> Self {
        Self { params }
    }

    pub fn try_new(params: MockParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &MockParams {
        &self.params
    }
}

impl Backend for MockBackend {
    fn encode(&self, state: &BackendState, t: usize, frame_type: FrameType) -> Result<EncodeOutcome> {
        mock_encode(state, t, frame_type, &self.params)
    }

    fn frame_size(&self) -> (usize, usize) {
        (self.params.width, self.params.height)
    }

    fn supports_pr(&self) -> bool {
        self.params.supports_pr
    }
}
