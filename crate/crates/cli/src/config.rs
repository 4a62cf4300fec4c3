use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use rand::Rng;
use serde::Deserialize;

use gopctl_core::backend::{Backend, MockBackend, MockParams, SubprocessBackend, TraceBackend};
use gopctl_core::seed::{stream_rng, Stream};

use crate::UsageError;

/// Values a `--config` JSON file may provide. Flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub gop: Option<usize>,
    pub lambda: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub backend: Option<BackendKind>,
    pub mock: Option<MockParams>,
    pub trace: Option<PathBuf>,
    pub exec: Option<String>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub rpc_timeout: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Trace,
    Exec,
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Codec backend [default: mock]
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// JSON file with mock parameters (default: seeded random motion)
    #[arg(long)]
    pub mock_params: Option<PathBuf>,
    /// Trace file for the trace backend
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Shell command for the exec backend
    #[arg(long)]
    pub exec: Option<String>,
    /// Frame width reported to the exec backend
    #[arg(long)]
    pub width: Option<usize>,
    /// Frame height reported to the exec backend
    #[arg(long)]
    pub height: Option<usize>,
    /// Per-request timeout in seconds for the exec backend
    #[arg(long)]
    pub rpc_timeout: Option<f64>,
}

/// Default mock: unit costs with per-frame motion drawn from the seed.
pub fn default_mock(seed: u64, frames: usize) -> MockParams {
    let mut rng = stream_rng(seed, Stream::Mock);
    let mut motion = vec![0.0];
    motion.extend((1..frames).map(|_| rng.random_range(0.2..1.2)));
    MockParams {
        motion_coupling: 0.1,
        motion,
        ..MockParams::unit()
    }
}

impl BackendArgs {
    pub fn build(&self, cfg: &FileConfig, seed: u64, frames: usize) -> Result<Box<dyn Backend>> {
        let kind = self.backend.or(cfg.backend).unwrap_or(BackendKind::Mock);
        let width = self.width.or(cfg.width).unwrap_or(64);
        let height = self.height.or(cfg.height).unwrap_or(64);
        match kind {
            BackendKind::Mock => {
                let params = match (&self.mock_params, &cfg.mock) {
                    (Some(path), _) => {
                        let text = std::fs::read_to_string(path)
                            .with_context(|| format!("reading mock parameters {}", path.display()))?;
                        serde_json::from_str(&text).with_context(|| format!("parsing mock parameters {}", path.display()))?
                    }
                    (None, Some(p)) => p.clone(),
                    (None, None) => default_mock(seed, frames),
                };
                Ok(Box::new(MockBackend::try_new(params)?))
            }
            BackendKind::Trace => {
                let path = self
                    .trace
                    .as_ref()
                    .or(cfg.trace.as_ref())
                    .ok_or_else(|| UsageError("--backend trace needs --trace <file>".into()))?;
                Ok(Box::new(
                    TraceBackend::load(path).with_context(|| format!("loading trace {}", path.display()))?,
                ))
            }
            BackendKind::Exec => {
                let cmd = self
                    .exec
                    .as_ref()
                    .or(cfg.exec.as_ref())
                    .ok_or_else(|| UsageError("--backend exec needs --exec <command>".into()))?;
                let timeout = self
                    .rpc_timeout
                    .or(cfg.rpc_timeout)
                    .map(Duration::from_secs_f64)
                    .unwrap_or(gopctl_core::backend::DEFAULT_RPC_TIMEOUT);
                Ok(Box::new(SubprocessBackend::spawn_shell(cmd, width, height, timeout)?))
            }
        }
    }
}
