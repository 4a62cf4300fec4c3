//! Encoder-side control for machine-oriented video coding.
//!
//! * [`entropy`]: Gaussian-conditional range coding with skip-mode elements.
//! * [`dvmp`]: per-element skip decisions and Gumbel-softmax utilities.
//! * [`gop`]: frame types, GoP structures and reference scheduling.
//! * [`backend`]: codec backends that price a frame given its reference.
//! * [`search`]: exhaustive and greedy GoP-structure search.
//! * [`selector`]: a lightweight learned GoP-structure predictor.
//! * [`eval`]: bpp, rate–metric curves and BD-rate.

pub mod backend;
pub mod dvmp;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod gop;
pub mod search;
pub mod seed;
pub mod selector;

pub use backend::{Backend, BackendState, EncodeOutcome, MockBackend, MockParams, SubprocessBackend, TraceBackend};
pub use dvmp::{MaskMode, MaskPolicy, SkipMask};
pub use entropy::{Bitstream, Dims, GaussianPrior, QuantizedLatent};
pub use error::{Error, Result};
pub use eval::{bd_rate, bpp, BdRateResult, CurvePoint, RateMetricCurve};
pub use gop::{divgop, FrameType, GopStructure};
pub use search::{brute_force, dfs_optimal, greedy, objective, SearchResult};
pub use selector::{PreAnalysisInput, SLogit, SelectorWeights};
