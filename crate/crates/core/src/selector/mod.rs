//! GoP structure selection from pre-analysis statistics.
//!
//! Eight aggregated features feed a 2×8 affine scorer whose softmax gives
//! the share of `P` frames; [`materialize`] spreads that share evenly over
//! the predicted frames.

mod flow;
mod synthetic;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dvmp::softmax;
use crate::error::{Error, Result};
use crate::gop::{FrameType, GopStructure};

pub use flow::{block_matching_flow, BLOCK_SIZE, SEARCH_RANGE};
pub use synthetic::{synthetic_dataset, SequenceClass, SyntheticSequence};
pub use train::{
    surrogate_gradient, surrogate_value, train_selector, EpochLog, TemperatureSchedule, TrainConfig, TrainItem,
    TrainOutcome,
};

pub const FEATURE_LEN: usize = 8;

/// Frame count that maps to a normalized count of 1.
pub const FRAME_COUNT_NORM: f64 = 32.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 5]", into = "[f64; 5]")]
pub struct DetectionBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub confidence: f64,
}

impl From<[f64; 5]> for DetectionBox {
    fn from([x0, y0, x1, y1, confidence]: [f64; 5]) -> Self {
        Self { x0, y0, x1, y1, confidence }
    }
}

impl From<DetectionBox> for [f64; 5] {
    fn from(b: DetectionBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1, b.confidence]
    }
}

impl DetectionBox {
    fn contains(&self, x: usize, y: usize) -> bool {
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        cx >= self.x0 && cx < self.x1 && cy >= self.y0 && cy < self.y1
    }
}

/// Flow for one frame: a dense `2×h×w` field (x plane, then y plane), or
/// statistics already computed over the box mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowInput {
    Field(Vec<f64>),
    Stats { mean: f64, std: f64, coverage: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnalysis {
    pub flow: FlowInput,
    #[serde(default)]
    pub boxes: Vec<DetectionBox>,
    pub prior_mean: f64,
    pub prior_var: f64,
}

/// Pre-analysis of the predicted frames of one GoP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreAnalysisInput {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<FrameAnalysis>,
}

impl PreAnalysisInput {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::invalid("pre-analysis needs at least one predicted frame"));
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for (i, f) in self.frames.iter().enumerate() {
            if let FlowInput::Field(v) = &f.flow {
                if v.len() != 2 * self.width * self.height {
                    return Err(Error::DimMismatch(format!(
                        "frame {i}: flow has {} values, expected 2x{}x{}",
                        v.len(),
                        self.height,
                        self.width
                    )));
                }
            }
            for b in &f.boxes {
                let inside = 0.0 <= b.x0 && b.x0 <= b.x1 && b.x1 <= w && 0.0 <= b.y0 && b.y0 <= b.y1 && b.y1 <= h;
                if !inside || !(0.0..=1.0).contains(&b.confidence) {
                    return Err(Error::invalid(format!("frame {i}: box {:?} is out of bounds", <[f64; 5]>::from(*b))));
                }
            }
            if !f.prior_mean.is_finite() || !f.prior_var.is_finite() {
                return Err(Error::invalid(format!("frame {i}: motion prior must be finite")));
            }
        }
        Ok(())
    }

    /// The frames in `range`, as a separate input.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            width: self.width,
            height: self.height,
            frames: self.frames[range].to_vec(),
        }
    }

    /// Loads a manifest of the form
    /// `{"width":W,"height":H,"flow":"flow.bin","boxes":"boxes.json","priors":[{"mean":m,"var":v},...]}`.
    /// `flow.bin` holds `2×h×w` little-endian f32 per frame; `boxes.json`
    /// is a list of `{"boxes":[[x0,y0,x1,y1,conf],...]}`, one per frame.
    pub fn load_manifest(path: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let n = manifest.priors.len();
        let plane = 2 * manifest.width * manifest.height;
        let raw = std::fs::read(dir.join(&manifest.flow))?;
        if raw.len() != n * plane * 4 {
            return Err(Error::DimMismatch(format!(
                "flow file has {} bytes, expected {} for {n} frames",
                raw.len(),
                n * plane * 4
            )));
        }
        let values: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let boxes: Vec<FrameBoxes> = match &manifest.boxes {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(dir.join(p))?)?,
            None => vec![FrameBoxes::default(); n],
        };
        if boxes.len() != n {
            return Err(Error::DimMismatch(format!("{} box lists for {n} frames", boxes.len())));
        }
        let frames = manifest
            .priors
            .iter()
            .zip(boxes)
            .enumerate()
            .map(|(i, (p, b))| FrameAnalysis {
                flow: FlowInput::Field(values[i * plane..(i + 1) * plane].to_vec()),
                boxes: b.boxes,
                prior_mean: p.mean,
                prior_var: p.var,
            })
            .collect();
        let input = Self {
            width: manifest.width,
            height: manifest.height,
            frames,
        };
        input.validate()?;
        Ok(input)
    }
}

#[derive(Debug, Deserialize)]
struct Manifest {
    width: usize,
    height: usize,
    flow: String,
    #[serde(default)]
    boxes: Option<String>,
    priors: Vec<PriorStats>,
}

#[derive(Debug, Deserialize)]
struct PriorStats {
    mean: f64,
    var: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
struct FrameBoxes {
    boxes: Vec<DetectionBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_LEN]);

pub fn aggregate_features(input: &PreAnalysisInput) -> Result<FeatureVector> {
    input.validate()?;
    let frame_pixels = (input.width * input.height) as f64;
    let (mut count, mut sum, mut sum_sq) = (0.0f64, 0.0f64, 0.0f64);
    let (mut conf_sum, mut conf_n) = (0.0, 0usize);
    for f in &input.frames {
        match &f.flow {
            FlowInput::Field(v) => {
                let plane = input.width * input.height;
                for y in 0..input.height {
                    for x in 0..input.width {
                        if f.boxes.iter().any(|b| b.contains(x, y)) {
                            let i = y * input.width + x;
                            let m = v[i].hypot(v[plane + i]);
                            count += 1.0;
                            sum += m;
                            sum_sq += m * m;
                        }
                    }
                }
            }
            FlowInput::Stats { mean, std, coverage } => {
                let c = coverage.clamp(0.0, 1.0) * frame_pixels;
                count += c;
                sum += mean * c;
                sum_sq += (std * std + mean * mean) * c;
            }
        }
        conf_sum += f.boxes.iter().map(|b| b.confidence).sum::<f64>();
        conf_n += f.boxes.len();
    }
    let frames = input.frames.len() as f64;
    let (mean, std) = if count > 0.0 {
        let mean = sum / count;
        (mean, (sum_sq / count - mean * mean).max(0.0).sqrt())
    } else {
        (0.0, 0.0)
    };
    let coverage = if frame_pixels > 0.0 { count / (frame_pixels * frames) } else { 0.0 };
    let features = [
        mean,
        std,
        coverage,
        input.frames.iter().map(|f| f.prior_mean).sum::<f64>() / frames,
        input.frames.iter().map(|f| f.prior_var).sum::<f64>() / frames,
        if conf_n > 0 { conf_sum / conf_n as f64 } else { 0.0 },
        frames / FRAME_COUNT_NORM,
        1.0,
    ];
    if let Some(index) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(FeatureVector(features))
}

/// Row 0 scores `P`, row 1 scores `Pm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorWeights(pub [[f64; FEATURE_LEN]; 2]);

impl SelectorWeights {
    pub fn zeros() -> Self {
        Self([[0.0; FEATURE_LEN]; 2])
    }

    pub fn logits(&self, f: &FeatureVector) -> [f64; 2] {
        let dot = |row: &[f64; FEATURE_LEN]| row.iter().zip(&f.0).map(|(w, x)| w * x).sum::<f64>();
        [dot(&self.0[0]), dot(&self.0[1])]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let w: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if !w.is_finite() {
            return Err(Error::invalid("selector weights must be finite"));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SLogit {
    pub p_p: f64,
    pub p_pm: f64,
}

pub fn score(features: &FeatureVector, weights: &SelectorWeights) -> SLogit {
    let p = softmax(&weights.logits(features));
    SLogit { p_p: p[0], p_pm: p[1] }
}

/// `round(p_P·L)` ones (halves round up), evenly spaced with each one at
/// the end of its run. `true` is `P`.
pub fn materialize(s: SLogit, len: usize) -> Vec<bool> {
    let n_p = ((s.p_p.clamp(0.0, 1.0) * len as f64 + 0.5).floor() as usize).min(len);
    (0..len).map(|i| (i + 1) * n_p / len > i * n_p / len).collect()
}

/// Predicted-vector length of each mini GoP. Every mini GoP after the first
/// starts with a forced `P` frame, so each vector has `mini_size − 1` slots.
pub fn split_mini_gops(gop_size: usize, mini_size: usize) -> Result<Vec<usize>> {
    if mini_size < 2 || gop_size < mini_size || gop_size % mini_size != 0 {
        return Err(Error::invalid(format!(
            "GoP size {gop_size} is not a positive multiple of mini-GoP size {mini_size}"
        )));
    }
    Ok(vec![mini_size - 1; gop_size / mini_size])
}

/// Builds the full GoP from per-mini-GoP vectors (see [`split_mini_gops`]).
pub fn assemble(gop_size: usize, mini_size: usize, vectors: &[Vec<bool>]) -> Result<GopStructure> {
    let lengths = split_mini_gops(gop_size, mini_size)?;
    if vectors.len() != lengths.len() || vectors.iter().zip(&lengths).any(|(v, &l)| v.len() != l) {
        return Err(Error::invalid("mini-GoP vectors do not match the split"));
    }
    let mut frames = Vec::with_capacity(gop_size);
    for (k, v) in vectors.iter().enumerate() {
        frames.push(if k == 0 { FrameType::I } else { FrameType::P });
        frames.extend(v.iter().map(|&b| if b { FrameType::P } else { FrameType::Pm }));
    }
    GopStructure::new(frames)
}

/// Scores every mini GoP on its own frames and assembles the GoP.
/// `input` covers the `gop_size − 1` predicted frames.
pub fn select_structure(
    input: &PreAnalysisInput,
    weights: &SelectorWeights,
    gop_size: usize,
    mini_size: usize,
) -> Result<(GopStructure, Vec<SLogit>)> {
    if input.frames.len() + 1 != gop_size {
        return Err(Error::DimMismatch(format!(
            "{} analysed frames for a GoP of {gop_size}",
            input.frames.len()
        )));
    }
    let lengths = split_mini_gops(gop_size, mini_size)?;
    let mut vectors = Vec::with_capacity(lengths.len());
    let mut logits = Vec::with_capacity(lengths.len());
    for (k, &len) in lengths.iter().enumerate() {
        // Predicted frames of mini GoP k: frames k*mini .. (k+1)*mini - 1,
        // excluding the I frame of the first.
        let start = (k * mini_size).saturating_sub(1);
        let end = (k + 1) * mini_size - 1;
        let s = score(&aggregate_features(&input.slice(start..end))?, weights);
        vectors.push(materialize(s, len));
        logits.push(s);
    }
    Ok((assemble(gop_size, mini_size, &vectors)?, logits))
}
