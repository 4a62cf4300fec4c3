use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DetectionBox, FlowInput, FrameAnalysis, PreAnalysisInput};
use crate::backend::MockParams;

const FIELD: usize = 16;
const PIXELS_PER_MOTION: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceClass {
    /// Large motion with degradation that grows with the reference gap.
    HighMotion,
    /// Near-still content whose skipped frames do not degrade.
    Static,
}

/// A mock-backed sequence with matching pre-analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSequence {
    pub class: SequenceClass,
    pub params: MockParams,
    pub input: PreAnalysisInput,
}

/// `count` sequences of `gop_size` frames alternating between the two
/// classes, starting with [`SequenceClass::HighMotion`].
pub fn synthetic_dataset(count: usize, gop_size: usize, seed: u64) -> Vec<SyntheticSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let class = if i % 2 == 0 { SequenceClass::HighMotion } else { SequenceClass::Static };
            sequence(&mut rng, class, gop_size)
        })
        .collect()
}

fn sequence(rng: &mut ChaCha8Rng, class: SequenceClass, n: usize) -> SyntheticSequence {
    let (motion_range, degradation) = match class {
        SequenceClass::HighMotion => ((0.8, 1.6), rng.random_range(1.5..2.5)),
        SequenceClass::Static => ((0.0, 0.05), 0.0),
    };
    let mut motion = vec![0.0];
    motion.extend((1..n).map(|_| rng.random_range(motion_range.0..motion_range.1)));
    let params = MockParams {
        bits_i: 4.0,
        bits_p: 1.0,
        bits_m: 0.1,
        motion_coupling: 0.05,
        base_loss: 0.2,
        degradation,
        motion: motion.clone(),
        width: FIELD,
        height: FIELD,
        supports_pr: true,
    };
    let frames = motion[1..].iter().map(|&m| frame(rng, m)).collect();
    SyntheticSequence {
        class,
        params,
        input: PreAnalysisInput {
            width: FIELD,
            height: FIELD,
            frames,
        },
    }
}

fn frame(rng: &mut ChaCha8Rng, motion: f64) -> FrameAnalysis {
    let w = rng.random_range(4..=10) as f64;
    let h = rng.random_range(4..=10) as f64;
    let x0 = rng.random_range(0.0..FIELD as f64 - w);
    let y0 = rng.random_range(0.0..FIELD as f64 - h);
    let object = DetectionBox {
        x0,
        y0,
        x1: x0 + w,
        y1: y0 + h,
        confidence: rng.random_range(0.5..1.0),
    };
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let mut field = vec![0.0; 2 * FIELD * FIELD];
    for y in 0..FIELD {
        for x in 0..FIELD {
            let inside = object.contains(x, y);
            let speed = PIXELS_PER_MOTION * motion * if inside { 1.0 } else { 0.2 } * rng.random_range(0.9..1.1);
            field[y * FIELD + x] = speed * angle.cos();
            field[FIELD * FIELD + y * FIELD + x] = speed * angle.sin();
        }
    }
    FrameAnalysis {
        flow: FlowInput::Field(field),
        boxes: vec![object],
        prior_mean: 0.5 * motion + rng.random_range(-0.05..0.05),
        prior_var: 0.1 + 0.3 * motion,
    }
}
