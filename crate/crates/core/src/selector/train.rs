use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{aggregate_features, materialize, score, FeatureVector, PreAnalysisInput, SelectorWeights, FEATURE_LEN};
use crate::backend::Backend;
use crate::dvmp::{gumbel_softmax_with_noise, relaxation_backward, sample_gumbel, softmax, straight_through};
use crate::error::{Error, Result};
use crate::gop::GopStructure;
use crate::search::evaluate;

/// Exponential decay from `start` to `end` over the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub start: f64,
    pub end: f64,
}

impl TemperatureSchedule {
    pub fn at(&self, step: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.start;
        }
        let frac = step as f64 / (total - 1) as f64;
        self.start * (self.end / self.start).powf(frac)
    }
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self { start: 1.0, end: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub temperature: TemperatureSchedule,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Seeds the visiting order.
    pub seed: u64,
    /// Seeds the Gumbel noise.
    pub gumbel_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            temperature: TemperatureSchedule::default(),
            learning_rate: 0.05,
            epochs: 30,
            seed: 0,
            gumbel_seed: 1,
        }
    }
}

/// One GoP: its pre-analysis and the backend that codes it.
pub struct TrainItem {
    pub input: PreAnalysisInput,
    pub backend: Box<dyn Backend>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_objective: f64,
    pub mean_p_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub weights: SelectorWeights,
    /// Epoch 0 is the untrained model.
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut out = String::from("epoch,mean_objective,mean_p_p\n");
        for e in &self.log {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.mean_objective, e.mean_p_p));
        }
        out
    }
}

fn log_softmax_backward(p: &[f64], upstream: &[f64]) -> [f64; 2] {
    let total: f64 = upstream.iter().sum();
    [upstream[0] - p[0] * total, upstream[1] - p[1] * total]
}

fn log_probs(weights: &SelectorWeights, f: &FeatureVector) -> (Vec<f64>, Vec<f64>) {
    let p = softmax(&weights.logits(f));
    let lp = p.iter().map(|v| v.ln().max(-700.0)).collect();
    (p, lp)
}

/// `Σ_i y_i · S_i`, where `y_i` is frame i's Gumbel-softmax sample over the
/// selector's log-probabilities (index 0 = `P`) and `S_i` holds the
/// objective with frame i coded as `P` and as `Pm`.
pub fn surrogate_value(
    weights: &SelectorWeights,
    features: &FeatureVector,
    noise: &[[f64; 2]],
    sensitivity: &[[f64; 2]],
    temperature: f64,
) -> Result<f64> {
    let (_, lp) = log_probs(weights, features);
    let mut total = 0.0;
    for (g, s) in noise.iter().zip(sensitivity) {
        let y = gumbel_softmax_with_noise(&lp, g, temperature)?;
        total += y[0] * s[0] + y[1] * s[1];
    }
    Ok(total)
}

/// Gradient of [`surrogate_value`] with respect to the weights.
pub fn surrogate_gradient(
    weights: &SelectorWeights,
    features: &FeatureVector,
    noise: &[[f64; 2]],
    sensitivity: &[[f64; 2]],
    temperature: f64,
) -> Result<SelectorWeights> {
    let (p, lp) = log_probs(weights, features);
    let mut d_lp = [0.0; 2];
    for (g, s) in noise.iter().zip(sensitivity) {
        let y = gumbel_softmax_with_noise(&lp, g, temperature)?;
        let d = relaxation_backward(&y, s, temperature);
        d_lp[0] += d[0];
        d_lp[1] += d[1];
    }
    let dz = log_softmax_backward(&p, &d_lp);
    let mut grad = SelectorWeights::zeros();
    for c in 0..2 {
        for k in 0..FEATURE_LEN {
            grad.0[c][k] = dz[c] * features.0[k];
        }
    }
    Ok(grad)
}

fn structure_objective(backend: &dyn Backend, bits: &[bool], lambda: f64) -> Result<f64> {
    let s = GopStructure::from_binary(bits, bits.len() + 1)?;
    Ok(evaluate(backend, &s, lambda)?.objective)
}

/// Objective of `bits` and, per frame, the objective with that frame coded
/// as `P` (index 0) and as `Pm` (index 1), all others fixed.
fn sensitivities(backend: &dyn Backend, bits: &[bool], lambda: f64) -> Result<(f64, Vec<[f64; 2]>)> {
    let base = structure_objective(backend, bits, lambda)?;
    let mut flipped = bits.to_vec();
    let mut out = Vec::with_capacity(bits.len());
    for i in 0..bits.len() {
        flipped[i] = !bits[i];
        let other = structure_objective(backend, &flipped, lambda)?;
        flipped[i] = bits[i];
        out.push(if bits[i] { [base, other] } else { [other, base] });
    }
    Ok((base, out))
}

struct Adam {
    m: [[f64; FEATURE_LEN]; 2],
    v: [[f64; FEATURE_LEN]; 2],
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, w: &mut SelectorWeights, g: &SelectorWeights) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for r in 0..2 {
            for k in 0..FEATURE_LEN {
                let gi = g.0[r][k];
                self.m[r][k] = Self::B1 * self.m[r][k] + (1.0 - Self::B1) * gi;
                self.v[r][k] = Self::B2 * self.v[r][k] + (1.0 - Self::B2) * gi * gi;
                w.0[r][k] -= self.lr * (self.m[r][k] / c1) / ((self.v[r][k] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

fn epoch_log(epoch: usize, items: &[(FeatureVector, &TrainItem)], w: &SelectorWeights, lambda: f64) -> Result<EpochLog> {
    let (mut obj, mut pp) = (0.0, 0.0);
    for (f, item) in items {
        let s = score(f, w);
        let bits = materialize(s, item.input.frames.len());
        obj += structure_objective(item.backend.as_ref(), &bits, lambda)?;
        pp += s.p_p;
    }
    let n = items.len() as f64;
    Ok(EpochLog {
        epoch,
        mean_objective: obj / n,
        mean_p_p: pp / n,
    })
}

/// Trains from zero weights with one Adam step per item, in a shuffled
/// order each epoch. Each step samples a structure through per-frame
/// Gumbel-softmax draws, hardens it and pushes the per-frame objective
/// sensitivities back through the soft samples.
pub fn train_selector(dataset: &[TrainItem], config: &TrainConfig) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::invalid("training needs a non-empty dataset"));
    }
    if !(config.learning_rate > 0.0) || !(config.temperature.start > 0.0 && config.temperature.end > 0.0) {
        return Err(Error::invalid("learning rate and temperatures must be positive"));
    }
    let items: Vec<(FeatureVector, &TrainItem)> = dataset
        .iter()
        .map(|item| Ok((aggregate_features(&item.input)?, item)))
        .collect::<Result<_>>()?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.gumbel_seed);
    let mut weights = SelectorWeights::zeros();
    let mut adam = Adam {
        m: [[0.0; FEATURE_LEN]; 2],
        v: [[0.0; FEATURE_LEN]; 2],
        t: 0,
        lr: config.learning_rate,
    };
    let mut log = vec![epoch_log(0, &items, &weights, config.lambda)?];
    let total = config.epochs * items.len();
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        for &idx in &order {
            let (features, item) = &items[idx];
            let tau = config.temperature.at(step, total);
            let (_, lp) = log_probs(&weights, features);
            let len = item.input.frames.len();
            let noise: Vec<[f64; 2]> = (0..len)
                .map(|_| {
                    let g = sample_gumbel(&mut rng, 2);
                    [g[0], g[1]]
                })
                .collect();
            let bits = noise
                .iter()
                .map(|g| Ok(straight_through(&gumbel_softmax_with_noise(&lp, g, tau)?)[0] == 1.0))
                .collect::<Result<Vec<bool>>>()?;
            let (value, sens) = sensitivities(item.backend.as_ref(), &bits, config.lambda)?;
            if !value.is_finite() {
                return Err(Error::Diverged { step });
            }
            let grad = surrogate_gradient(&weights, features, &noise, &sens, tau)?;
            adam.step(&mut weights, &grad);
            if !weights.is_finite() {
                return Err(Error::Diverged { step });
            }
            step += 1;
        }
        log.push(epoch_log(epoch, &items, &weights, config.lambda)?);
    }
    Ok(TrainOutcome { weights, log })
}
