//! Per-element skip-mode decisions and the discrete-relaxation primitives
//! used to train them.
//!
//! A [`SkipMask`] marks which latent elements are entropy coded (`true`) and
//! which are replaced by the rounded prior mean (`false`). Masks come from a
//! [`MaskPolicy`]: implicit policies read only the prior, so the decoder can
//! rebuild the mask and nothing is signalled; explicit policies may look at
//! the latent and their mask travels in the bitstream.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::{gaussian_bits, Dims, GaussianPrior, QuantizedLatent};
use crate::error::{Error, Result};

/// Largest `|symbol - round(mean)|` the greedy policy will skip.
pub const E_MAX: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum MaskMode {
    Implicit = 0,
    Explicit = 1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipMask {
    dims: Dims,
    keep: Vec<bool>,
}

impl SkipMask {
    pub fn new(dims: Dims, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != dims.len() {
            return Err(Error::DimMismatch(format!(
                "mask {dims} needs {} bits, got {}",
                dims.len(),
                keep.len()
            )));
        }
        Ok(Self { dims, keep })
    }

    pub fn filled(dims: Dims, keep: bool) -> Self {
        Self {
            dims,
            keep: vec![keep; dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn kept_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.keep.iter().enumerate().filter_map(|(i, &k)| k.then_some(i))
    }

    /// Lengths of maximal runs of equal bits, in order.
    pub fn runs(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut iter = self.keep.iter();
        let Some(mut current) = iter.next().copied() else {
            return runs;
        };
        let mut len = 1;
        for &b in iter {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }

    /// Binary file: three little-endian u32 dims, then the bits packed
    /// row-major, most significant bit first.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.keep.len().div_ceil(8));
        for d in [self.dims.channels, self.dims.height, self.dims.width] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for chunk in self.keep.chunks(8) {
            let byte = chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)));
            out.push(byte);
        }
        out
    }

    pub fn from_file_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::invalid("mask file shorter than its header"));
        }
        let d = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let dims = Dims::new(d(0), d(4), d(8));
        let n = dims.len();
        let body = &bytes[12..];
        if body.len() != n.div_ceil(8) {
            return Err(Error::DimMismatch(format!(
                "mask file for {dims} needs {} payload bytes, has {}",
                n.div_ceil(8),
                body.len()
            )));
        }
        let keep = (0..n).map(|i| body[i / 8] >> (7 - i % 8) & 1 == 1).collect();
        Self::new(dims, keep)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::from_file_bytes(&std::fs::read(path)?)
    }

    /// Channel-averaged keep fraction per spatial cell, one row per cell.
    pub fn to_csv(&self) -> String {
        let Dims { channels, height, width } = self.dims;
        let mut out = String::from("y,x,keep_fraction\n");
        for y in 0..height {
            for x in 0..width {
                let kept = (0..channels)
                    .filter(|&c| self.keep[(c * height + y) * width + x])
                    .count();
                let frac = if channels == 0 { 0.0 } else { kept as f64 / channels as f64 };
                out.push_str(&format!("{y},{x},{frac}\n"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Keep an element iff its prior scale is at least the threshold.
    ScaleThreshold { threshold: f64 },
    /// Keep the costliest skippable elements up to a bit budget.
    GreedyUtility { bit_budget: f64 },
    /// Mask read from a file.
    External { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPolicy {
    pub kind: PolicyKind,
    pub mode: MaskMode,
}

impl MaskPolicy {
    pub fn new(kind: PolicyKind, mode: MaskMode) -> Result<Self> {
        if mode == MaskMode::Implicit && !matches!(kind, PolicyKind::ScaleThreshold { .. }) {
            return Err(Error::invalid("only scale-threshold policies can run in implicit mode"));
        }
        Ok(Self { kind, mode })
    }

    pub fn scale_threshold(threshold: f64) -> Self {
        Self {
            kind: PolicyKind::ScaleThreshold { threshold },
            mode: MaskMode::Implicit,
        }
    }

    pub fn greedy(bit_budget: f64) -> Self {
        Self {
            kind: PolicyKind::GreedyUtility { bit_budget },
            mode: MaskMode::Explicit,
        }
    }

    pub fn external(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: PolicyKind::External { path: path.into() },
            mode: MaskMode::Explicit,
        }
    }

    pub fn is_implicit(&self) -> bool {
        self.mode == MaskMode::Implicit
    }
}

/// Parses `scale:<threshold>`, `greedy:<bits>` or `external:<path>`.
impl FromStr for MaskPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("mask policy '{s}' is not kind:arg")))?;
        let num = |a: &str| {
            a.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad number '{a}' in mask policy")))
        };
        match kind {
            "scale" => Ok(Self::scale_threshold(num(arg)?)),
            "greedy" => Ok(Self::greedy(num(arg)?)),
            "external" => Ok(Self::external(arg)),
            _ => Err(Error::invalid(format!("unknown mask policy kind '{kind}'"))),
        }
    }
}

impl fmt::Display for MaskPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PolicyKind::ScaleThreshold { threshold } => write!(f, "scale:{threshold}"),
            PolicyKind::GreedyUtility { bit_budget } => write!(f, "greedy:{bit_budget}"),
            PolicyKind::External { path } => write!(f, "external:{}", path.display()),
        }
    }
}

/// Builds the skip mask for one latent.
///
/// Implicit policies never read `latent`; greedy requires it.
pub fn decide_mask(prior: &GaussianPrior, latent: Option<&QuantizedLatent>, policy: &MaskPolicy) -> Result<SkipMask> {
    let dims = prior.dims();
    match &policy.kind {
        PolicyKind::ScaleThreshold { threshold } => {
            let keep = prior.scale().iter().map(|&s| s >= *threshold).collect();
            SkipMask::new(dims, keep)
        }
        PolicyKind::GreedyUtility { bit_budget } => {
            let latent = latent.ok_or_else(|| Error::invalid("greedy policy needs the latent"))?;
            dims.ensure_eq(&latent.dims(), "prior vs latent")?;
            greedy_mask(prior, latent, *bit_budget)
        }
        PolicyKind::External { path } => {
            let mask = SkipMask::read_file(path)?;
            mask.dims().ensure_eq(&dims, "external mask vs prior")?;
            Ok(mask)
        }
    }
}

fn greedy_mask(prior: &GaussianPrior, latent: &QuantizedLatent, budget: f64) -> Result<SkipMask> {
    let symbols = latent.symbols();
    let bits: Vec<f64> = (0..symbols.len())
        .map(|i| gaussian_bits(symbols[i], prior.mean()[i], prior.scale()[i]))
        .collect();
    let mut keep = vec![false; symbols.len()];
    let mut spent = 0.0;
    let mut eligible = Vec::new();
    for i in 0..symbols.len() {
        if (symbols[i] - prior.predicted_symbol(i)).abs() > E_MAX {
            keep[i] = true;
            spent += bits[i];
        } else {
            eligible.push(i);
        }
    }
    eligible.sort_by(|&a, &b| bits[b].total_cmp(&bits[a]).then(a.cmp(&b)));
    for i in eligible {
        if spent + bits[i] > budget {
            break;
        }
        spent += bits[i];
        keep[i] = true;
    }
    SkipMask::new(prior.dims(), keep)
}

/// Replaces skipped elements with the rounded prior mean.
pub fn apply_skip(latent: &QuantizedLatent, prior: &GaussianPrior, mask: &SkipMask) -> Result<QuantizedLatent> {
    latent.dims().ensure_eq(&prior.dims(), "latent vs prior")?;
    latent.dims().ensure_eq(&mask.dims(), "latent vs mask")?;
    let symbols = latent
        .symbols()
        .iter()
        .zip(mask.keep())
        .enumerate()
        .map(|(i, (&s, &k))| if k { s } else { prior.predicted_symbol(i) })
        .collect();
    QuantizedLatent::new(latent.dims(), symbols)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Standard Gumbel draws, `-ln(-ln U)`.
pub fn sample_gumbel<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            -(-u.ln()).ln()
        })
        .collect()
}

/// `softmax((logits + noise) / temperature)` for caller-supplied Gumbel noise.
pub fn gumbel_softmax_with_noise(logits: &[f64], noise: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    if noise.len() != logits.len() {
        return Err(Error::DimMismatch("noise vs logits".into()));
    }
    if let Some(index) = logits.iter().position(|l| !l.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let z: Vec<f64> = logits
        .iter()
        .zip(noise)
        .map(|(l, g)| (l + g) / temperature)
        .collect();
    Ok(softmax(&z))
}

/// One Gumbel-softmax sample; deterministic in `seed`.
pub fn gumbel_softmax(logits: &[f64], temperature: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = sample_gumbel(&mut rng, logits.len());
    gumbel_softmax_with_noise(logits, &noise, temperature)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Hard one-hot of `probs`. The backward contract is the identity: callers
/// route the upstream gradient straight to the soft probabilities (see
/// [`relaxation_backward`]).
pub fn straight_through(probs: &[f64]) -> Vec<f64> {
    let k = argmax(probs);
    (0..probs.len()).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
}

/// Gradient with respect to the logits of a Gumbel-softmax sample `y`,
/// given the upstream gradient at the hardened output (passed through
/// unchanged by the straight-through rule).
pub fn relaxation_backward(y: &[f64], upstream: &[f64], temperature: f64) -> Vec<f64> {
    let dot: f64 = y.iter().zip(upstream).map(|(a, b)| a * b).sum();
    y.iter()
        .zip(upstream)
        .map(|(yi, gi)| yi * (gi - dot) / temperature)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn prior(scales: &[f64], means: &[f64]) -> GaussianPrior {
        let dims = Dims::new(1, 1, scales.len());
        GaussianPrior::new(dims, means.to_vec(), scales.to_vec()).unwrap()
    }

    #[test]
    fn threshold_policy() {
        let p = prior(&[0.2, 5.0, 0.12], &[0.0; 3]);
        let m = decide_mask(&p, None, &MaskPolicy::scale_threshold(0.5)).unwrap();
        assert_eq!(m.keep(), &[false, true, false]);
        assert_eq!(decide_mask(&p, None, &MaskPolicy::scale_threshold(0.0)).unwrap().kept_count(), 3);
        assert_eq!(decide_mask(&p, None, &MaskPolicy::scale_threshold(f64::INFINITY)).unwrap().kept_count(), 0);
    }

    #[test]
    fn implicit_policy_ignores_latent() {
        let p = prior(&[0.3, 1.0, 2.0, 0.7], &[1.0, -2.0, 0.5, 3.3]);
        let l = QuantizedLatent::new(p.dims(), vec![9, 9, 9, 9]).unwrap();
        let policy = MaskPolicy::scale_threshold(0.8);
        assert_eq!(
            decide_mask(&p, Some(&l), &policy).unwrap(),
            decide_mask(&p, None, &policy).unwrap()
        );
    }

    #[test]
    fn policy_mode_validation_and_parsing() {
        assert!(MaskPolicy::new(PolicyKind::GreedyUtility { bit_budget: 1.0 }, MaskMode::Implicit).is_err());
        assert!(MaskPolicy::new(PolicyKind::ScaleThreshold { threshold: 1.0 }, MaskMode::Explicit).is_ok());
        assert_eq!("scale:0.5".parse::<MaskPolicy>().unwrap(), MaskPolicy::scale_threshold(0.5));
        assert_eq!("greedy:100".parse::<MaskPolicy>().unwrap(), MaskPolicy::greedy(100.0));
        assert!("scale".parse::<MaskPolicy>().is_err());
        assert!("wavelet:1".parse::<MaskPolicy>().is_err());
        assert_eq!(MaskPolicy::greedy(3.0).to_string(), "greedy:3");
    }

    #[test]
    fn greedy_policy() {
        let p = prior(&[1.0; 5], &[0.0; 5]);
        // symbol 5 is beyond E_MAX and always kept; the rest compete for budget.
        let l = QuantizedLatent::new(p.dims(), vec![0, 1, 2, 5, -1]).unwrap();
        assert!(decide_mask(&p, None, &MaskPolicy::greedy(10.0)).is_err());
        let zero = decide_mask(&p, Some(&l), &MaskPolicy::greedy(0.0)).unwrap();
        assert_eq!(zero.keep(), &[false, false, false, true, false]);
        let b = |s| gaussian_bits(s, 0.0, 1.0);
        let budget = b(5) + b(2) + b(1) + 1e-9;
        let m = decide_mask(&p, Some(&l), &MaskPolicy::greedy(budget)).unwrap();
        // 2 costs most, then the tie between 1 and -1 goes to the lower index.
        assert_eq!(m.keep(), &[false, true, true, true, false]);
        let all = decide_mask(&p, Some(&l), &MaskPolicy::greedy(1e9)).unwrap();
        assert_eq!(all.kept_count(), 5);
    }

    #[test]
    fn external_policy_reads_file() {
        let dir = tempfile::tempdir().unwrap();
        let dims = Dims::new(2, 3, 3);
        let mask = SkipMask::new(dims, (0..18).map(|i| i % 3 == 0).collect()).unwrap();
        let path = dir.path().join("m.bin");
        std::fs::write(&path, mask.to_file_bytes()).unwrap();
        let p = GaussianPrior::new(dims, vec![0.0; 18], vec![1.0; 18]).unwrap();
        assert_eq!(decide_mask(&p, None, &MaskPolicy::external(&path)).unwrap(), mask);
        let wrong = GaussianPrior::new(Dims::new(1, 3, 6), vec![0.0; 18], vec![1.0; 18]).unwrap();
        assert!(matches!(
            decide_mask(&wrong, None, &MaskPolicy::external(&path)),
            Err(Error::DimMismatch(_))
        ));
        let mut truncated = mask.to_file_bytes();
        truncated.pop();
        assert!(SkipMask::from_file_bytes(&truncated).is_err());
    }

    #[test]
    fn mask_csv_averages_channels() {
        let dims = Dims::new(2, 1, 2);
        let mask = SkipMask::new(dims, vec![true, false, true, true]).unwrap();
        assert_eq!(mask.to_csv(), "y,x,keep_fraction\n0,0,1\n0,1,0.5\n");
    }

    #[test]
    fn apply_skip_rules() {
        let p = prior(&[1.0, 1.0], &[2.6, -2.4]);
        let l = QuantizedLatent::new(p.dims(), vec![3, -2]).unwrap();
        let none = SkipMask::filled(p.dims(), false);
        assert_eq!(apply_skip(&l, &p, &none).unwrap().symbols(), &[3, -2]);
        let l2 = QuantizedLatent::new(p.dims(), vec![7, 8]).unwrap();
        assert_eq!(apply_skip(&l2, &p, &SkipMask::filled(p.dims(), true)).unwrap(), l2);
        let zero = prior(&[1.0; 3], &[0.0; 3]);
        let l3 = QuantizedLatent::new(zero.dims(), vec![4, -4, 1]).unwrap();
        assert_eq!(apply_skip(&l3, &zero, &SkipMask::filled(zero.dims(), false)).unwrap().symbols(), &[0, 0, 0]);
        let bad = SkipMask::filled(Dims::new(1, 1, 3), true);
        assert!(apply_skip(&l, &p, &bad).is_err());
    }

    #[test]
    fn gumbel_softmax_errors_and_simplex() {
        assert!(gumbel_softmax(&[0.0, 1.0], 0.0, 1).is_err());
        assert!(gumbel_softmax(&[0.0, 1.0], -1.0, 1).is_err());
        assert!(gumbel_softmax(&[0.0, f64::NAN], 1.0, 1).is_err());
        let y = gumbel_softmax(&[0.3, -1.0, 2.0], 0.7, 42).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(y, gumbel_softmax(&[0.3, -1.0, 2.0], 0.7, 42).unwrap());
    }

    #[test]
    fn gumbel_softmax_monte_carlo_mean() {
        let n = 10_000;
        let mut acc = [0.0; 2];
        for seed in 0..n {
            let y = gumbel_softmax(&[0.0, 0.0], 1.0, seed).unwrap();
            acc[0] += y[0];
            acc[1] += y[1];
        }
        for a in acc {
            assert!((a / n as f64 - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn gumbel_softmax_low_temperature_argmax() {
        let hits = (0..10_000u64)
            .filter(|&s| argmax(&gumbel_softmax(&[10.0, 0.0], 0.01, s).unwrap()) == 0)
            .count();
        assert!(hits >= 9_900);
    }

    #[test]
    fn straight_through_forward() {
        assert_eq!(straight_through(&[0.7, 0.3]), vec![1.0, 0.0]);
        assert_eq!(straight_through(&[0.5, 0.5]), vec![1.0, 0.0]);
        assert_eq!(straight_through(&[0.1, 0.2, 0.7]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn relaxation_gradient_matches_finite_differences() {
        let logits = [0.4, -0.3, 1.1];
        let target = [0.0, 1.0, 0.0];
        let weights = [1.0, 2.0, 0.5];
        let tau = 0.8;
        let seed = 99;
        let loss = |l: &[f64]| -> f64 {
            let y = gumbel_softmax(l, tau, seed).unwrap();
            y.iter().zip(&target).zip(&weights).map(|((y, t), w)| w * (y - t).powi(2)).sum()
        };
        let y = gumbel_softmax(&logits, tau, seed).unwrap();
        let upstream: Vec<f64> = (0..3).map(|i| 2.0 * weights[i] * (y[i] - target[i])).collect();
        let grad = relaxation_backward(&y, &upstream, tau);
        let h = 1e-4;
        for i in 0..3 {
            let mut up = logits;
            let mut down = logits;
            up[i] += h;
            down[i] -= h;
            let fd = (loss(&up) - loss(&down)) / (2.0 * h);
            assert!((grad[i] - fd).abs() <= 0.05 * fd.abs().max(1e-6), "{i}: {} vs {fd}", grad[i]);
        }
    }

    proptest! {
        #[test]
        fn gumbel_softmax_on_simplex(logits in proptest::collection::vec(-30.0f64..30.0, 1..6), tau in 0.05f64..5.0, seed in any::<u64>()) {
            let y = gumbel_softmax(&logits, tau, seed).unwrap();
            prop_assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(y.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn gumbel_softmax_shift_invariant(logits in proptest::collection::vec(-5.0f64..5.0, 2..5), c in -100.0f64..100.0, seed in any::<u64>()) {
            let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
            let a = gumbel_softmax(&logits, 1.0, seed).unwrap();
            let b = gumbel_softmax(&shifted, 1.0, seed).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn apply_skip_idempotent(seed in any::<u64>(), n in 1usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims = Dims::new(1, 1, n);
            let p = GaussianPrior::new(dims, (0..n).map(|_| rng.random_range(-9.0..9.0)).collect(), vec![1.0; n]).unwrap();
            let l = QuantizedLatent::new(dims, (0..n).map(|_| rng.random_range(-9..9)).collect()).unwrap();
            let m = SkipMask::new(dims, (0..n).map(|_| rng.random_bool(0.5)).collect()).unwrap();
            let once = apply_skip(&l, &p, &m).unwrap();
            prop_assert_eq!(apply_skip(&once, &p, &m).unwrap(), once);
        }

        #[test]
        fn rate_non_increasing_in_threshold(seed in any::<u64>(), t1 in 0.0f64..6.0, dt in 0.0f64..6.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let dims = Dims::new(2, 4, 5);
            let p = GaussianPrior::new(dims, (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(), (0..n).map(|_| rng.random_range(0.1..6.0)).collect()).unwrap();
            let l = QuantizedLatent::new(dims, (0..n).map(|_| rng.random_range(-6..6)).collect()).unwrap();
            let r = |t: f64| crate::entropy::estimate_rate(&l, &p, &decide_mask(&p, None, &MaskPolicy::scale_threshold(t)).unwrap()).unwrap();
            prop_assert!(r(t1 + dt) <= r(t1));
        }

        #[test]
        fn mask_file_round_trip(bits in proptest::collection::vec(any::<bool>(), 0..70)) {
            let dims = Dims::new(1, 1, bits.len());
            let m = SkipMask::new(dims, bits).unwrap();
            prop_assert_eq!(SkipMask::from_file_bytes(&m.to_file_bytes()).unwrap(), m);
        }
    }
}
