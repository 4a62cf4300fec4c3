//! Gaussian-conditional quantization, rate estimation and the skip-aware
//! tensor coder.
//!
//! Latents are coded element by element in row-major order (channel
//! outermost). Only elements whose mask bit is 1 reach the range coder;
//! skipped elements are reconstructed as `round(mean)` from the prior, which
//! both sides hold.

mod bitstream;
pub(crate) mod cdf;
pub mod range_coder;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

pub use bitstream::{Bitstream, HEADER_LEN, MAGIC, VERSION};

use crate::dvmp::{MaskMode, SkipMask};
use crate::error::{Error, Result};
use cdf::GaussianSymbolModel;
use range_coder::{RangeDecoder, RangeEncoder};

/// Lower clamp applied to every prior scale.
pub const SCALE_MIN: f64 = 0.11;
/// Smallest probability the rate model assigns to any symbol.
pub const PROB_FLOOR: f64 = 1.0 / 65536.0;
pub const SYMBOL_MIN: i32 = -(1 << 15) + 1;
pub const SYMBOL_MAX: i32 = (1 << 15) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Dims {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn ensure_eq(&self, other: &Dims, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::DimMismatch(format!("{what}: {self} vs {other}")));
        }
        Ok(())
    }
}

impl From<[usize; 3]> for Dims {
    fn from(d: [usize; 3]) -> Self {
        Self::new(d[0], d[1], d[2])
    }
}

impl From<Dims> for [usize; 3] {
    fn from(d: Dims) -> Self {
        [d.channels, d.height, d.width]
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// Rounds half away from zero.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

fn saturate(x: f64) -> i32 {
    round_half_away(x).clamp(f64::from(SYMBOL_MIN), f64::from(SYMBOL_MAX)) as i32
}

/// Element-wise round-half-away-from-zero, saturating to the symbol alphabet.
pub fn quantize(values: &[f64]) -> Result<Vec<i32>> {
    values
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if v.is_finite() {
                Ok(saturate(v))
            } else {
                Err(Error::NonFinite { index })
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedLatent {
    dims: Dims,
    symbols: Vec<i32>,
}

impl QuantizedLatent {
    pub fn new(dims: Dims, symbols: Vec<i32>) -> Result<Self> {
        if symbols.len() != dims.len() {
            return Err(Error::DimMismatch(format!(
                "latent {dims} needs {} symbols, got {}",
                dims.len(),
                symbols.len()
            )));
        }
        if let Some(i) = symbols.iter().position(|s| !(SYMBOL_MIN..=SYMBOL_MAX).contains(s)) {
            return Err(Error::invalid(format!(
                "symbol {} at index {i} outside [{SYMBOL_MIN}, {SYMBOL_MAX}]",
                symbols[i]
            )));
        }
        Ok(Self { dims, symbols })
    }

    pub fn quantize(dims: Dims, values: &[f64]) -> Result<Self> {
        Self::new(dims, quantize(values)?)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn symbols(&self) -> &[i32] {
        &self.symbols
    }

    pub fn into_symbols(self) -> Vec<i32> {
        self.symbols
    }
}

/// Per-element mean and standard deviation predicted by a hyperprior.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    dims: Dims,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl GaussianPrior {
    /// Scales below [`SCALE_MIN`] are clamped up to it.
    pub fn new(dims: Dims, mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if mean.len() != dims.len() || scale.len() != dims.len() {
            return Err(Error::DimMismatch(format!(
                "prior {dims} needs {} means and scales, got {} and {}",
                dims.len(),
                mean.len(),
                scale.len()
            )));
        }
        if let Some(index) = mean.iter().chain(&scale).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index: index % dims.len().max(1),
            });
        }
        let scale = scale.into_iter().map(|s| s.max(SCALE_MIN)).collect();
        Ok(Self { dims, mean, scale })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    /// The symbol a skipped element reconstructs to.
    pub fn predicted_symbol(&self, i: usize) -> i32 {
        saturate(self.mean[i])
    }
}

/// Probability mass of a standard normal on `[a, b]`, evaluated on the side
/// of the distribution that avoids cancellation. Symmetric: `(a, b)` and
/// `(-b, -a)` give bit-identical results.
fn normal_interval(a: f64, b: f64) -> f64 {
    let k = std::f64::consts::FRAC_1_SQRT_2;
    if a >= 0.0 {
        0.5 * (erfc(a * k) - erfc(b * k))
    } else if b <= 0.0 {
        0.5 * (erfc(-b * k) - erfc(-a * k))
    } else {
        1.0 - 0.5 * (erfc(-a * k) + erfc(b * k))
    }
}

/// Ideal code length of `symbol` under a discretized Gaussian, floored at
/// [`PROB_FLOOR`].
pub fn gaussian_bits(symbol: i32, mean: f64, scale: f64) -> f64 {
    let scale = scale.max(SCALE_MIN);
    let d = f64::from(symbol) - mean;
    let p = normal_interval((d - 0.5) / scale, (d + 0.5) / scale);
    -p.max(PROB_FLOOR).log2()
}

fn check_dims(latent: &QuantizedLatent, prior: &GaussianPrior, mask: &SkipMask) -> Result<()> {
    latent.dims.ensure_eq(&prior.dims, "latent vs prior")?;
    latent.dims.ensure_eq(&mask.dims(), "latent vs mask")
}

/// Analytic rate of the kept elements, in bits.
pub fn estimate_rate(latent: &QuantizedLatent, prior: &GaussianPrior, mask: &SkipMask) -> Result<f64> {
    check_dims(latent, prior, mask)?;
    Ok(mask
        .kept_indices()
        .map(|i| gaussian_bits(latent.symbols[i], prior.mean[i], prior.scale[i]))
        .sum())
}

/// Exp-Golomb (order 0) length of a positive integer.
fn exp_golomb_len(v: u64) -> u64 {
    2 * u64::from(63 - v.leading_zeros()) + 1
}

/// Bits spent signalling `mask` in explicit mode: one bit for the first
/// value, then one Exp-Golomb code per run.
pub fn mask_signaling_bits(mask: &SkipMask) -> u64 {
    if mask.dims().is_empty() {
        return 0;
    }
    1 + mask.runs().iter().map(|&r| exp_golomb_len(r as u64)).sum::<u64>()
}

fn encode_mask(enc: &mut RangeEncoder, mask: &SkipMask) {
    if mask.dims().is_empty() {
        return;
    }
    enc.encode_bit(mask.keep()[0]);
    for run in mask.runs() {
        let v = run as u32;
        let nbits = 31 - v.leading_zeros();
        enc.encode_bits(0, nbits);
        enc.encode_bits(v, nbits + 1);
    }
}

fn decode_mask(dec: &mut RangeDecoder<'_>, dims: Dims) -> Result<SkipMask> {
    let n = dims.len();
    let mut keep = Vec::with_capacity(n);
    if n > 0 {
        let mut value = dec.decode_bit();
        while keep.len() < n {
            let mut zeros = 0;
            while !dec.decode_bit() {
                zeros += 1;
                if zeros > 31 {
                    return Err(Error::Corrupt("mask run length overflow".into()));
                }
            }
            let run = ((1u64 << zeros) | u64::from(dec.decode_bits(zeros))) as usize;
            if keep.len() + run > n {
                return Err(Error::Corrupt("mask runs exceed tensor size".into()));
            }
            keep.resize(keep.len() + run, value);
            value = !value;
        }
    }
    SkipMask::new(dims, keep)
}

fn checksum(symbols: &[i32]) -> u32 {
    let mut hasher = crc32fast::Hasher::new();
    for s in symbols {
        hasher.update(&s.to_le_bytes());
    }
    hasher.finalize()
}

/// Encodes with an implicit mask: the decoder must recompute `mask` from the
/// prior.
pub fn encode_tensor(latent: &QuantizedLatent, prior: &GaussianPrior, mask: &SkipMask) -> Result<Bitstream> {
    encode_tensor_with_mode(latent, prior, mask, MaskMode::Implicit)
}

pub fn encode_tensor_with_mode(
    latent: &QuantizedLatent,
    prior: &GaussianPrior,
    mask: &SkipMask,
    mode: MaskMode,
) -> Result<Bitstream> {
    check_dims(latent, prior, mask)?;
    let mut enc = RangeEncoder::new();
    if mode == MaskMode::Explicit {
        encode_mask(&mut enc, mask);
    }
    let mut reconstructed = Vec::with_capacity(latent.symbols.len());
    for (i, (&s, &keep)) in latent.symbols.iter().zip(mask.keep()).enumerate() {
        if keep {
            GaussianSymbolModel::new(prior.mean[i], prior.scale[i]).encode(&mut enc, s);
            reconstructed.push(s);
        } else {
            reconstructed.push(prior.predicted_symbol(i));
        }
    }
    Ok(Bitstream {
        mode,
        dims: latent.dims,
        checksum: checksum(&reconstructed),
        payload: enc.finish(),
    })
}

/// Decodes a tensor. Implicit-mode streams need the decoder-side mask;
/// explicit-mode streams carry their own and `mask`, when given, must agree.
pub fn decode_tensor(bs: &Bitstream, prior: &GaussianPrior, mask: Option<&SkipMask>) -> Result<QuantizedLatent> {
    bs.dims.ensure_eq(&prior.dims, "bitstream header vs prior")?;
    let mut dec = RangeDecoder::new(&bs.payload);
    let owned;
    let mask = match bs.mode {
        MaskMode::Implicit => {
            let m = mask.ok_or_else(|| Error::invalid("implicit-mode stream needs a decoder-side mask"))?;
            m.dims().ensure_eq(&bs.dims, "mask vs bitstream header")?;
            m
        }
        MaskMode::Explicit => {
            owned = decode_mask(&mut dec, bs.dims)?;
            if let Some(m) = mask {
                if m != &owned {
                    return Err(Error::Corrupt("transmitted mask disagrees with supplied mask".into()));
                }
            }
            &owned
        }
    };
    let symbols: Vec<i32> = mask
        .keep()
        .iter()
        .enumerate()
        .map(|(i, &keep)| {
            if keep {
                GaussianSymbolModel::new(prior.mean[i], prior.scale[i]).decode(&mut dec)
            } else {
                prior.predicted_symbol(i)
            }
        })
        .collect();
    if checksum(&symbols) != bs.checksum {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }
    QuantizedLatent::new(bs.dims, symbols)
}
