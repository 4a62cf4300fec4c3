//! Quantized Gaussian symbol model used by the range coder.
//!
//! The normal CDF is tabulated once in 32-bit fixed point and interpolated
//! with integer arithmetic, so the coder-side CDF is exactly monotone and
//! identical on the encoding and decoding side. Each symbol gets a window of
//! `round(mean) ± ceil(8·scale + 1)` (capped) plus one escape slot of
//! frequency 1; escaped symbols are followed by 16 raw bits.

use std::sync::OnceLock;

use statrs::function::erf::erfc;

use super::range_coder::{RangeDecoder, RangeEncoder, TOTAL};
use super::{round_half_away, SYMBOL_MAX, SYMBOL_MIN};

const Z_MAX: f64 = 10.0;
const STEPS_PER_UNIT: usize = 512;
const FRAC_BITS: u32 = 16;
const MAX_HALF_WIDTH: i64 = 4096;
const ESCAPE_OFFSET: i64 = 32768;

fn table() -> &'static [u64] {
    static TABLE: OnceLock<Vec<u64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = 2 * Z_MAX as usize * STEPS_PER_UNIT + 1;
        let scale = (1u64 << 32) as f64;
        let mut out = Vec::with_capacity(n);
        let mut prev = 0u64;
        for k in 0..n {
            let z = -Z_MAX + k as f64 / STEPS_PER_UNIT as f64;
            let v = (0.5 * erfc(-z / std::f64::consts::SQRT_2) * scale).round() as u64;
            prev = prev.max(v);
            out.push(prev);
        }
        out
    })
}

/// Normal CDF in 32-bit fixed point; non-decreasing in `z` by construction.
pub(crate) fn phi_fixed(z: f64) -> u64 {
    let t = table();
    let last = t.len() - 1;
    if z.is_nan() || z <= -Z_MAX {
        return t[0];
    }
    if z >= Z_MAX {
        return t[last];
    }
    let unit = (STEPS_PER_UNIT as u64) << FRAC_BITS;
    let pos = ((z + Z_MAX) * unit as f64).floor() as u64;
    let pos = pos.min(((last as u64) << FRAC_BITS) - 1);
    let k = (pos >> FRAC_BITS) as usize;
    let frac = pos & ((1 << FRAC_BITS) - 1);
    t[k] + (((t[k + 1] - t[k]) * frac) >> FRAC_BITS)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GaussianSymbolModel {
    mean: f64,
    scale: f64,
    lo: i64,
    n: u64,
    base: u64,
    span: u64,
}

impl GaussianSymbolModel {
    pub fn new(mean: f64, scale: f64) -> Self {
        let centre = round_half_away(mean).clamp(f64::from(SYMBOL_MIN), f64::from(SYMBOL_MAX)) as i64;
        let half = ((8.0 * scale).ceil() as i64 + 1).min(MAX_HALF_WIDTH);
        let lo = (centre - half).max(i64::from(SYMBOL_MIN));
        let hi = (centre + half).min(i64::from(SYMBOL_MAX));
        let mut model = Self {
            mean,
            scale,
            lo,
            n: (hi - lo + 1) as u64,
            base: 0,
            span: 0,
        };
        model.base = model.edge(0);
        model.span = model.edge(model.n) - model.base;
        model
    }

    fn edge(&self, j: u64) -> u64 {
        let x = (self.lo + j as i64) as f64 - 0.5;
        phi_fixed((x - self.mean) / self.scale)
    }

    fn available(&self) -> u64 {
        u64::from(TOTAL) - 1 - self.n
    }

    /// Cumulative frequency of window slot `j` (`0..=n`); slot `n` starts
    /// the escape interval.
    fn cum(&self, j: u64) -> u64 {
        let avail = self.available();
        let scaled = if self.span == 0 {
            j * avail / self.n
        } else {
            ((u128::from(self.edge(j) - self.base) * u128::from(avail)) / u128::from(self.span)) as u64
        };
        scaled + j
    }

    pub fn encode(&self, enc: &mut RangeEncoder, symbol: i32) {
        let s = i64::from(symbol);
        if s >= self.lo && s < self.lo + self.n as i64 {
            let j = (s - self.lo) as u64;
            let c0 = self.cum(j);
            let c1 = self.cum(j + 1);
            enc.encode(c0 as u32, (c1 - c0) as u32);
        } else {
            enc.encode(TOTAL - 1, 1);
            enc.encode_bits((s + ESCAPE_OFFSET) as u32, 16);
        }
    }

    pub fn decode(&self, dec: &mut RangeDecoder<'_>) -> i32 {
        let target = u64::from(dec.peek());
        if target >= u64::from(TOTAL - 1) {
            dec.consume(TOTAL - 1, 1);
            let raw = i64::from(dec.decode_bits(16)) - ESCAPE_OFFSET;
            return raw.clamp(i64::from(SYMBOL_MIN), i64::from(SYMBOL_MAX)) as i32;
        }
        // Largest j in [0, n) with cum(j) <= target.
        let (mut lo, mut hi) = (0u64, self.n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cum(mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c0 = self.cum(lo);
        let c1 = self.cum(lo + 1);
        dec.consume(c0 as u32, (c1 - c0) as u32);
        (self.lo + lo as i64) as i32
    }

    #[cfg(test)]
    fn frequency(&self, symbol: i32) -> u64 {
        let j = (i64::from(symbol) - self.lo) as u64;
        self.cum(j + 1) - self.cum(j)
    }
}
