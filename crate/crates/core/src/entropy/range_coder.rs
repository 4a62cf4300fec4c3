//! 32-bit range coder with carry propagation and a fixed 16-bit frequency
//! total.
//!
//! The encoder terminates with the shortest byte string that still lands
//! inside the final interval; the decoder treats bytes past the end of the
//! input as zero, so trailing zero bytes are never written. An encoder that
//! codes nothing produces an empty payload.

pub const TOTAL_BITS: u32 = 16;
pub const TOTAL: u32 = 1 << TOTAL_BITS;

const TOP: u64 = 1 << 24;
const WINDOW: u64 = 1 << 32;
const MASK32: u64 = WINDOW - 1;

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: WINDOW,
            out: Vec::new(),
        }
    }

    /// Codes the sub-interval `[cum, cum + freq)` of `[0, TOTAL)`.
    pub fn encode(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0 && cum + freq <= TOTAL);
        let r = self.range >> TOTAL_BITS;
        self.low += r * u64::from(cum);
        self.range = r * u64::from(freq);
        if self.low > MASK32 {
            self.propagate_carry();
            self.low &= MASK32;
        }
        while self.range < TOP {
            self.out.push((self.low >> 24) as u8);
            self.low = (self.low << 8) & MASK32;
            self.range <<= 8;
        }
    }

    /// Codes a single equiprobable bit.
    pub fn encode_bit(&mut self, bit: bool) {
        let half = TOTAL / 2;
        self.encode(if bit { half } else { 0 }, half);
    }

    /// Codes the low `count` bits of `value`, most significant first.
    pub fn encode_bits(&mut self, value: u32, count: u32) {
        for i in (0..count).rev() {
            self.encode_bit((value >> i) & 1 == 1);
        }
    }

    fn propagate_carry(&mut self) {
        for byte in self.out.iter_mut().rev() {
            if *byte == 0xFF {
                *byte = 0;
            } else {
                *byte += 1;
                return;
            }
        }
        debug_assert!(false, "carry out of an empty prefix");
    }

    pub fn finish(mut self) -> Vec<u8> {
        let hi = self.low + self.range - 1;
        // Pick the value in [low, hi] with the most trailing zero bits.
        let mut shift = 32u32;
        let mut value = 0u64;
        loop {
            let step = 1u64 << shift;
            let candidate = (self.low + step - 1) & !(step - 1);
            if candidate <= hi {
                value = candidate;
                break;
            }
            if shift == 0 {
                break;
            }
            shift -= 1;
        }
        if value > MASK32 {
            self.propagate_carry();
            value &= MASK32;
        }
        let nbytes = (32 - shift).div_ceil(8);
        for i in 0..nbytes {
            self.out.push((value >> (24 - 8 * i)) as u8);
        }
        while self.out.last() == Some(&0) {
            self.out.pop();
        }
        self.out
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u64,
    range: u64,
    scale: u64,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        let mut dec = Self {
            data,
            pos: 0,
            code: 0,
            range: WINDOW,
            scale: 0,
        };
        for _ in 0..4 {
            dec.code = (dec.code << 8) | u64::from(dec.next_byte());
        }
        dec
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.data.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Returns the cumulative frequency the next symbol falls on. Must be
    /// followed by exactly one call to [`RangeDecoder::consume`].
    pub fn peek(&mut self) -> u32 {
        self.scale = self.range >> TOTAL_BITS;
        (self.code / self.scale).min(u64::from(TOTAL - 1)) as u32
    }

    pub fn consume(&mut self, cum: u32, freq: u32) {
        self.code -= self.scale * u64::from(cum);
        self.range = self.scale * u64::from(freq);
        while self.range < TOP {
            self.code = ((self.code << 8) | u64::from(self.next_byte())) & MASK32;
            self.range <<= 8;
        }
    }

    pub fn decode_bit(&mut self) -> bool {
        let half = TOTAL / 2;
        let bit = self.peek() >= half;
        self.consume(if bit { half } else { 0 }, half);
        bit
    }

    pub fn decode_bits(&mut self, count: u32) -> u32 {
        (0..count).fold(0, |acc, _| (acc << 1) | u32::from(self.decode_bit()))
    }

    /// Bytes consumed so far, including the four-byte prefetch.
    pub fn position(&self) -> usize {
        self.pos
    }
}
