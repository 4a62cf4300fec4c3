use crate::dvmp::MaskMode;
use crate::error::{Error, Result};

use super::Dims;

pub const MAGIC: [u8; 4] = *b"GMC1";
pub const VERSION: u8 = 1;
/// magic, version, mode flag, three u32 dims, u32 checksum.
pub const HEADER_LEN: usize = 4 + 1 + 1 + 12 + 4;

/// Container for one coded tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub mode: MaskMode,
    pub dims: Dims,
    /// CRC-32 of the reconstructed symbols (kept and substituted).
    pub checksum: u32,
    pub payload: Vec<u8>,
}

impl Bitstream {
    pub fn payload_bits(&self) -> usize {
        self.payload.len() * 8
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.mode as u8);
        for d in [self.dims.channels, self.dims.height, self.dims.width] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.checksum.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Corrupt(format!("header needs {HEADER_LEN} bytes, got {}", bytes.len())));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::Corrupt("bad magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Corrupt(format!("unsupported version {}", bytes[4])));
        }
        let mode = match bytes[5] {
            0 => MaskMode::Implicit,
            1 => MaskMode::Explicit,
            m => return Err(Error::Corrupt(format!("unknown mode flag {m}"))),
        };
        let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let dims = Dims::new(u32_at(6) as usize, u32_at(10) as usize, u32_at(14) as usize);
        Ok(Self {
            mode,
            dims,
            checksum: u32_at(18),
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}
