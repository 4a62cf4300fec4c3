//! Frame types, GoP structures and reference scheduling.
//!
//! Only `I` and `P` frames refresh the reference buffer. `Pm` (skip-mode)
//! and `Pr` (motion-warp only) frames predict from the latest `I`/`P` frame
//! and leave the buffer untouched.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FrameType {
    I,
    P,
    Pm,
    Pr,
}

impl FrameType {
    pub fn updates_reference(self) -> bool {
        matches!(self, FrameType::I | FrameType::P)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrameType::I => "I",
            FrameType::P => "P",
            FrameType::Pm => "Pm",
            FrameType::Pr => "Pr",
        }
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" => Ok(FrameType::I),
            "P" => Ok(FrameType::P),
            "Pm" => Ok(FrameType::Pm),
            "Pr" => Ok(FrameType::Pr),
            other => Err(Error::invalid(format!("unknown frame type '{other}'"))),
        }
    }
}

/// Frame types of one GoP: a leading `I` followed by predicted frames.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GopStructure {
    frames: Vec<FrameType>,
}

impl GopStructure {
    pub fn new(frames: Vec<FrameType>) -> Result<Self> {
        match frames.first() {
            None => return Err(Error::invalid("a GoP needs at least one frame")),
            Some(FrameType::I) => {}
            Some(_) => return Err(Error::invalid("a GoP must start with an I frame")),
        }
        if frames[1..].contains(&FrameType::I) {
            return Err(Error::invalid("I frames are only allowed at the head of a GoP"));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[FrameType] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn predicted(&self) -> &[FrameType] {
        &self.frames[1..]
    }

    pub fn all_p(n: usize) -> Result<Self> {
        Self::from_binary(&vec![true; n.saturating_sub(1)], n)
    }

    /// `1` for `P`, `0` for `Pm`; `Pr` frames have no binary form.
    pub fn to_binary(&self) -> Result<Vec<bool>> {
        self.predicted()
            .iter()
            .map(|t| match t {
                FrameType::P => Ok(true),
                FrameType::Pm => Ok(false),
                other => Err(Error::invalid(format!("{other} frames have no binary form"))),
            })
            .collect()
    }

    pub fn from_binary(bits: &[bool], n: usize) -> Result<Self> {
        if n == 0 || bits.len() + 1 != n {
            return Err(Error::invalid(format!(
                "a GoP of {n} frames needs {} bits, got {}",
                n.saturating_sub(1),
                bits.len()
            )));
        }
        let mut frames = Vec::with_capacity(n);
        frames.push(FrameType::I);
        frames.extend(bits.iter().map(|&b| if b { FrameType::P } else { FrameType::Pm }));
        Ok(Self { frames })
    }

    /// Binary form as a `0`/`1` string, e.g. `"0101"`.
    pub fn binary_string(&self) -> Result<String> {
        Ok(self.to_binary()?.iter().map(|&b| if b { '1' } else { '0' }).collect())
    }

    pub fn parse_binary(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::invalid(format!("'{c}' is not a binary digit"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_binary(&bits, bits.len() + 1)
    }

    /// Replaces every `Pm` with `Pr`.
    pub fn with_pr_frames(&self) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|&t| if t == FrameType::Pm { FrameType::Pr } else { t })
            .collect();
        Self { frames }
    }
}

/// Text form, e.g. `"I,Pm,P,Pm,P"`.
impl fmt::Display for GopStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.frames.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(t.as_str())?;
        }
        Ok(())
    }
}

impl FromStr for GopStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let frames = s.split(',').map(str::parse).collect::<Result<Vec<_>>>()?;
        Self::new(frames)
    }
}

impl TryFrom<String> for GopStructure {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GopStructure> for String {
    fn from(s: GopStructure) -> String {
        s.to_string()
    }
}

/// Alternating `I, Pm, P, Pm, P, ...`; odd positions are `Pm`.
pub fn divgop(n: usize) -> Result<GopStructure> {
    if n < 1 {
        return Err(Error::invalid("divgop needs n >= 1"));
    }
    let frames = (0..n)
        .map(|t| match t {
            0 => FrameType::I,
            t if t % 2 == 1 => FrameType::Pm,
            _ => FrameType::P,
        })
        .collect();
    Ok(GopStructure { frames })
}

/// Reference index for every frame; `-1` for the I frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSchedule(pub Vec<i64>);

impl ReferenceSchedule {
    pub fn refs(&self) -> &[i64] {
        &self.0
    }

    /// `t - ref(t)` for every predicted frame.
    pub fn gaps(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .skip(1)
            .map(|(t, &r)| (t as i64 - r) as usize)
            .collect()
    }
}

pub fn reference_schedule(structure: &GopStructure) -> ReferenceSchedule {
    let mut refs = Vec::with_capacity(structure.len());
    let mut current = -1i64;
    for (t, ft) in structure.frames().iter().enumerate() {
        refs.push(current);
        if ft.updates_reference() {
            current = t as i64;
        }
    }
    ReferenceSchedule(refs)
}
