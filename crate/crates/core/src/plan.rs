//! How a clip is cut into temporal chunks for streamed execution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChunkPlan {
    /// Whole clip at once, through the direct (non-cached) operators.
    Direct,
    /// Frame 0 alone, then chunks of the given size (last one may be short).
    Canonical(usize),
    /// Explicit chunk sizes; must sum to the clip length.
    Explicit(Vec<usize>),
}

impl ChunkPlan {
    pub fn is_direct(&self) -> bool {
        matches!(self, ChunkPlan::Direct)
    }

    /// Chunk sizes for a clip of `total` frames.
    pub fn chunk_sizes(&self, total: usize) -> Result<Vec<usize>> {
        if total == 0 {
            return Err(Error::param("cannot chunk an empty clip"));
        }
        match self {
            ChunkPlan::Direct => Ok(vec![total]),
            ChunkPlan::Canonical(0) => Err(Error::param("chunk size must be >= 1")),
            ChunkPlan::Canonical(size) => {
                let mut sizes = vec![1];
                let mut left = total - 1;
                while left > 0 {
                    let n = left.min(*size);
                    sizes.push(n);
                    left -= n;
                }
                Ok(sizes)
            }
            ChunkPlan::Explicit(sizes) => {
                if sizes.contains(&0) {
                    return Err(Error::param("explicit chunk sizes must be >= 1"));
                }
                let sum: usize = sizes.iter().sum();
                if sum != total {
                    return Err(Error::param(format!(
                        "explicit chunk sizes sum to {sum}, clip has {total} frames"
                    )));
                }
                Ok(sizes.clone())
            }
        }
    }
}

impl fmt::Display for ChunkPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChunkPlan::Direct => write!(f, "direct"),
            ChunkPlan::Canonical(n) => write!(f, "canonical:{n}"),
            ChunkPlan::Explicit(sizes) => {
                let parts: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
                write!(f, "explicit:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for ChunkPlan {
    type Err = Error;

    /// `direct`, `canonical:N`, or `explicit:a,b,c`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param(format!("unrecognized chunk plan {s:?}"));
        if s == "direct" {
            return Ok(ChunkPlan::Direct);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "canonical" => arg.trim().parse().map(ChunkPlan::Canonical).map_err(|_| bad()),
            "explicit" => arg
                .split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()
                .map(ChunkPlan::Explicit),
            _ => Err(bad()),
        }
    }
}

impl Serialize for ChunkPlan {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChunkPlan {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
