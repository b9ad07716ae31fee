use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelKind {
    Head,
    Mid,
    Tail,
}

impl LevelKind {
    pub const ALL: [LevelKind; 3] = [LevelKind::Head, LevelKind::Mid, LevelKind::Tail];
}

impl fmt::Display for LevelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LevelKind::Head => "Head",
            LevelKind::Mid => "Mid",
            LevelKind::Tail => "Tail",
        })
    }
}

impl std::str::FromStr for LevelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "head" => Ok(LevelKind::Head),
            "mid" => Ok(LevelKind::Mid),
            "tail" => Ok(LevelKind::Tail),
            other => Err(Error::validation(format!("unknown level `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLevel {
    pub kind: LevelKind,
    pub layer_ids: [u32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Levels {
    pub head: LayerLevel,
    pub mid: LayerLevel,
    pub tail: LayerLevel,
    /// Set when two levels share a layer (small models).
    pub overlapping: bool,
}

impl Levels {
    pub fn get(&self, kind: LevelKind) -> LayerLevel {
        match kind {
            LevelKind::Head => self.head,
            LevelKind::Mid => self.mid,
            LevelKind::Tail => self.tail,
        }
    }
}

/// Head `{1,2,3}`, Mid `{⌊l/2⌋-1, ⌊l/2⌋, ⌊l/2⌋+1}`, Tail `{l-2, l-1, l}` over
/// 1-based block indices.
pub fn layer_levels(l: u32) -> Result<Levels> {
    if l < 6 {
        return Err(Error::validation(format!(
            "layer levels need at least 6 transformer layers, got {l}"
        )));
    }
    let half = l / 2;
    let head = LayerLevel {
        kind: LevelKind::Head,
        layer_ids: [1, 2, 3],
    };
    let mid = LayerLevel {
        kind: LevelKind::Mid,
        layer_ids: [half - 1, half, half + 1],
    };
    let tail = LayerLevel {
        kind: LevelKind::Tail,
        layer_ids: [l - 2, l - 1, l],
    };
    let overlapping = mid.layer_ids[0] <= head.layer_ids[2] || mid.layer_ids[2] >= tail.layer_ids[0];
    if overlapping {
        log::warn!("layer levels overlap for l = {l}");
    }
    Ok(Levels {
        head,
        mid,
        tail,
        overlapping,
    })
}
