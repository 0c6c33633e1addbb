use std::fmt;

use serde::{Deserialize, Serialize};

/// One of the three input channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Language,
    Acoustic,
    Visual,
}

impl Modality {
    /// Canonical order (l, a, v), used for concatenation and tensor-fusion
    /// flattening.
    pub const ALL: [Modality; 3] = [Modality::Language, Modality::Acoustic, Modality::Visual];

    pub fn index(self) -> usize {
        match self {
            Modality::Language => 0,
            Modality::Acoustic => 1,
            Modality::Visual => 2,
        }
    }

    pub fn tag(self) -> char {
        match self {
            Modality::Language => 'l',
            Modality::Acoustic => 'a',
            Modality::Visual => 'v',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Language => "language",
            Modality::Acoustic => "acoustic",
            Modality::Visual => "visual",
        }
    }

    pub fn from_tag(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.tag() == c)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
