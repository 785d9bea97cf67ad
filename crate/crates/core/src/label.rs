use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// Number of emotion classes.
pub const NUM_CLASSES: usize = 6;

/// Expression class, in the fixed order Anger, Disgust, Fear, Happiness,
/// Sadness, Surprise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmotionLabel(u8);

impl EmotionLabel {
    pub const NAMES: [&'static str; NUM_CLASSES] =
        ["Anger", "Disgust", "Fear", "Happiness", "Sadness", "Surprise"];

    pub const ANGER: Self = Self(0);
    pub const DISGUST: Self = Self(1);
    pub const FEAR: Self = Self(2);
    pub const HAPPINESS: Self = Self(3);
    pub const SADNESS: Self = Self(4);
    pub const SURPRISE: Self = Self(5);

    pub fn new(value: i64) -> Result<Self> {
        if (0..NUM_CLASSES as i64).contains(&value) {
            Ok(Self(value as u8))
        } else {
            Err(Error::InvalidLabel(value))
        }
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..NUM_CLASSES as u8).map(Self)
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        Self::NAMES[self.index()]
    }
}

impl TryFrom<usize> for EmotionLabel {
    type Error = Error;

    fn try_from(value: usize) -> Result<Self> {
        Self::new(value as i64)
    }
}

impl From<EmotionLabel> for usize {
    fn from(l: EmotionLabel) -> usize {
        l.index()
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which side of the domain shift an example belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(Error::UnknownDomain(other.into())),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
