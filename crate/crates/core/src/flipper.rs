use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One of the five pre-set flipper configurations, numbered 1..=5.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlipperConfig(u8);

impl FlipperConfig {
    pub const COUNT: usize = 5;

    pub const I_SHAPE: FlipperConfig = FlipperConfig(1);
    pub const V_SHAPE: FlipperConfig = FlipperConfig(2);
    pub const L_SHAPE: FlipperConfig = FlipperConfig(3);
    pub const U_SOFT: FlipperConfig = FlipperConfig(4);
    pub const U_HARD: FlipperConfig = FlipperConfig(5);

    pub const ALL: [FlipperConfig; 5] = [
        Self::I_SHAPE,
        Self::V_SHAPE,
        Self::L_SHAPE,
        Self::U_SOFT,
        Self::U_HARD,
    ];

    pub fn new(id: u8) -> Result<Self> {
        if (1..=5).contains(&id) {
            Ok(FlipperConfig(id))
        } else {
            Err(Error::Parameter(format!("configuration id {id} outside 1..=5")))
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    /// Zero-based position, handy for indexing per-configuration arrays.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        Self::ALL[index]
    }

    pub fn name(self) -> &'static str {
        match self.0 {
            1 => "I-shape",
            2 => "V-shape",
            3 => "L-shape",
            4 => "U-shape soft",
            _ => "U-shape hard",
        }
    }
}

impl fmt::Display for FlipperConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for FlipperConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let id: u8 = s
            .trim()
            .parse()
            .map_err(|_| Error::Parameter(format!("bad configuration id {s:?}")))?;
        FlipperConfig::new(id)
    }
}

/// Bipolar user annotation: +1 permitted, -1 forbidden.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Forbidden,
    Permitted,
}

impl Label {
    pub fn value(self) -> f64 {
        match self {
            Label::Forbidden => -1.0,
            Label::Permitted => 1.0,
        }
    }

    pub fn from_value(v: f64) -> Result<Self> {
        if v == 1.0 {
            Ok(Label::Permitted)
        } else if v == -1.0 {
            Ok(Label::Forbidden)
        } else {
            Err(Error::Parameter(format!("label must be +1 or -1, got {v}")))
        }
    }

    pub fn is_permitted(self) -> bool {
        self == Label::Permitted
    }
}
