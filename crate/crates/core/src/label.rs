//! Binary recording/window class.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Class of a recording or window. `Abnormal` is the positive class
/// throughout: sensitivity is recall on abnormal examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        }
    }

    /// Softmax class index: normal = 0, abnormal = 1.
    pub fn class_index(self) -> usize {
        match self {
            Label::Normal => 0,
            Label::Abnormal => 1,
        }
    }

    pub fn from_class_index(index: usize) -> Option<Label> {
        match index {
            0 => Some(Label::Normal),
            1 => Some(Label::Abnormal),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "normal" => Ok(Label::Normal),
            "abnormal" => Ok(Label::Abnormal),
            other => Err(Error::InvalidInput(format!(
                "unknown label `{other}` (expected `normal` or `abnormal`)"
            ))),
        }
    }
}
