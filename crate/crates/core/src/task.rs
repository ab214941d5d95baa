use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{change, Direction, TargetPack};

/// The three forecasting tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Change,
    Direction,
    Magnitude,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Change, Task::Direction, Task::Magnitude];

    /// Channels of the model output map.
    pub fn output_channels(self) -> usize {
        match self {
            Task::Change | Task::Magnitude => 1,
            Task::Direction => 3,
        }
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            Task::Change => &change::NAMES,
            Task::Direction => &Direction::NAMES,
            Task::Magnitude => &[],
        }
    }

    pub fn is_classification(self) -> bool {
        self != Task::Magnitude
    }

    /// Class labels for a classification task, with [`IGNORE_LABEL`] on
    /// invalid pixels.
    pub fn labels(self, targets: &TargetPack) -> Option<&Array2<u8>> {
        match self {
            Task::Change => Some(&targets.change_mask),
            Task::Direction => Some(&targets.direction_mask),
            Task::Magnitude => None,
        }
    }

    /// Regression target and its validity, for the magnitude task.
    pub fn regression_target(self, targets: &TargetPack) -> Option<(&Array2<f64>, &Array2<bool>)> {
        (self == Task::Magnitude).then_some((&targets.magnitude.values, &targets.magnitude.valid))
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Change => "change",
            Task::Direction => "direction",
            Task::Magnitude => "magnitude",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown task {s:?}")))
    }
}
