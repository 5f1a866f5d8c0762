//! Dataset presets: frame rate, horizon, epochs and skeleton per dataset.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{HorizonSpec, Skeleton};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    H36m,
    Cmu,
    Darko,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetSpec {
    pub fps: f64,
    pub input_len: usize,
    pub output_len: usize,
    pub max_epochs: usize,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::H36m, Preset::Cmu, Preset::Darko];

    pub fn spec(self) -> PresetSpec {
        match self {
            Preset::H36m => PresetSpec {
                fps: 10.0,
                input_len: 5,
                output_len: 20,
                max_epochs: 20,
            },
            Preset::Cmu => PresetSpec {
                fps: 10.0,
                input_len: 5,
                output_len: 10,
                max_epochs: 50,
            },
            Preset::Darko => PresetSpec {
                fps: 16.0,
                input_len: 15,
                output_len: 30,
                max_epochs: 125,
            },
        }
    }

    pub fn horizon(self) -> HorizonSpec {
        let s = self.spec();
        HorizonSpec::new(s.input_len, s.output_len).expect("preset horizons are valid")
    }

    pub fn skeleton(self) -> Skeleton {
        match self {
            Preset::H36m => Skeleton::h36m17(),
            Preset::Cmu => Skeleton::cmu31(),
            Preset::Darko => Skeleton::darko30(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::H36m => "h36m",
            Preset::Cmu => "cmu",
            Preset::Darko => "darko",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset {s:?}")))
    }
}
