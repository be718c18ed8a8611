use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Weather hazard family a station, zone or model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HazardClass {
    Wind,
    Precipitation,
}

impl HazardClass {
    pub const ALL: [HazardClass; 2] = [HazardClass::Wind, HazardClass::Precipitation];

    pub fn as_str(self) -> &'static str {
        match self {
            HazardClass::Wind => "wind",
            HazardClass::Precipitation => "precipitation",
        }
    }

    /// Measurement unit of the scalar intensity for this class.
    pub fn unit(self) -> &'static str {
        match self {
            HazardClass::Wind => "m/s",
            HazardClass::Precipitation => "in",
        }
    }
}

impl fmt::Display for HazardClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown hazard class '{0}' (expected wind or precipitation)")]
pub struct UnknownHazard(pub String);

impl FromStr for HazardClass {
    type Err = UnknownHazard;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wind" => Ok(HazardClass::Wind),
            "precip" | "precipitation" => Ok(HazardClass::Precipitation),
            other => Err(UnknownHazard(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_short_and_long_names() {
        assert_eq!("precip".parse::<HazardClass>().unwrap(), HazardClass::Precipitation);
        assert_eq!("Wind".parse::<HazardClass>().unwrap(), HazardClass::Wind);
        assert!("hail".parse::<HazardClass>().is_err());
    }
}
