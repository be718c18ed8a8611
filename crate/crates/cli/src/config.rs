//! Pipeline configuration: one JSON file, unknown keys rejected, every field
//! optional with the defaults below.

use std::path::{Path, PathBuf};

use gridres_core::ingest::CleaningLimits;
use gridres_core::linkage::{HazardMapping, PrecipMode};
use gridres_core::scenario::ScenarioSpec;
use gridres_core::solver::LmOptions;
use gridres_core::synth::SynthSpec;
use gridres_core::HazardClass;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Raw input directory, relative to the workspace unless absolute.
    pub input_dir: PathBuf,
    /// Service boundary GeoJSON, relative to `input_dir` unless absolute.
    pub boundary: PathBuf,
    pub cleaning: CleaningLimits,
    pub hazard_mapping: HazardMapping,
    pub precip_mode: PrecipMode,
    pub solver: LmOptions,
    /// Density grid cell edge in degrees.
    pub density_cell_size: f64,
    pub scenarios: Vec<ScenarioSpec>,
    pub synth: SynthSpec,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            input_dir: PathBuf::from("input"),
            boundary: PathBuf::from("boundary.geojson"),
            cleaning: CleaningLimits::default(),
            hazard_mapping: HazardMapping::default(),
            precip_mode: PrecipMode::default(),
            solver: LmOptions::default(),
            density_cell_size: 0.01,
            scenarios: vec![
                ScenarioSpec {
                    hazard_class: HazardClass::Wind,
                    intensity: 35.0,
                    label: "35 m/s wind".into(),
                },
                ScenarioSpec {
                    hazard_class: HazardClass::Precipitation,
                    intensity: 2.5,
                    label: "2.5 in rainfall".into(),
                },
            ],
            synth: SynthSpec::default(),
        }
    }
}

impl Config {
    /// `explicit` must exist; otherwise `<workspace>/config.json` is used when
    /// present, else the defaults.
    pub fn load(explicit: Option<&Path>, workspace: &Path) -> Result<Self> {
        let path = match explicit {
            Some(p) if !p.exists() => return Err(CliError::MissingInput(p.to_path_buf())),
            Some(p) => Some(p.to_path_buf()),
            None => Some(workspace.join("config.json")).filter(|p| p.exists()),
        };
        let cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(&p)?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::validation(format!("config {}: {e}", p.display())))?
            }
            None => Config::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::validation(format!("config: {m}")));
        let c = &self.cleaning;
        if !(c.max_duration_days > 0.0 && c.max_duration_days <= 365.0) {
            return bad("cleaning.max_duration_days must be in (0, 365]".into());
        }
        if c.max_customers == 0 {
            return bad("cleaning.max_customers must be >= 1".into());
        }
        if !(0.0..=1440.0).contains(&c.restore_slack_minutes) {
            return bad("cleaning.restore_slack_minutes must be in [0, 1440]".into());
        }
        if let Err(e) = self.solver.validate() {
            return bad(format!("solver: {e}"));
        }
        if !(self.density_cell_size > 0.0 && self.density_cell_size <= 10.0) {
            return bad("density_cell_size must be in (0, 10]".into());
        }
        for label in &self.hazard_mapping.wind {
            if self
                .hazard_mapping
                .precipitation
                .iter()
                .any(|p| p.eq_ignore_ascii_case(label))
            {
                return bad(format!("hazard_mapping: '{label}' is listed under both classes"));
            }
        }
        for s in &self.scenarios {
            if !(s.intensity.is_finite() && s.intensity >= 0.0) {
                return bad(format!("scenario intensity {} must be finite and >= 0", s.intensity));
            }
        }
        Ok(())
    }

    pub fn input_path(&self, name: &str) -> PathBuf {
        self.input_dir.join(name)
    }

    pub fn boundary_path(&self) -> PathBuf {
        self.input_dir.join(&self.boundary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_config_parses() {
        let text = include_str!("../config.example.json");
        let cfg: Config = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.scenarios.len(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"solver": {"max_iter": 5}}"#).is_err());
        assert!(serde_json::from_str::<Config>(r#"{"colour": "red"}"#).is_err());
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg: Config = serde_json::from_str(r#"{"precip_mode": "peak"}"#).unwrap();
        assert_eq!(cfg.precip_mode, PrecipMode::Peak);
        assert_eq!(cfg.solver, LmOptions::default());
    }

    #[test]
    fn ranges_are_checked() {
        let cfg = Config { density_cell_size: 0.0, ..Config::default() };
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.hazard_mapping.precipitation.push("Tornado".into());
        assert!(cfg.validate().is_err());
    }
}
