//! TOML run configuration. Flags override these values, which override
//! the library defaults.

use crate::error::CliError;
use lpme::augment::{LiftMode, LiftSpec};
use lpme::lpme::{LpmeSettings, VolumeOptions};
use lpme::sim::{Estimator, FactorSets, SimSpec};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lpme,
    Pme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Cases and factor levels of the reduced desk-scale design.
    Desk,
    /// The complete 7776-combination design.
    Full,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub sim: SimSpec,
    pub lpme: LpmeSettings,
    pub factorial: FactorialSection,
    pub fit: FitSection,
    pub volume: VolumeOptions,
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorialSection {
    pub preset: Option<Preset>,
    /// Explicit factor levels; replaces the preset's.
    pub factors: Option<FactorSets>,
    pub cases: Option<Vec<usize>>,
    pub replicates: Option<usize>,
    pub estimators: Option<Vec<Estimator>>,
    pub fallback_gamma: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub mode: Option<Mode>,
    pub dim: Option<usize>,
    pub lift: Option<LiftSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftSection {
    pub mode: LiftMode,
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

impl LiftSection {
    pub fn spec(&self) -> LiftSpec {
        let mut s = LiftSpec::new(self.mode);
        if let Some(c) = self.scale {
            s = s.with_scale(c);
        }
        if let Some(c) = &self.center {
            s = s.with_center(c.clone());
        }
        s
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    /// Fixed-coordinate levels per parameter axis in section exports.
    pub section_levels: usize,
    /// Points along each exported polyline.
    pub section_samples: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            section_levels: 5,
            section_samples: 101,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }
}
