//! TOML run configuration. Every section is optional and falls back to the
//! toy defaults; unknown keys are rejected.
//!
//! ```toml
//! [scene]
//! num_uavs = 4
//! [ppo]
//! total_steps = 200000
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::antenna::AntennaModel;
use crate::beam::AnnealConfig;
use crate::channel::SceneConfig;
use crate::dqn::DqnConfig;
use crate::env::{AssociationEnv, LinkBudget};
use crate::error::{Error, Result};
use crate::ppo::PpoConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Seed of the random baseline.
    pub random_seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { random_seed: 11 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub scene: SceneConfig,
    pub antenna: AntennaModel,
    pub anneal: AnnealConfig,
    pub budget: LinkBudget,
    pub ppo: PpoConfig,
    pub dqn: DqnConfig,
    pub eval: EvalSettings,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Defaults, or the file when one is given.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Four-cell site with sixteen beams per BS and the long training budget.
    pub fn full_scale(num_uavs: usize, altitude: f64) -> Self {
        let mut s = Self {
            scene: SceneConfig::reference_site(num_uavs, altitude),
            ..Self::default()
        };
        s.ppo.total_steps = 35_000_000;
        s.dqn.total_steps = 35_000_000;
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.anneal.validate()?;
        self.budget.validate()?;
        self.ppo.validate()?;
        self.dqn.validate()
    }

    pub fn environment(&self) -> Result<AssociationEnv> {
        AssociationEnv::new(
            self.budget.clone(),
            self.scene.num_uavs,
            self.scene.num_bs,
            self.scene.num_beams,
        )
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_toy_default() {
        assert_eq!(Settings::from_toml("").unwrap(), Settings::default());
    }

    #[test]
    fn partial_override() {
        let s = Settings::from_toml("[scene]\nnum_uavs = 3\n[ppo]\ntotal_steps = 10\n").unwrap();
        assert_eq!(s.scene.num_uavs, 3);
        assert_eq!(s.ppo.total_steps, 10);
        assert_eq!(s.ppo.clip_eps, 0.15);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(Settings::from_toml("[ppo]\nclip = 0.2\n").is_err());
        assert!(Settings::from_toml("[ppo]\nepochs = 0\n").is_err());
        assert!(Settings::from_toml("[scene]\nnum_bs = 3\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let s = Settings::full_scale(10, 80.0);
        assert_eq!(Settings::from_toml(&s.to_toml()).unwrap(), s);
    }
}
