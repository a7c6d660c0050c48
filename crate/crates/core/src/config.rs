//! Versioned TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustics::AcousticParams;
use crate::engine::{ActionMode, RewardMode, DEFAULT_STEP_LIMIT};
use crate::gridmap::{MapGenParams, ScanParams};
use crate::scenario::ScenarioConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config version {found} is not supported (expected {expected})")]
    Version { expected: u32, found: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoundCondition {
    /// Target and distractor sounds from the training split.
    Heard,
    /// Target and distractor sounds from the test split.
    Unheard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioCondition {
    Clean,
    Complex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSource {
    /// Directory of `.davmap` files; maps are generated when absent.
    pub dir: Option<PathBuf>,
    pub count: usize,
    /// Seed of the first generated map; map `i` uses `seed + i`.
    pub seed: u64,
    pub generator: MapGenParams,
}

impl Default for MapSource {
    fn default() -> Self {
        Self {
            dir: None,
            count: 4,
            seed: 0,
            generator: MapGenParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoundSource {
    /// Directory of WAV files plus `splits.txt`; synthesized when absent.
    pub dir: Option<PathBuf>,
    pub count: usize,
    pub seed: u64,
    pub sample_rate: u32,
    pub duration_s: f64,
}

impl Default for SoundSource {
    fn default() -> Self {
        Self {
            dir: None,
            count: 24,
            seed: 0,
            sample_rate: 16_000,
            duration_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub name: String,
    pub seed: u64,
    pub episodes: usize,
    pub maps: MapSource,
    pub sounds: SoundSource,
    /// Dynamic episodes draw their move probability from this list.
    pub move_probs: Vec<f64>,
    pub static_fraction: f64,
    pub conditions: Vec<SoundCondition>,
    pub audio: Vec<AudioCondition>,
    /// Mask sizes and probabilities; defaults follow the sample rate.
    pub scenario: Option<ScenarioConfig>,
    pub mode: ActionMode,
    pub reward_mode: RewardMode,
    pub step_limit: usize,
    pub acoustics: AcousticParams,
    pub scan: ScanParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            name: "suite".into(),
            seed: 0,
            episodes: 20,
            maps: MapSource::default(),
            sounds: SoundSource::default(),
            move_probs: vec![0.1, 0.2, 0.3, 0.4],
            static_fraction: 0.5,
            conditions: vec![SoundCondition::Heard, SoundCondition::Unheard],
            audio: vec![AudioCondition::Clean],
            scenario: None,
            mode: ActionMode::Raw,
            reward_mode: RewardMode::CurrentPosition,
            step_limit: DEFAULT_STEP_LIMIT,
            acoustics: AcousticParams::default(),
            scan: ScanParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative data directories are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for dir in [&mut cfg.maps.dir, &mut cfg.sounds.dir].into_iter().flatten() {
            if dir.is_relative() {
                *dir = base.join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version {
                expected: CONFIG_VERSION,
                found: self.version,
            });
        }
        if self.step_limit == 0 {
            return invalid("step_limit must be positive");
        }
        if !(0.0..=1.0).contains(&self.static_fraction) {
            return invalid("static_fraction must lie in [0, 1]");
        }
        if self.static_fraction < 1.0 && self.move_probs.is_empty() {
            return invalid("dynamic episodes need at least one move probability");
        }
        if self.move_probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return invalid("move probabilities must lie in (0, 1]");
        }
        if self.conditions.is_empty() || self.audio.is_empty() {
            return invalid("conditions and audio must not be empty");
        }
        if self.maps.dir.is_none() && self.maps.count == 0 {
            return invalid("maps.count must be positive");
        }
        if self.sounds.dir.is_none() && self.sounds.count == 0 {
            return invalid("sounds.count must be positive");
        }
        if let Some(s) = &self.scenario {
            s.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        self.scenario
            .unwrap_or_else(|| ScenarioConfig::for_rate(self.sounds.sample_rate))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg =
            RunConfig::from_toml("version = 1\nepisodes = 8\nmove_probs = [0.3]\n[sounds]\nsample_rate = 44100\n")
                .unwrap();
        assert_eq!(cfg.episodes, 8);
        assert_eq!(cfg.sounds.count, 24);
        assert_eq!(cfg.scenario_config().time_mask_param, 32);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(
            RunConfig::from_toml("version = 2\n"),
            Err(ConfigError::Version { found: 2, .. })
        ));
        assert!(RunConfig::from_toml("version = 1\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("version = 1\nmove_probs = [1.5]\n").is_err());
        assert!(RunConfig::from_toml("version = 1\nstep_limit = 0\n").is_err());
    }
}
