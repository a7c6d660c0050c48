//! Complex audio scenarios: per-episode second sound and distractor draws,
//! per-step distractor placement and spectrogram masking.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acoustics::Spectrogram;
use crate::gridmap::{Cell, GridMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("complex scenarios need at least two candidate sounds, got {0}")]
    TooFewSounds(usize),
    #[error("{axis} mask parameter {param} exceeds axis length {len}")]
    MaskTooLarge {
        axis: &'static str,
        param: usize,
        len: usize,
    },
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub complex_enabled: bool,
    pub p_second_sound: f64,
    pub p_distractor_episode: f64,
    pub p_distractor_step: f64,
    /// Maximum masked time frames.
    pub time_mask_param: usize,
    /// Maximum masked frequency bins.
    pub freq_mask_param: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::for_rate(16_000)
    }
}

impl ScenarioConfig {
    /// Mask parameters of the 16 kHz (12/12) or 44.1 kHz (32/12) setups.
    pub fn for_rate(sample_rate: u32) -> Self {
        Self {
            complex_enabled: false,
            p_second_sound: 0.5,
            p_distractor_episode: 0.5,
            p_distractor_step: 0.5,
            time_mask_param: if sample_rate >= 44_100 { 32 } else { 12 },
            freq_mask_param: 12,
        }
    }

    pub fn complex(mut self) -> Self {
        self.complex_enabled = true;
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        for p in [self.p_second_sound, self.p_distractor_episode, self.p_distractor_step] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ScenarioError::BadProbability(p));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EpisodeAudioPlan {
    pub second_sound_id: Option<String>,
    pub distractor_enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    #[default]
    None,
    TimeMask,
    FreqMask,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepAudioEvents {
    pub distractor_active: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub distractor_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub distractor_cell: Option<Cell>,
    pub augmentation: Augmentation,
}

fn pick_other<'a, R: Rng + ?Sized>(rng: &mut R, pool: &'a [String], exclude: &str) -> Option<&'a String> {
    let candidates: Vec<&String> = pool.iter().filter(|id| id.as_str() != exclude).collect();
    candidates.choose(rng).copied()
}

/// Episode-level draws: whether a second sound plays at the target's
/// position (and which), and whether a distractor may appear.
pub fn plan_episode<R: Rng + ?Sized>(
    rng: &mut R,
    config: &ScenarioConfig,
    target_id: &str,
    pool: &[String],
) -> Result<EpisodeAudioPlan, ScenarioError> {
    if !config.complex_enabled {
        return Ok(EpisodeAudioPlan::default());
    }
    config.validate()?;
    let others = pool.iter().filter(|id| id.as_str() != target_id).count();
    if others < 1 {
        return Err(ScenarioError::TooFewSounds(pool.len()));
    }
    let second_sound_id = if rng.gen_bool(config.p_second_sound) {
        pick_other(rng, pool, target_id).cloned()
    } else {
        None
    };
    let distractor_enabled = rng.gen_bool(config.p_distractor_episode);
    Ok(EpisodeAudioPlan {
        second_sound_id,
        distractor_enabled,
    })
}

/// Step-level draws. The distractor coin is flipped every step; when it
/// is audible a fresh sound and a uniform traversable cell are drawn. The
/// augmentation is none with probability 1/2, otherwise uniform over the
/// three masking kinds.
pub fn plan_step<R: Rng + ?Sized>(
    rng: &mut R,
    config: &ScenarioConfig,
    plan: &EpisodeAudioPlan,
    target_id: &str,
    pool: &[String],
    map: &GridMap,
) -> StepAudioEvents {
    if !config.complex_enabled {
        return StepAudioEvents::default();
    }
    let mut events = StepAudioEvents::default();
    let distractor_step = rng.gen_bool(config.p_distractor_step);
    if plan.distractor_enabled && distractor_step {
        if let Some(id) = pick_other(rng, pool, target_id) {
            let cell = *map.free_cells().choose(rng).expect("maps have free cells");
            events.distractor_active = true;
            events.distractor_id = Some(id.clone());
            events.distractor_cell = Some(cell);
        }
    }
    if rng.gen_bool(0.5) {
        events.augmentation = *[Augmentation::TimeMask, Augmentation::FreqMask, Augmentation::Both]
            .choose(rng)
            .expect("non-empty");
    }
    events
}

/// Zeroes one contiguous block of time frames and/or frequency bins across
/// both ears (time first when both).
pub fn apply_spec_augment<R: Rng + ?Sized>(
    spec: &Spectrogram,
    kind: Augmentation,
    rng: &mut R,
    config: &ScenarioConfig,
) -> Result<Spectrogram, ScenarioError> {
    let mut out = spec.clone();
    if matches!(kind, Augmentation::TimeMask | Augmentation::Both) {
        if config.time_mask_param > spec.time_frames {
            return Err(ScenarioError::MaskTooLarge {
                axis: "time",
                param: config.time_mask_param,
                len: spec.time_frames,
            });
        }
        let width = rng.gen_range(0..=config.time_mask_param);
        let start = rng.gen_range(0..=spec.time_frames - width);
        for f in 0..out.freq_bins {
            for t in start..start + width {
                for ch in 0..Spectrogram::CHANNELS {
                    out.set(f, t, ch, 0.0);
                }
            }
        }
    }
    if matches!(kind, Augmentation::FreqMask | Augmentation::Both) {
        if config.freq_mask_param > spec.freq_bins {
            return Err(ScenarioError::MaskTooLarge {
                axis: "frequency",
                param: config.freq_mask_param,
                len: spec.freq_bins,
            });
        }
        let width = rng.gen_range(0..=config.freq_mask_param);
        let start = rng.gen_range(0..=spec.freq_bins - width);
        for f in start..start + width {
            for t in 0..out.time_frames {
                for ch in 0..Spectrogram::CHANNELS {
                    out.set(f, t, ch, 0.0);
                }
            }
        }
    }
    Ok(out)
}
