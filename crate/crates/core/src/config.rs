//! Scenario description files.
//!
//! A scenario file is a list of `key = value` lines. Every key is optional;
//! anything left out comes from the chosen preset.
//!
//! ```text
//! preset = "paper-like"        # exact | paper-like | free-space
//! seed = 7
//! height_offset = 0.0          # receiver above the anchor plane, m
//! noise.white_sigma = 0.017    # V per sample
//! noise.jitter = 0.01          # relative, per tone and record
//! adc.bits = 12                # 0 disables quantization
//! adc.full_scale = 5.0         # V peak to peak
//! adc.sample_rate = 200000.0
//! adc.record_length = 300
//! anchor.B.alpha = 0.46
//! anchor.B.beta = 2.92
//! anchor.B.frequency = 35398.2
//! anchor.B.x = 2.678           # also y, z
//! ```

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::domain::{AnchorId, AnchorSet};
use crate::signal_sim::{SimError, SimScenario};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("scenario file: {0}")]
    Parse(String),
    #[error("unknown preset `{0}` (expected exact, paper-like or free-space)")]
    UnknownPreset(String),
    #[error("scenario file names unknown anchor `{0}`")]
    UnknownAnchor(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl From<SimError> for ConfigError {
    fn from(e: SimError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    Exact,
    #[default]
    PaperLike,
    FreeSpace,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self, ConfigError> {
        match name {
            "exact" => Ok(Preset::Exact),
            "paper-like" => Ok(Preset::PaperLike),
            "free-space" => Ok(Preset::FreeSpace),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    pub fn scenario(self, seed: u64) -> SimScenario {
        let mut scenario = match self {
            Preset::Exact => SimScenario::exact(),
            Preset::PaperLike => SimScenario::paper_like(seed),
            Preset::FreeSpace => SimScenario::free_space(),
        };
        scenario.noise.seed = seed;
        scenario
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseKeys {
    white_sigma: Option<f64>,
    jitter: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdcKeys {
    bits: Option<u32>,
    full_scale: Option<f64>,
    sample_rate: Option<f64>,
    record_length: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorKeys {
    x: Option<f64>,
    y: Option<f64>,
    z: Option<f64>,
    frequency: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    preset: Option<String>,
    seed: Option<u64>,
    height_offset: Option<f64>,
    #[serde(default)]
    noise: NoiseKeys,
    #[serde(default)]
    adc: AdcKeys,
    #[serde(default)]
    anchor: BTreeMap<String, AnchorKeys>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim().to_string()))
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Builds the scenario. `seed` overrides the file's seed.
    pub fn build(&self, seed: Option<u64>) -> Result<SimScenario, ConfigError> {
        let preset = self.preset.as_deref().map(Preset::parse).transpose()?.unwrap_or_default();
        let mut scenario = preset.scenario(seed.or(self.seed).unwrap_or(0));
        if let Some(h) = self.height_offset {
            scenario.receiver_height_offset = h;
        }
        if let Some(v) = self.noise.white_sigma {
            scenario.noise.white_noise_sigma = v;
        }
        if let Some(v) = self.noise.jitter {
            scenario.noise.amplitude_jitter_rel = v;
        }
        let adc = &mut scenario.adc;
        if let Some(bits) = self.adc.bits {
            adc.bits = (bits > 0).then_some(bits);
        }
        if let Some(v) = self.adc.full_scale {
            adc.full_scale = v;
        }
        if let Some(v) = self.adc.sample_rate {
            adc.sample_rate = v;
        }
        if let Some(v) = self.adc.record_length {
            adc.record_length = v;
        }
        if !self.anchor.is_empty() {
            let mut anchors = scenario.anchor_set.anchors().to_vec();
            for (name, keys) in &self.anchor {
                let id: AnchorId = name.parse().map_err(|_| ConfigError::UnknownAnchor(name.clone()))?;
                let anchor = anchors
                    .iter_mut()
                    .find(|a| a.id == id)
                    .ok_or_else(|| ConfigError::UnknownAnchor(name.clone()))?;
                let set = |field: &mut f64, v: Option<f64>| {
                    if let Some(v) = v {
                        *field = v;
                    }
                };
                set(&mut anchor.position.x, keys.x);
                set(&mut anchor.position.y, keys.y);
                set(&mut anchor.position.z, keys.z);
                set(&mut anchor.frequency, keys.frequency);
                set(&mut anchor.alpha, keys.alpha);
                set(&mut anchor.beta, keys.beta);
            }
            scenario.anchor_set = AnchorSet::new(anchors).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let adc_ok = scenario.adc.full_scale > 0.0 && scenario.adc.sample_rate > 0.0;
        let noise_ok = scenario.noise.white_noise_sigma >= 0.0 && scenario.noise.amplitude_jitter_rel >= 0.0;
        if !adc_ok || !noise_ok || !scenario.receiver_height_offset.is_finite() {
            return Err(ConfigError::Invalid("noise and converter settings must be non-negative".into()));
        }
        SimScenario::new(scenario.anchor_set, scenario.noise, scenario.adc, scenario.receiver_height_offset)
            .map_err(ConfigError::from)
    }
}

/// Parses a scenario file and builds it.
pub fn load_scenario(text: &str, seed: Option<u64>) -> Result<SimScenario, ConfigError> {
    ScenarioFile::parse(text)?.build(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default_preset() {
        let s = load_scenario("", None).unwrap();
        assert_eq!(s, SimScenario::paper_like(0));
    }

    #[test]
    fn keys_override_preset() {
        let text = r#"
            preset = "exact"
            seed = 9
            noise.white_sigma = 0.001
            adc.bits = 10
            anchor.B.alpha = 0.7
            anchor.b.beta = 2.5
        "#;
        let s = load_scenario(text, None).unwrap();
        assert_eq!(s.noise.seed, 9);
        assert_eq!(s.noise.white_noise_sigma, 0.001);
        assert_eq!(s.adc.bits, Some(10));
        let b = s.anchor_set.get(AnchorId('B')).unwrap();
        assert_eq!((b.alpha, b.beta), (0.7, 2.5));
        assert_eq!(load_scenario(text, Some(3)).unwrap().noise.seed, 3);
        assert_eq!(load_scenario("adc.bits = 0", None).unwrap().adc.bits, None);
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(matches!(load_scenario("preset = \"moon\"", None), Err(ConfigError::UnknownPreset(_))));
        assert!(matches!(load_scenario("colour = 3", None), Err(ConfigError::Parse(_))));
        assert!(matches!(load_scenario("anchor.Q.alpha = 1.0", None), Err(ConfigError::UnknownAnchor(_))));
        assert!(matches!(load_scenario("anchor.A.alpha = -1.0", None), Err(ConfigError::Invalid(_))));
        assert!(matches!(load_scenario("adc.record_length = 4", None), Err(ConfigError::Invalid(_))));
        assert!(matches!(load_scenario("noise.jitter = -0.1", None), Err(ConfigError::Invalid(_))));
    }
}
