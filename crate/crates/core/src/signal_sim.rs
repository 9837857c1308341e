//! Forward model of the receive chain: anchor tones attenuated by the power
//! law, summed at the receiver coil, and digitized by a uniform ADC.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Anchor, AnchorId, AnchorSet, Point2, SampleRecord};

/// Power-law constants `(alpha, beta)` of the simulated deployment, A..D.
///
/// Gains put a receiver 0.65 m from an anchor at roughly 1.7 V, inside the
/// 5 V peak-to-peak ADC range, while the far corner of the area still sits
/// around a millivolt. Exponents scatter around 3 to mimic mild field
/// distortion.
pub const DEFAULT_CONSTANTS: [(f64, f64); 4] = [(0.50, 3.00), (0.46, 2.92), (0.54, 3.06), (0.48, 2.97)];

/// Ideal coplanar free-space coupling: every exponent is exactly 3.
pub const FREE_SPACE_CONSTANTS: [(f64, f64); 4] = [(0.5, 3.0); 4];

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("position coincides with anchor {0}")]
    CoincidentPoint(AnchorId),
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Additive Gaussian noise per sample, volts.
    pub white_noise_sigma: f64,
    /// Relative standard deviation of a per-acquisition gain perturbation
    /// applied independently to each tone.
    pub amplitude_jitter_rel: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub const fn silent() -> Self {
        NoiseModel { white_noise_sigma: 0.0, amplitude_jitter_rel: 0.0, seed: 0 }
    }

    /// Noise level that lands the interior mean positioning error near
    /// 12 cm on the surveyed layout with [`DEFAULT_CONSTANTS`].
    pub const fn paper_like(seed: u64) -> Self {
        NoiseModel { white_noise_sigma: 17e-3, amplitude_jitter_rel: 0.01, seed }
    }

    pub fn is_silent(&self) -> bool {
        self.white_noise_sigma == 0.0 && self.amplitude_jitter_rel == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    /// `None` disables quantization (samples are still clamped to the rails).
    pub bits: Option<u32>,
    /// Peak-to-peak range, volts.
    pub full_scale: f64,
    pub sample_rate: f64,
    pub record_length: usize,
}

impl Default for AdcConfig {
    fn default() -> Self {
        AdcConfig { bits: Some(12), full_scale: 5.0, sample_rate: 200_000.0, record_length: 300 }
    }
}

impl AdcConfig {
    pub fn ideal() -> Self {
        AdcConfig { bits: None, ..Self::default() }
    }

    /// Size of one code step, volts. Zero for an ideal converter.
    pub fn lsb(&self) -> f64 {
        match self.bits {
            Some(bits) => self.full_scale / 2f64.powi(bits as i32),
            None => 0.0,
        }
    }

    /// Lowest and highest representable sample values.
    pub fn rails(&self) -> (f64, f64) {
        match self.bits {
            Some(bits) => {
                let half = 2f64.powi(bits as i32 - 1);
                let lsb = self.lsb();
                (-half * lsb, (half - 1.0) * lsb)
            }
            None => (-self.full_scale / 2.0, self.full_scale / 2.0),
        }
    }

    /// Mid-tread uniform quantizer with saturation at the rails.
    pub fn quantize(&self, v: f64) -> f64 {
        let (lo, hi) = self.rails();
        match self.bits {
            Some(_) => {
                let lsb = self.lsb();
                ((v / lsb).round() * lsb).clamp(lo, hi)
            }
            None => v.clamp(lo, hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub anchor_set: AnchorSet,
    pub noise: NoiseModel,
    /// Tone phase at t = 0, radians.
    pub phases: BTreeMap<AnchorId, f64>,
    pub adc: AdcConfig,
    /// Receiver height above the anchor plane, meters.
    pub receiver_height_offset: f64,
}

impl SimScenario {
    pub fn new(
        anchor_set: AnchorSet,
        noise: NoiseModel,
        adc: AdcConfig,
        receiver_height_offset: f64,
    ) -> Result<Self, SimError> {
        let phases = default_phases(&anchor_set);
        let scenario = SimScenario { anchor_set, noise, phases, adc, receiver_height_offset };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Noise-free, unquantized chain on the surveyed anchors.
    pub fn exact() -> Self {
        Self::new(
            AnchorSet::surveyed(DEFAULT_CONSTANTS),
            NoiseModel::silent(),
            AdcConfig::ideal(),
            0.0,
        )
        .expect("exact preset is valid")
    }

    /// 12-bit chain with the tuned noise preset.
    pub fn paper_like(seed: u64) -> Self {
        Self::new(
            AnchorSet::surveyed(DEFAULT_CONSTANTS),
            NoiseModel::paper_like(seed),
            AdcConfig::default(),
            0.0,
        )
        .expect("paper-like preset is valid")
    }

    /// Free-space exponents on an ideal, noise-free chain.
    pub fn free_space() -> Self {
        Self::new(
            AnchorSet::surveyed(FREE_SPACE_CONSTANTS),
            NoiseModel::silent(),
            AdcConfig::ideal(),
            0.0,
        )
        .expect("free-space preset is valid")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::InvalidScenario(msg));
        let tones = self.anchor_set.len();
        if self.adc.record_length < 2 * tones + 1 {
            return invalid(format!(
                "record length {} too short for {tones} tones",
                self.adc.record_length
            ));
        }
        if !(self.adc.sample_rate.is_finite() && self.adc.sample_rate > 0.0) {
            return invalid("sample rate must be positive".into());
        }
        if !(self.adc.full_scale.is_finite() && self.adc.full_scale > 0.0) {
            return invalid("full scale must be positive".into());
        }
        if matches!(self.adc.bits, Some(b) if b == 0 || b > 32) {
            return invalid("ADC bits must be in 1..=32".into());
        }
        if !(self.noise.white_noise_sigma >= 0.0 && self.noise.white_noise_sigma.is_finite()) {
            return invalid("noise sigma must be non-negative".into());
        }
        if !(self.noise.amplitude_jitter_rel >= 0.0 && self.noise.amplitude_jitter_rel.is_finite()) {
            return invalid("amplitude jitter must be non-negative".into());
        }
        if !self.receiver_height_offset.is_finite() {
            return invalid("height offset must be finite".into());
        }
        Ok(())
    }

    /// Elevation of the receiver seen from an anchor at planar distance `d`,
    /// radians.
    pub fn elevation_angle(&self, planar_distance: f64) -> f64 {
        self.receiver_height_offset.abs().atan2(planar_distance)
    }
}

/// Fixed pseudo-random phase per anchor.
pub fn default_phases(anchor_set: &AnchorSet) -> BTreeMap<AnchorId, f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
    anchor_set.iter().map(|a| (a.id, rng.random_range(0.0..TAU))).collect()
}

/// Planar Euclidean distance from an anchor to `position`.
pub fn true_distance(anchor: &Anchor, position: &Point2) -> Result<f64, SimError> {
    let d = (position - anchor.planar()).norm();
    if d > 0.0 {
        Ok(d)
    } else {
        Err(SimError::CoincidentPoint(anchor.id))
    }
}

/// `alpha * d^-beta`.
pub fn power_law(alpha: f64, beta: f64, distance: f64) -> Result<f64, SimError> {
    if distance > 0.0 && distance.is_finite() {
        Ok(alpha * distance.powf(-beta))
    } else {
        Err(SimError::NonPositiveDistance(distance))
    }
}

pub fn tone_amplitude(anchor: &Anchor, distance: f64) -> Result<f64, SimError> {
    power_law(anchor.alpha, anchor.beta, distance)
}

/// Synthesizes one ADC record with the receiver at `position`, starting at
/// time `t0`.
///
/// Noise is drawn from a stream keyed by the scenario seed, the position and
/// `t0`, so the same inputs always give the same record.
pub fn synthesize_record(scenario: &SimScenario, position: &Point2, t0: f64) -> Result<SampleRecord, SimError> {
    scenario.validate()?;
    if !(position.x.is_finite() && position.y.is_finite() && t0.is_finite()) {
        return Err(SimError::InvalidScenario("non-finite position or time".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise_key(scenario.noise.seed, position, t0));
    let jitter = scenario.noise.amplitude_jitter_rel;
    let h = scenario.receiver_height_offset;

    let mut tones = Vec::with_capacity(scenario.anchor_set.len());
    for anchor in &scenario.anchor_set {
        let planar = true_distance(anchor, position)?;
        let mut amplitude = tone_amplitude(anchor, planar.hypot(h))?;
        if jitter > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            amplitude = (amplitude * (1.0 + jitter * z)).max(0.0);
        }
        let phase = scenario.phases.get(&anchor.id).copied().unwrap_or(0.0);
        tones.push((TAU * anchor.frequency, amplitude, phase));
    }

    let white = (scenario.noise.white_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, scenario.noise.white_noise_sigma).expect("sigma is validated"));
    let fs = scenario.adc.sample_rate;
    let samples = (0..scenario.adc.record_length)
        .map(|n| {
            let t = t0 + n as f64 / fs;
            let clean: f64 = tones.iter().map(|&(w, a, phi)| a * (w * t + phi).sin()).sum();
            let noisy = match &white {
                Some(dist) => clean + dist.sample(&mut rng),
                None => clean,
            };
            scenario.adc.quantize(noisy)
        })
        .collect();

    Ok(SampleRecord {
        samples,
        sample_rate: fs,
        adc_bits: scenario.adc.bits,
        full_scale: scenario.adc.full_scale,
        timestamp: t0,
    })
}

/// True iff any sample sits at (or beyond) an ADC rail.
pub fn saturation_flag(record: &SampleRecord) -> bool {
    let adc = AdcConfig {
        bits: record.adc_bits,
        full_scale: record.full_scale,
        sample_rate: record.sample_rate,
        record_length: record.samples.len(),
    };
    let (lo, hi) = adc.rails();
    let eps = 1e-12 * record.full_scale;
    record.samples.iter().any(|&s| s >= hi - eps || s <= lo + eps)
}

fn noise_key(seed: u64, position: &Point2, t0: f64) -> u64 {
    [position.x.to_bits(), position.y.to_bits(), t0.to_bits()]
        .into_iter()
        .fold(splitmix64(seed), |acc, word| splitmix64(acc ^ word))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
