//! Synthetic fleets (engine profiles, body colors) and the duration sweep.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::accuracy::{pairwise_accuracy, AccuracyReport};
use super::matrix::{distance_matrix, Feature, LabeledSample};
use super::rng::derive_seed;
use super::synth::{synth_engine_sound, synth_vehicle_image, EngineProfile};
use super::EvalError;
use crate::audio::{audio_signature, FrameParams};
use crate::vision::{color_histogram, Rgb};

/// Several engines, each recorded `clips_per_profile` times.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FleetSpec {
    pub profiles: Vec<(String, EngineProfile)>,
    pub clips_per_profile: usize,
    pub sample_rate: u32,
    pub seed: u64,
}

fn profile(fundamental: f64, harmonic_amplitudes: &[f64]) -> EngineProfile {
    EngineProfile {
        fundamental,
        harmonic_amplitudes: harmonic_amplitudes.to_vec(),
        noise_level: 0.003,
        jitter: 0.01,
    }
}

impl Default for FleetSpec {
    /// Six engines whose mean centroids sit a few hundred Hz apart.
    fn default() -> Self {
        let profiles = [
            ("engine-1", profile(56.0, &[1.0, 0.9, 0.7, 0.4, 0.2])),
            ("engine-2", profile(150.0, &[0.6, 1.0, 0.8, 0.5, 0.3])),
            ("engine-3", profile(240.0, &[0.7, 1.0, 0.8, 0.4, 0.3])),
            ("engine-4", profile(330.0, &[0.5, 1.0, 0.9, 0.6, 0.2])),
            ("engine-5", profile(430.0, &[0.6, 1.0, 0.7, 0.5, 0.3])),
            ("engine-6", profile(520.0, &[0.6, 1.0, 0.9, 0.5, 0.3])),
        ];
        FleetSpec {
            profiles: profiles
                .into_iter()
                .map(|(l, p)| (l.to_string(), p))
                .collect(),
            clips_per_profile: 10,
            sample_rate: 44_100,
            seed: 0x5EED,
        }
    }
}

impl FleetSpec {
    /// Seed of clip `clip` of profile `profile` in synthesis round `round`.
    pub fn clip_seed(&self, round: u64, profile: usize, clip: usize) -> u64 {
        derive_seed(self.seed, &[round, profile as u64, clip as u64])
    }

    /// Synthesizes every clip and computes its signature. Per-clip failures
    /// are collected as messages instead of aborting the corpus.
    pub fn audio_corpus(
        &self,
        duration: f64,
        params: &FrameParams,
        round: u64,
    ) -> (Vec<LabeledSample>, Vec<String>) {
        let mut samples = Vec::new();
        let mut errors = Vec::new();
        for (p, (label, profile)) in self.profiles.iter().enumerate() {
            for c in 0..self.clips_per_profile {
                let seed = self.clip_seed(round, p, c);
                let result = synth_engine_sound(profile, duration, self.sample_rate, seed)
                    .map_err(|e| e.to_string())
                    .and_then(|clip| audio_signature(&clip, params).map_err(|e| e.to_string()));
                match result {
                    Ok(sig) => samples.push(LabeledSample::new(
                        label.clone(),
                        Feature::Audio(sig),
                        format!("synth:{seed:#018x}"),
                    )),
                    Err(e) => errors.push(format!("{label} clip {c}: {e}")),
                }
            }
        }
        (samples, errors)
    }
}

/// Several vehicle body colors, each photographed `images_per_color` times.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PaletteSpec {
    pub colors: Vec<(String, Rgb)>,
    pub images_per_color: usize,
    pub color_noise: f64,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl Default for PaletteSpec {
    /// Three reddish bodies within 48 channel units of each other and one blue.
    fn default() -> Self {
        let colors = [
            ("car-1", Rgb::new(176, 48, 48)),
            ("car-2", Rgb::new(176, 48, 96)),
            ("car-3", Rgb::new(208, 80, 48)),
            ("car-4", Rgb::new(48, 80, 176)),
        ];
        PaletteSpec {
            colors: colors.into_iter().map(|(l, c)| (l.to_string(), c)).collect(),
            images_per_color: 8,
            color_noise: 8.0,
            width: 64,
            height: 48,
            seed: 0xC0108,
        }
    }
}

impl PaletteSpec {
    pub fn image_seed(&self, color: usize, image: usize) -> u64 {
        derive_seed(self.seed, &[color as u64, image as u64])
    }

    pub fn visual_corpus(&self, bins_per_channel: usize) -> Result<Vec<LabeledSample>, EvalError> {
        let mut samples = Vec::new();
        for (ci, (label, color)) in self.colors.iter().enumerate() {
            for i in 0..self.images_per_color {
                let seed = self.image_seed(ci, i);
                let img = synth_vehicle_image(*color, self.color_noise, self.width, self.height, seed)?;
                let hist = color_histogram(&img, bins_per_channel)?;
                samples.push(LabeledSample::new(
                    label.clone(),
                    Feature::Visual(hist),
                    format!("synth:{seed:#018x}"),
                ));
            }
        }
        Ok(samples)
    }
}

/// One duration's outcome. A row with errors is invalid and carries no report.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub duration: f64,
    pub samples: usize,
    pub errors: Vec<String>,
    pub report: Option<AccuracyReport>,
}

impl SweepRow {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty() && self.report.is_some()
    }

    pub fn accuracy(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.accuracy)
    }
}

/// Runs the audio pipeline and pairwise accuracy once per duration, each on a
/// freshly synthesized corpus.
pub fn duration_sweep(
    fleet: &FleetSpec,
    durations: &[f64],
    params: &FrameParams,
    threshold: f64,
) -> Vec<SweepRow> {
    durations
        .iter()
        .enumerate()
        .map(|(round, &duration)| {
            let (samples, mut errors) = if duration.is_finite() && duration > 0.0 {
                fleet.audio_corpus(duration, params, round as u64)
            } else {
                (Vec::new(), alloc::vec![format!("duration {duration} must be positive")])
            };
            let mut report = None;
            if errors.is_empty() {
                let labels: Vec<String> = samples.iter().map(|s| s.label.clone()).collect();
                match distance_matrix(&samples).and_then(|m| pairwise_accuracy(&m, &labels, threshold)) {
                    Ok(r) => report = Some(r),
                    Err(e) => errors.push(e.to_string()),
                }
            }
            SweepRow {
                duration,
                samples: samples.len(),
                errors,
                report,
            }
        })
        .collect()
}
