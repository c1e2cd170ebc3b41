//! Seeded generators standing in for recorded engine sounds and photographed
//! vehicles.

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::rng::XorShift64Star;
use crate::audio::{AudioClip, AudioError};
use crate::math;
use crate::vision::{MaskedImage, Rgb, VisionError};

/// Peak absolute amplitude of every synthesized clip.
pub const SYNTH_PEAK: f64 = 0.95;

pub const MIN_IMAGE_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid engine profile: {0}")]
    BadProfile(&'static str),
    #[error("duration must be positive and finite")]
    BadDuration,
    #[error("image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, got {0}x{1}")]
    ImageTooSmall(usize, usize),
    #[error("color noise must be finite and non-negative")]
    BadColorNoise,
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Vision(#[from] VisionError),
}

/// Additive-harmonic engine model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EngineProfile {
    /// Hz.
    pub fundamental: f64,
    /// Amplitude of harmonic `k + 1` at index `k`.
    pub harmonic_amplitudes: Vec<f64>,
    /// White-noise amplitude relative to the summed harmonic amplitudes, in `[0, 1)`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub noise_level: f64,
    /// Maximum relative deviation of the fundamental between clips.
    #[cfg_attr(feature = "serde", serde(default))]
    pub jitter: f64,
}

impl EngineProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.fundamental.is_finite() && self.fundamental > 0.0) {
            return Err(SynthError::BadProfile("fundamental must be positive"));
        }
        if self.harmonic_amplitudes.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(SynthError::BadProfile("harmonic amplitudes must be finite and non-negative"));
        }
        if !self.harmonic_amplitudes.iter().any(|&a| a > 0.0) {
            return Err(SynthError::BadProfile("at least one harmonic amplitude must be positive"));
        }
        if !(0.0..1.0).contains(&self.noise_level) {
            return Err(SynthError::BadProfile("noise level must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(SynthError::BadProfile("jitter must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Synthesizes `duration` seconds of an engine: harmonics of
/// `fundamental * (1 + jitter * u)` with `u` drawn once per clip, random
/// starting phases, uniform white noise, and peak normalization to
/// [`SYNTH_PEAK`].
pub fn synth_engine_sound(
    profile: &EngineProfile,
    duration: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<AudioClip, SynthError> {
    profile.validate()?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(SynthError::BadDuration);
    }
    if sample_rate == 0 {
        return Err(AudioError::ZeroSampleRate.into());
    }
    let n = (math::round(duration * sample_rate as f64) as usize).max(1);
    let mut rng = XorShift64Star::new(seed);
    let u = rng.next_signed();
    let f0 = profile.fundamental * (1.0 + profile.jitter * u);
    let nyquist = sample_rate as f64 / 2.0;
    let partials: Vec<(f64, f64, f64)> = profile
        .harmonic_amplitudes
        .iter()
        .enumerate()
        .map(|(k, &amp)| {
            let phase = 2.0 * PI * rng.next_f64();
            (amp, 2.0 * PI * f0 * (k + 1) as f64 / sample_rate as f64, phase)
        })
        .filter(|&(amp, omega, _)| amp > 0.0 && omega * sample_rate as f64 / (2.0 * PI) < nyquist)
        .collect();
    let noise_amp = profile.noise_level * profile.harmonic_amplitudes.iter().sum::<f64>();

    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64;
            let tone: f64 = partials
                .iter()
                .map(|&(amp, omega, phase)| amp * math::sin(omega * t + phase))
                .sum();
            tone + noise_amp * rng.next_signed()
        })
        .collect();

    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let gain = SYNTH_PEAK / peak;
        samples.iter_mut().for_each(|s| *s *= gain);
    }
    Ok(AudioClip::new(samples, sample_rate)?)
}

/// Synthesizes a vehicle photo: an ellipse of `body_color` with seeded
/// Gaussian channel noise on a zeroed, masked-out background. Each seed also
/// shifts and scales the ellipse slightly, mimicking a changed camera angle.
pub fn synth_vehicle_image(
    body_color: Rgb,
    color_noise: f64,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<MaskedImage, SynthError> {
    if width < MIN_IMAGE_SIDE || height < MIN_IMAGE_SIDE {
        return Err(SynthError::ImageTooSmall(width, height));
    }
    if !(color_noise.is_finite() && color_noise >= 0.0) {
        return Err(SynthError::BadColorNoise);
    }
    let mut rng = XorShift64Star::new(seed);
    let cx = width as f64 / 2.0 + 0.05 * width as f64 * rng.next_signed();
    let cy = height as f64 / 2.0 + 0.05 * height as f64 * rng.next_signed();
    let scale = 1.0 + 0.08 * rng.next_signed();
    let rx = 0.4 * width as f64 * scale;
    let ry = 0.35 * height as f64 * scale;

    let mut pixels = Vec::with_capacity(width * height);
    let mut mask = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let dx = (x as f64 + 0.5 - cx) / rx;
            let dy = (y as f64 + 0.5 - cy) / ry;
            let inside = dx * dx + dy * dy <= 1.0;
            if inside {
                let px = body_color.0.map(|c| {
                    let v = c as f64 + color_noise * rng.next_gaussian();
                    math::round(v).clamp(0.0, 255.0) as u8
                });
                pixels.push(Rgb(px));
            } else {
                pixels.push(Rgb::default());
            }
            mask.push(inside);
        }
    }
    Ok(MaskedImage::new(width, height, pixels, Some(mask))?)
}
