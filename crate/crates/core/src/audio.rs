//! Acoustic factor: spectral-centroid signatures of engine-sound recordings.
//!
//! A clip is cut into overlapping windowed frames. Each frame's magnitude
//! spectrum `M(n)` over bins with center frequencies `f(n)` yields a
//! spectral centroid `sum f(n) M(n) / sum M(n)`, the magnitude-weighted mean
//! frequency of the frame. The signature of a clip is the arithmetic mean of
//! its per-frame centroids, and two signatures are compared by the Euclidean
//! distance between their means, which for scalars is the absolute
//! difference in Hz.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::fft::{Complex, Fft};
use crate::math;

/// Frames whose magnitude sum falls at or below `VOICED_THRESHOLD_PER_SAMPLE * N`
/// are treated as silent and skipped.
pub const VOICED_THRESHOLD_PER_SAMPLE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("audio clip has no samples")]
    Empty,
    #[error("sample {index} = {value} is outside [-1, 1]")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("frame size {0} must be a power of two and at least 2")]
    BadFrameSize(usize),
    #[error("hop size {hop} must be in 1..={frame}")]
    BadHopSize { hop: usize, frame: usize },
    #[error("clip of {len} samples is shorter than one frame of {frame_size}")]
    TooShort { len: usize, frame_size: usize },
    #[error("frame is silent")]
    SilentFrame,
    #[error("every frame of the clip is silent")]
    AllSilent,
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(&'static str),
    #[error("invalid signature: {0}")]
    InvalidSignature(&'static str),
}

/// Decoded mono sample stream.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if samples.is_empty() {
            return Err(AudioError::Empty);
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !(-1.0..=1.0).contains(*s))
        {
            return Err(AudioError::SampleOutOfRange { index, value });
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => alloc::vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * math::cos(2.0 * PI * i as f64 / n as f64))
                .collect(),
        }
    }
}

/// STFT framing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FrameParams {
    pub frame_size: usize,
    pub hop_size: usize,
    pub window: Window,
}

impl Default for FrameParams {
    fn default() -> Self {
        FrameParams {
            frame_size: 2048,
            hop_size: 512,
            window: Window::Hann,
        }
    }
}

impl FrameParams {
    pub fn validate(&self) -> Result<(), AudioError> {
        if self.frame_size < 2 || !self.frame_size.is_power_of_two() {
            return Err(AudioError::BadFrameSize(self.frame_size));
        }
        if self.hop_size == 0 || self.hop_size > self.frame_size {
            return Err(AudioError::BadHopSize {
                hop: self.hop_size,
                frame: self.frame_size,
            });
        }
        Ok(())
    }

    /// Number of full frames that fit in `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_size {
            0
        } else {
            (len - self.frame_size) / self.hop_size + 1
        }
    }
}

/// Cuts the clip into windowed frames; the trailing partial frame is dropped.
pub fn frame_signal(clip: &AudioClip, params: &FrameParams) -> Result<Vec<Vec<f64>>, AudioError> {
    params.validate()?;
    check_length(clip, params)?;
    let window = params.window.coefficients(params.frame_size);
    let frames = (0..params.frame_count(clip.len()))
        .map(|i| {
            let start = i * params.hop_size;
            clip.samples[start..start + params.frame_size]
                .iter()
                .zip(&window)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect();
    Ok(frames)
}

fn check_length(clip: &AudioClip, params: &FrameParams) -> Result<(), AudioError> {
    if clip.len() < params.frame_size {
        Err(AudioError::TooShort {
            len: clip.len(),
            frame_size: params.frame_size,
        })
    } else {
        Ok(())
    }
}

/// One-sided magnitude spectrum of a frame, bins `0..=N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSpectrum {
    magnitudes: Vec<f64>,
    bin_frequencies: Vec<f64>,
}

impl FrameSpectrum {
    /// Builds a spectrum for an `N`-point transform from its `N/2 + 1`
    /// magnitudes, with `f(n) = n * sample_rate / N`.
    pub fn from_magnitudes(magnitudes: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if magnitudes.len() < 2 {
            return Err(AudioError::InvalidSpectrum("need at least two bins"));
        }
        if sample_rate == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        let n = 2 * (magnitudes.len() - 1);
        let bin_frequencies = (0..magnitudes.len())
            .map(|i| i as f64 * sample_rate as f64 / n as f64)
            .collect();
        Self::from_parts(magnitudes, bin_frequencies)
    }

    /// Builds a spectrum from explicit bin frequencies.
    pub fn from_parts(magnitudes: Vec<f64>, bin_frequencies: Vec<f64>) -> Result<Self, AudioError> {
        if magnitudes.len() != bin_frequencies.len() {
            return Err(AudioError::InvalidSpectrum("length mismatch"));
        }
        if magnitudes.len() < 2 {
            return Err(AudioError::InvalidSpectrum("need at least two bins"));
        }
        if bin_frequencies[0] != 0.0 {
            return Err(AudioError::InvalidSpectrum("f(0) must be 0"));
        }
        if bin_frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(AudioError::InvalidSpectrum("bin frequencies must strictly increase"));
        }
        if magnitudes.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(AudioError::InvalidSpectrum("magnitudes must be finite and non-negative"));
        }
        Ok(FrameSpectrum {
            magnitudes,
            bin_frequencies,
        })
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn bin_frequencies(&self) -> &[f64] {
        &self.bin_frequencies
    }

    /// Transform length `N` the spectrum was taken over.
    pub fn transform_len(&self) -> usize {
        2 * (self.magnitudes.len() - 1)
    }
}

/// Magnitude spectrum of a frame whose length is a power of two.
pub fn magnitude_spectrum(frame: &[f64], sample_rate: u32) -> Result<FrameSpectrum, AudioError> {
    if frame.len() < 2 || !frame.len().is_power_of_two() {
        return Err(AudioError::BadFrameSize(frame.len()));
    }
    let plan = Fft::new(frame.len());
    let mut buf = Vec::with_capacity(frame.len());
    spectrum_with(&plan, frame.iter().copied(), &mut buf, sample_rate)
}

fn spectrum_with(
    plan: &Fft,
    frame: impl Iterator<Item = f64>,
    buf: &mut Vec<Complex>,
    sample_rate: u32,
) -> Result<FrameSpectrum, AudioError> {
    buf.clear();
    buf.extend(frame.map(|x| Complex::new(x, 0.0)));
    plan.process(buf);
    let magnitudes = buf[..=plan.len() / 2].iter().map(|c| c.norm()).collect();
    FrameSpectrum::from_magnitudes(magnitudes, sample_rate)
}

/// Center of mass of the spectrum in Hz.
///
/// Returns [`AudioError::SilentFrame`] when the magnitude sum does not exceed
/// the voiced threshold.
pub fn spectral_centroid(spectrum: &FrameSpectrum) -> Result<f64, AudioError> {
    let total: f64 = spectrum.magnitudes.iter().sum();
    let threshold = VOICED_THRESHOLD_PER_SAMPLE * spectrum.transform_len() as f64;
    if !(total > threshold) {
        return Err(AudioError::SilentFrame);
    }
    let weighted: f64 = spectrum
        .magnitudes
        .iter()
        .zip(&spectrum.bin_frequencies)
        .map(|(m, f)| m * f)
        .sum();
    let nyquist = *spectrum.bin_frequencies.last().unwrap_or(&0.0);
    // rounding can push a one-bin spectrum a hair past its bounds
    Ok((weighted / total).clamp(0.0, nyquist))
}

/// Per-frame centroids of a clip and their mean.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawSignature"))]
pub struct AudioSignature {
    frame_centroids: Vec<f64>,
    mean_centroid: f64,
    params: FrameParams,
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawSignature {
    frame_centroids: Vec<f64>,
    #[allow(dead_code)]
    mean_centroid: f64,
    params: FrameParams,
}

#[cfg(feature = "serde")]
impl TryFrom<RawSignature> for AudioSignature {
    type Error = AudioError;
    fn try_from(raw: RawSignature) -> Result<Self, AudioError> {
        AudioSignature::from_centroids(raw.frame_centroids, raw.params)
    }
}

impl AudioSignature {
    /// Builds a signature from already computed per-frame centroids.
    pub fn from_centroids(frame_centroids: Vec<f64>, params: FrameParams) -> Result<Self, AudioError> {
        if frame_centroids.is_empty() {
            return Err(AudioError::InvalidSignature("no frame centroids"));
        }
        if frame_centroids.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(AudioError::InvalidSignature("centroids must be finite and non-negative"));
        }
        let mean_centroid = frame_centroids.iter().sum::<f64>() / frame_centroids.len() as f64;
        Ok(AudioSignature {
            frame_centroids,
            mean_centroid,
            params,
        })
    }

    pub fn frame_centroids(&self) -> &[f64] {
        &self.frame_centroids
    }

    pub fn mean_centroid(&self) -> f64 {
        self.mean_centroid
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }
}

/// Computes the spectral-centroid signature of a clip, skipping silent frames.
pub fn audio_signature(clip: &AudioClip, params: &FrameParams) -> Result<AudioSignature, AudioError> {
    params.validate()?;
    check_length(clip, params)?;
    let window = params.window.coefficients(params.frame_size);
    let plan = Fft::new(params.frame_size);
    let mut buf = Vec::with_capacity(params.frame_size);
    let mut centroids = Vec::with_capacity(params.frame_count(clip.len()));
    for i in 0..params.frame_count(clip.len()) {
        let start = i * params.hop_size;
        let frame = clip.samples[start..start + params.frame_size]
            .iter()
            .zip(&window)
            .map(|(s, w)| s * w);
        let spectrum = spectrum_with(&plan, frame, &mut buf, clip.sample_rate)?;
        match spectral_centroid(&spectrum) {
            Ok(c) => centroids.push(c),
            Err(AudioError::SilentFrame) => continue,
            Err(e) => return Err(e),
        }
    }
    if centroids.is_empty() {
        return Err(AudioError::AllSilent);
    }
    AudioSignature::from_centroids(centroids, *params)
}

/// `sqrt((a - b)^2)` over the two mean centroids, in Hz.
pub fn audio_distance(a: &AudioSignature, b: &AudioSignature) -> f64 {
    let d = a.mean_centroid - b.mean_centroid;
    math::sqrt(d * d)
}
