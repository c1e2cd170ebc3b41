//! Corpus manifests: TOML files listing labeled sample files and synthetic
//! generators.
//!
//! ```toml
//! [[audio]]
//! label = "car-1"
//! path = "car-1/a.wav"          # relative to the manifest's directory
//!
//! [[image]]
//! label = "car-1"
//! path = "car-1/front.ppm"
//! mask = "car-1/front.pgm"      # optional; defaults to the .mask.pgm sidecar
//!
//! [[synth_audio]]
//! label = "engine-1"
//! count = 10
//! duration = 2.0
//! seed = 7
//! [synth_audio.profile]
//! fundamental = 90.0
//! harmonic_amplitudes = [1.0, 0.6, 0.3]
//!
//! [[synth_image]]
//! label = "red"
//! count = 8
//! color = [176, 48, 48]
//! seed = 3
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use opfactor_core::eval::rng::derive_seed;
use opfactor_core::eval::{synth_engine_sound, synth_vehicle_image, EngineProfile, Feature, FeatureKind, LabeledSample};
use opfactor_core::{audio_signature, color_histogram, FrameParams, Rgb};

use crate::{pnm, wav};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing corpus manifest: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{source_id}: {message}")]
    Sample { source_id: String, message: String },
    #[error("corpus entry has an empty label")]
    EmptyLabel,
    #[error("corpus has no {0} samples")]
    Empty(&'static str),
}

fn default_sample_rate() -> u32 {
    44_100
}

fn default_duration() -> f64 {
    2.0
}

fn default_color_noise() -> f64 {
    8.0
}

fn default_width() -> usize {
    64
}

fn default_height() -> usize {
    48
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioEntry {
    pub label: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEntry {
    pub label: String,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthAudioEntry {
    pub label: String,
    pub count: usize,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    #[serde(default)]
    pub seed: u64,
    pub profile: EngineProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthImageEntry {
    pub label: String,
    pub count: usize,
    pub color: Rgb,
    #[serde(default = "default_color_noise")]
    pub color_noise: f64,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_height")]
    pub height: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusManifest {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub audio: Vec<AudioEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub image: Vec<ImageEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub synth_audio: Vec<SynthAudioEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub synth_image: Vec<SynthImageEntry>,
}

/// Seed of clip or image `index` of a synthetic entry.
pub fn entry_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[index as u64])
}

fn sample_err(source_id: &str, e: impl std::fmt::Display) -> CorpusError {
    CorpusError::Sample {
        source_id: source_id.to_string(),
        message: e.to_string(),
    }
}

impl CorpusManifest {
    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        let m: CorpusManifest = toml::from_str(text)?;
        let labels = m
            .audio
            .iter()
            .map(|e| &e.label)
            .chain(m.image.iter().map(|e| &e.label))
            .chain(m.synth_audio.iter().map(|e| &e.label))
            .chain(m.synth_image.iter().map(|e| &e.label));
        for l in labels {
            if l.trim().is_empty() {
                return Err(CorpusError::EmptyLabel);
            }
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    /// Extracts every sample of `kind` in manifest order: files first, then
    /// synthetic entries. Relative paths resolve against `base`.
    pub fn samples(
        &self,
        base: &Path,
        kind: FeatureKind,
        params: &FrameParams,
        bins: usize,
    ) -> Result<Vec<LabeledSample>, CorpusError> {
        let mut out = Vec::new();
        match kind {
            FeatureKind::Audio => {
                for e in &self.audio {
                    let path = base.join(&e.path);
                    let id = path.display().to_string();
                    let bytes = fs::read(&path).map_err(|source| CorpusError::Io { path, source })?;
                    let clip = wav::decode_wav(&bytes).map_err(|e| sample_err(&id, e))?;
                    let sig = audio_signature(&clip, params).map_err(|e| sample_err(&id, e))?;
                    out.push(LabeledSample::new(&e.label, Feature::Audio(sig), id));
                }
                for e in &self.synth_audio {
                    for i in 0..e.count {
                        let seed = entry_seed(e.seed, i);
                        let id = format!("synth:{}:{seed:#018x}", e.label);
                        let clip = synth_engine_sound(&e.profile, e.duration, e.sample_rate, seed)
                            .map_err(|err| sample_err(&id, err))?;
                        let sig = audio_signature(&clip, params).map_err(|err| sample_err(&id, err))?;
                        out.push(LabeledSample::new(&e.label, Feature::Audio(sig), id));
                    }
                }
            }
            FeatureKind::Visual => {
                for e in &self.image {
                    let path = base.join(&e.path);
                    let mask = e.mask.as_ref().map(|m| base.join(m));
                    let id = path.display().to_string();
                    let img = pnm::load_image(&path, mask.as_deref()).map_err(|err| sample_err(&id, err))?;
                    let hist = color_histogram(&img, bins).map_err(|err| sample_err(&id, err))?;
                    out.push(LabeledSample::new(&e.label, Feature::Visual(hist), id));
                }
                for e in &self.synth_image {
                    for i in 0..e.count {
                        let seed = entry_seed(e.seed, i);
                        let id = format!("synth:{}:{seed:#018x}", e.label);
                        let img = synth_vehicle_image(e.color, e.color_noise, e.width, e.height, seed)
                            .map_err(|err| sample_err(&id, err))?;
                        let hist = color_histogram(&img, bins).map_err(|err| sample_err(&id, err))?;
                        out.push(LabeledSample::new(&e.label, Feature::Visual(hist), id));
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(CorpusError::Empty(match kind {
                FeatureKind::Audio => "audio",
                FeatureKind::Visual => "visual",
            }));
        }
        Ok(out)
    }
}

/// Reads a manifest file and extracts its samples of `kind`.
pub fn load_corpus(
    path: &Path,
    kind: FeatureKind,
    params: &FrameParams,
    bins: usize,
) -> Result<Vec<LabeledSample>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest = CorpusManifest::from_toml(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    manifest.samples(base, kind, params, bins)
}
