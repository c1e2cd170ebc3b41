//! Pairwise distance matrices over labeled corpora and their identity
//! averages.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::EvalError;
use crate::audio::{audio_distance, AudioSignature};
use crate::vision::{bhattacharyya_distance, ColorHistogram};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "kind", content = "value"))]
pub enum Feature {
    Audio(AudioSignature),
    Visual(ColorHistogram),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FeatureKind {
    Audio,
    Visual,
}

impl Feature {
    pub fn kind(&self) -> FeatureKind {
        match self {
            Feature::Audio(_) => FeatureKind::Audio,
            Feature::Visual(_) => FeatureKind::Visual,
        }
    }

    /// Audio distance in Hz, or Bhattacharyya distance for histograms.
    pub fn distance(&self, other: &Feature) -> Result<f64, EvalError> {
        match (self, other) {
            (Feature::Audio(a), Feature::Audio(b)) => Ok(audio_distance(a, b)),
            (Feature::Visual(a), Feature::Visual(b)) => Ok(bhattacharyya_distance(a, b)?),
            _ => Err(EvalError::HeterogeneousCorpus),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub label: String,
    pub feature: Feature,
    /// File path or synthesis seed the feature came from.
    pub source_id: String,
}

impl LabeledSample {
    pub fn new(label: impl Into<String>, feature: Feature, source_id: impl Into<String>) -> Self {
        LabeledSample {
            label: label.into(),
            feature,
            source_id: source_id.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MatrixKind {
    SampleLevel,
    IdentityAverage,
}

/// Labeled row-major matrix. Absent cells (`None`) occur only in identity
/// averages, for identities with a single sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Option<f64>>,
    pub kind: MatrixKind,
}

impl DistanceMatrix {
    pub fn new(
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        values: Vec<Option<f64>>,
        kind: MatrixKind,
    ) -> Result<Self, EvalError> {
        if values.len() != row_labels.len() * col_labels.len() {
            return Err(EvalError::Shape {
                rows: row_labels.len(),
                cols: col_labels.len(),
                values: values.len(),
            });
        }
        Ok(DistanceMatrix {
            row_labels,
            col_labels,
            values,
            kind,
        })
    }

    pub fn rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[Option<f64>] {
        &self.values[row * self.cols()..(row + 1) * self.cols()]
    }

    /// Largest `|m[i][j] - m[j][i]|` over present cell pairs; `None` if not square.
    pub fn max_asymmetry(&self) -> Option<f64> {
        if !self.is_square() {
            return None;
        }
        let n = self.rows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                match (self.get(i, j), self.get(j, i)) {
                    (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
                    (None, None) => {}
                    _ => return Some(f64::INFINITY),
                }
            }
        }
        Some(worst)
    }

    /// Minimum and maximum present value.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        self.values.iter().flatten().fold(None, |acc, &v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }
}

/// Sample-level matrix of pairwise distances; the diagonal is exactly zero.
pub fn distance_matrix(samples: &[LabeledSample]) -> Result<DistanceMatrix, EvalError> {
    if samples.len() < 2 {
        return Err(EvalError::TooFewSamples(samples.len()));
    }
    let kind = samples[0].feature.kind();
    if samples.iter().any(|s| s.feature.kind() != kind) {
        return Err(EvalError::HeterogeneousCorpus);
    }
    let n = samples.len();
    let mut values = vec![Some(0.0); n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = samples[i].feature.distance(&samples[j].feature)?;
            values[i * n + j] = Some(d);
            values[j * n + i] = Some(d);
        }
    }
    let labels: Vec<String> = samples.iter().map(|s| s.label.clone()).collect();
    DistanceMatrix::new(labels.clone(), labels, values, MatrixKind::SampleLevel)
}

/// Identities in order of first appearance.
pub fn unique_labels(labels: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for l in labels {
        if !out.contains(l) {
            out.push(l.clone());
        }
    }
    out
}

/// Averages a sample-level matrix per identity pair. Same-identity averages
/// exclude self-pairs; an identity with one sample gets an absent diagonal.
pub fn identity_average_matrix(m: &DistanceMatrix, labels: &[String]) -> Result<DistanceMatrix, EvalError> {
    if m.kind != MatrixKind::SampleLevel {
        return Err(EvalError::WrongKind);
    }
    if !m.is_square() {
        return Err(EvalError::NotSquare);
    }
    if labels.len() != m.rows() {
        return Err(EvalError::LabelCount {
            expected: m.rows(),
            actual: labels.len(),
        });
    }
    let ids = unique_labels(labels);
    let index: Vec<usize> = labels
        .iter()
        .map(|l| ids.iter().position(|id| id == l).unwrap_or(0))
        .collect();
    let k = ids.len();
    let mut sums = vec![0.0; k * k];
    let mut counts = vec![0usize; k * k];
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if i == j {
                continue;
            }
            if let Some(v) = m.get(i, j) {
                let cell = index[i] * k + index[j];
                sums[cell] += v;
                counts[cell] += 1;
            }
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    DistanceMatrix::new(ids.clone(), ids, values, MatrixKind::IdentityAverage)
}
