//! Threshold accuracy at the sample-pair level and at the identity-average
//! level, plus threshold calibration and cell classification for rendering.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::matrix::{identity_average_matrix, unique_labels, DistanceMatrix, MatrixKind};
use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Confusion {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

impl Confusion {
    pub fn record(&mut self, same_identity: bool, distance: f64, threshold: f64) {
        match (same_identity, distance <= threshold) {
            (true, true) => self.true_positives += 1,
            (true, false) => self.false_negatives += 1,
            (false, true) => self.false_positives += 1,
            (false, false) => self.true_negatives += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }

    pub fn correct(&self) -> usize {
        self.true_positives + self.true_negatives
    }

    /// `None` when nothing was counted.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total() > 0).then(|| self.correct() as f64 / self.total() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IdentityBreakdown {
    pub label: String,
    pub confusion: Confusion,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AccuracyReport {
    pub threshold: f64,
    /// Over unordered sample pairs `i < j`.
    pub accuracy: f64,
    pub confusion: Confusion,
    /// Pairs touching each identity; cross pairs count toward both sides.
    pub per_identity: Vec<IdentityBreakdown>,
    /// Decisions on the identity-average matrix: diagonal cells are
    /// same-identity, upper off-diagonal cells cross-identity, absent cells
    /// skipped.
    pub identity_level: Confusion,
    pub identity_level_accuracy: Option<f64>,
}

/// Scores every unordered sample pair against `threshold` (inclusive).
pub fn pairwise_accuracy(
    m: &DistanceMatrix,
    labels: &[String],
    threshold: f64,
) -> Result<AccuracyReport, EvalError> {
    check_sample_matrix(m, labels)?;
    let ids = unique_labels(labels);
    let mut confusion = Confusion::default();
    let mut per_id = vec![Confusion::default(); ids.len()];
    let id_of = |i: usize| ids.iter().position(|l| *l == labels[i]).unwrap_or(0);
    let n = m.rows();
    for i in 0..n {
        for j in i + 1..n {
            let Some(d) = m.get(i, j) else { continue };
            let same = labels[i] == labels[j];
            confusion.record(same, d, threshold);
            let (a, b) = (id_of(i), id_of(j));
            per_id[a].record(same, d, threshold);
            if a != b {
                per_id[b].record(same, d, threshold);
            }
        }
    }
    if confusion.total() == 0 {
        return Err(EvalError::TooFewSamples(n));
    }

    let avg = identity_average_matrix(m, labels)?;
    let identity_level = identity_level_confusion(&avg, threshold);

    Ok(AccuracyReport {
        threshold,
        accuracy: confusion.accuracy().unwrap_or(0.0),
        confusion,
        per_identity: ids
            .into_iter()
            .zip(per_id)
            .map(|(label, confusion)| IdentityBreakdown {
                label,
                accuracy: confusion.accuracy(),
                confusion,
            })
            .collect(),
        identity_level,
        identity_level_accuracy: identity_level.accuracy(),
    })
}

fn check_sample_matrix(m: &DistanceMatrix, labels: &[String]) -> Result<(), EvalError> {
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
    Ok(())
}

fn identity_level_confusion(avg: &DistanceMatrix, threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for i in 0..avg.rows() {
        for j in i..avg.cols() {
            if let Some(v) = avg.get(i, j) {
                c.record(i == j, v, threshold);
            }
        }
    }
    c
}

/// Picks the threshold maximizing pairwise accuracy on a calibration matrix.
///
/// Candidates are the midpoints between consecutive distinct pair distances
/// (and one value beyond each end); among equally good candidates the median
/// one is returned.
pub fn calibrate_threshold(m: &DistanceMatrix, labels: &[String]) -> Result<f64, EvalError> {
    check_sample_matrix(m, labels)?;
    let n = m.rows();
    let mut pairs: Vec<(f64, bool)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if let Some(d) = m.get(i, j) {
                pairs.push((d, labels[i] == labels[j]));
            }
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::TooFewSamples(n));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    // sweep: threshold just below pairs[0] accepts nothing
    let total_same = pairs.iter().filter(|p| p.1).count();
    let mut correct = pairs.len() - total_same;
    let mut best = correct;
    let mut candidates: Vec<f64> = vec![pairs[0].0 - 1.0_f64.max(pairs[0].0.abs() * 0.5)];
    let mut idx = 0;
    while idx < pairs.len() {
        let d = pairs[idx].0;
        while idx < pairs.len() && pairs[idx].0 == d {
            if pairs[idx].1 {
                correct += 1;
            } else {
                correct -= 1;
            }
            idx += 1;
        }
        let t = if idx < pairs.len() {
            0.5 * (d + pairs[idx].0)
        } else {
            d + 1.0_f64.max(d.abs() * 0.5)
        };
        if correct > best {
            best = correct;
            candidates.clear();
        }
        if correct == best {
            candidates.push(t);
        }
    }
    Ok(candidates[candidates.len() / 2])
}

/// How a cell of a distance matrix reads against a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CellMark {
    /// Same identity, within threshold.
    TruePositive,
    /// Same identity, beyond threshold.
    FalseNegative,
    /// Different identities, within threshold.
    FalsePositive,
    /// Different identities, beyond threshold.
    TrueNegative,
    Absent,
}

/// Classifies every cell of a labeled matrix; rows and columns with equal
/// labels are same-identity cells.
pub fn mark_cells(m: &DistanceMatrix, threshold: f64) -> Vec<CellMark> {
    let mut marks = Vec::with_capacity(m.values.len());
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let same = m.row_labels[i] == m.col_labels[j];
            marks.push(match (m.get(i, j), same) {
                (None, _) => CellMark::Absent,
                (Some(v), true) if v <= threshold => CellMark::TruePositive,
                (Some(_), true) => CellMark::FalseNegative,
                (Some(v), false) if v <= threshold => CellMark::FalsePositive,
                (Some(_), false) => CellMark::TrueNegative,
            });
        }
    }
    marks
}
