//! Enrolled identities: an RFID tag plus reference signatures for the
//! opportunistic factors, and identity-level distances for fresh probes.
//!
//! [`Registry`] is the in-memory index with the uniqueness rules. Durable
//! storage wraps it in the `opfactor` crate.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::audio::{audio_distance, AudioSignature};
use crate::vision::{bhattacharyya_distance, ColorHistogram, VisionError};

pub const DEFAULT_MAX_REFS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnrollmentError {
    #[error("identity id must not be empty")]
    EmptyIdentity,
    #[error("rfid tag must not be empty")]
    EmptyTag,
    #[error("enrollment needs at least one audio or visual reference")]
    EmptyEnrollment,
    #[error("identity {0:?} is already enrolled")]
    DuplicateIdentity(String),
    #[error("rfid tag {0:?} is already enrolled")]
    DuplicateTag(String),
    #[error("identity {0:?} not found")]
    NotFound(String),
    #[error("{kind} reference list holds {len} entries, more than the cap of {max}")]
    TooManyReferences {
        kind: &'static str,
        len: usize,
        max: usize,
    },
    #[error("max_refs must be at least 1")]
    ZeroCap,
    #[error(transparent)]
    Vision(#[from] VisionError),
}

/// How per-reference distances are folded into one identity-level distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Aggregation {
    #[default]
    Mean,
    Min,
}

impl Aggregation {
    fn fold(self, distances: impl Iterator<Item = f64>) -> Option<f64> {
        let mut n = 0usize;
        let mut acc = match self {
            Aggregation::Mean => 0.0,
            Aggregation::Min => f64::INFINITY,
        };
        for d in distances {
            n += 1;
            acc = match self {
                Aggregation::Mean => acc + d,
                Aggregation::Min => acc.min(d),
            };
        }
        match (n, self) {
            (0, _) => None,
            (_, Aggregation::Mean) => Some(acc / n as f64),
            (_, Aggregation::Min) => Some(acc),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "kind", content = "feature"))]
pub enum Reference {
    Audio(AudioSignature),
    Visual(ColorHistogram),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnrollmentRecord {
    pub identity_id: String,
    pub rfid_tag: String,
    pub audio_refs: Vec<AudioSignature>,
    pub visual_refs: Vec<ColorHistogram>,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    pub updated_at: u64,
}

impl EnrollmentRecord {
    pub fn new(
        identity_id: impl Into<String>,
        rfid_tag: impl Into<String>,
        audio_refs: Vec<AudioSignature>,
        visual_refs: Vec<ColorHistogram>,
        now: u64,
    ) -> Self {
        EnrollmentRecord {
            identity_id: identity_id.into(),
            rfid_tag: rfid_tag.into(),
            audio_refs,
            visual_refs,
            created_at: now,
            updated_at: now,
        }
    }

    /// Checks the per-record invariants against a reference cap.
    pub fn validate(&self, max_refs: usize) -> Result<(), EnrollmentError> {
        if max_refs == 0 {
            return Err(EnrollmentError::ZeroCap);
        }
        if self.identity_id.is_empty() {
            return Err(EnrollmentError::EmptyIdentity);
        }
        if self.rfid_tag.is_empty() {
            return Err(EnrollmentError::EmptyTag);
        }
        if self.audio_refs.is_empty() && self.visual_refs.is_empty() {
            return Err(EnrollmentError::EmptyEnrollment);
        }
        for (kind, len) in [("audio", self.audio_refs.len()), ("visual", self.visual_refs.len())] {
            if len > max_refs {
                return Err(EnrollmentError::TooManyReferences { kind, len, max: max_refs });
            }
        }
        if let Some(first) = self.visual_refs.first() {
            let b = first.bins_per_channel();
            if let Some(bad) = self.visual_refs.iter().find(|h| h.bins_per_channel() != b) {
                return Err(VisionError::IncompatibleHistograms(b, bad.bins_per_channel()).into());
            }
        }
        Ok(())
    }

    /// Bins per channel shared by the visual references, if any.
    pub fn visual_bins(&self) -> Option<usize> {
        self.visual_refs.first().map(|h| h.bins_per_channel())
    }

    /// Appends a reference, evicting the oldest one of the same kind when the
    /// list would exceed `max_refs`.
    pub fn add_reference(&mut self, reference: Reference, max_refs: usize, now: u64) -> Result<(), EnrollmentError> {
        if max_refs == 0 {
            return Err(EnrollmentError::ZeroCap);
        }
        match reference {
            Reference::Audio(sig) => push_capped(&mut self.audio_refs, sig, max_refs),
            Reference::Visual(hist) => {
                if let Some(b) = self.visual_bins() {
                    if b != hist.bins_per_channel() {
                        return Err(VisionError::IncompatibleHistograms(b, hist.bins_per_channel()).into());
                    }
                }
                push_capped(&mut self.visual_refs, hist, max_refs)
            }
        }
        self.updated_at = now;
        Ok(())
    }

    /// Identity-level acoustic distance, `None` when no audio references exist.
    pub fn audio_distance(&self, probe: &AudioSignature, agg: Aggregation) -> Option<f64> {
        agg.fold(self.audio_refs.iter().map(|r| audio_distance(r, probe)))
    }

    /// Identity-level visual distance, `Ok(None)` when no visual references exist.
    pub fn visual_distance(&self, probe: &ColorHistogram, agg: Aggregation) -> Result<Option<f64>, VisionError> {
        let distances = self
            .visual_refs
            .iter()
            .map(|r| bhattacharyya_distance(r, probe))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(agg.fold(distances.into_iter()))
    }
}

fn push_capped<T>(list: &mut Vec<T>, item: T, max: usize) {
    list.push(item);
    if list.len() > max {
        let excess = list.len() - max;
        list.drain(..excess);
    }
}

/// In-memory index of enrollment records keyed by identity id, with unique
/// RFID tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Registry {
    max_refs: usize,
    records: BTreeMap<String, EnrollmentRecord>,
}

impl Default for Registry {
    fn default() -> Self {
        Registry::new(DEFAULT_MAX_REFS)
    }
}

impl Registry {
    pub fn new(max_refs: usize) -> Self {
        Registry {
            max_refs: max_refs.max(1),
            records: BTreeMap::new(),
        }
    }

    /// Rebuilds a registry, rejecting any record set that breaks an invariant.
    pub fn from_records(
        max_refs: usize,
        records: impl IntoIterator<Item = EnrollmentRecord>,
    ) -> Result<Self, EnrollmentError> {
        if max_refs == 0 {
            return Err(EnrollmentError::ZeroCap);
        }
        let mut reg = Registry::new(max_refs);
        for r in records {
            reg.insert(r)?;
        }
        Ok(reg)
    }

    pub fn max_refs(&self) -> usize {
        self.max_refs
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn enroll(
        &mut self,
        identity_id: &str,
        rfid_tag: &str,
        audio_refs: Vec<AudioSignature>,
        visual_refs: Vec<ColorHistogram>,
        now: u64,
    ) -> Result<&EnrollmentRecord, EnrollmentError> {
        let record = EnrollmentRecord::new(identity_id, rfid_tag, audio_refs, visual_refs, now);
        self.insert(record)?;
        Ok(&self.records[identity_id])
    }

    /// Inserts a complete record after checking every invariant.
    pub fn insert(&mut self, record: EnrollmentRecord) -> Result<(), EnrollmentError> {
        record.validate(self.max_refs)?;
        if self.records.contains_key(&record.identity_id) {
            return Err(EnrollmentError::DuplicateIdentity(record.identity_id));
        }
        if self.find_by_rfid(&record.rfid_tag).is_some() {
            return Err(EnrollmentError::DuplicateTag(record.rfid_tag));
        }
        self.records.insert(record.identity_id.clone(), record);
        Ok(())
    }

    pub fn add_reference(
        &mut self,
        identity_id: &str,
        reference: Reference,
        now: u64,
    ) -> Result<&EnrollmentRecord, EnrollmentError> {
        let max = self.max_refs;
        let record = self
            .records
            .get_mut(identity_id)
            .ok_or_else(|| EnrollmentError::NotFound(identity_id.into()))?;
        record.add_reference(reference, max, now)?;
        Ok(record)
    }

    pub fn get(&self, identity_id: &str) -> Option<&EnrollmentRecord> {
        self.records.get(identity_id)
    }

    pub fn find_by_rfid(&self, tag: &str) -> Option<&EnrollmentRecord> {
        self.records.values().find(|r| r.rfid_tag == tag)
    }

    pub fn delete(&mut self, identity_id: &str) -> Result<EnrollmentRecord, EnrollmentError> {
        self.records
            .remove(identity_id)
            .ok_or_else(|| EnrollmentError::NotFound(identity_id.into()))
    }

    /// Records ordered by identity id.
    pub fn records(&self) -> impl Iterator<Item = &EnrollmentRecord> {
        self.records.values()
    }
}
