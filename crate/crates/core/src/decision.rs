//! Per-factor validation against thresholds and policy-based fusion into an
//! accept/deny decision.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::audio::AudioSignature;
use crate::enrollment::{Aggregation, EnrollmentRecord, Registry};
use crate::vision::{ColorHistogram, VisionError};

pub const DEFAULT_AUDIO_MAX_DISTANCE: f64 = 100.0;
pub const DEFAULT_VISUAL_MAX_DISTANCE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecisionError {
    #[error("no factor outcomes to decide on")]
    EmptyOutcomes,
    #[error("threshold {0} must be positive and finite")]
    BadThreshold(&'static str),
    #[error("k_of_n policy needs k >= 1")]
    MissingK,
}

/// Maximum distances (inclusive) at which a factor counts as validated.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Thresholds {
    /// Hz.
    pub audio_max_distance: f64,
    pub visual_max_distance: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            audio_max_distance: DEFAULT_AUDIO_MAX_DISTANCE,
            visual_max_distance: DEFAULT_VISUAL_MAX_DISTANCE,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), DecisionError> {
        let ok = |t: f64| t.is_finite() && t > 0.0;
        if !ok(self.audio_max_distance) {
            return Err(DecisionError::BadThreshold("audio_max_distance"));
        }
        if !ok(self.visual_max_distance) {
            return Err(DecisionError::BadThreshold("visual_max_distance"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Factor {
    Rfid,
    Audio,
    Visual,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::Rfid, Factor::Audio, Factor::Visual];

    pub fn as_str(self) -> &'static str {
        match self {
            Factor::Rfid => "rfid",
            Factor::Audio => "audio",
            Factor::Visual => "visual",
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FactorStatus {
    Validated,
    Rejected,
    Unavailable,
}

impl FactorStatus {
    pub const ALL: [FactorStatus; 3] = [
        FactorStatus::Validated,
        FactorStatus::Rejected,
        FactorStatus::Unavailable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FactorStatus::Validated => "validated",
            FactorStatus::Rejected => "rejected",
            FactorStatus::Unavailable => "unavailable",
        }
    }
}

impl fmt::Display for FactorStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FactorOutcome {
    pub factor: Factor,
    pub status: FactorStatus,
    /// Identity-level distance; absent for rfid and for unavailable factors.
    pub score: Option<f64>,
}

impl FactorOutcome {
    pub fn rfid(matched: bool) -> Self {
        FactorOutcome {
            factor: Factor::Rfid,
            status: if matched {
                FactorStatus::Validated
            } else {
                FactorStatus::Rejected
            },
            score: None,
        }
    }

    /// Validated iff `score <= threshold`.
    pub fn scored(factor: Factor, score: f64, threshold: f64) -> Self {
        FactorOutcome {
            factor,
            status: if score <= threshold {
                FactorStatus::Validated
            } else {
                FactorStatus::Rejected
            },
            score: Some(score),
        }
    }

    pub fn unavailable(factor: Factor) -> Self {
        FactorOutcome {
            factor,
            status: FactorStatus::Unavailable,
            score: None,
        }
    }

    pub fn is_validated(&self) -> bool {
        self.status == FactorStatus::Validated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PolicyKind {
    /// Every outcome must be validated.
    All,
    /// At least `k` outcomes validated.
    KOfN,
    /// RFID validated plus at least one opportunistic factor.
    #[default]
    RfidPlusAny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Policy {
    pub kind: PolicyKind,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub k: Option<usize>,
}

impl Policy {
    pub const fn all() -> Self {
        Policy { kind: PolicyKind::All, k: None }
    }

    pub const fn k_of_n(k: usize) -> Self {
        Policy { kind: PolicyKind::KOfN, k: Some(k) }
    }

    pub const fn rfid_plus_any() -> Self {
        Policy { kind: PolicyKind::RfidPlusAny, k: None }
    }

    pub fn validate(&self) -> Result<(), DecisionError> {
        match (self.kind, self.k) {
            (PolicyKind::KOfN, None | Some(0)) => Err(DecisionError::MissingK),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Verdict {
    Accept,
    Deny,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Accept => "accept",
            Verdict::Deny => "deny",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AuthDecision {
    pub identity_id: Option<String>,
    pub outcomes: Vec<FactorOutcome>,
    pub verdict: Verdict,
    pub reason: String,
}

impl AuthDecision {
    pub fn outcome(&self, factor: Factor) -> Option<&FactorOutcome> {
        self.outcomes.iter().find(|o| o.factor == factor)
    }

    pub fn is_accept(&self) -> bool {
        self.verdict == Verdict::Accept
    }
}

/// Source of enrollment records keyed by RFID tag.
pub trait RecordLookup {
    fn lookup_rfid(&self, tag: &str) -> Option<EnrollmentRecord>;
}

impl RecordLookup for Registry {
    fn lookup_rfid(&self, tag: &str) -> Option<EnrollmentRecord> {
        self.find_by_rfid(tag).cloned()
    }
}

impl<L: RecordLookup + ?Sized> RecordLookup for &L {
    fn lookup_rfid(&self, tag: &str) -> Option<EnrollmentRecord> {
        (**self).lookup_rfid(tag)
    }
}

pub fn verify_rfid<L: RecordLookup + ?Sized>(lookup: &L, tag: &str) -> (FactorOutcome, Option<EnrollmentRecord>) {
    // an empty tag never matches: records cannot carry one
    let record = if tag.is_empty() { None } else { lookup.lookup_rfid(tag) };
    (FactorOutcome::rfid(record.is_some()), record)
}

pub fn verify_audio(
    record: &EnrollmentRecord,
    probe: &AudioSignature,
    thresholds: &Thresholds,
    agg: Aggregation,
) -> FactorOutcome {
    match record.audio_distance(probe, agg) {
        Some(d) => FactorOutcome::scored(Factor::Audio, d, thresholds.audio_max_distance),
        None => FactorOutcome::unavailable(Factor::Audio),
    }
}

pub fn verify_visual(
    record: &EnrollmentRecord,
    probe: &ColorHistogram,
    thresholds: &Thresholds,
    agg: Aggregation,
) -> Result<FactorOutcome, VisionError> {
    Ok(match record.visual_distance(probe, agg)? {
        Some(d) => FactorOutcome::scored(Factor::Visual, d, thresholds.visual_max_distance),
        None => FactorOutcome::unavailable(Factor::Visual),
    })
}

/// Fuses factor outcomes under `policy`. `identity_id` is left unset.
pub fn decide(outcomes: &[FactorOutcome], policy: &Policy) -> Result<AuthDecision, DecisionError> {
    if outcomes.is_empty() {
        return Err(DecisionError::EmptyOutcomes);
    }
    policy.validate()?;
    let validated = |f: Factor| outcomes.iter().any(|o| o.factor == f && o.is_validated());
    let n_valid = outcomes.iter().filter(|o| o.is_validated()).count();
    let failing = || {
        outcomes
            .iter()
            .filter(|o| !o.is_validated())
            .map(|o| format!("{} {}", o.factor, o.status))
            .collect::<Vec<_>>()
    };

    let (accept, reason) = match policy.kind {
        PolicyKind::All => {
            let bad = failing();
            (bad.is_empty(), bad.join(", "))
        }
        PolicyKind::KOfN => {
            let k = policy.k.unwrap_or(1);
            let mut reason = failing().join(", ");
            if n_valid < k {
                reason = format!("{reason} ({n_valid} of {} validated, need {k})", outcomes.len());
            }
            (n_valid >= k, reason)
        }
        PolicyKind::RfidPlusAny => {
            let rfid_ok = validated(Factor::Rfid);
            let any_opportunistic = validated(Factor::Audio) || validated(Factor::Visual);
            let mut bad = Vec::new();
            if !rfid_ok {
                let status = outcomes
                    .iter()
                    .find(|o| o.factor == Factor::Rfid)
                    .map_or(FactorStatus::Unavailable, |o| o.status);
                bad.push(format!("rfid {status}"));
            }
            if !any_opportunistic {
                bad.extend(
                    outcomes
                        .iter()
                        .filter(|o| o.factor != Factor::Rfid)
                        .map(|o| format!("{} {}", o.factor, o.status)),
                );
                if !outcomes.iter().any(|o| o.factor != Factor::Rfid) {
                    bad.push("no opportunistic factor".to_string());
                }
            }
            (rfid_ok && any_opportunistic, bad.join(", "))
        }
    };

    let (verdict, reason) = if accept {
        let ok: Vec<&str> = outcomes
            .iter()
            .filter(|o| o.is_validated())
            .map(|o| o.factor.as_str())
            .collect();
        (Verdict::Accept, format!("validated: {}", ok.join(", ")))
    } else {
        (Verdict::Deny, reason)
    };
    Ok(AuthDecision {
        identity_id: None,
        outcomes: outcomes.to_vec(),
        verdict,
        reason,
    })
}

/// A probe for one opportunistic factor as handed to [`authenticate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Probe<T> {
    Absent,
    Present(T),
    /// Capture or feature extraction failed; the message ends up in the reason.
    Failed(String),
}

impl<T> Probe<T> {
    pub fn as_ref(&self) -> Probe<&T> {
        match self {
            Probe::Absent => Probe::Absent,
            Probe::Present(t) => Probe::Present(t),
            Probe::Failed(e) => Probe::Failed(e.clone()),
        }
    }
}

/// Decision settings shared by every authentication request.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecisionConfig {
    pub thresholds: Thresholds,
    pub policy: Policy,
    pub aggregation: Aggregation,
}

/// Full request flow: RFID lookup, per-factor validation, fusion.
///
/// Any factor evaluation error forces a deny regardless of policy.
pub fn authenticate<L: RecordLookup + ?Sized>(
    lookup: &L,
    tag: &str,
    audio: Probe<&AudioSignature>,
    visual: Probe<&ColorHistogram>,
    config: &DecisionConfig,
) -> (AuthDecision, Option<EnrollmentRecord>) {
    let (rfid, record) = verify_rfid(lookup, tag);
    let mut outcomes = Vec::with_capacity(3);
    outcomes.push(rfid);
    let mut errors: Vec<String> = Vec::new();

    let audio_outcome = match (&record, audio) {
        (Some(rec), Probe::Present(sig)) => verify_audio(rec, sig, &config.thresholds, config.aggregation),
        (_, Probe::Failed(e)) => {
            errors.push(format!("audio error: {e}"));
            FactorOutcome::unavailable(Factor::Audio)
        }
        _ => FactorOutcome::unavailable(Factor::Audio),
    };
    outcomes.push(audio_outcome);

    let visual_outcome = match (&record, visual) {
        (Some(rec), Probe::Present(hist)) => {
            match verify_visual(rec, hist, &config.thresholds, config.aggregation) {
                Ok(o) => o,
                Err(e) => {
                    errors.push(format!("visual error: {e}"));
                    FactorOutcome::unavailable(Factor::Visual)
                }
            }
        }
        (_, Probe::Failed(e)) => {
            errors.push(format!("visual error: {e}"));
            FactorOutcome::unavailable(Factor::Visual)
        }
        _ => FactorOutcome::unavailable(Factor::Visual),
    };
    outcomes.push(visual_outcome);

    let mut decision = match decide(&outcomes, &config.policy) {
        Ok(d) => d,
        Err(e) => AuthDecision {
            identity_id: None,
            outcomes: outcomes.clone(),
            verdict: Verdict::Deny,
            reason: e.to_string(),
        },
    };
    if !errors.is_empty() {
        decision.verdict = Verdict::Deny;
        let mut reason = errors.join("; ");
        if !decision.reason.is_empty() {
            reason = format!("{reason}; {}", decision.reason);
        }
        decision.reason = reason;
    }
    decision.identity_id = record.as_ref().map(|r| r.identity_id.clone());
    (decision, record)
}
