//! Core algorithms for opportunistic sensor-based authentication factors.
//!
//! This crate is `no_std` (it needs `alloc`) and performs no IO. It holds
//! the acoustic factor (spectral-centroid signatures), the visual factor
//! (normalized color histograms compared with the Bhattacharyya distance),
//! enrollment records, the factor-fusion policy engine, and the evaluation
//! kit used to build distance matrices and accuracy reports over labeled
//! corpora. File formats, persistence, the CLI and the network daemon live
//! in the `opfactor` crate.

#![no_std]

extern crate alloc;

pub mod audio;
pub mod decision;
pub mod enrollment;
pub mod eval;
pub mod fft;
pub mod vision;

mod math;

pub use audio::{
    audio_distance, audio_signature, frame_signal, magnitude_spectrum, spectral_centroid,
    AudioClip, AudioError, AudioSignature, FrameParams, FrameSpectrum, Window,
};
pub use decision::{
    authenticate, decide, verify_audio, verify_rfid, verify_visual, AuthDecision,
    DecisionConfig, DecisionError, Factor, FactorOutcome, FactorStatus, Policy, PolicyKind,
    Probe, RecordLookup, Thresholds, Verdict,
};
pub use enrollment::{Aggregation, EnrollmentError, EnrollmentRecord, Reference, Registry};
pub use vision::{
    bhattacharyya_coefficient, bhattacharyya_distance, color_histogram, ColorHistogram,
    MaskedImage, Rgb, VisionError,
};
