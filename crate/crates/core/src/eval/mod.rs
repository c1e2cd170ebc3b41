//! Evaluation kit: distance matrices, identity averages, threshold accuracy,
//! heatmap levels, seeded synthetic corpora and duration sweeps.

pub mod accuracy;
pub mod fleet;
pub mod heatmap;
pub mod matrix;
pub mod rng;
pub mod synth;

pub use accuracy::{
    calibrate_threshold, mark_cells, pairwise_accuracy, AccuracyReport, CellMark, Confusion,
    IdentityBreakdown,
};
pub use fleet::{duration_sweep, FleetSpec, PaletteSpec, SweepRow};
pub use heatmap::{heatmap, Heatmap};
pub use matrix::{
    distance_matrix, identity_average_matrix, DistanceMatrix, Feature, FeatureKind,
    LabeledSample, MatrixKind,
};
pub use rng::XorShift64Star;
pub use synth::{synth_engine_sound, synth_vehicle_image, EngineProfile, SynthError};

use crate::vision::VisionError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("corpus mixes audio and visual features")]
    HeterogeneousCorpus,
    #[error("matrix must be square")]
    NotSquare,
    #[error("operation needs a sample-level matrix")]
    WrongKind,
    #[error("expected {expected} labels, got {actual}")]
    LabelCount { expected: usize, actual: usize },
    #[error("{rows}x{cols} matrix cannot hold {values} values")]
    Shape { rows: usize, cols: usize, values: usize },
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}
