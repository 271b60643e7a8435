//! Scoring, weight fitting and statistical validation for edited videos.
//!
//! A video is scored in three stages (caption/prompt similarity, primary
//! object detection confidence and consecutive-frame embedding similarity),
//! the stage scores are combined by a weighted sum whose weights are fit to
//! human ratings, and the result is validated with Pearson, Spearman and
//! Kendall tau-b correlations.

pub mod aggregation;
pub mod backends;
pub mod fixtures;
pub mod ingestion;
pub mod model;
pub mod numeric;
pub mod reporting;
pub mod stages;
pub mod stats;
pub mod synth;
pub mod tabular;

mod linalg;

pub use aggregation::{aggregate, evaluate_loss, fit_weights, FitError, FitMethod, FitResult};
pub use model::{
    CorrelationRow, CorrelationTable, DatasetManifest, Frame, FrameSequence, HumanScoreRecord,
    SplitRole, StageScores, TemporalForm, VideoEntry, WeightVector,
};
