//! Collects human ratings of edited videos over HTTP.
//!
//! Raters receive one video at a time, least-rated first, and score it on
//! three 1..=10 axes. The overall score is the rounded axis mean divided
//! by ten. Per-video means over each rater's latest record feed weight
//! fitting through [`RatingStore::export_human_scores`].

mod http;
mod store;

pub use http::{router, serve, ServiceOptions};
pub use store::{
    AggregateScore, AxisMeans, AxisScores, MediaSide, RatingStore, RatingTask, RubricAxis,
    ServiceError, Snapshot, StoredRating, LOG_FILE, RUBRIC,
};
