//! Published per-model reference tables, embedded for tests, the
//! acceptance suite and demos.
//!
//! - `stage_scores_by_model.csv`: six editing models with their semantic,
//!   object and temporal stage scores and the combined final score.
//! - `metrics_vs_human.csv`: four of those models with seven established
//!   quality metrics, the mean human rating and the combined final score.
//! - `published_correlations.csv`: reported Pearson/Spearman/Kendall of
//!   each metric against the human rating.

use serde::Deserialize;

use crate::model::{CorrelationRow, CorrelationTable};

pub const STAGE_SCORES_CSV: &str = include_str!("../fixtures/stage_scores_by_model.csv");
pub const METRICS_VS_HUMAN_CSV: &str = include_str!("../fixtures/metrics_vs_human.csv");
pub const PUBLISHED_CORRELATIONS_CSV: &str = include_str!("../fixtures/published_correlations.csv");

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct StageScoreRow {
    pub model: String,
    pub clip_text: f64,
    pub semantic: f64,
    pub object: f64,
    pub temporal: f64,
    #[serde(rename = "final")]
    pub final_score: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub imaging_quality: f64,
    pub ff_alpha: f64,
    pub ff_beta: f64,
    pub background_consistency: f64,
    pub success_rate: f64,
    pub subject_consistency: f64,
    pub aesthetic_quality: f64,
    pub human: f64,
    pub sstem: f64,
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Vec<T> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("embedded fixture parses")
}

pub fn stage_score_table() -> Vec<StageScoreRow> {
    parse(STAGE_SCORES_CSV)
}

pub fn metrics_table() -> Vec<MetricsRow> {
    parse(METRICS_VS_HUMAN_CSV)
}

pub fn published_correlations() -> CorrelationTable {
    CorrelationTable {
        rows: parse::<CorrelationRow>(PUBLISHED_CORRELATIONS_CSV),
    }
}

/// Metric columns aligned on the models of [`metrics_table`], with the
/// stage scores joined in by model name, plus the human column.
pub struct MetricColumns {
    pub labels: Vec<String>,
    pub metrics: Vec<(String, Vec<f64>)>,
    pub human: Vec<f64>,
}

pub fn metric_columns() -> MetricColumns {
    let metrics = metrics_table();
    let stages = stage_score_table();
    let stage = |model: &str| {
        stages
            .iter()
            .find(|s| s.model == model)
            .unwrap_or_else(|| panic!("no stage scores for {model}"))
    };
    let col = |f: &dyn Fn(&MetricsRow) -> f64| metrics.iter().map(f).collect::<Vec<_>>();
    let stage_col = |f: &dyn Fn(&StageScoreRow) -> f64| {
        metrics.iter().map(|m| f(stage(&m.model))).collect::<Vec<_>>()
    };
    MetricColumns {
        labels: metrics.iter().map(|m| m.model.clone()).collect(),
        metrics: vec![
            ("imaging_quality".into(), col(&|m| m.imaging_quality)),
            ("ff_alpha".into(), col(&|m| m.ff_alpha)),
            ("ff_beta".into(), col(&|m| m.ff_beta)),
            ("background_consistency".into(), col(&|m| m.background_consistency)),
            ("success_rate".into(), col(&|m| m.success_rate)),
            ("subject_consistency".into(), col(&|m| m.subject_consistency)),
            ("aesthetic_quality".into(), col(&|m| m.aesthetic_quality)),
            ("context_similarity".into(), stage_col(&|s| s.semantic)),
            ("object_detection".into(), stage_col(&|s| s.object)),
            ("temporal_consistency".into(), stage_col(&|s| s.temporal)),
            ("sstem".into(), col(&|m| m.sstem)),
        ],
        human: col(&|m| m.human),
    }
}
