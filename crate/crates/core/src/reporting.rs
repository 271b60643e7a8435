//! Evaluation reports: per-model means, weights, and agreement with human
//! ratings, rendered as CSV, JSON or Markdown.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::aggregate;
use crate::model::{CorrelationTable, TemporalForm, WeightVector};
use crate::numeric::exact_mean;
use crate::stats::{correlation_table, pearson, r_squared, PairedSeries};
use crate::tabular::{HumanScoreRow, ScoreRow};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("unknown report format `{0}` (expected tabular, structured or markdown)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tabular,
    Structured,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tabular" | "csv" => Ok(ReportFormat::Tabular),
            "structured" | "json" => Ok(ReportFormat::Structured),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(ReportError::UnknownFormat(other.to_owned())),
        }
    }
}

/// Settings the scores were produced with, echoed into the report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub stride: Option<usize>,
    pub backends: Vec<String>,
    pub temporal_form: TemporalForm,
    pub method: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_name: String,
    pub n_videos: usize,
    pub s_similarity: f64,
    pub s_object: f64,
    pub s_temporal: f64,
    pub s_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub video_id: String,
    pub model_name: String,
    pub s_similarity: f64,
    pub s_object: f64,
    pub s_temporal: f64,
    pub s_final: f64,
    pub human: Option<f64>,
}

/// Agreement of the combined score with human ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub n_videos: usize,
    pub pearson: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset_id: String,
    pub generated_at: String,
    pub config: ReportConfig,
    pub weights: WeightVector,
    pub per_model: Vec<ModelSummary>,
    pub videos: Vec<VideoSummary>,
    pub correlations: Option<CorrelationTable>,
    pub agreement: Option<Agreement>,
    pub notes: Vec<String>,
}

impl EvaluationReport {
    /// The report with `generated_at` blanked, for determinism checks.
    pub fn without_timestamp(&self) -> Self {
        EvaluationReport {
            generated_at: String::new(),
            ..self.clone()
        }
    }
}

fn mean_of(values: impl IntoIterator<Item = f64>) -> f64 {
    exact_mean(values).unwrap_or(0.0)
}

pub fn build_report(
    dataset_id: &str,
    scores: &[ScoreRow],
    weights: &WeightVector,
    human: &[HumanScoreRow],
    config: ReportConfig,
    generated_at: &str,
) -> EvaluationReport {
    let human_by_id: HashMap<&str, f64> = human
        .iter()
        .map(|h| (h.video_id.as_str(), h.mean_normalized))
        .collect();

    let mut videos: Vec<VideoSummary> = scores
        .iter()
        .map(|r| VideoSummary {
            video_id: r.video_id.clone(),
            model_name: r.model_name.clone(),
            s_similarity: r.s_similarity,
            s_object: r.s_object,
            s_temporal: r.s_temporal,
            s_final: aggregate(&r.scores(), weights),
            human: human_by_id.get(r.video_id.as_str()).copied(),
        })
        .collect();
    videos.sort_by(|a, b| (&a.model_name, &a.video_id).cmp(&(&b.model_name, &b.video_id)));

    let mut by_model: BTreeMap<&str, Vec<&VideoSummary>> = BTreeMap::new();
    for v in &videos {
        by_model.entry(v.model_name.as_str()).or_default().push(v);
    }
    let per_model = by_model
        .into_iter()
        .map(|(name, vs)| ModelSummary {
            model_name: name.to_owned(),
            n_videos: vs.len(),
            s_similarity: mean_of(vs.iter().map(|v| v.s_similarity)),
            s_object: mean_of(vs.iter().map(|v| v.s_object)),
            s_temporal: mean_of(vs.iter().map(|v| v.s_temporal)),
            s_final: mean_of(vs.iter().map(|v| v.s_final)),
        })
        .collect();

    let mut notes = Vec::new();
    let rated: Vec<&VideoSummary> = videos.iter().filter(|v| v.human.is_some()).collect();
    let (correlations, agreement) = if human.is_empty() {
        notes.push("correlations omitted: no human scores supplied".to_owned());
        (None, None)
    } else {
        let labels: Vec<String> = rated.iter().map(|v| v.video_id.clone()).collect();
        let y: Vec<f64> = rated.iter().filter_map(|v| v.human).collect();
        let column = |f: fn(&VideoSummary) -> f64| {
            PairedSeries::new(labels.clone(), rated.iter().map(|v| f(v)).collect(), y.clone())
        };
        let built = (|| {
            let metrics = vec![
                ("s_similarity".to_owned(), column(|v| v.s_similarity)?),
                ("s_object".to_owned(), column(|v| v.s_object)?),
                ("s_temporal".to_owned(), column(|v| v.s_temporal)?),
                ("s_final".to_owned(), column(|v| v.s_final)?),
            ];
            let table = correlation_table(&metrics)?;
            let finals = &metrics[3].1;
            let agreement = Agreement {
                n_videos: finals.len(),
                pearson: pearson(finals)?,
                r_squared: r_squared(finals)?,
            };
            Ok::<_, crate::stats::StatsError>((table, agreement))
        })();
        match built {
            Ok((t, a)) => (Some(t), Some(a)),
            Err(e) => {
                notes.push(format!("correlations omitted: {e}"));
                (None, None)
            }
        }
    };
    if !human.is_empty() && rated.len() < videos.len() {
        notes.push(format!(
            "{} of {} videos have no human score",
            videos.len() - rated.len(),
            videos.len()
        ));
    }

    EvaluationReport {
        dataset_id: dataset_id.to_owned(),
        generated_at: generated_at.to_owned(),
        config,
        weights: *weights,
        per_model,
        videos,
        correlations,
        agreement,
        notes,
    }
}

pub fn render(report: &EvaluationReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Tabular => render_tabular(report),
        ReportFormat::Structured => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s.into_bytes()
        }
        ReportFormat::Markdown => render_markdown(report).into_bytes(),
    }
}

/// Parses `format` first so an unknown name fails before any work.
pub fn render_named(report: &EvaluationReport, format: &str) -> Result<Vec<u8>, ReportError> {
    Ok(render(report, format.parse()?))
}

pub fn parse_structured(bytes: &[u8]) -> Result<EvaluationReport, serde_json::Error> {
    serde_json::from_slice(bytes)
}

fn render_tabular(report: &EvaluationReport) -> Vec<u8> {
    let mut out = String::from("model_name,n_videos,s_similarity,s_object,s_temporal,s_final\n");
    for m in &report.per_model {
        let name = if m.model_name.contains([',', '"', '\n']) {
            format!("\"{}\"", m.model_name.replace('"', "\"\""))
        } else {
            m.model_name.clone()
        };
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            name, m.n_videos, m.s_similarity, m.s_object, m.s_temporal, m.s_final
        );
    }
    out.into_bytes()
}

/// Correlation table as Markdown with three decimals.
pub fn correlation_markdown(table: &CorrelationTable) -> String {
    let mut out = String::from("| Metric | Pearson | Spearman | Kendall |\n|---|---|---|---|\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "| {} | {:.3} | {:.3} | {:.3} |",
            r.metric, r.pearson, r.spearman, r.kendall
        );
    }
    out
}

/// Correlation table as CSV with three decimals.
pub fn correlation_csv(table: &CorrelationTable) -> String {
    let mut out = String::from("metric,pearson,spearman,kendall\n");
    for r in &table.rows {
        let _ = writeln!(out, "{},{:.3},{:.3},{:.3}", r.metric, r.pearson, r.spearman, r.kendall);
    }
    out
}

fn render_markdown(r: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Evaluation report: {}\n", r.dataset_id);
    let _ = writeln!(out, "Generated at: {}\n", r.generated_at);

    out.push_str("## Configuration\n\n");
    let _ = writeln!(
        out,
        "- stride: {}",
        r.config.stride.map_or("n/a".to_owned(), |s| s.to_string())
    );
    let _ = writeln!(out, "- temporal form: {}", r.config.temporal_form.as_str());
    if let Some(m) = &r.config.method {
        let _ = writeln!(out, "- fit method: {m}");
    }
    if let Some(s) = r.config.seed {
        let _ = writeln!(out, "- seed: {s}");
    }
    for b in &r.config.backends {
        let _ = writeln!(out, "- backend: {b}");
    }
    out.push_str("- negative cosine similarities are clamped to 0 before averaging\n");

    out.push_str("\n## Weights\n\n| w1 | w2 | w3 | intercept |\n|---|---|---|---|\n");
    let w = &r.weights;
    let _ = writeln!(
        out,
        "| {:.6} | {:.6} | {:.6} | {:.6} |",
        w.w1, w.w2, w.w3, w.intercept
    );

    out.push_str("\n## Scores by model\n\n");
    out.push_str("| Model | Videos | Semantic | Object | Temporal | Final |\n|---|---|---|---|---|---|\n");
    for m in &r.per_model {
        let _ = writeln!(
            out,
            "| {} | {} | {:.6} | {:.6} | {:.6} | {:.6} |",
            m.model_name, m.n_videos, m.s_similarity, m.s_object, m.s_temporal, m.s_final
        );
    }

    out.push_str("\n## Agreement with human scores\n\n");
    match (&r.correlations, &r.agreement) {
        (Some(t), Some(a)) => {
            out.push_str(&correlation_markdown(t));
            let _ = writeln!(
                out,
                "\nFinal score vs human over {} videos: Pearson {:.3}, R² (R1) {:.3}",
                a.n_videos, a.pearson, a.r_squared
            );
        }
        _ => out.push_str("_Not available._\n"),
    }
    if !r.notes.is_empty() {
        out.push_str("\n## Notes\n\n");
        for n in &r.notes {
            let _ = writeln!(out, "- {n}");
        }
    }
    out
}
