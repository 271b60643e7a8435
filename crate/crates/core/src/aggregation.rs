//! Weighted combination of stage scores and weight fitting.
//!
//! `final = w1 * s_similarity + w2 * s_object + w3 * T + intercept`, where
//! `T` is `s_temporal` (direct form) or `1 - s_temporal` (penalty form).
//! Weights minimize the mean squared error against human scores.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{lstsq, simplex_lstsq, RankDeficient};
use crate::model::{DatasetManifest, SplitRole, StageScores, TemporalForm, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Unconstrained least squares, no intercept.
    Ols,
    /// Unconstrained least squares with a free intercept.
    OlsIntercept,
    /// Non-negative weights summing to one, no intercept.
    Simplex,
}

impl FitMethod {
    pub fn unknowns(self) -> usize {
        match self {
            FitMethod::Ols | FitMethod::Simplex => 3,
            FitMethod::OlsIntercept => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::Ols => "ols",
            FitMethod::OlsIntercept => "ols_intercept",
            FitMethod::Simplex => "simplex",
        }
    }
}

impl FromStr for FitMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ols" => Ok(FitMethod::Ols),
            "ols-intercept" | "ols_intercept" => Ok(FitMethod::OlsIntercept),
            "simplex" => Ok(FitMethod::Simplex),
            other => Err(format!("unknown fit method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("{method} needs at least {needed} samples, got {got}")]
    TooFewSamples {
        method: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("non-finite value in fitting row for `{0}`")]
    NonFinite(String),
}

impl FitError {
    pub fn code(&self) -> &'static str {
        match self {
            FitError::TooFewSamples { .. } => "TOO_FEW_SAMPLES",
            FitError::RankDeficient => "RANK_DEFICIENT",
            FitError::NonFinite(_) => "NON_FINITE",
        }
    }
}

impl From<RankDeficient> for FitError {
    fn from(_: RankDeficient) -> Self {
        FitError::RankDeficient
    }
}

/// Fitted weights and the loss they reach on the fitting rows. Serializes
/// flat: `{w1, w2, w3, intercept, temporal_form, method, loss, n_samples}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub weights: WeightVector,
    pub method: FitMethod,
    pub loss: f64,
    pub n_samples: usize,
}

pub fn aggregate(scores: &StageScores, weights: &WeightVector) -> f64 {
    weights.w1 * scores.s_similarity
        + weights.w2 * scores.s_object
        + weights.w3 * weights.temporal_form.term(scores.s_temporal)
        + weights.intercept
}

/// Mean squared error of the aggregated scores against the targets.
///
/// # Panics
/// On an empty slice.
pub fn evaluate_loss(rows: &[(StageScores, f64)], weights: &WeightVector) -> f64 {
    assert!(!rows.is_empty(), "loss over zero rows");
    let sum: f64 = rows
        .iter()
        .map(|(s, human)| (aggregate(s, weights) - human).powi(2))
        .sum();
    sum / rows.len() as f64
}

fn design_row(s: &StageScores, form: TemporalForm, intercept: bool) -> Vec<f64> {
    let mut r = vec![s.s_similarity, s.s_object, form.term(s.s_temporal)];
    if intercept {
        r.push(1.0);
    }
    r
}

pub fn fit_weights(
    rows: &[(StageScores, f64)],
    method: FitMethod,
    temporal_form: TemporalForm,
) -> Result<FitResult, FitError> {
    let needed = method.unknowns();
    if rows.len() < needed {
        return Err(FitError::TooFewSamples {
            method: method.as_str(),
            needed,
            got: rows.len(),
        });
    }
    for (s, h) in rows {
        if ![s.s_similarity, s.s_object, s.s_temporal, *h].iter().all(|v| v.is_finite()) {
            return Err(FitError::NonFinite(s.video_id.clone()));
        }
    }
    let intercept = method == FitMethod::OlsIntercept;
    let design: Vec<Vec<f64>> = rows
        .iter()
        .map(|(s, _)| design_row(s, temporal_form, intercept))
        .collect();
    let target: Vec<f64> = rows.iter().map(|(_, h)| *h).collect();

    let x = match method {
        FitMethod::Ols | FitMethod::OlsIntercept => lstsq(&design, &target)?,
        FitMethod::Simplex => {
            // the unconstrained problem must be identifiable too
            lstsq(&design, &target)?;
            simplex_lstsq(&design, &target)?
        }
    };
    let weights = WeightVector {
        w1: x[0],
        w2: x[1],
        w3: x[2],
        intercept: if intercept { x[3] } else { 0.0 },
        temporal_form,
    };
    Ok(FitResult {
        loss: evaluate_loss(rows, &weights),
        weights,
        method,
        n_samples: rows.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("video `{0}` is not assigned to a split")]
    UnsplitVideo(String),
    #[error("both optimization and validation partitions are empty")]
    EmptySplit,
}

impl SplitError {
    pub fn code(&self) -> &'static str {
        match self {
            SplitError::UnsplitVideo(_) => "UNSPLIT_VIDEO",
            SplitError::EmptySplit => "EMPTY_SPLIT",
        }
    }
}

/// Partitions rows into (optimization, validation) following the manifest.
pub fn split_rows<T>(
    manifest: &DatasetManifest,
    rows: Vec<T>,
    video_id: impl Fn(&T) -> &str,
) -> Result<(Vec<T>, Vec<T>), SplitError> {
    if manifest.split.is_empty() {
        return Err(SplitError::EmptySplit);
    }
    let mut opt = Vec::new();
    let mut val = Vec::new();
    for row in rows {
        match manifest.split.get(video_id(&row)) {
            Some(SplitRole::Optimization) => opt.push(row),
            Some(SplitRole::Validation) => val.push(row),
            None => return Err(SplitError::UnsplitVideo(video_id(&row).to_owned())),
        }
    }
    Ok((opt, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::VideoEntry;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scores(id: &str, s: f64, o: f64, t: f64) -> StageScores {
        StageScores {
            video_id: id.into(),
            s_similarity: s,
            s_object: o,
            s_temporal: t,
            n_frames: 8,
        }
    }

    fn stage_table_rows() -> Vec<(StageScores, f64)> {
        fixtures::stage_score_table()
            .into_iter()
            .map(|r| (scores(&r.model, r.semantic, r.object, r.temporal), r.final_score))
            .collect()
    }

    fn synthetic_rows(n: usize, w: [f64; 3], seed: u64) -> Vec<(StageScores, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let s = scores(&format!("v{i}"), rng.gen(), rng.gen(), rng.gen());
                let h = w[0] * s.s_similarity + w[1] * s.s_object + w[2] * s.s_temporal;
                (s, h)
            })
            .collect()
    }

    #[test]
    fn basis_weights_select_one_score() {
        let s = scores("v", 0.3, 0.6, 0.9);
        assert_eq!(aggregate(&s, &WeightVector::new(1.0, 0.0, 0.0, TemporalForm::Direct)), 0.3);
        let pen = WeightVector::new(0.0, 0.0, 1.0, TemporalForm::Penalty);
        assert_eq!(aggregate(&scores("v", 0.3, 0.6, 1.0), &pen), 0.0);
    }

    #[test]
    fn reconstructed_weights_on_first_row() {
        let w = WeightVector::new(0.361, 0.138, 0.501, TemporalForm::Direct);
        let (s, published) = &stage_table_rows()[0];
        let v = aggregate(s, &w);
        assert!((v - 0.8651).abs() <= 0.001, "{v}");
        assert!((v - published).abs() <= 0.001);
    }

    #[test]
    fn exact_linear_model_recovered() {
        let rows = synthetic_rows(12, [0.2, 0.3, 0.5], 5);
        let fit = fit_weights(&rows, FitMethod::Ols, TemporalForm::Direct).unwrap();
        for (got, want) in fit.weights.as_array().iter().zip([0.2, 0.3, 0.5]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert!(fit.loss < 1e-18);
        assert_eq!(fit.n_samples, 12);
    }

    #[test]
    fn simplex_recovers_feasible_truth() {
        let rows = synthetic_rows(12, [0.2, 0.3, 0.5], 6);
        let fit = fit_weights(&rows, FitMethod::Simplex, TemporalForm::Direct).unwrap();
        assert!(fit.weights.on_simplex(1e-9));
        for (got, want) in fit.weights.as_array().iter().zip([0.2, 0.3, 0.5]) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn intercept_recovered() {
        let mut rows = synthetic_rows(10, [0.1, 0.2, 0.3], 7);
        for (_, h) in &mut rows {
            *h += 0.25;
        }
        let fit = fit_weights(&rows, FitMethod::OlsIntercept, TemporalForm::Direct).unwrap();
        assert!((fit.weights.intercept - 0.25).abs() < 1e-9);
        assert!((fit.weights.w3 - 0.3).abs() < 1e-9);
    }

    #[test]
    fn too_few_samples() {
        let rows = synthetic_rows(2, [0.2, 0.3, 0.5], 1);
        assert_eq!(fit_weights(&rows, FitMethod::Ols, TemporalForm::Direct).unwrap_err().code(), "TOO_FEW_SAMPLES");
        let rows = synthetic_rows(3, [0.2, 0.3, 0.5], 1);
        assert!(fit_weights(&rows, FitMethod::OlsIntercept, TemporalForm::Direct).is_err());
    }

    #[test]
    fn constant_column_is_rank_deficient() {
        let mut rows = synthetic_rows(6, [0.2, 0.3, 0.5], 2);
        for (s, _) in &mut rows {
            s.s_object = 0.0;
        }
        assert_eq!(fit_weights(&rows, FitMethod::Ols, TemporalForm::Direct).unwrap_err(), FitError::RankDeficient);
        let mut rows = synthetic_rows(6, [0.2, 0.3, 0.5], 2);
        for (s, _) in &mut rows {
            s.s_temporal = 0.5;
        }
        assert_eq!(fit_weights(&rows, FitMethod::OlsIntercept, TemporalForm::Direct).unwrap_err(), FitError::RankDeficient);
    }

    #[test]
    fn loss_examples() {
        let rows = vec![(scores("a", 0.5, 0.5, 0.5), 0.6)];
        let w = WeightVector::new(1.0, 0.0, 0.0, TemporalForm::Direct);
        assert!((evaluate_loss(&rows, &w) - 0.01).abs() < 1e-15);
        let rows = vec![(scores("a", 0.5, 0.5, 0.5), 0.5)];
        assert_eq!(evaluate_loss(&rows, &w), 0.0);
    }

    #[test]
    fn penalty_form_fits_direct_data_worse() {
        let rows = stage_table_rows();
        let direct = fit_weights(&rows, FitMethod::Ols, TemporalForm::Direct).unwrap();
        let penalty = fit_weights(&rows, FitMethod::Ols, TemporalForm::Penalty).unwrap();
        assert!(penalty.loss > direct.loss);
    }

    #[test]
    fn ols_argmin_certificate_on_table() {
        let rows = stage_table_rows();
        let fit = fit_weights(&rows, FitMethod::Ols, TemporalForm::Direct).unwrap();
        for i in 0..3 {
            for d in [-1e-3, 1e-3] {
                let mut w = fit.weights;
                match i {
                    0 => w.w1 += d,
                    1 => w.w2 += d,
                    _ => w.w3 += d,
                }
                assert!(evaluate_loss(&rows, &w) >= fit.loss);
            }
        }
    }

    #[test]
    fn fit_result_document_is_flat() {
        let fit = fit_weights(&stage_table_rows(), FitMethod::Ols, TemporalForm::Direct).unwrap();
        let v: serde_json::Value = serde_json::to_value(&fit).unwrap();
        for key in ["w1", "w2", "w3", "intercept", "temporal_form", "method", "loss", "n_samples"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["method"], "ols");
        let back: FitResult = serde_json::from_value(v).unwrap();
        assert_eq!(back, fit);
    }

    fn manifest_with(opt: usize, val: usize) -> DatasetManifest {
        let mut m = DatasetManifest {
            dataset_id: "d".into(),
            videos: Vec::new(),
            split: Default::default(),
        };
        for i in 0..opt + val {
            let id = format!("v{i}");
            m.videos.push(VideoEntry {
                video_id: id.clone(),
                original_path: "o".into(),
                edited_path: "e".into(),
                edit_prompt: "p".into(),
                model_name: "m".into(),
            });
            let role = if i < opt { SplitRole::Optimization } else { SplitRole::Validation };
            m.split.insert(id, role);
        }
        m
    }

    #[test]
    fn forty_forty_split() {
        let m = manifest_with(40, 40);
        let rows = synthetic_rows(80, [0.2, 0.3, 0.5], 9);
        let (opt, val) = split_rows(&m, rows, |r| &r.0.video_id).unwrap();
        assert_eq!((opt.len(), val.len()), (40, 40));
        assert!(opt.iter().all(|o| !val.iter().any(|v| v.0.video_id == o.0.video_id)));
    }

    #[test]
    fn empty_validation_is_allowed() {
        let m = manifest_with(3, 0);
        let rows = synthetic_rows(3, [0.2, 0.3, 0.5], 9);
        let (opt, val) = split_rows(&m, rows, |r| &r.0.video_id).unwrap();
        assert_eq!((opt.len(), val.len()), (3, 0));
        let empty = manifest_with(0, 0);
        assert_eq!(split_rows(&empty, Vec::<(StageScores, f64)>::new(), |r| &r.0.video_id).unwrap_err(), SplitError::EmptySplit);
    }

    #[test]
    fn unknown_row_is_unsplit() {
        let m = manifest_with(2, 2);
        let rows = vec![(scores("zz", 0.1, 0.1, 0.1), 0.1)];
        assert_eq!(split_rows(&m, rows, |r| &r.0.video_id).unwrap_err().code(), "UNSPLIT_VIDEO");
    }

    proptest! {
        #[test]
        fn aggregate_is_affine_per_score(s in 0.0f64..1.0, o in 0.0f64..1.0, t in 0.0f64..1.0,
                                         w1 in -2.0f64..2.0, w2 in -2.0f64..2.0, w3 in -2.0f64..2.0,
                                         k in 0usize..3) {
            let w = WeightVector::new(w1, w2, w3, TemporalForm::Direct);
            let base = scores("v", s, o, t);
            let mut moved = base.clone();
            let d = 0.25;
            match k { 0 => moved.s_similarity += d, 1 => moved.s_object += d, _ => moved.s_temporal += d }
            let wi = w.as_array()[k];
            prop_assert!((aggregate(&moved, &w) - aggregate(&base, &w) - wi * d).abs() < 1e-12);
        }

        #[test]
        fn simplex_fit_is_feasible(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<_> = (0..8).map(|i| (scores(&format!("v{i}"), rng.gen(), rng.gen(), rng.gen()), rng.gen::<f64>())).collect();
            let fit = fit_weights(&rows, FitMethod::Simplex, TemporalForm::Direct).unwrap();
            prop_assert!(fit.weights.on_simplex(1e-9));
            // no vertex or edge midpoint beats it
            for cand in [[1.0,0.0,0.0],[0.0,1.0,0.0],[0.0,0.0,1.0],[0.5,0.5,0.0],[0.0,0.5,0.5],[0.5,0.0,0.5],[1.0/3.0,1.0/3.0,1.0/3.0]] {
                let w = WeightVector::new(cand[0], cand[1], cand[2], TemporalForm::Direct);
                prop_assert!(evaluate_loss(&rows, &w) >= fit.loss - 1e-15);
            }
        }
    }
}
