use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sstem_core::aggregation::split_rows;
use sstem_core::model::TemporalForm;
use sstem_core::tabular::{read_human_scores, read_scores, HumanScoreRow, ScoreRow};
use sstem_core::{evaluate_loss, fit_weights, FitMethod, FitResult, StageScores};

use crate::exit::{sidecar_path, write_json, Exit, OrExit, ALIGNMENT, FIT_FAILED, INVALID_ARGS};
use crate::score::ScoreMeta;
use crate::setup::load_manifest;
use crate::FitArgs;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    #[serde(flatten)]
    pub fit: FitResult,
    pub validation: Option<HeldOut>,
    pub effective_config: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub loss: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: FitMethod,
    pub temporal_form: TemporalForm,
    pub scores: PathBuf,
    pub human: PathBuf,
    pub manifest: Option<PathBuf>,
    /// Carried over from the scoring run when its sidecar is present.
    pub seed: Option<u64>,
    pub stride: Option<usize>,
    pub backends: Vec<String>,
}

/// Settings of the run that produced `scores`, if it left a sidecar.
pub fn read_score_meta(scores: &Path) -> Option<ScoreMeta> {
    let text = fs::read_to_string(sidecar_path(scores)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Human score by video id; a repeated id is an alignment error.
pub fn human_by_id(rows: &[HumanScoreRow]) -> Result<BTreeMap<&str, f64>, Exit> {
    let mut map = BTreeMap::new();
    for r in rows {
        if map.insert(r.video_id.as_str(), r.mean_normalized).is_some() {
            return Err(Exit::msg(ALIGNMENT, format!("human scores list `{}` twice", r.video_id)));
        }
    }
    Ok(map)
}

fn join(scores: &[ScoreRow], human: &BTreeMap<&str, f64>) -> Result<Vec<(StageScores, f64)>, Exit> {
    let mut rows = Vec::new();
    let mut unrated = Vec::new();
    for s in scores {
        match human.get(s.video_id.as_str()) {
            Some(&h) => rows.push((s.scores(), h)),
            None => unrated.push(s.video_id.as_str()),
        }
    }
    if !unrated.is_empty() {
        eprintln!("warning: no human score for {}; left out of the fit", unrated.join(", "));
    }
    if rows.is_empty() {
        return Err(Exit::msg(ALIGNMENT, "no scored video has a human score"));
    }
    Ok(rows)
}

pub fn run(args: FitArgs) -> Result<(), Exit> {
    let scores = read_scores(&args.scores).or_exit(INVALID_ARGS)?;
    let human = read_human_scores(&args.human).or_exit(INVALID_ARGS)?;
    let rows = join(&scores, &human_by_id(&human)?)?;

    let (opt, val) = match &args.manifest {
        Some(path) => {
            let manifest = load_manifest(path)?;
            split_rows(&manifest, rows, |(s, _)| s.video_id.as_str()).or_exit(ALIGNMENT)?
        }
        None => (rows, Vec::new()),
    };
    let fit = fit_weights(&opt, args.method, args.temporal_form).or_exit(FIT_FAILED)?;
    let validation = (!val.is_empty()).then(|| HeldOut {
        loss: evaluate_loss(&val, &fit.weights),
        n_samples: val.len(),
    });

    let meta = read_score_meta(&args.scores);
    let file = WeightsFile {
        effective_config: FitConfig {
            method: args.method,
            temporal_form: args.temporal_form,
            scores: args.scores.clone(),
            human: args.human.clone(),
            manifest: args.manifest.clone(),
            seed: meta.as_ref().map(|m| m.seed),
            stride: meta.as_ref().map(|m| m.stride),
            backends: meta.map(|m| m.backends).unwrap_or_default(),
        },
        fit,
        validation,
    };
    write_json(&args.out, &file)?;

    let w = &file.fit.weights;
    println!(
        "w1={} w2={} w3={} intercept={} ({}, {})",
        w.w1,
        w.w2,
        w.w3,
        w.intercept,
        file.fit.method.as_str(),
        w.temporal_form.as_str()
    );
    println!("optimization loss {:.6e} over {} videos", file.fit.loss, file.fit.n_samples);
    match &file.validation {
        Some(v) => println!("validation loss {:.6e} over {} videos", v.loss, v.n_samples),
        None => println!("validation loss n/a (no validation videos)"),
    }
    Ok(())
}
