//! Domain types shared across the pipeline.
//!
//! Everything here is an immutable value object. Validation lives next to
//! the types; behavior lives in the modules that consume them.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse manifest {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Which partition of the dataset a video belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    /// Used to fit the aggregation weights.
    Optimization,
    /// Held out to check agreement with human ratings.
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub original_path: PathBuf,
    pub edited_path: PathBuf,
    pub edit_prompt: String,
    pub model_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub videos: Vec<VideoEntry>,
    #[serde(default)]
    pub split: BTreeMap<String, SplitRole>,
}

/// One broken manifest invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub video_id: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.video_id {
            Some(id) => write!(f, "{} [{}]: {}", self.field, id, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ManifestError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn entry(&self, video_id: &str) -> Option<&VideoEntry> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    /// Copy of the manifest with relative media paths joined onto `base`.
    pub fn with_paths_resolved(&self, base: &Path) -> Self {
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let mut out = self.clone();
        for v in &mut out.videos {
            v.original_path = resolve(&v.original_path);
            v.edited_path = resolve(&v.edited_path);
        }
        out
    }

    pub fn ids_in(&self, role: SplitRole) -> Vec<&str> {
        self.videos
            .iter()
            .filter(|v| self.split.get(&v.video_id) == Some(&role))
            .map(|v| v.video_id.as_str())
            .collect()
    }
}

/// Lists every broken invariant; an empty list means the manifest is valid.
pub fn validate_manifest(manifest: &DatasetManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    if manifest.dataset_id.trim().is_empty() {
        out.push(Violation {
            field: "dataset_id",
            video_id: None,
            message: "empty dataset id".into(),
        });
    }

    let mut seen = HashSet::new();
    let mut reported_dup = HashSet::new();
    for v in &manifest.videos {
        let id = Some(v.video_id.clone());
        if v.video_id.trim().is_empty() {
            out.push(Violation {
                field: "video_id",
                video_id: id.clone(),
                message: "empty video id".into(),
            });
        }
        if !seen.insert(v.video_id.as_str()) && reported_dup.insert(v.video_id.as_str()) {
            out.push(Violation {
                field: "video_id",
                video_id: id.clone(),
                message: "duplicate video id".into(),
            });
        }
        if v.edit_prompt.trim().is_empty() {
            out.push(Violation {
                field: "edit_prompt",
                video_id: id.clone(),
                message: "empty edit prompt".into(),
            });
        }
        if v.original_path.as_os_str().is_empty() {
            out.push(Violation {
                field: "original_path",
                video_id: id.clone(),
                message: "empty path".into(),
            });
        }
        if v.edited_path.as_os_str().is_empty() {
            out.push(Violation {
                field: "edited_path",
                video_id: id,
                message: "empty path".into(),
            });
        }
    }

    for key in manifest.split.keys() {
        if !seen.contains(key.as_str()) {
            out.push(Violation {
                field: "split",
                video_id: Some(key.clone()),
                message: "split refers to unknown video".into(),
            });
        }
    }
    if manifest.split.is_empty() {
        out.push(Violation {
            field: "split",
            video_id: None,
            message: "optimization and validation partitions are both empty".into(),
        });
    }
    out
}

/// SHA-256 of a frame's dimensions and RGB bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash(pub [u8; 32]);

impl ContentHash {
    pub fn of_image(image: &RgbImage) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(image.width().to_le_bytes());
        hasher.update(image.height().to_le_bytes());
        hasher.update(image.as_raw());
        ContentHash(hasher.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u64,
    pub image: RgbImage,
    pub content_hash: ContentHash,
}

impl Frame {
    /// Panics on a zero-sized image.
    pub fn new(index: u64, image: RgbImage) -> Self {
        assert!(
            image.width() >= 1 && image.height() >= 1,
            "frame must be at least 1x1"
        );
        let content_hash = ContentHash::of_image(&image);
        Frame {
            index,
            image,
            content_hash,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub video_id: String,
    pub frames: Vec<Frame>,
    pub fps: f64,
    pub stride: usize,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn indices_strictly_increasing(&self) -> bool {
        self.frames.windows(2).all(|w| w[0].index < w[1].index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageScores {
    pub video_id: String,
    pub s_similarity: f64,
    pub s_object: f64,
    pub s_temporal: f64,
    pub n_frames: usize,
}

impl StageScores {
    pub fn in_unit_interval(&self) -> bool {
        [self.s_similarity, self.s_object, self.s_temporal]
            .iter()
            .all(|s| (0.0..=1.0).contains(s))
    }
}

/// How the temporal score enters the weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemporalForm {
    /// `w3 * s_temporal`
    #[default]
    Direct,
    /// `w3 * (1 - s_temporal)`
    Penalty,
}

impl TemporalForm {
    pub fn term(self, s_temporal: f64) -> f64 {
        match self {
            TemporalForm::Direct => s_temporal,
            TemporalForm::Penalty => 1.0 - s_temporal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TemporalForm::Direct => "direct",
            TemporalForm::Penalty => "penalty",
        }
    }
}

impl std::str::FromStr for TemporalForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(TemporalForm::Direct),
            "penalty" => Ok(TemporalForm::Penalty),
            other => Err(format!("unknown temporal form `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub temporal_form: TemporalForm,
}

impl WeightVector {
    pub fn new(w1: f64, w2: f64, w3: f64, temporal_form: TemporalForm) -> Self {
        WeightVector {
            w1,
            w2,
            w3,
            intercept: 0.0,
            temporal_form,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.w1, self.w2, self.w3]
    }

    /// Non-negative weights summing to one.
    pub fn on_simplex(&self, tol: f64) -> bool {
        let w = self.as_array();
        w.iter().all(|&x| x >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RatingError {
    #[error("score {0} outside 1..=10")]
    OutOfRange(i64),
}

/// One rater's overall rating of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanScoreRecord {
    pub video_id: String,
    pub rater_id: String,
    pub raw_score: u8,
    pub normalized: f64,
    pub timestamp: String,
}

impl HumanScoreRecord {
    pub fn new(
        video_id: impl Into<String>,
        rater_id: impl Into<String>,
        raw_score: i64,
        timestamp: impl Into<String>,
    ) -> Result<Self, RatingError> {
        let raw = check_raw_score(raw_score)?;
        Ok(HumanScoreRecord {
            video_id: video_id.into(),
            rater_id: rater_id.into(),
            raw_score: raw,
            normalized: normalize_raw(raw),
            timestamp: timestamp.into(),
        })
    }
}

pub fn check_raw_score(raw: i64) -> Result<u8, RatingError> {
    if (1..=10).contains(&raw) {
        Ok(raw as u8)
    } else {
        Err(RatingError::OutOfRange(raw))
    }
}

/// Maps the 1..=10 rating scale onto (0, 1].
pub fn normalize_raw(raw: u8) -> f64 {
    f64::from(raw) / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub metric: String,
    pub pearson: f64,
    pub spearman: f64,
    pub kendall: f64,
}

/// Correlation of each metric against human ratings, in insertion order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub rows: Vec<CorrelationRow>,
}

impl CorrelationTable {
    pub fn get(&self, metric: &str) -> Option<&CorrelationRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn is_valid(&self) -> bool {
        self.rows.iter().all(|r| {
            [r.pearson, r.spearman, r.kendall]
                .iter()
                .all(|c| (-1.0..=1.0).contains(c))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(id: &str) -> VideoEntry {
        VideoEntry {
            video_id: id.into(),
            original_path: format!("orig/{id}").into(),
            edited_path: format!("edit/{id}").into(),
            edit_prompt: "turn the cat into a dog".into(),
            model_name: "m".into(),
        }
    }

    fn manifest(ids: &[&str]) -> DatasetManifest {
        DatasetManifest {
            dataset_id: "d".into(),
            videos: ids.iter().map(|i| entry(i)).collect(),
            split: ids
                .iter()
                .enumerate()
                .map(|(k, i)| {
                    let role = if k % 2 == 0 {
                        SplitRole::Optimization
                    } else {
                        SplitRole::Validation
                    };
                    (i.to_string(), role)
                })
                .collect(),
        }
    }

    #[test]
    fn well_formed_manifest_has_no_violations() {
        assert!(validate_manifest(&manifest(&["v1", "v2"])).is_empty());
    }

    #[test]
    fn duplicate_id_is_one_violation() {
        let mut m = manifest(&["v1", "v2"]);
        m.videos.push(entry("v1"));
        let v = validate_manifest(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].video_id.as_deref(), Some("v1"));
    }

    #[test]
    fn unknown_split_key_is_reported() {
        let mut m = manifest(&["v1", "v2"]);
        m.split.insert("vX".into(), SplitRole::Validation);
        let v = validate_manifest(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "split");
        assert_eq!(v[0].video_id.as_deref(), Some("vX"));
    }

    #[test]
    fn one_empty_partition_is_fine_both_is_not() {
        let mut m = manifest(&["v1"]);
        assert!(validate_manifest(&m).is_empty());
        m.split.clear();
        assert_eq!(validate_manifest(&m).len(), 1);
    }

    #[test]
    fn empty_prompt_and_paths() {
        let mut m = manifest(&["v1"]);
        m.videos[0].edit_prompt = "  ".into();
        m.videos[0].edited_path = PathBuf::new();
        let fields: Vec<_> = validate_manifest(&m).iter().map(|v| v.field).collect();
        assert_eq!(fields, vec!["edit_prompt", "edited_path"]);
    }

    #[test]
    fn manifest_json_field_names() {
        let json = manifest(&["a"]).to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v.get("dataset_id").is_some());
        assert_eq!(v["split"]["a"], "optimization");
        assert_eq!(v["videos"][0]["edit_prompt"], "turn the cat into a dog");
    }

    #[test]
    fn equal_pixels_equal_hash() {
        let a = RgbImage::from_pixel(4, 3, image::Rgb([10, 20, 30]));
        let b = RgbImage::from_pixel(4, 3, image::Rgb([10, 20, 30]));
        let c = RgbImage::from_pixel(3, 4, image::Rgb([10, 20, 30]));
        assert_eq!(Frame::new(0, a).content_hash, Frame::new(7, b.clone()).content_hash);
        assert_ne!(ContentHash::of_image(&b), ContentHash::of_image(&c));
    }

    #[test]
    fn human_record_normalization() {
        let r = HumanScoreRecord::new("v", "r", 8, "t").unwrap();
        assert_eq!(r.normalized, 0.8);
        assert_eq!(
            HumanScoreRecord::new("v", "r", 0, "t"),
            Err(RatingError::OutOfRange(0))
        );
        assert!(HumanScoreRecord::new("v", "r", 11, "t").is_err());
    }

    proptest! {
        #[test]
        fn manifest_round_trip(ids in proptest::collection::btree_set("[a-z0-9]{1,6}", 1..8),
                               prompt in "[a-z ]{1,20}[a-z]") {
            let ids: Vec<String> = ids.into_iter().collect();
            let refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
            let mut m = manifest(&refs);
            for v in &mut m.videos { v.edit_prompt = prompt.clone(); }
            prop_assert!(validate_manifest(&m).is_empty());
            let back: DatasetManifest = serde_json::from_str(&m.to_json()).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn mean_of_normalized_is_mean_raw_over_ten(raws in proptest::collection::vec(1i64..=10, 1..20)) {
            let recs: Vec<_> = raws.iter().map(|&r| HumanScoreRecord::new("v", "r", r, "t").unwrap()).collect();
            let n = recs.len() as f64;
            let mean_norm = recs.iter().map(|r| r.normalized).sum::<f64>() / n;
            let mean_raw = raws.iter().sum::<i64>() as f64 / n;
            prop_assert!((mean_norm - mean_raw / 10.0).abs() < 1e-12);
            for r in &recs { prop_assert_eq!(r.normalized, f64::from(r.raw_score) / 10.0); }
        }
    }
}
