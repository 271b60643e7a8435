//! Durable rating state: an append-only JSON-lines log replayed into an
//! immutable snapshot.
//!
//! Writers serialize on one mutex, append a line, fsync, and then publish
//! a new snapshot. Readers clone the current `Arc<Snapshot>` and never
//! wait on file I/O.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sstem_core::ingestion::decode_video;
use sstem_core::model::{check_raw_score, normalize_raw, DatasetManifest, HumanScoreRecord};
use sstem_core::numeric::exact_mean;
use sstem_core::synth::write_gif;
use sstem_core::tabular::{human_scores_csv, HumanScoreRow};
use thiserror::Error;

pub const LOG_FILE: &str = "ratings.jsonl";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("rater id must be non-empty")]
    EmptyRater,
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("unknown video `{0}`")]
    UnknownVideo(String),
    #[error("{axis} score {value} outside 1..=10")]
    OutOfRange { axis: &'static str, value: i64 },
    #[error("no `{0}` media; expected `original` or `edited`")]
    UnknownMedia(String),
    #[error("cannot decode media for `{video_id}`: {reason}")]
    Media { video_id: String, reason: String },
    #[error("{path}:{line}: corrupt rating record: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::EmptyRater => "INVALID_RATER",
            ServiceError::UnknownDataset(_) => "UNKNOWN_DATASET",
            ServiceError::UnknownVideo(_) => "UNKNOWN_VIDEO",
            ServiceError::OutOfRange { .. } => "OUT_OF_RANGE",
            ServiceError::UnknownMedia(_) => "UNKNOWN_MEDIA",
            ServiceError::Media { .. } => "MEDIA_UNAVAILABLE",
            ServiceError::Corrupt { .. } => "CORRUPT_STORE",
            ServiceError::Io { .. } => "STORE_IO",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RubricAxis {
    pub key: &'static str,
    pub label: &'static str,
    pub description: &'static str,
}

/// The three judgement axes, in the order the service expects them.
pub const RUBRIC: [RubricAxis; 3] = [
    RubricAxis {
        key: "semantic_accuracy",
        label: "Semantic accuracy",
        description: "Does the edited video do what the edit prompt asks?",
    },
    RubricAxis {
        key: "spatial_coherence",
        label: "Spatial coherence",
        description: "Is the edited object well formed and placed plausibly in each frame?",
    },
    RubricAxis {
        key: "temporal_consistency",
        label: "Temporal consistency",
        description: "Does the edit stay stable from frame to frame without flicker?",
    },
];

/// One rater's 1..=10 scores on each rubric axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisScores {
    pub semantic_accuracy: u8,
    pub spatial_coherence: u8,
    pub temporal_consistency: u8,
}

impl AxisScores {
    pub fn new(semantic: i64, spatial: i64, temporal: i64) -> Result<Self, ServiceError> {
        let check = |axis: &'static str, value: i64| {
            check_raw_score(value).map_err(|_| ServiceError::OutOfRange { axis, value })
        };
        Ok(AxisScores {
            semantic_accuracy: check(RUBRIC[0].key, semantic)?,
            spatial_coherence: check(RUBRIC[1].key, spatial)?,
            temporal_consistency: check(RUBRIC[2].key, temporal)?,
        })
    }

    pub fn as_array(&self) -> [u8; 3] {
        [
            self.semantic_accuracy,
            self.spatial_coherence,
            self.temporal_consistency,
        ]
    }

    /// Mean of the three axes rounded to the nearest integer. A sum of
    /// three integers never lands on a half, so no tie rule is needed.
    pub fn overall(&self) -> u8 {
        let sum: u16 = self.as_array().iter().map(|&v| u16::from(v)).sum();
        ((sum + 1) / 3) as u8
    }
}

/// A line of the record log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRating {
    #[serde(flatten)]
    pub record: HumanScoreRecord,
    pub axes: AxisScores,
}

impl StoredRating {
    pub fn new(video_id: &str, rater_id: &str, axes: AxisScores, timestamp: &str) -> Self {
        let raw = axes.overall();
        StoredRating {
            record: HumanScoreRecord {
                video_id: video_id.to_owned(),
                rater_id: rater_id.to_owned(),
                raw_score: raw,
                normalized: normalize_raw(raw),
                timestamp: timestamp.to_owned(),
            },
            axes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisMeans {
    pub semantic_accuracy: f64,
    pub spatial_coherence: f64,
    pub temporal_consistency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateScore {
    pub video_id: String,
    pub mean_normalized: f64,
    pub n_raters: usize,
    pub per_axis: AxisMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatingTask {
    pub task_id: String,
    pub video_id: String,
    pub original_media_url: String,
    pub edited_media_url: String,
    pub edit_prompt: String,
    pub rubric: [RubricAxis; 3],
}

/// Latest record per `(video_id, rater_id)`.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    records: BTreeMap<(String, String), StoredRating>,
}

impl Snapshot {
    fn apply(&mut self, r: StoredRating) {
        let key = (r.record.video_id.clone(), r.record.rater_id.clone());
        self.records.insert(key, r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, video_id: &str, rater_id: &str) -> Option<&StoredRating> {
        self.records.get(&(video_id.to_owned(), rater_id.to_owned()))
    }

    pub fn records(&self) -> impl Iterator<Item = &StoredRating> {
        self.records.values()
    }

    fn for_video<'a>(&'a self, video_id: &'a str) -> impl Iterator<Item = &'a StoredRating> + 'a {
        self.records
            .range((video_id.to_owned(), String::new())..)
            .take_while(move |((v, _), _)| v == video_id)
            .map(|(_, r)| r)
    }

    pub fn n_raters(&self, video_id: &str) -> usize {
        self.for_video(video_id).count()
    }

    /// Sorted by video id; videos without ratings are absent.
    pub fn aggregates(&self) -> Vec<AggregateScore> {
        let mut by_video: BTreeMap<&str, Vec<&StoredRating>> = BTreeMap::new();
        for r in self.records.values() {
            by_video.entry(&r.record.video_id).or_default().push(r);
        }
        by_video
            .into_iter()
            .map(|(video_id, rs)| {
                let axis = |i: usize| {
                    exact_mean(rs.iter().map(|r| f64::from(r.axes.as_array()[i]))).expect("non-empty")
                };
                AggregateScore {
                    video_id: video_id.to_owned(),
                    mean_normalized: exact_mean(rs.iter().map(|r| r.record.normalized))
                        .expect("non-empty"),
                    n_raters: rs.len(),
                    per_axis: AxisMeans {
                        semantic_accuracy: axis(0),
                        spatial_coherence: axis(1),
                        temporal_consistency: axis(2),
                    },
                }
            })
            .collect()
    }

    pub fn human_score_rows(&self) -> Vec<HumanScoreRow> {
        self.aggregates()
            .into_iter()
            .map(|a| HumanScoreRow {
                video_id: a.video_id,
                mean_normalized: a.mean_normalized,
                n_raters: a.n_raters,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MediaSide {
    Original,
    Edited,
}

impl std::str::FromStr for MediaSide {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "original" => Ok(MediaSide::Original),
            "edited" => Ok(MediaSide::Edited),
            other => Err(ServiceError::UnknownMedia(other.to_owned())),
        }
    }
}

pub struct RatingStore {
    manifest: DatasetManifest,
    dir: PathBuf,
    log_path: PathBuf,
    writer: Mutex<File>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl RatingStore {
    /// Opens (or creates) the store in `dir` and replays its log. A final
    /// line cut short by a crash is dropped; any other unparsable line is
    /// an error. Media paths in `manifest` must already be resolved.
    pub fn open(dir: &Path, manifest: DatasetManifest) -> Result<Self, ServiceError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let log_path = dir.join(LOG_FILE);
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(io_err(&log_path))?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io_err(&log_path))?;

        let mut snapshot = Snapshot::default();
        let mut good_len = 0;
        for (i, line) in text.split_inclusive('\n').enumerate() {
            if !line.ends_with('\n') {
                break; // torn final write
            }
            if !line.trim().is_empty() {
                let r: StoredRating =
                    serde_json::from_str(line).map_err(|e| ServiceError::Corrupt {
                        path: log_path.clone(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                snapshot.apply(r);
            }
            good_len += line.len();
        }
        if good_len < text.len() {
            file.set_len(good_len as u64).map_err(io_err(&log_path))?;
        }

        Ok(RatingStore {
            manifest,
            dir: dir.to_path_buf(),
            log_path,
            writer: Mutex::new(file),
            snapshot: RwLock::new(Arc::new(snapshot)),
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Least-rated video this rater has not rated yet; ties go to the
    /// earlier manifest entry.
    pub fn next_task(
        &self,
        rater_id: &str,
        dataset_id: Option<&str>,
    ) -> Result<Option<RatingTask>, ServiceError> {
        if rater_id.trim().is_empty() {
            return Err(ServiceError::EmptyRater);
        }
        if let Some(d) = dataset_id {
            if d != self.manifest.dataset_id {
                return Err(ServiceError::UnknownDataset(d.to_owned()));
            }
        }
        let snap = self.snapshot();
        let pick = self
            .manifest
            .videos
            .iter()
            .filter(|v| snap.get(&v.video_id, rater_id).is_none())
            .min_by_key(|v| snap.n_raters(&v.video_id));
        Ok(pick.map(|v| RatingTask {
            task_id: format!("{}/{}/{}", self.manifest.dataset_id, v.video_id, rater_id),
            video_id: v.video_id.clone(),
            original_media_url: media_url(&v.video_id, "original"),
            edited_media_url: media_url(&v.video_id, "edited"),
            edit_prompt: v.edit_prompt.clone(),
            rubric: RUBRIC,
        }))
    }

    pub fn submit(
        &self,
        rater_id: &str,
        video_id: &str,
        axes: [i64; 3],
    ) -> Result<StoredRating, ServiceError> {
        let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        self.submit_at(rater_id, video_id, axes, &now)
    }

    /// Records a rating, replacing this rater's earlier one for the video.
    /// Resubmitting identical axis scores leaves the store untouched and
    /// returns the existing record.
    pub fn submit_at(
        &self,
        rater_id: &str,
        video_id: &str,
        axes: [i64; 3],
        timestamp: &str,
    ) -> Result<StoredRating, ServiceError> {
        if rater_id.trim().is_empty() {
            return Err(ServiceError::EmptyRater);
        }
        if self.manifest.entry(video_id).is_none() {
            return Err(ServiceError::UnknownVideo(video_id.to_owned()));
        }
        let axes = AxisScores::new(axes[0], axes[1], axes[2])?;

        let mut file = self.writer.lock().expect("writer lock");
        let current = self.snapshot();
        if let Some(prev) = current.get(video_id, rater_id) {
            if prev.axes == axes {
                return Ok(prev.clone());
            }
        }
        let rating = StoredRating::new(video_id, rater_id, axes, timestamp);
        let mut line = serde_json::to_string(&rating).expect("rating serializes");
        line.push('\n');
        file.write_all(line.as_bytes())
            .and_then(|()| file.sync_data())
            .map_err(io_err(&self.log_path))?;

        let mut next = (*current).clone();
        next.apply(rating.clone());
        *self.snapshot.write().expect("snapshot lock") = Arc::new(next);
        Ok(rating)
    }

    pub fn aggregates(&self) -> Vec<AggregateScore> {
        self.snapshot().aggregates()
    }

    /// `video_id,mean_normalized,n_raters` rows, header only when nothing
    /// has been rated.
    pub fn export_human_scores(&self) -> Vec<u8> {
        human_scores_csv(&self.snapshot().human_score_rows())
    }

    pub fn flush(&self) -> Result<(), ServiceError> {
        let file = self.writer.lock().expect("writer lock");
        file.sync_all().map_err(io_err(&self.log_path))
    }

    /// A streamable file for one side of a video. Regular files are served
    /// as they are; frame directories are rendered once into an animated
    /// GIF under the store directory.
    pub fn media_file(&self, video_id: &str, side: MediaSide) -> Result<PathBuf, ServiceError> {
        let (index, entry) = self
            .manifest
            .videos
            .iter()
            .enumerate()
            .find(|(_, v)| v.video_id == video_id)
            .ok_or_else(|| ServiceError::UnknownVideo(video_id.to_owned()))?;
        let (source, tag) = match side {
            MediaSide::Original => (&entry.original_path, "original"),
            MediaSide::Edited => (&entry.edited_path, "edited"),
        };
        if source.is_file() {
            return Ok(source.clone());
        }
        let media_dir = self.dir.join("media");
        let target = media_dir.join(format!("{index:05}-{tag}.gif"));
        if target.is_file() {
            return Ok(target);
        }
        let media_err = |reason: String| ServiceError::Media {
            video_id: video_id.to_owned(),
            reason,
        };
        let (frames, fps) = decode_video(source).map_err(|e| media_err(e.to_string()))?;
        fs::create_dir_all(&media_dir).map_err(io_err(&media_dir))?;
        let tmp = tempfile::NamedTempFile::new_in(&media_dir).map_err(io_err(&media_dir))?;
        write_gif(tmp.path(), &frames, fps.round().max(1.0) as u32)
            .map_err(|e| media_err(e.to_string()))?;
        tmp.persist(&target).map_err(|e| io_err(&target)(e.error))?;
        Ok(target)
    }
}

fn media_url(video_id: &str, side: &str) -> String {
    let mut escaped = String::new();
    for b in video_id.bytes() {
        if b.is_ascii_alphanumeric() || b"-_.~".contains(&b) {
            escaped.push(b as char);
        } else {
            escaped.push_str(&format!("%{b:02X}"));
        }
    }
    format!("/api/media/{escaped}/{side}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use sstem_core::model::VideoEntry;

    fn manifest(ids: &[&str]) -> DatasetManifest {
        DatasetManifest {
            dataset_id: "ds".into(),
            videos: ids
                .iter()
                .map(|id| VideoEntry {
                    video_id: id.to_string(),
                    original_path: PathBuf::from(format!("{id}/o")),
                    edited_path: PathBuf::from(format!("{id}/e")),
                    edit_prompt: "make it red".into(),
                    model_name: "m".into(),
                })
                .collect(),
            split: BTreeMap::new(),
        }
    }

    fn open(dir: &Path, ids: &[&str]) -> RatingStore {
        RatingStore::open(dir, manifest(ids)).unwrap()
    }

    #[test]
    fn overall_is_rounded_axis_mean() {
        assert_eq!(AxisScores::new(8, 8, 8).unwrap().overall(), 8);
        assert_eq!(AxisScores::new(10, 10, 10).unwrap().overall(), 10);
        assert_eq!(AxisScores::new(1, 1, 2).unwrap().overall(), 1);
        assert_eq!(AxisScores::new(1, 2, 2).unwrap().overall(), 2);
        assert_eq!(AxisScores::new(7, 9, 8).unwrap().overall(), 8);
        let e = AxisScores::new(0, 5, 5).unwrap_err();
        assert_eq!(e.code(), "OUT_OF_RANGE");
        assert!(AxisScores::new(5, 5, 11).is_err());
    }

    #[test]
    fn overall_matches_float_rounding_everywhere() {
        for a in 1..=10 {
            for b in 1..=10 {
                for c in 1..=10 {
                    let s = AxisScores::new(a, b, c).unwrap();
                    let expect = ((a + b + c) as f64 / 3.0).round() as u8;
                    assert_eq!(s.overall(), expect);
                }
            }
        }
    }

    #[test]
    fn least_rated_first() {
        let dir = tempfile::tempdir().unwrap();
        let s = open(dir.path(), &["a", "b", "c"]);
        assert_eq!(s.next_task("r1", None).unwrap().unwrap().video_id, "a");
        s.submit_at("r2", "a", [5, 5, 5], "t").unwrap();
        s.submit_at("r3", "a", [5, 5, 5], "t").unwrap();
        s.submit_at("r2", "b", [5, 5, 5], "t").unwrap();
        assert_eq!(s.next_task("r1", None).unwrap().unwrap().video_id, "c");
        for v in ["a", "b", "c"] {
            s.submit_at("r1", v, [5, 5, 5], "t").unwrap();
        }
        assert!(s.next_task("r1", None).unwrap().is_none());
        assert_eq!(s.next_task("", None).unwrap_err().code(), "INVALID_RATER");
        assert_eq!(
            s.next_task("r1", Some("other")).unwrap_err().code(),
            "UNKNOWN_DATASET"
        );
    }

    #[test]
    fn task_urls_escape_ids() {
        let dir = tempfile::tempdir().unwrap();
        let s = open(dir.path(), &["a b/c"]);
        let t = s.next_task("r", Some("ds")).unwrap().unwrap();
        assert_eq!(t.edited_media_url, "/api/media/a%20b%2Fc/edited");
        assert_eq!(t.rubric[2].key, "temporal_consistency");
    }

    #[test]
    fn unknown_video_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = open(dir.path(), &["a"]);
        assert_eq!(s.submit_at("r", "zz", [5, 5, 5], "t").unwrap_err().code(), "UNKNOWN_VIDEO");
        assert!(s.snapshot().is_empty());
    }

    #[test]
    fn identical_resubmission_is_a_no_op() {
        let dir = tempfile::tempdir().unwrap();
        let s = open(dir.path(), &["a"]);
        let first = s.submit_at("r", "a", [6, 7, 8], "t1").unwrap();
        let log = fs::read(s.log_path()).unwrap();
        let again = s.submit_at("r", "a", [6, 7, 8], "t2").unwrap();
        assert_eq!(first, again);
        assert_eq!(fs::read(s.log_path()).unwrap(), log);
    }

    #[test]
    fn truncated_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        {
            let s = open(dir.path(), &["a", "b"]);
            s.submit_at("r", "a", [4, 4, 4], "t").unwrap();
        }
        let log = dir.path().join(LOG_FILE);
        let good = fs::read_to_string(&log).unwrap();
        fs::write(&log, format!("{good}{{\"video_id\":\"b\",\"rat")).unwrap();
        let s = open(dir.path(), &["a", "b"]);
        assert_eq!(s.snapshot().len(), 1);
        assert_eq!(fs::read_to_string(&log).unwrap(), good);
        s.submit_at("r", "b", [5, 5, 5], "t").unwrap();
        assert_eq!(open(dir.path(), &["a", "b"]).snapshot().len(), 2);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(LOG_FILE), "not json\n").unwrap();
        let e = RatingStore::open(dir.path(), manifest(&["a"])).err().unwrap();
        assert_eq!(e.code(), "CORRUPT_STORE");
    }
}
