//! Comma-separated files exchanged between pipeline steps, and atomic
//! file output.
//!
//! Floats are written in shortest round-trip form, so a value read back
//! is bit-identical to the one written.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::StageScores;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TabularError> {
    let io_err = |source| TabularError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// One line of the stage-score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub video_id: String,
    pub model_name: String,
    pub s_similarity: f64,
    pub s_object: f64,
    pub s_temporal: f64,
    pub n_frames: usize,
    pub stride: usize,
}

impl ScoreRow {
    pub fn new(scores: &StageScores, model_name: &str, stride: usize) -> Self {
        ScoreRow {
            video_id: scores.video_id.clone(),
            model_name: model_name.to_owned(),
            s_similarity: scores.s_similarity,
            s_object: scores.s_object,
            s_temporal: scores.s_temporal,
            n_frames: scores.n_frames,
            stride,
        }
    }

    pub fn scores(&self) -> StageScores {
        StageScores {
            video_id: self.video_id.clone(),
            s_similarity: self.s_similarity,
            s_object: self.s_object,
            s_temporal: self.s_temporal,
            n_frames: self.n_frames,
        }
    }
}

/// One line of the human-score export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanScoreRow {
    pub video_id: String,
    pub mean_normalized: f64,
    pub n_raters: usize,
}

fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, TabularError> {
    let csv_err = |source| TabularError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err)
}

pub const SCORE_HEADER: [&str; 7] = [
    "video_id",
    "model_name",
    "s_similarity",
    "s_object",
    "s_temporal",
    "n_frames",
    "stride",
];

pub const HUMAN_HEADER: [&str; 3] = ["video_id", "mean_normalized", "n_raters"];

pub fn scores_csv(rows: &[ScoreRow]) -> Vec<u8> {
    to_csv(rows, &SCORE_HEADER)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>, TabularError> {
    read_csv(path)
}

/// Header-only when `rows` is empty.
pub fn human_scores_csv(rows: &[HumanScoreRow]) -> Vec<u8> {
    to_csv(rows, &HUMAN_HEADER)
}

pub fn read_human_scores(path: &Path) -> Result<Vec<HumanScoreRow>, TabularError> {
    read_csv(path)
}

/// Label column followed by numeric metric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFile {
    pub labels: Vec<String>,
    pub columns: Vec<(String, Vec<f64>)>,
}

/// Reads a metrics file: the first column holds item ids, every other
/// column one metric.
pub fn read_metrics(path: &Path) -> Result<MetricsFile, TabularError> {
    let csv_err = |source| TabularError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let format_err = |message: String| TabularError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.len() < 2 {
        return Err(format_err("need an id column and at least one metric column".into()));
    }
    let mut labels = Vec::new();
    let mut columns: Vec<(String, Vec<f64>)> =
        header.iter().skip(1).map(|h| (h.to_owned(), Vec::new())).collect();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        labels.push(rec[0].to_owned());
        for (c, (name, values)) in columns.iter_mut().enumerate() {
            let cell = rec[c + 1].trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| format_err(format!("row {}: `{cell}` in `{name}` is not a number", line + 2)))?;
            values.push(v);
        }
    }
    Ok(MetricsFile { labels, columns })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_rows_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![ScoreRow {
            video_id: "v1".into(),
            model_name: "TokenFlow".into(),
            s_similarity: 0.1 + 0.2,
            s_object: 1.0 / 3.0,
            s_temporal: 0.9999999999999999,
            n_frames: 16,
            stride: 2,
        }];
        let p = dir.path().join("scores.csv");
        write_atomic(&p, &scores_csv(&rows)).unwrap();
        assert_eq!(read_scores(&p).unwrap(), rows);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("video_id,model_name,s_similarity,s_object,s_temporal,n_frames,stride\n"));
    }

    #[test]
    fn empty_human_export_is_header_only() {
        assert_eq!(human_scores_csv(&[]), b"video_id,mean_normalized,n_raters\n");
    }

    #[test]
    fn metrics_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "video_id,a,b\nx,1,2\ny,3,4.5\n").unwrap();
        let m = read_metrics(&p).unwrap();
        assert_eq!(m.labels, ["x", "y"]);
        assert_eq!(m.columns[1], ("b".to_string(), vec![2.0, 4.5]));
        fs::write(&p, "video_id,a\nx,oops\n").unwrap();
        assert!(matches!(read_metrics(&p), Err(TabularError::Format { .. })));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
