//! The three per-video stage scores.
//!
//! - semantic: mean over frames of `clamp(cos(embed(caption(frame)), embed(prompt)), 0, 1)`
//! - object: mean over frames of the best matching detection confidence for
//!   the prompt's primary object (0 when absent)
//! - temporal: mean over consecutive frame pairs of `clamp(cos(F_i, F_i+1), 0, 1)`
//!
//! Means are exactly rounded, so semantic and object scores do not depend
//! on frame order and temporal scores are unchanged by reversal.

use std::fmt;

use thiserror::Error;

use crate::backends::{
    heuristic_primary_object, BackendError, BackendId, BackendSet, Captioner, Detection, Detector,
    Embedding, FrameEmbedder, ObjectExtractor, TextEmbedder,
};
use crate::ingestion::{extract_frames, ArtifactCache, CacheError, CacheKey, IngestError};
use crate::model::{Frame, FrameSequence, StageScores, VideoEntry};
use crate::numeric::exact_mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingestion,
    Semantic,
    Object,
    Temporal,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingestion => "ingestion",
            Stage::Semantic => "semantic",
            Stage::Object => "object",
            Stage::Temporal => "temporal",
        })
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("{stage} stage{}: {source}", frame.map(|i| format!(" (frame {i})")).unwrap_or_default())]
    Backend {
        stage: Stage,
        frame: Option<u64>,
        #[source]
        source: BackendError,
    },
    #[error("{stage} stage: cache failure: {source}")]
    Cache {
        stage: Stage,
        #[source]
        source: CacheError,
    },
    #[error("temporal stage needs at least 2 frames, got {n}")]
    TooFewFrames { n: usize },
    #[error("{stage} stage needs at least 1 frame")]
    EmptySequence { stage: Stage },
    #[error("no primary object could be extracted from `{prompt}`")]
    ObjectQueryFailed { prompt: String },
    #[error("ingestion: {0}")]
    Ingest(#[from] IngestError),
}

impl StageError {
    pub fn code(&self) -> &'static str {
        match self {
            StageError::Backend { source, .. } => source.code(),
            StageError::Cache { .. } => "CACHE_IO",
            StageError::TooFewFrames { .. } => "TOO_FEW_FRAMES",
            StageError::EmptySequence { .. } => "EMPTY_VIDEO",
            StageError::ObjectQueryFailed { .. } => "OBJECT_QUERY_FAILED",
            StageError::Ingest(e) => e.code(),
        }
    }

    pub fn stage(&self) -> Stage {
        match self {
            StageError::Backend { stage, .. }
            | StageError::Cache { stage, .. }
            | StageError::EmptySequence { stage } => *stage,
            StageError::TooFewFrames { .. } => Stage::Temporal,
            StageError::ObjectQueryFailed { .. } => Stage::Object,
            StageError::Ingest(_) => Stage::Ingestion,
        }
    }
}

fn backend_err(stage: Stage, frame: Option<u64>) -> impl FnOnce(BackendError) -> StageError {
    move |source| StageError::Backend {
        stage,
        frame,
        source,
    }
}

fn unit_cosine(a: &Embedding, b: &Embedding) -> Result<f64, BackendError> {
    Ok(a.cosine(b)?.clamp(0.0, 1.0))
}

/// Per-frame artifacts, optionally read from and written to a cache.
struct FrameArtifacts<'a> {
    cache: Option<&'a ArtifactCache>,
    stage: Stage,
}

impl FrameArtifacts<'_> {
    fn get_or_compute<T>(
        &self,
        frame: &Frame,
        kind: &str,
        backend: &BackendId,
        encode: impl Fn(&T) -> Vec<u8>,
        decode: impl Fn(&[u8]) -> Option<T>,
        compute: impl FnOnce() -> Result<T, BackendError>,
    ) -> Result<T, StageError> {
        let Some(cache) = self.cache else {
            return compute().map_err(backend_err(self.stage, Some(frame.index)));
        };
        let key = CacheKey::new(frame.content_hash, kind, backend.to_string());
        let cache_err = |source| StageError::Cache {
            stage: self.stage,
            source,
        };
        if let Some(bytes) = cache.get(&key).map_err(cache_err)? {
            if let Some(v) = decode(&bytes) {
                return Ok(v);
            }
        }
        let v = compute().map_err(backend_err(self.stage, Some(frame.index)))?;
        cache.put(&key, &encode(&v)).map_err(cache_err)?;
        Ok(v)
    }
}

fn encode_json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("artifact serializes")
}

fn decode_json<T: serde::de::DeserializeOwned>(b: &[u8]) -> Option<T> {
    serde_json::from_slice(b).ok()
}

pub fn semantic_score(
    seq: &FrameSequence,
    prompt: &str,
    captioner: &dyn Captioner,
    text_embedder: &dyn TextEmbedder,
) -> Result<f64, StageError> {
    semantic_score_cached(seq, prompt, captioner, text_embedder, None)
}

pub fn semantic_score_cached(
    seq: &FrameSequence,
    prompt: &str,
    captioner: &dyn Captioner,
    text_embedder: &dyn TextEmbedder,
    cache: Option<&ArtifactCache>,
) -> Result<f64, StageError> {
    const STAGE: Stage = Stage::Semantic;
    if seq.is_empty() {
        return Err(StageError::EmptySequence { stage: STAGE });
    }
    let artifacts = FrameArtifacts {
        cache,
        stage: STAGE,
    };
    let prompt_vec = text_embedder
        .embed_text(prompt)
        .map_err(backend_err(STAGE, None))?;
    let mut sims = Vec::with_capacity(seq.len());
    for frame in &seq.frames {
        let caption = artifacts.get_or_compute(
            frame,
            "caption",
            captioner.id(),
            |c: &String| c.as_bytes().to_vec(),
            |b| String::from_utf8(b.to_vec()).ok(),
            || captioner.caption(frame),
        )?;
        let at = backend_err(STAGE, Some(frame.index));
        let caption_vec = text_embedder.embed_text(&caption).map_err(at)?;
        let at = backend_err(STAGE, Some(frame.index));
        sims.push(unit_cosine(&caption_vec, &prompt_vec).map_err(at)?);
    }
    Ok(exact_mean(sims).expect("non-empty"))
}

/// Asks the extractor for the prompt's primary object, falling back to the
/// rule-based heuristic when the extractor comes back empty.
pub fn resolve_primary_object(
    prompt: &str,
    extractor: &dyn ObjectExtractor,
) -> Result<String, StageError> {
    match extractor.extract_primary_object(prompt) {
        Ok(obj) => Ok(obj),
        Err(BackendError::ExtractionEmpty) => {
            heuristic_primary_object(prompt).ok_or_else(|| StageError::ObjectQueryFailed {
                prompt: prompt.to_owned(),
            })
        }
        Err(e) => Err(backend_err(Stage::Object, None)(e)),
    }
}

/// Case-insensitive substring match in either direction.
pub fn label_matches(label: &str, query: &str) -> bool {
    let label = label.to_lowercase();
    let query = query.to_lowercase();
    !label.is_empty() && (label.contains(&query) || query.contains(&label))
}

/// Highest confidence among detections whose label matches `query`.
pub fn frame_confidence(detections: &[Detection], query: &str) -> f64 {
    detections
        .iter()
        .filter(|d| label_matches(&d.label, query))
        .map(|d| d.confidence)
        .fold(0.0, f64::max)
}

pub fn object_score(
    seq: &FrameSequence,
    prompt: &str,
    extractor: &dyn ObjectExtractor,
    detector: &dyn Detector,
) -> Result<f64, StageError> {
    object_score_cached(seq, prompt, extractor, detector, None)
}

pub fn object_score_cached(
    seq: &FrameSequence,
    prompt: &str,
    extractor: &dyn ObjectExtractor,
    detector: &dyn Detector,
    cache: Option<&ArtifactCache>,
) -> Result<f64, StageError> {
    const STAGE: Stage = Stage::Object;
    if seq.is_empty() {
        return Err(StageError::EmptySequence { stage: STAGE });
    }
    let query = resolve_primary_object(prompt, extractor)?;
    let artifacts = FrameArtifacts {
        cache,
        stage: STAGE,
    };
    let kind = format!("detect:{query}");
    let mut confidences = Vec::with_capacity(seq.len());
    for frame in &seq.frames {
        let dets: Vec<Detection> = artifacts.get_or_compute(
            frame,
            &kind,
            detector.id(),
            encode_json,
            decode_json,
            || detector.detect(frame, &query),
        )?;
        confidences.push(frame_confidence(&dets, &query));
    }
    Ok(exact_mean(confidences).expect("non-empty"))
}

pub fn temporal_score(seq: &FrameSequence, frame_embedder: &dyn FrameEmbedder) -> Result<f64, StageError> {
    temporal_score_cached(seq, frame_embedder, None)
}

pub fn temporal_score_cached(
    seq: &FrameSequence,
    frame_embedder: &dyn FrameEmbedder,
    cache: Option<&ArtifactCache>,
) -> Result<f64, StageError> {
    const STAGE: Stage = Stage::Temporal;
    if seq.len() < 2 {
        return Err(StageError::TooFewFrames { n: seq.len() });
    }
    let artifacts = FrameArtifacts {
        cache,
        stage: STAGE,
    };
    let embeddings = seq
        .frames
        .iter()
        .map(|frame| {
            artifacts.get_or_compute(
                frame,
                "frame_embedding",
                frame_embedder.id(),
                Embedding::to_le_bytes,
                Embedding::from_le_bytes,
                || frame_embedder.embed_frame(frame),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut sims = Vec::with_capacity(seq.len() - 1);
    for (pair, frame) in embeddings.windows(2).zip(&seq.frames[1..]) {
        let at = backend_err(STAGE, Some(frame.index));
        sims.push(unit_cosine(&pair[0], &pair[1]).map_err(at)?);
    }
    Ok(exact_mean(sims).expect("at least one pair"))
}

/// Every stage failure of one video.
#[derive(Debug, Error)]
#[error("video `{video_id}`: {}", failures.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
pub struct VideoScoreError {
    pub video_id: String,
    pub failures: Vec<StageError>,
}

impl VideoScoreError {
    pub fn is_backend_unavailable(&self) -> bool {
        self.failures.iter().any(|f| f.code() == "BACKEND_UNAVAILABLE")
    }
}

#[derive(Debug, Clone)]
pub struct ScoringOptions<'a> {
    pub stride: usize,
    pub cache: Option<&'a ArtifactCache>,
}

impl Default for ScoringOptions<'_> {
    fn default() -> Self {
        ScoringOptions {
            stride: 1,
            cache: None,
        }
    }
}

/// Scores an already decoded sequence with all three stages.
pub fn score_sequence(
    seq: &FrameSequence,
    prompt: &str,
    backends: &BackendSet,
    cache: Option<&ArtifactCache>,
) -> Result<StageScores, VideoScoreError> {
    let semantic = semantic_score_cached(
        seq,
        prompt,
        backends.captioner.as_ref(),
        backends.text_embedder.as_ref(),
        cache,
    );
    let object = object_score_cached(
        seq,
        prompt,
        backends.object_extractor.as_ref(),
        backends.detector.as_ref(),
        cache,
    );
    let temporal = temporal_score_cached(seq, backends.frame_embedder.as_ref(), cache);
    match (semantic, object, temporal) {
        (Ok(s_similarity), Ok(s_object), Ok(s_temporal)) => Ok(StageScores {
            video_id: seq.video_id.clone(),
            s_similarity,
            s_object,
            s_temporal,
            n_frames: seq.len(),
        }),
        (a, b, c) => Err(VideoScoreError {
            video_id: seq.video_id.clone(),
            failures: [a.err(), b.err(), c.err()].into_iter().flatten().collect(),
        }),
    }
}

/// Decodes the edited video and scores it.
pub fn score_video(
    entry: &VideoEntry,
    backends: &BackendSet,
    options: &ScoringOptions<'_>,
) -> Result<StageScores, VideoScoreError> {
    let seq = extract_frames(entry, options.stride).map_err(|e| VideoScoreError {
        video_id: entry.video_id.clone(),
        failures: vec![e.into()],
    })?;
    score_sequence(&seq, &entry.edit_prompt, backends, options.cache)
}
