//! Model capabilities the scoring stages depend on.
//!
//! Each capability is a trait with a deterministic mock and an HTTP client
//! for an externally hosted inference endpoint. A [`BackendSet`] bundles
//! one provider per capability and is built from a [`BackendsConfig`].

mod config;
mod endpoint;
mod mock;
mod objects;

pub use config::{BackendSpec, BackendsConfig, ConfigError, MockOptions, SharedEndpoint};
pub use endpoint::{EndpointBackend, EndpointClient, EndpointOptions, OBJECT_PROMPT_TEMPLATE};
pub use mock::{BagOfTokensEmbedder, GridFrameEmbedder, MockCaptioner, MockDetector};
pub use objects::{heuristic_primary_object, HeuristicObjectExtractor};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Captioner,
    TextEmbedder,
    ObjectExtractor,
    Detector,
    FrameEmbedder,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Captioner => "captioner",
            BackendKind::TextEmbedder => "text_embedder",
            BackendKind::ObjectExtractor => "object_extractor",
            BackendKind::Detector => "detector",
            BackendKind::FrameEmbedder => "frame_embedder",
        }
    }
}

/// `(kind, name, version)` identifies a provider's behavior; cached
/// artifacts are keyed by it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BackendId {
    pub kind: BackendKind,
    pub name: String,
    pub version: String,
}

impl BackendId {
    pub fn new(kind: BackendKind, name: impl Into<String>, version: impl Into<String>) -> Self {
        BackendId {
            kind,
            name: name.into(),
            version: version.into(),
        }
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}@{}", self.kind.as_str(), self.name, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("inference failed: {0}")]
    InferenceFailed(String),
    #[error("object extraction returned nothing usable")]
    ExtractionEmpty,
    #[error("invalid backend input: {0}")]
    InvalidInput(String),
}

impl BackendError {
    pub fn code(&self) -> &'static str {
        match self {
            BackendError::Unavailable(_) => "BACKEND_UNAVAILABLE",
            BackendError::InferenceFailed(_) => "INFERENCE_FAILED",
            BackendError::ExtractionEmpty => "EXTRACTION_EMPTY",
            BackendError::InvalidInput(_) => "INVALID_INPUT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
}

impl Embedding {
    pub fn new(vector: Vec<f64>) -> Result<Self, BackendError> {
        if vector.is_empty() {
            return Err(BackendError::InferenceFailed("empty embedding".into()));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::InferenceFailed(
                "non-finite embedding entry".into(),
            ));
        }
        Ok(Embedding { vector })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    /// Cosine similarity; zero when either vector has zero norm.
    pub fn cosine(&self, other: &Embedding) -> Result<f64, BackendError> {
        if self.dim() != other.dim() {
            return Err(BackendError::InferenceFailed(format!(
                "embedding dimensions differ: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(cosine(&self.vector, &other.vector))
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.vector.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.is_empty() || !bytes.len().is_multiple_of(8) {
            return None;
        }
        let vector = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Embedding::new(vector).ok()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na2: f64 = a.iter().map(|x| x * x).sum();
    let nb2: f64 = b.iter().map(|x| x * x).sum();
    if na2 == 0.0 || nb2 == 0.0 {
        return 0.0;
    }
    // sqrt of the product keeps cos(v, v) == 1 exactly
    dot / (na2 * nb2).sqrt()
}

/// Normalized box `(x0, y0, x1, y1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

impl Detection {
    pub fn new(label: impl Into<String>, confidence: f64, bbox: [f64; 4]) -> Result<Self, BackendError> {
        let d = Detection {
            label: label.into(),
            confidence,
            bbox,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let [x0, y0, x1, y1] = self.bbox;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(unit(self.confidence) && [x0, y0, x1, y1].into_iter().all(unit) && x0 < x1 && y0 < y1) {
            return Err(BackendError::InferenceFailed(format!(
                "malformed detection {self:?}"
            )));
        }
        Ok(())
    }
}

pub trait Captioner: Send + Sync {
    fn id(&self) -> &BackendId;
    fn caption(&self, frame: &Frame) -> Result<String, BackendError>;
}

pub trait TextEmbedder: Send + Sync {
    fn id(&self) -> &BackendId;
    fn embed_text(&self, text: &str) -> Result<Embedding, BackendError>;
}

pub trait ObjectExtractor: Send + Sync {
    fn id(&self) -> &BackendId;
    /// Lowercased, trimmed noun phrase naming what the edit targets.
    fn extract_primary_object(&self, edit_prompt: &str) -> Result<String, BackendError>;
}

pub trait Detector: Send + Sync {
    fn id(&self) -> &BackendId;
    /// An empty list means the object was not found.
    fn detect(&self, frame: &Frame, query: &str) -> Result<Vec<Detection>, BackendError>;
}

pub trait FrameEmbedder: Send + Sync {
    fn id(&self) -> &BackendId;
    fn embed_frame(&self, frame: &Frame) -> Result<Embedding, BackendError>;
}

pub(crate) fn require_non_empty(what: &str, text: &str) -> Result<(), BackendError> {
    if text.trim().is_empty() {
        Err(BackendError::InvalidInput(format!("{what} must be non-empty")))
    } else {
        Ok(())
    }
}

/// One provider per capability, owned by a single worker.
pub struct BackendSet {
    pub captioner: Box<dyn Captioner>,
    pub text_embedder: Box<dyn TextEmbedder>,
    pub object_extractor: Box<dyn ObjectExtractor>,
    pub detector: Box<dyn Detector>,
    pub frame_embedder: Box<dyn FrameEmbedder>,
}

impl BackendSet {
    /// All-mock set with default settings.
    pub fn mock(seed: u64) -> Self {
        BackendSet {
            captioner: Box::new(MockCaptioner::default()),
            text_embedder: Box::new(BagOfTokensEmbedder::new(seed)),
            object_extractor: Box::new(HeuristicObjectExtractor::default()),
            detector: Box::new(MockDetector::new(seed)),
            frame_embedder: Box::new(GridFrameEmbedder::default()),
        }
    }

    pub fn ids(&self) -> Vec<BackendId> {
        vec![
            self.captioner.id().clone(),
            self.text_embedder.id().clone(),
            self.object_extractor.id().clone(),
            self.detector.id().clone(),
            self.frame_embedder.id().clone(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
        let v = [0.3, 0.7, 0.11, 0.05];
        assert_eq!(cosine(&v, &v), 1.0);
    }

    #[test]
    fn embedding_rejects_non_finite() {
        assert!(Embedding::new(vec![1.0, f64::NAN]).is_err());
        assert!(Embedding::new(vec![]).is_err());
    }

    #[test]
    fn embedding_bytes_round_trip() {
        let e = Embedding::new(vec![0.1, -2.5, 1e-300]).unwrap();
        assert_eq!(Embedding::from_le_bytes(&e.to_le_bytes()).unwrap(), e);
        assert!(Embedding::from_le_bytes(&[1, 2, 3]).is_none());
    }

    #[test]
    fn detection_validation() {
        assert!(Detection::new("car", 0.5, [0.1, 0.1, 0.9, 0.9]).is_ok());
        assert!(Detection::new("car", 1.5, [0.1, 0.1, 0.9, 0.9]).is_err());
        assert!(Detection::new("car", 0.5, [0.9, 0.1, 0.1, 0.9]).is_err());
    }

    #[test]
    fn backend_id_display() {
        let id = BackendId::new(BackendKind::FrameEmbedder, "vit", "b16");
        assert_eq!(id.to_string(), "frame_embedder:vit@b16");
    }
}
