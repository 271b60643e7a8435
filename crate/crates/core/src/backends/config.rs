use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    BackendKind, BackendSet, BagOfTokensEmbedder, EndpointBackend, EndpointClient,
    EndpointOptions, GridFrameEmbedder, HeuristicObjectExtractor, MockCaptioner, MockDetector,
};
use crate::model::ContentHash;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read backend config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse backend config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{kind} endpoint backend has no url and no shared endpoint is configured")]
    MissingUrl { kind: &'static str },
    #[error("bad content hash `{0}` in fixtures (expected 64 hex digits)")]
    BadHash(String),
}

/// Options understood by the mock of each capability; fields that do not
/// apply to a capability are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockOptions {
    /// Text embedder token space size.
    pub dim: Option<usize>,
    /// Frame embedder grid size.
    pub grid: Option<u32>,
    /// Detector: invent seeded confidences for frames without a fixture.
    pub synthesize: bool,
    /// Captioner: content hash -> caption.
    pub captions: BTreeMap<String, String>,
    /// Text embedder: exact text -> vector.
    pub text_vectors: BTreeMap<String, Vec<f64>>,
    /// Detector: content hash -> confidence.
    pub confidences: BTreeMap<String, f64>,
    /// Frame embedder: content hash -> vector.
    pub frame_vectors: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackendSpec {
    Mock(MockOptions),
    Endpoint {
        name: String,
        #[serde(default = "default_version")]
        version: String,
        #[serde(default)]
        url: Option<String>,
    },
}

fn default_version() -> String {
    "unversioned".into()
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Mock(MockOptions::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SharedEndpoint {
    pub url: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for SharedEndpoint {
    fn default() -> Self {
        let d = EndpointOptions::default();
        SharedEndpoint {
            url: None,
            timeout_ms: d.timeout.as_millis() as u64,
            retries: d.retries,
            backoff_ms: d.backoff.as_millis() as u64,
        }
    }
}

/// Backend selection plus run defaults, as read from a JSON config file.
/// Run defaults are overridden by command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendsConfig {
    pub seed: Option<u64>,
    pub stride: Option<usize>,
    pub workers: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub endpoint: SharedEndpoint,
    pub captioner: BackendSpec,
    pub text_embedder: BackendSpec,
    pub object_extractor: BackendSpec,
    pub detector: BackendSpec,
    pub frame_embedder: BackendSpec,
}

fn parse_hash(hex_str: &str) -> Result<ContentHash, ConfigError> {
    let bytes = hex::decode(hex_str).map_err(|_| ConfigError::BadHash(hex_str.into()))?;
    let arr: [u8; 32] = bytes
        .try_into()
        .map_err(|_| ConfigError::BadHash(hex_str.into()))?;
    Ok(ContentHash(arr))
}

impl BackendsConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    fn endpoint_options(&self) -> EndpointOptions {
        EndpointOptions {
            timeout: Duration::from_millis(self.endpoint.timeout_ms),
            retries: self.endpoint.retries,
            backoff: Duration::from_millis(self.endpoint.backoff_ms),
        }
    }

    fn endpoint(
        &self,
        kind: BackendKind,
        name: &str,
        version: &str,
        url: &Option<String>,
    ) -> Result<EndpointBackend, ConfigError> {
        let url = url
            .as_ref()
            .or(self.endpoint.url.as_ref())
            .ok_or(ConfigError::MissingUrl {
                kind: kind.as_str(),
            })?;
        let client = Arc::new(EndpointClient::new(url.clone(), self.endpoint_options()));
        Ok(EndpointBackend::new(kind, name, version, client))
    }

    /// Fresh backend instances for one worker.
    pub fn build(&self, seed: u64) -> Result<BackendSet, ConfigError> {
        let mut set = BackendSet::mock(seed);

        set.captioner = match &self.captioner {
            BackendSpec::Mock(o) => {
                let mut c = MockCaptioner::default();
                for (h, cap) in &o.captions {
                    c = c.with_fixture(parse_hash(h)?, cap.clone());
                }
                Box::new(c)
            }
            BackendSpec::Endpoint { name, version, url } => {
                Box::new(self.endpoint(BackendKind::Captioner, name, version, url)?)
            }
        };

        set.text_embedder = match &self.text_embedder {
            BackendSpec::Mock(o) => {
                let mut e = match o.dim {
                    Some(d) => BagOfTokensEmbedder::with_dim(seed, d.max(1)),
                    None => BagOfTokensEmbedder::new(seed),
                };
                for (t, v) in &o.text_vectors {
                    e = e.with_fixture(t.clone(), v.clone());
                }
                Box::new(e)
            }
            BackendSpec::Endpoint { name, version, url } => {
                Box::new(self.endpoint(BackendKind::TextEmbedder, name, version, url)?)
            }
        };

        set.object_extractor = match &self.object_extractor {
            BackendSpec::Mock(_) => Box::new(HeuristicObjectExtractor::default()),
            BackendSpec::Endpoint { name, version, url } => {
                Box::new(self.endpoint(BackendKind::ObjectExtractor, name, version, url)?)
            }
        };

        set.detector = match &self.detector {
            BackendSpec::Mock(o) => {
                let mut d = if o.synthesize {
                    MockDetector::synthesizing(seed)
                } else {
                    MockDetector::new(seed)
                };
                for (h, c) in &o.confidences {
                    d = d.with_fixture(parse_hash(h)?, *c);
                }
                Box::new(d)
            }
            BackendSpec::Endpoint { name, version, url } => {
                Box::new(self.endpoint(BackendKind::Detector, name, version, url)?)
            }
        };

        set.frame_embedder = match &self.frame_embedder {
            BackendSpec::Mock(o) => {
                let mut e = GridFrameEmbedder::new(o.grid.unwrap_or(super::mock::DEFAULT_GRID).max(1));
                for (h, v) in &o.frame_vectors {
                    e = e.with_fixture(parse_hash(h)?, v.clone());
                }
                Box::new(e)
            }
            BackendSpec::Endpoint { name, version, url } => {
                Box::new(self.endpoint(BackendKind::FrameEmbedder, name, version, url)?)
            }
        };

        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_mock() {
        let cfg: BackendsConfig = serde_json::from_str("{}").unwrap();
        let set = cfg.build(0).unwrap();
        assert_eq!(set.captioner.id().name, "mock-captioner");
        assert_eq!(set.detector.id().name, "mock-detector");
    }

    #[test]
    fn parses_endpoint_and_mock_options() {
        let cfg: BackendsConfig = serde_json::from_str(
            r#"{
                "seed": 9,
                "endpoint": {"url": "http://127.0.0.1:1", "retries": 0},
                "captioner": {"type": "endpoint", "name": "paligemma", "version": "3b"},
                "detector": {"type": "mock", "synthesize": true}
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(9));
        let set = cfg.build(9).unwrap();
        assert_eq!(set.captioner.id().to_string(), "captioner:paligemma@3b");
        assert_eq!(set.detector.id().version, "s9-synth");
    }

    #[test]
    fn endpoint_without_url_is_an_error() {
        let cfg: BackendsConfig =
            serde_json::from_str(r#"{"detector": {"type": "endpoint", "name": "gdino"}}"#).unwrap();
        assert!(matches!(cfg.build(0), Err(ConfigError::MissingUrl { kind: "detector" })));
    }

    #[test]
    fn bad_fixture_hash() {
        let cfg: BackendsConfig = serde_json::from_str(
            r#"{"detector": {"type": "mock", "confidences": {"abc": 0.5}}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.build(0), Err(ConfigError::BadHash(_))));
    }
}
