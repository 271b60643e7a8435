//! Client for models served behind an HTTP inference endpoint.
//!
//! Wire format: `POST {base_url}/v1/{kind}` with a JSON body, where `kind`
//! is one of `captioner`, `text_embedder`, `object_extractor`, `detector`,
//! `frame_embedder`. Images travel as base64-encoded PNG.
//!
//! | kind               | request                         | response                                   |
//! |--------------------|---------------------------------|--------------------------------------------|
//! | `captioner`        | `{image}`                       | `{caption}`                                |
//! | `text_embedder`    | `{text}`                        | `{vector: [f64]}`                          |
//! | `object_extractor` | `{prompt, edit_prompt}`         | `{object}`                                 |
//! | `detector`         | `{image, query}`                | `{detections: [{label, confidence, box}]}` |
//! | `frame_embedder`   | `{image}`                       | `{vector: [f64]}`                          |

use std::io::{self, Cursor};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use image::ImageFormat;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    require_non_empty, BackendError, BackendId, BackendKind, Captioner, Detection, Detector,
    Embedding, FrameEmbedder, ObjectExtractor, TextEmbedder,
};
use crate::model::Frame;

/// Instruction sent to an instruction-tuned language model for primary
/// object extraction. `{prompt}` is replaced by the edit prompt.
pub const OBJECT_PROMPT_TEMPLATE: &str = "Identify the single primary object being edited in this instruction; answer with a noun phrase only: {prompt}";

#[derive(Debug, Clone, Copy)]
pub struct EndpointOptions {
    pub timeout: Duration,
    /// Attempts after the first one.
    pub retries: u32,
    /// Delay before the first retry; doubles each time.
    pub backoff: Duration,
}

impl Default for EndpointOptions {
    fn default() -> Self {
        EndpointOptions {
            timeout: Duration::from_secs(30),
            retries: 2,
            backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Debug)]
pub struct EndpointClient {
    base_url: String,
    agent: ureq::Agent,
    options: EndpointOptions,
}

enum Attempt {
    Retry(BackendError),
    Fatal(BackendError),
}

impl EndpointClient {
    pub fn new(base_url: impl Into<String>, options: EndpointOptions) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(options.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        EndpointClient {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            agent,
            options,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn post(&self, kind: BackendKind, body: &Value) -> Result<Value, BackendError> {
        let url = format!("{}/v1/{}", self.base_url, kind.as_str());
        let mut delay = self.options.backoff;
        let mut attempt = 0;
        loop {
            match self.try_once(&url, body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) if attempt >= self.options.retries => return Err(e),
                Err(Attempt::Retry(_)) => {
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }

    fn try_once(&self, url: &str, body: &Value) -> Result<Value, Attempt> {
        let mut resp = self
            .agent
            .post(url)
            .send_json(body)
            .map_err(|e| classify(url, e))?;
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err(Attempt::Retry(BackendError::InferenceFailed(format!(
                "{url} returned {status}"
            ))));
        }
        if status >= 400 {
            return Err(Attempt::Fatal(BackendError::InferenceFailed(format!(
                "{url} rejected request with {status}"
            ))));
        }
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| classify(url, e))
    }
}

fn classify(url: &str, err: ureq::Error) -> Attempt {
    use io::ErrorKind::*;
    match &err {
        ureq::Error::ConnectionFailed | ureq::Error::HostNotFound | ureq::Error::BadUri(_) => {
            Attempt::Retry(BackendError::Unavailable(format!("{url}: {err}")))
        }
        ureq::Error::Io(io)
            if matches!(
                io.kind(),
                ConnectionRefused | ConnectionReset | ConnectionAborted | NotConnected | AddrNotAvailable
            ) =>
        {
            Attempt::Retry(BackendError::Unavailable(format!("{url}: {err}")))
        }
        ureq::Error::Json(_) => {
            Attempt::Fatal(BackendError::InferenceFailed(format!("{url}: malformed response: {err}")))
        }
        _ => Attempt::Retry(BackendError::InferenceFailed(format!("{url}: {err}"))),
    }
}

fn png_base64(frame: &Frame) -> Result<String, BackendError> {
    let mut buf = Cursor::new(Vec::new());
    frame
        .image
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| BackendError::InvalidInput(format!("cannot encode frame: {e}")))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(buf.into_inner()))
}

fn field<T: for<'de> Deserialize<'de>>(v: Value, name: &str) -> Result<T, BackendError> {
    let inner = v
        .get(name)
        .cloned()
        .ok_or_else(|| BackendError::InferenceFailed(format!("response lacks `{name}`")))?;
    serde_json::from_value(inner)
        .map_err(|e| BackendError::InferenceFailed(format!("bad `{name}` field: {e}")))
}

/// One capability served by an endpoint. The same client may back several
/// capabilities; the id carries the kind.
#[derive(Debug, Clone)]
pub struct EndpointBackend {
    id: BackendId,
    client: Arc<EndpointClient>,
}

impl EndpointBackend {
    pub fn new(
        kind: BackendKind,
        name: impl Into<String>,
        version: impl Into<String>,
        client: Arc<EndpointClient>,
    ) -> Self {
        EndpointBackend {
            id: BackendId::new(kind, name, version),
            client,
        }
    }

    fn call(&self, body: Value) -> Result<Value, BackendError> {
        self.client.post(self.id.kind, &body)
    }
}

impl Captioner for EndpointBackend {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn caption(&self, frame: &Frame) -> Result<String, BackendError> {
        let caption: String = field(self.call(json!({ "image": png_base64(frame)? }))?, "caption")?;
        if caption.trim().is_empty() {
            return Err(BackendError::InferenceFailed("empty caption".into()));
        }
        Ok(caption)
    }
}

impl TextEmbedder for EndpointBackend {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, BackendError> {
        require_non_empty("text", text)?;
        Embedding::new(field(self.call(json!({ "text": text }))?, "vector")?)
    }
}

impl ObjectExtractor for EndpointBackend {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn extract_primary_object(&self, edit_prompt: &str) -> Result<String, BackendError> {
        require_non_empty("edit prompt", edit_prompt)?;
        let prompt = OBJECT_PROMPT_TEMPLATE.replace("{prompt}", edit_prompt);
        let object: String = field(
            self.call(json!({ "prompt": prompt, "edit_prompt": edit_prompt }))?,
            "object",
        )?;
        let object = object
            .trim()
            .trim_matches(|c: char| c.is_ascii_punctuation())
            .trim()
            .to_lowercase();
        if object.is_empty() {
            Err(BackendError::ExtractionEmpty)
        } else {
            Ok(object)
        }
    }
}

impl Detector for EndpointBackend {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn detect(&self, frame: &Frame, query: &str) -> Result<Vec<Detection>, BackendError> {
        require_non_empty("query", query)?;
        let dets: Vec<Detection> = field(
            self.call(json!({ "image": png_base64(frame)?, "query": query }))?,
            "detections",
        )?;
        for d in &dets {
            d.validate()?;
        }
        Ok(dets)
    }
}

impl FrameEmbedder for EndpointBackend {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn embed_frame(&self, frame: &Frame) -> Result<Embedding, BackendError> {
        Embedding::new(field(self.call(json!({ "image": png_base64(frame)? }))?, "vector")?)
    }
}
