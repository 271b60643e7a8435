//! Deterministic stand-ins for the model backends.
//!
//! Every output is a pure function of the input content and the seed.

use std::collections::HashMap;

use super::{
    require_non_empty, BackendError, BackendId, BackendKind, Captioner, Detection, Detector,
    Embedding, FrameEmbedder, TextEmbedder,
};
use crate::model::{ContentHash, Frame};

pub const DEFAULT_TOKEN_DIM: usize = 4096;
pub const DEFAULT_GRID: u32 = 4;

fn fnv1a(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for part in parts {
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Captions each frame `object-<first 8 hex digits of its content hash>`,
/// unless a fixture caption is registered for that hash.
#[derive(Debug, Clone)]
pub struct MockCaptioner {
    id: BackendId,
    fixtures: HashMap<ContentHash, String>,
}

impl Default for MockCaptioner {
    fn default() -> Self {
        MockCaptioner {
            id: BackendId::new(BackendKind::Captioner, "mock-captioner", "1"),
            fixtures: HashMap::new(),
        }
    }
}

impl MockCaptioner {
    pub fn with_fixture(mut self, hash: ContentHash, caption: impl Into<String>) -> Self {
        self.fixtures.insert(hash, caption.into());
        self
    }
}

impl Captioner for MockCaptioner {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn caption(&self, frame: &Frame) -> Result<String, BackendError> {
        if let Some(c) = self.fixtures.get(&frame.content_hash) {
            return Ok(c.clone());
        }
        Ok(format!("object-{}", &frame.content_hash.to_hex()[..8]))
    }
}

/// Token-count vector: lowercase alphanumeric tokens hashed into `dim`
/// buckets. Exact-text fixtures take precedence.
#[derive(Debug, Clone)]
pub struct BagOfTokensEmbedder {
    id: BackendId,
    dim: usize,
    seed: u64,
    fixtures: HashMap<String, Vec<f64>>,
}

impl BagOfTokensEmbedder {
    pub fn new(seed: u64) -> Self {
        Self::with_dim(seed, DEFAULT_TOKEN_DIM)
    }

    pub fn with_dim(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "token space must be non-empty");
        BagOfTokensEmbedder {
            id: BackendId::new(
                BackendKind::TextEmbedder,
                "bag-of-tokens",
                format!("d{dim}-s{seed}"),
            ),
            dim,
            seed,
            fixtures: HashMap::new(),
        }
    }

    pub fn with_fixture(mut self, text: impl Into<String>, vector: Vec<f64>) -> Self {
        self.fixtures.insert(text.into(), vector);
        self
    }

    pub fn tokens(text: &str) -> Vec<String> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect()
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(self.seed, &[token.as_bytes()]) % self.dim as u64) as usize
    }
}

impl TextEmbedder for BagOfTokensEmbedder {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn embed_text(&self, text: &str) -> Result<Embedding, BackendError> {
        require_non_empty("text", text)?;
        if let Some(v) = self.fixtures.get(text) {
            return Embedding::new(v.clone());
        }
        let mut v = vec![0.0; self.dim];
        for t in Self::tokens(text) {
            v[self.bucket(&t)] += 1.0;
        }
        Embedding::new(v)
    }
}

/// Detections from a fixture map of content hash to confidence. Unknown
/// frames yield no detection unless `synthesize` is set, in which case the
/// confidence is a seeded hash of (frame, query) in [0, 1).
#[derive(Debug, Clone)]
pub struct MockDetector {
    id: BackendId,
    seed: u64,
    fixtures: HashMap<ContentHash, f64>,
    synthesize: bool,
}

impl MockDetector {
    pub fn new(seed: u64) -> Self {
        MockDetector {
            id: BackendId::new(BackendKind::Detector, "mock-detector", format!("s{seed}")),
            seed,
            fixtures: HashMap::new(),
            synthesize: false,
        }
    }

    pub fn synthesizing(seed: u64) -> Self {
        let mut d = Self::new(seed);
        d.synthesize = true;
        d.id.version = format!("s{seed}-synth");
        d
    }

    pub fn with_fixture(mut self, hash: ContentHash, confidence: f64) -> Self {
        self.fixtures.insert(hash, confidence);
        self
    }
}

impl Detector for MockDetector {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn detect(&self, frame: &Frame, query: &str) -> Result<Vec<Detection>, BackendError> {
        require_non_empty("query", query)?;
        let confidence = match self.fixtures.get(&frame.content_hash) {
            Some(&c) => c,
            None if self.synthesize => {
                let h = fnv1a(self.seed, &[&frame.content_hash.0, query.as_bytes()]);
                (h >> 11) as f64 / (1u64 << 53) as f64
            }
            None => return Ok(Vec::new()),
        };
        Ok(vec![Detection::new(query, confidence, [0.0, 0.0, 1.0, 1.0])?])
    }
}

/// Mean RGB over a `grid x grid` tiling of the frame, scaled to [0, 1].
/// Fixture vectors override per content hash.
#[derive(Debug, Clone)]
pub struct GridFrameEmbedder {
    id: BackendId,
    grid: u32,
    fixtures: HashMap<ContentHash, Vec<f64>>,
}

impl Default for GridFrameEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_GRID)
    }
}

impl GridFrameEmbedder {
    pub fn new(grid: u32) -> Self {
        assert!(grid > 0, "grid must be positive");
        GridFrameEmbedder {
            id: BackendId::new(BackendKind::FrameEmbedder, "grid-mean", format!("g{grid}")),
            grid,
            fixtures: HashMap::new(),
        }
    }

    pub fn with_fixture(mut self, hash: ContentHash, vector: Vec<f64>) -> Self {
        self.fixtures.insert(hash, vector);
        self
    }
}

impl FrameEmbedder for GridFrameEmbedder {
    fn id(&self) -> &BackendId {
        &self.id
    }

    fn embed_frame(&self, frame: &Frame) -> Result<Embedding, BackendError> {
        if let Some(v) = self.fixtures.get(&frame.content_hash) {
            return Embedding::new(v.clone());
        }
        let g = self.grid as usize;
        let (w, h) = frame.image.dimensions();
        let mut sums = vec![0.0; g * g * 3];
        let mut counts = vec![0u32; g * g];
        for (x, y, px) in frame.image.enumerate_pixels() {
            let cx = (x as usize * g) / w as usize;
            let cy = (y as usize * g) / h as usize;
            let cell = cy * g + cx;
            counts[cell] += 1;
            for c in 0..3 {
                sums[cell * 3 + c] += f64::from(px[c]);
            }
        }
        // cells left empty by tiny frames repeat the global mean
        let total = f64::from(w * h);
        let global: Vec<f64> = (0..3)
            .map(|c| sums.iter().skip(c).step_by(3).sum::<f64>() / total)
            .collect();
        let v = (0..g * g)
            .flat_map(|cell| {
                let n = counts[cell];
                let global = &global;
                let sums = &sums;
                (0..3).map(move |c| {
                    let mean = if n == 0 {
                        global[c]
                    } else {
                        sums[cell * 3 + c] / f64::from(n)
                    };
                    mean / 255.0
                })
            })
            .collect();
        Embedding::new(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn solid(c: [u8; 3]) -> Frame {
        Frame::new(0, RgbImage::from_pixel(8, 8, Rgb(c)))
    }

    #[test]
    fn caption_is_hash_derived_and_stable() {
        let cap = MockCaptioner::default();
        let f = solid([10, 200, 30]);
        let a = cap.caption(&f).unwrap();
        assert_eq!(a, format!("object-{}", &f.content_hash.to_hex()[..8]));
        assert_eq!(cap.caption(&solid([10, 200, 30])).unwrap(), a);
        assert_ne!(cap.caption(&solid([11, 200, 30])).unwrap(), a);
    }

    #[test]
    fn caption_fixture_overrides() {
        let f = solid([1, 1, 1]);
        let cap = MockCaptioner::default().with_fixture(f.content_hash, "a red car");
        assert_eq!(cap.caption(&f).unwrap(), "a red car");
    }

    #[test]
    fn text_embedding_self_cosine_is_one() {
        let e = BagOfTokensEmbedder::new(0);
        let a = e.embed_text("a red car on a road").unwrap();
        assert_eq!(a, e.embed_text("a red car on a road").unwrap());
        assert!((a.cosine(&a).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_vocabularies_are_orthogonal() {
        // {red, car} vs {blue, sky}: no shared token; distinct buckets checked below
        let e = BagOfTokensEmbedder::new(0);
        let left = ["red", "car"].map(|t| e.bucket(t));
        let right = ["blue", "sky"].map(|t| e.bucket(t));
        assert!(left.iter().all(|b| !right.contains(b)));
        let a = e.embed_text("Red car").unwrap();
        let b = e.embed_text("blue sky").unwrap();
        assert_eq!(a.cosine(&b).unwrap(), 0.0);
    }

    #[test]
    fn token_counts_by_hand() {
        // "red red car" = 2*e_red + e_car; "red" = e_red -> cos = 2/sqrt(5)
        let e = BagOfTokensEmbedder::new(3);
        assert_ne!(e.bucket("red"), e.bucket("car"));
        let a = e.embed_text("red red car").unwrap();
        let b = e.embed_text("red").unwrap();
        assert!((a.cosine(&b).unwrap() - 2.0 / 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_text_rejected() {
        assert_eq!(
            BagOfTokensEmbedder::new(0).embed_text(" ").unwrap_err().code(),
            "INVALID_INPUT"
        );
    }

    #[test]
    fn detector_fixture_and_absent() {
        let f = solid([5, 5, 5]);
        let d = MockDetector::new(0).with_fixture(f.content_hash, 0.72);
        let dets = d.detect(&f, "car").unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].confidence, 0.72);
        assert!(d.detect(&solid([6, 6, 6]), "car").unwrap().is_empty());
        assert_eq!(d.detect(&f, "").unwrap_err().code(), "INVALID_INPUT");
    }

    #[test]
    fn synthesized_detections_are_seeded() {
        let f = solid([5, 5, 5]);
        let a = MockDetector::synthesizing(1).detect(&f, "car").unwrap()[0].confidence;
        let b = MockDetector::synthesizing(1).detect(&f, "car").unwrap()[0].confidence;
        let c = MockDetector::synthesizing(2).detect(&f, "car").unwrap()[0].confidence;
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((0.0..1.0).contains(&a));
    }

    #[test]
    fn frame_embedding_identical_frames() {
        let e = GridFrameEmbedder::default();
        let a = e.embed_frame(&solid([100, 50, 25])).unwrap();
        assert_eq!(a, e.embed_frame(&solid([100, 50, 25])).unwrap());
        assert_eq!(a.dim(), 48);
        assert!((a.vector[0] - 100.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn frame_embedding_fixture_returned_exactly() {
        let f = solid([1, 2, 3]);
        let e = GridFrameEmbedder::default().with_fixture(f.content_hash, vec![0.6, 0.8]);
        assert_eq!(e.embed_frame(&f).unwrap().vector, vec![0.6, 0.8]);
    }

    #[test]
    fn tiny_frame_fills_every_cell() {
        let f = Frame::new(0, RgbImage::from_pixel(1, 1, Rgb([255, 0, 0])));
        let v = GridFrameEmbedder::default().embed_frame(&f).unwrap().vector;
        assert!(v.chunks(3).all(|c| c == [1.0, 0.0, 0.0]));
    }
}
