//! Synthetic clips and datasets for demos and tests.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use image::codecs::gif::{GifEncoder, Repeat};
use image::{Delay, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{DatasetManifest, Frame, FrameSequence, SplitRole, VideoEntry};

const PROMPTS: &[&str] = &[
    "turn the silver jeep into a red car",
    "change the sky to a starry night",
    "make the dog a golden retriever",
    "replace the boat with a swan",
    "turn the cat into a tiger",
    "add a hat to the man",
];

const MODELS: &[&str] = &["model-a", "model-b"];

/// A square drifting across a two-tone background. Colors, square size and
/// speed come from `seed`.
pub fn drifting_frames(n: usize, width: u32, height: u32, seed: u64) -> Vec<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg: [u8; 3] = rng.gen();
    let bg2: [u8; 3] = rng.gen();
    let fg: [u8; 3] = rng.gen();
    let side = rng.gen_range(1..=width.min(height).max(1));
    let speed = rng.gen_range(1..=3u32);
    (0..n)
        .map(|i| {
            let ox = (i as u32 * speed) % width;
            let oy = (i as u32 * speed / 2) % height;
            RgbImage::from_fn(width, height, |x, y| {
                let in_square = x >= ox && x < ox + side && y >= oy && y < oy + side;
                if in_square {
                    Rgb(fg)
                } else if y < height / 2 {
                    Rgb(bg)
                } else {
                    Rgb(bg2)
                }
            })
        })
        .collect()
}

/// Writes `frame_0000.png`, `frame_0001.png`, ... into `dir`.
pub fn write_frame_dir(dir: &Path, frames: &[RgbImage]) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        f.save(dir.join(format!("frame_{i:04}.png")))
            .map_err(io::Error::other)?;
    }
    Ok(dir.to_path_buf())
}

pub fn write_gif(path: &Path, frames: &[RgbImage], fps: u32) -> io::Result<()> {
    let file = fs::File::create(path)?;
    let mut enc = GifEncoder::new(file);
    enc.set_repeat(Repeat::Infinite).map_err(io::Error::other)?;
    let delay = Delay::from_numer_denom_ms(1000, fps.max(1));
    for f in frames {
        let rgba = image::DynamicImage::ImageRgb8(f.clone()).to_rgba8();
        enc.encode_frame(image::Frame::from_parts(rgba, 0, 0, delay))
            .map_err(io::Error::other)?;
    }
    Ok(())
}

/// Writes `n_videos` original/edited clip pairs under `out_dir` plus a
/// `manifest.json` with relative paths. Every fourth video goes to the
/// validation split.
pub fn write_dataset(
    out_dir: &Path,
    n_videos: usize,
    n_frames: usize,
    seed: u64,
) -> io::Result<DatasetManifest> {
    let mut videos = Vec::new();
    let mut split = BTreeMap::new();
    for i in 0..n_videos {
        let id = format!("vid{i:03}");
        let vseed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let original = PathBuf::from("videos").join(&id).join("original");
        let edited = PathBuf::from("videos").join(&id).join("edited");
        write_frame_dir(&out_dir.join(&original), &drifting_frames(n_frames, 32, 24, vseed))?;
        write_frame_dir(
            &out_dir.join(&edited),
            &drifting_frames(n_frames, 32, 24, vseed ^ 0x5eed),
        )?;
        videos.push(VideoEntry {
            video_id: id.clone(),
            original_path: original,
            edited_path: edited,
            edit_prompt: PROMPTS[i % PROMPTS.len()].to_owned(),
            model_name: MODELS[i % MODELS.len()].to_owned(),
        });
        let role = if i % 4 == 3 {
            SplitRole::Validation
        } else {
            SplitRole::Optimization
        };
        split.insert(id, role);
    }
    let manifest = DatasetManifest {
        dataset_id: format!("synthetic-{seed}"),
        videos,
        split,
    };
    fs::write(out_dir.join("manifest.json"), manifest.to_json())?;
    Ok(manifest)
}

/// In-memory sequence of random frames; consecutive frames are either
/// repeats or fresh noise.
pub fn random_sequence<R: Rng>(rng: &mut R, video_id: &str, max_frames: usize) -> FrameSequence {
    let n = rng.gen_range(2..=max_frames.max(2));
    let (w, h) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
    let mut frames: Vec<Frame> = Vec::with_capacity(n);
    for i in 0..n {
        let image = match frames.last() {
            Some(prev) if rng.gen_bool(0.3) => prev.image.clone(),
            _ => RgbImage::from_fn(w, h, |_, _| Rgb(rng.gen())),
        };
        frames.push(Frame::new(i as u64, image));
    }
    FrameSequence {
        video_id: video_id.to_owned(),
        frames,
        fps: 30.0,
        stride: 1,
    }
}
