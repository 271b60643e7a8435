//! Video decoding into frame sequences and frame-prompt pairing.
//!
//! Supported sources:
//! - a directory of still images (`png`, `jpg`, `jpeg`, `bmp`), ordered by
//!   file name; an optional `fps` text file in the directory sets the rate,
//!   otherwise [`DEFAULT_DIR_FPS`] is assumed;
//! - an animated GIF;
//! - any other container, through `ffmpeg`/`ffprobe` when they are on `PATH`.
//!
//! All sources are decoded to 8-bit RGB.

mod cache;

pub use cache::{ArtifactCache, CacheError, CacheKey};

use std::fs;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use image::codecs::gif::GifDecoder;
use image::{AnimationDecoder, RgbImage};
use thiserror::Error;

use crate::model::{Frame, FrameSequence, VideoEntry};

pub const DEFAULT_DIR_FPS: f64 = 30.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unreadable video {path}: {reason}")]
    UnreadableVideo { path: PathBuf, reason: String },
    #[error("video {path} decoded to zero frames")]
    EmptyVideo { path: PathBuf },
    #[error("stride must be at least 1")]
    InvalidStride,
    #[error("frame sequence belongs to `{sequence}` but entry is `{entry}`")]
    IdMismatch { sequence: String, entry: String },
}

impl IngestError {
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::UnreadableVideo { .. } => "UNREADABLE_VIDEO",
            IngestError::EmptyVideo { .. } => "EMPTY_VIDEO",
            IngestError::InvalidStride => "INVALID_STRIDE",
            IngestError::IdMismatch { .. } => "ID_MISMATCH",
        }
    }
}

fn unreadable(path: &Path, reason: impl ToString) -> IngestError {
    IngestError::UnreadableVideo {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Decodes the edited video of `entry` and keeps every `stride`-th frame,
/// starting with the first.
pub fn extract_frames(entry: &VideoEntry, stride: usize) -> Result<FrameSequence, IngestError> {
    if stride == 0 {
        return Err(IngestError::InvalidStride);
    }
    let path = entry.edited_path.as_path();
    let (decoded, fps) = decode_video(path)?;
    if decoded.is_empty() {
        return Err(IngestError::EmptyVideo {
            path: path.to_path_buf(),
        });
    }
    let frames = decoded
        .into_iter()
        .enumerate()
        .filter(|(i, _)| i % stride == 0)
        .map(|(i, img)| Frame::new(i as u64, img))
        .collect();
    Ok(FrameSequence {
        video_id: entry.video_id.clone(),
        frames,
        fps,
        stride,
    })
}

/// Every frame with the entry's edit prompt.
pub fn pair_with_prompt<'a>(
    seq: &'a FrameSequence,
    entry: &'a VideoEntry,
) -> Result<Vec<(&'a Frame, &'a str)>, IngestError> {
    if seq.video_id != entry.video_id {
        return Err(IngestError::IdMismatch {
            sequence: seq.video_id.clone(),
            entry: entry.video_id.clone(),
        });
    }
    Ok(seq
        .frames
        .iter()
        .map(|f| (f, entry.edit_prompt.as_str()))
        .collect())
}

/// Frames and frame rate of a frame directory, GIF, or (with ffmpeg on
/// `PATH`) any other container.
pub fn decode_video(path: &Path) -> Result<(Vec<RgbImage>, f64), IngestError> {
    let meta = fs::metadata(path).map_err(|e| unreadable(path, e))?;
    if meta.is_dir() {
        return decode_frame_dir(path);
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("gif") => decode_gif(path),
        _ => decode_with_ffmpeg(path),
    }
}

fn is_still_image(p: &Path) -> bool {
    matches!(
        p.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("png" | "jpg" | "jpeg" | "bmp")
    )
}

fn decode_frame_dir(dir: &Path) -> Result<(Vec<RgbImage>, f64), IngestError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| unreadable(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_still_image(p))
        .collect();
    files.sort();
    let frames = files
        .iter()
        .map(|p| {
            image::open(p)
                .map(|img| img.to_rgb8())
                .map_err(|e| unreadable(p, e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fps = match fs::read_to_string(dir.join("fps")) {
        Ok(text) => text
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|f| f.is_finite() && *f > 0.0)
            .ok_or_else(|| unreadable(dir, "fps file is not a positive number"))?,
        Err(_) => DEFAULT_DIR_FPS,
    };
    Ok((frames, fps))
}

fn decode_gif(path: &Path) -> Result<(Vec<RgbImage>, f64), IngestError> {
    let file = fs::File::open(path).map_err(|e| unreadable(path, e))?;
    let decoder = GifDecoder::new(BufReader::new(file)).map_err(|e| unreadable(path, e))?;
    let frames = decoder
        .into_frames()
        .collect_frames()
        .map_err(|e| unreadable(path, e))?;
    let fps = frames
        .first()
        .map(|f| {
            let (num, den) = f.delay().numer_denom_ms();
            if num == 0 {
                DEFAULT_DIR_FPS
            } else {
                1000.0 * f64::from(den) / f64::from(num)
            }
        })
        .unwrap_or(DEFAULT_DIR_FPS);
    let images = frames
        .into_iter()
        .map(|f| image::DynamicImage::ImageRgba8(f.into_buffer()).to_rgb8())
        .collect();
    Ok((images, fps))
}

fn decode_with_ffmpeg(path: &Path) -> Result<(Vec<RgbImage>, f64), IngestError> {
    let probe = Command::new("ffprobe")
        .args([
            "-v",
            "error",
            "-select_streams",
            "v:0",
            "-show_entries",
            "stream=width,height,r_frame_rate",
            "-of",
            "csv=p=0",
        ])
        .arg(path)
        .output()
        .map_err(|e| unreadable(path, format!("ffprobe unavailable: {e}")))?;
    if !probe.status.success() {
        return Err(unreadable(path, String::from_utf8_lossy(&probe.stderr).trim()));
    }
    let line = String::from_utf8_lossy(&probe.stdout);
    let fields: Vec<&str> = line.trim().split(',').collect();
    let [w, h, rate] = fields[..] else {
        return Err(unreadable(path, format!("unexpected ffprobe output `{}`", line.trim())));
    };
    let width: u32 = w.parse().map_err(|_| unreadable(path, "bad width"))?;
    let height: u32 = h.parse().map_err(|_| unreadable(path, "bad height"))?;
    let fps = match rate.split_once('/') {
        Some((n, d)) => n.parse::<f64>().unwrap_or(0.0) / d.parse::<f64>().unwrap_or(1.0),
        None => rate.parse().unwrap_or(0.0),
    };
    let fps = if fps.is_finite() && fps > 0.0 {
        fps
    } else {
        DEFAULT_DIR_FPS
    };

    let mut child = Command::new("ffmpeg")
        .args(["-v", "error", "-i"])
        .arg(path)
        .args(["-f", "rawvideo", "-pix_fmt", "rgb24", "-"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| unreadable(path, format!("ffmpeg unavailable: {e}")))?;
    let mut raw = Vec::new();
    child
        .stdout
        .take()
        .expect("piped stdout")
        .read_to_end(&mut raw)
        .map_err(|e| unreadable(path, e))?;
    let status = child.wait().map_err(|e| unreadable(path, e))?;
    if !status.success() {
        return Err(unreadable(path, "ffmpeg failed to decode"));
    }
    let frame_len = width as usize * height as usize * 3;
    if frame_len == 0 {
        return Err(unreadable(path, "zero-sized video"));
    }
    let frames = raw
        .chunks_exact(frame_len)
        .map(|c| RgbImage::from_raw(width, height, c.to_vec()).expect("exact chunk"))
        .collect();
    Ok((frames, fps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn entry_for(path: &Path) -> VideoEntry {
        VideoEntry {
            video_id: "v".into(),
            original_path: path.to_path_buf(),
            edited_path: path.to_path_buf(),
            edit_prompt: "make it blue".into(),
            model_name: "m".into(),
        }
    }

    fn clip(dir: &Path, n: usize) -> PathBuf {
        let frames = synth::drifting_frames(n, 8, 6, 42);
        synth::write_frame_dir(&dir.join("clip"), &frames).unwrap()
    }

    #[test]
    fn stride_one_keeps_all_frames() {
        let dir = tempfile::tempdir().unwrap();
        let seq = extract_frames(&entry_for(&clip(dir.path(), 16)), 1).unwrap();
        assert_eq!(seq.len(), 16);
        assert!(seq.indices_strictly_increasing());
        assert_eq!(seq.fps, DEFAULT_DIR_FPS);
    }

    #[test]
    fn stride_four_keeps_every_fourth() {
        let dir = tempfile::tempdir().unwrap();
        let seq = extract_frames(&entry_for(&clip(dir.path(), 16)), 4).unwrap();
        let idx: Vec<u64> = seq.frames.iter().map(|f| f.index).collect();
        assert_eq!(idx, vec![0, 4, 8, 12]);
        assert_eq!(seq.stride, 4);
    }

    #[test]
    fn missing_file_is_unreadable() {
        let e = extract_frames(&entry_for(Path::new("/nonexistent/clip.gif")), 1).unwrap_err();
        assert_eq!(e.code(), "UNREADABLE_VIDEO");
    }

    #[test]
    fn corrupt_gif_is_unreadable() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.gif");
        fs::write(&p, b"GIF89a garbage").unwrap();
        let e = extract_frames(&entry_for(&p), 1).unwrap_err();
        assert_eq!(e.code(), "UNREADABLE_VIDEO");
    }

    #[test]
    fn empty_directory_is_empty_video() {
        let dir = tempfile::tempdir().unwrap();
        let e = extract_frames(&entry_for(dir.path()), 1).unwrap_err();
        assert_eq!(e.code(), "EMPTY_VIDEO");
    }

    #[test]
    fn zero_stride_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            extract_frames(&entry_for(&clip(dir.path(), 2)), 0),
            Err(IngestError::InvalidStride)
        ));
    }

    #[test]
    fn gif_decodes_to_rgb_frames() {
        let dir = tempfile::tempdir().unwrap();
        let frames = synth::drifting_frames(5, 6, 4, 1);
        let p = dir.path().join("clip.gif");
        synth::write_gif(&p, &frames, 10).unwrap();
        let seq = extract_frames(&entry_for(&p), 1).unwrap();
        assert_eq!(seq.len(), 5);
        assert_eq!(seq.frames[0].image.dimensions(), (6, 4));
        assert!((seq.fps - 10.0).abs() < 1e-9);
    }

    #[test]
    fn fps_file_overrides_default() {
        let dir = tempfile::tempdir().unwrap();
        let p = clip(dir.path(), 3);
        fs::write(p.join("fps"), "12.5\n").unwrap();
        assert_eq!(extract_frames(&entry_for(&p), 1).unwrap().fps, 12.5);
    }

    #[test]
    fn decoding_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p = clip(dir.path(), 6);
        let hashes = |s: FrameSequence| s.frames.iter().map(|f| f.content_hash).collect::<Vec<_>>();
        let a = hashes(extract_frames(&entry_for(&p), 2).unwrap());
        let b = hashes(extract_frames(&entry_for(&p), 2).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn pairs_carry_the_prompt() {
        let dir = tempfile::tempdir().unwrap();
        let e = entry_for(&clip(dir.path(), 5));
        let seq = extract_frames(&e, 1).unwrap();
        let pairs = pair_with_prompt(&seq, &e).unwrap();
        assert_eq!(pairs.len(), 5);
        assert!(pairs.iter().all(|(_, p)| *p == "make it blue"));

        let one = FrameSequence {
            frames: seq.frames[..1].to_vec(),
            ..seq.clone()
        };
        assert_eq!(pair_with_prompt(&one, &e).unwrap().len(), 1);

        let other = VideoEntry {
            video_id: "w".into(),
            ..e
        };
        assert_eq!(pair_with_prompt(&seq, &other).unwrap_err().code(), "ID_MISMATCH");
    }
}
