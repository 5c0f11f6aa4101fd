//! Grayscale frame and frame-sequence I/O.
//!
//! Frames are stored on disk as binary PGM (P5, maxval 255); sequences are
//! described by a JSON manifest `{video_id, fps, frames: [relative paths]}`.
//! Sequences stream from disk, so a video never has to be fully resident.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single 8-bit grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ShapeMismatch {
                reason: format!("frame dimensions must be positive, got {width}x{height}"),
            });
        }
        if pixels.len() != width * height {
            return Err(Error::ShapeMismatch {
                reason: format!(
                    "pixel buffer has {} bytes, expected {}",
                    pixels.len(),
                    width * height
                ),
            });
        }
        Ok(Frame {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }
}

/// A real-valued raster, used for downsampled frames and residual images.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::ShapeMismatch {
                reason: format!(
                    "raster of {} values cannot be {width}x{height}",
                    values.len()
                ),
            });
        }
        Ok(Raster {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestDoc {
    video_id: String,
    fps: f64,
    frames: Vec<String>,
}

enum FrameSource {
    /// Frame files on disk, paths already resolved against the manifest dir.
    Files(Vec<PathBuf>),
    Memory(Vec<Frame>),
}

/// An ordered sequence of same-sized frames with a frame rate.
///
/// Disk-backed sequences re-read frames on every pass; in-memory sequences
/// (from [`FrameSequence::from_frames`]) clone them out.
pub struct FrameSequence {
    video_id: String,
    fps: f64,
    width: usize,
    height: usize,
    source: FrameSource,
}

impl FrameSequence {
    /// Builds an in-memory sequence, validating rate and dimension consistency.
    pub fn from_frames(video_id: impl Into<String>, fps: f64, frames: Vec<Frame>) -> Result<Self> {
        if !(fps > 0.0) || !fps.is_finite() {
            return Err(Error::bad_config(format!("fps must be positive, got {fps}")));
        }
        let (width, height) = match frames.first() {
            Some(f) => f.dims(),
            None => (0, 0),
        };
        for (i, f) in frames.iter().enumerate() {
            if f.dims() != (width, height) {
                return Err(Error::DimensionMismatch {
                    expected: (width, height),
                    actual: f.dims(),
                    context: format!("frame {i}"),
                });
            }
        }
        Ok(FrameSequence {
            video_id: video_id.into(),
            fps,
            width,
            height,
            source: FrameSource::Memory(frames),
        })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    /// Number of frames.
    pub fn len(&self) -> usize {
        match &self.source {
            FrameSource::Files(paths) => paths.len(),
            FrameSource::Memory(frames) => frames.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Frame dimensions; `(0, 0)` for an empty sequence.
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Random access by 0-based index.
    pub fn frame(&self, index: usize) -> Result<Frame> {
        match &self.source {
            FrameSource::Files(paths) => match paths.get(index) {
                Some(p) => load_frame(p),
                None => Err(Error::ShapeMismatch {
                    reason: format!("frame index {index} out of range 0..{}", paths.len()),
                }),
            },
            FrameSource::Memory(frames) => match frames.get(index) {
                Some(f) => Ok(f.clone()),
                None => Err(Error::ShapeMismatch {
                    reason: format!("frame index {index} out of range 0..{}", frames.len()),
                }),
            },
        }
    }

    /// Streams all frames in order.
    pub fn frames(&self) -> impl Iterator<Item = Result<Frame>> + '_ {
        (0..self.len()).map(move |i| self.frame(i))
    }
}

/// Loads a binary PGM (P5, maxval 255) frame.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(path, &bytes)
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedPgm {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Parses the P5 header: magic, then three ASCII integers separated by
/// whitespace (with `#` comment lines allowed), then a single whitespace
/// byte before the raster.
fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(malformed(path, "missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while let Some(b) = bytes.get(pos) {
            if b.is_ascii_digit() {
                pos += 1;
            } else {
                break;
            }
        }
        if pos == start {
            return Err(malformed(path, "truncated header"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("digits are ascii");
        *field = text
            .parse()
            .map_err(|_| malformed(path, format!("bad header field '{text}'")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(malformed(path, format!("maxval {maxval}, only 255 supported")));
    }
    if width == 0 || height == 0 {
        return Err(malformed(path, format!("degenerate dimensions {width}x{height}")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(malformed(path, "missing whitespace before raster")),
    }
    let expected = width * height;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(malformed(
            path,
            format!("raster has {} bytes, expected {expected}", raster.len()),
        ));
    }
    if raster.len() > expected {
        return Err(malformed(
            path,
            format!("{} trailing bytes after raster", raster.len() - expected),
        ));
    }
    Frame::new(width, height, raster.to_vec())
}

/// Writes a frame as binary PGM (P5, maxval 255).
pub fn write_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let header = format!("P5\n{} {}\n255\n", frame.width, frame.height);
    file.write_all(header.as_bytes())
        .and_then(|_| file.write_all(&frame.pixels))
        .map_err(|e| Error::io(path, e))
}

/// Loads a sequence from a JSON manifest, eagerly validating that every
/// referenced frame decodes and matches the dimensions of frame 0.
pub fn load_sequence(manifest_path: impl AsRef<Path>) -> Result<FrameSequence> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let doc: ManifestDoc =
        serde_json::from_str(&text).map_err(|e| Error::MalformedManifest {
            path: manifest_path.to_path_buf(),
            reason: e.to_string(),
        })?;
    if !(doc.fps > 0.0) || !doc.fps.is_finite() {
        return Err(Error::MalformedManifest {
            path: manifest_path.to_path_buf(),
            reason: format!("fps must be positive, got {}", doc.fps),
        });
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let paths: Vec<PathBuf> = doc.frames.iter().map(|f| base.join(f)).collect();

    let mut dims = (0, 0);
    for (i, p) in paths.iter().enumerate() {
        let frame = load_frame(p)?;
        if i == 0 {
            dims = frame.dims();
        } else if frame.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: frame.dims(),
                context: format!("frame {i}"),
            });
        }
    }

    Ok(FrameSequence {
        video_id: doc.video_id,
        fps: doc.fps,
        width: dims.0,
        height: dims.1,
        source: FrameSource::Files(paths),
    })
}

/// Writes frames as `frame_00000.pgm`.. plus a manifest; returns the
/// manifest path.
pub fn write_sequence(
    dir: impl AsRef<Path>,
    video_id: &str,
    fps: f64,
    frames: &[Frame],
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let name = format!("frame_{i:05}.pgm");
        write_frame(frame, dir.join(&name))?;
        names.push(name);
    }
    let doc = ManifestDoc {
        video_id: video_id.to_string(),
        fps,
        frames: names,
    };
    let manifest_path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Block-average pooling of `frame` down to `out_w` x `out_h`, output scaled
/// to `[0, 1]` (cell mean divided by 255).
pub fn downsample(frame: &Frame, out_w: usize, out_h: usize) -> Result<Raster> {
    if out_w == 0 || out_h == 0 || out_w > frame.width || out_h > frame.height {
        return Err(Error::BadTargetSize {
            requested: (out_w, out_h),
            available: (frame.width, frame.height),
        });
    }
    let values: Vec<f64> = frame.pixels.iter().map(|&p| p as f64).collect();
    let pooled = block_mean(&values, frame.width, frame.height, out_w, out_h);
    Raster::new(out_w, out_h, pooled.into_iter().map(|v| v / 255.0).collect())
}

/// Block-average pooling of a real-valued raster, without rescaling.
pub fn block_mean_raster(raster: &Raster, out_w: usize, out_h: usize) -> Result<Raster> {
    if out_w == 0 || out_h == 0 || out_w > raster.width || out_h > raster.height {
        return Err(Error::BadTargetSize {
            requested: (out_w, out_h),
            available: (raster.width, raster.height),
        });
    }
    let pooled = block_mean(&raster.values, raster.width, raster.height, out_w, out_h);
    Raster::new(out_w, out_h, pooled)
}

/// Partitions `w` x `h` into `out_w` x `out_h` rectangular cells (boundary
/// `i` at `floor(i*w/out_w)`) and averages each cell.
fn block_mean(values: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let y0 = oy * h / out_h;
        let y1 = (oy + 1) * h / out_h;
        for ox in 0..out_w {
            let x0 = ox * w / out_w;
            let x1 = (ox + 1) * w / out_w;
            let mut sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += values[y * w + x];
                }
            }
            out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    out
}
