//! Normal-posture estimation: the per-pixel mean of all frames in a video,
//! computed in one streaming pass (partitionable via [`MeanAccumulator::merge`]).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frameio::{Frame, FrameSequence};

const MEAN_FRAME_MAGIC: &[u8; 4] = b"SGBG";
const MEAN_FRAME_VERSION: u32 = 1;

/// Per-pixel mean of the frames absorbed so far.
///
/// Intensities are at most 255 and frame counts stay far below 2^45, so the
/// running f64 sums are exact integers and accumulation order cannot change
/// the result.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanAccumulator {
    width: usize,
    height: usize,
    sums: Vec<f64>,
    count: u64,
}

impl MeanAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        MeanAccumulator {
            width,
            height,
            sums: vec![0.0; width * height],
            count: 0,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    /// Absorbs one frame into the running sums.
    pub fn accumulate(&mut self, frame: &Frame) -> Result<()> {
        if frame.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                actual: frame.dims(),
                context: "accumulate".into(),
            });
        }
        for (sum, &p) in self.sums.iter_mut().zip(frame.pixels()) {
            *sum += p as f64;
        }
        self.count += 1;
        Ok(())
    }

    /// Element-wise sum of two accumulators over disjoint frame partitions.
    pub fn merge(&self, other: &MeanAccumulator) -> Result<MeanAccumulator> {
        if other.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                actual: other.dims(),
                context: "merge".into(),
            });
        }
        let sums = self
            .sums
            .iter()
            .zip(&other.sums)
            .map(|(a, b)| a + b)
            .collect();
        Ok(MeanAccumulator {
            width: self.width,
            height: self.height,
            sums,
            count: self.count + other.count,
        })
    }

    /// Divides the sums by the frame count.
    pub fn finalize(&self) -> Result<MeanFrame> {
        if self.count == 0 {
            return Err(Error::EmptySequence);
        }
        let n = self.count as f64;
        MeanFrame::new(
            self.width,
            self.height,
            self.sums.iter().map(|s| s / n).collect(),
            self.count,
        )
    }
}

/// The estimated normal posture: real-valued per-pixel means in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFrame {
    width: usize,
    height: usize,
    values: Vec<f64>,
    count: u64,
}

impl MeanFrame {
    pub fn new(width: usize, height: usize, values: Vec<f64>, count: u64) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::ShapeMismatch {
                reason: format!(
                    "mean frame of {} values cannot be {width}x{height}",
                    values.len()
                ),
            });
        }
        if count == 0 {
            return Err(Error::EmptySequence);
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 255.0) {
            return Err(Error::ShapeMismatch {
                reason: "mean frame values must lie in [0, 255]".into(),
            });
        }
        Ok(MeanFrame {
            width,
            height,
            values,
            count,
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Frames that contributed to the mean. Files do not persist this, so a
    /// loaded mean frame reports 1.
    pub fn count(&self) -> u64 {
        self.count
    }
}

/// Streams the whole sequence through one accumulator.
pub fn estimate_mean(seq: &FrameSequence) -> Result<MeanFrame> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let (w, h) = seq.dims();
    let mut acc = MeanAccumulator::new(w, h);
    for frame in seq.frames() {
        acc.accumulate(&frame?)?;
    }
    acc.finalize()
}

/// Writes the flat binary mean-frame file: magic `SGBG`, then version,
/// width, height as u32 LE, then width*height f64 LE values.
pub fn write_mean_frame(mean: &MeanFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(16 + mean.values.len() * 8);
    buf.extend_from_slice(MEAN_FRAME_MAGIC);
    buf.extend_from_slice(&MEAN_FRAME_VERSION.to_le_bytes());
    buf.extend_from_slice(&(mean.width as u32).to_le_bytes());
    buf.extend_from_slice(&(mean.height as u32).to_le_bytes());
    for v in &mean.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_mean_frame(path: impl AsRef<Path>) -> Result<MeanFrame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: &str| Error::BadBinaryFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    if bytes.len() < 16 {
        return Err(bad("shorter than header"));
    }
    if &bytes[0..4] != MEAN_FRAME_MAGIC {
        return Err(bad("wrong magic"));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    if u32_at(4) != MEAN_FRAME_VERSION {
        return Err(bad("unsupported version"));
    }
    let width = u32_at(8) as usize;
    let height = u32_at(12) as usize;
    let expected = 16 + width * height * 8;
    if bytes.len() != expected {
        return Err(bad("payload length does not match dimensions"));
    }
    let values: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    MeanFrame::new(width, height, values, 1)
        .map_err(|_| bad("values outside [0, 255] or degenerate dimensions"))
}
