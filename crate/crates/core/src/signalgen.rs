//! Residual signal generation: one scalar per frame measuring how far the
//! frame deviates from the estimated normal posture.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::background::MeanFrame;
use crate::error::{Error, Result};
use crate::frameio::{Frame, FrameSequence};

/// How per-pixel residuals are folded into the frame score.
///
/// `Absolute` sums |pixel - mean| so opposite deviations cannot cancel;
/// `Signed` sums the raw differences and can go negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMode {
    #[default]
    Absolute,
    Signed,
}

/// The per-video deviation series V_1..V_n.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSignal {
    pub video_id: String,
    pub fps: f64,
    pub values: Vec<f64>,
    /// Pixels per frame in the source sequence.
    pub pixel_count: usize,
}

impl ResidualSignal {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Sum of per-pixel residuals between one frame and the mean posture.
pub fn residual_value(frame: &Frame, mean: &MeanFrame, mode: ResidualMode) -> Result<f64> {
    if frame.dims() != mean.dims() {
        return Err(Error::DimensionMismatch {
            expected: mean.dims(),
            actual: frame.dims(),
            context: "residual_value".into(),
        });
    }
    let mut total = 0.0;
    match mode {
        ResidualMode::Absolute => {
            for (&p, m) in frame.pixels().iter().zip(mean.values()) {
                total += (p as f64 - m).abs();
            }
        }
        ResidualMode::Signed => {
            for (&p, m) in frame.pixels().iter().zip(mean.values()) {
                total += p as f64 - m;
            }
        }
    }
    Ok(total)
}

/// Scores every frame of the sequence against the mean, in order.
pub fn generate_signal(
    seq: &FrameSequence,
    mean: &MeanFrame,
    mode: ResidualMode,
) -> Result<ResidualSignal> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut values = Vec::with_capacity(seq.len());
    for frame in seq.frames() {
        values.push(residual_value(&frame?, mean, mode)?);
    }
    Ok(ResidualSignal {
        video_id: seq.video_id().to_string(),
        fps: seq.fps(),
        values,
        pixel_count: mean.values().len(),
    })
}

/// Centered moving average with edge truncation (shorter effective window at
/// the boundaries). `window` must be odd and within the signal length;
/// `window == 1` is the identity.
pub fn smooth(signal: &ResidualSignal, window: usize) -> Result<ResidualSignal> {
    let n = signal.len();
    if window == 0 || window % 2 == 0 || window > n {
        return Err(Error::BadWindow { window, len: n });
    }
    if window == 1 {
        return Ok(signal.clone());
    }
    let half = window / 2;
    let values = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            signal.values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    Ok(ResidualSignal {
        video_id: signal.video_id.clone(),
        fps: signal.fps,
        values,
        pixel_count: signal.pixel_count,
    })
}

/// Writes the signal CSV: `frame_index,time_s,value`, with `time_s` being
/// the 0-based frame start time at six decimal places.
pub fn write_signal_csv(signal: &ResidualSignal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("frame_index,time_s,value\n");
    for (i, v) in signal.values.iter().enumerate() {
        let t = i as f64 / signal.fps;
        out.push_str(&format!("{i},{t:.6},{v}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
