//! Spike thresholding of the residual signal into candidate anomaly
//! intervals: threshold at median + k*std, flag strictly-exceeding frames,
//! then group flagged runs into time spans.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signalgen::ResidualSignal;

pub const DEFAULT_K: f64 = 2.0;
pub const DEFAULT_GAP_TOL_S: f64 = 0.5;
pub const DEFAULT_MIN_DUR_S: f64 = 1.0;

/// Standard-deviation convention used by the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatMode {
    /// Divisor n over the full series.
    #[default]
    Population,
    /// Divisor n - 1; a single-sample signal yields std 0.
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub k: f64,
    pub stat_mode: StatMode,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        ThresholdParams {
            k: DEFAULT_K,
            stat_mode: StatMode::default(),
        }
    }
}

/// Frame indices whose signal value strictly exceeds the threshold.
/// Indices are 1-based, matching the signal's frame numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct FlagSet {
    pub indices: Vec<usize>,
    pub thresh: f64,
}

/// A grouped run of flagged frames awaiting classification. Frame indices
/// are 1-based and inclusive; frame i covers time [(i-1)/fps, i/fps).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateInterval {
    pub start_frame: usize,
    pub end_frame: usize,
    pub peak_value: f64,
    pub start_s: f64,
    pub end_s: f64,
}

impl CandidateInterval {
    pub fn frame_count(&self) -> usize {
        self.end_frame - self.start_frame + 1
    }
}

fn median_of(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("signal values are finite"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn std_of(values: &[f64], mode: StatMode) -> f64 {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let divisor = match mode {
        StatMode::Population => n as f64,
        StatMode::Sample => {
            if n < 2 {
                return 0.0;
            }
            (n - 1) as f64
        }
    };
    (ss / divisor).sqrt()
}

/// median(V) + k * std(V). Even-length medians average the two central
/// order statistics.
pub fn threshold_of(signal: &ResidualSignal, params: &ThresholdParams) -> Result<f64> {
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    Ok(median_of(&signal.values) + params.k * std_of(&signal.values, params.stat_mode))
}

/// Exactly the 1-based indices with V_i strictly greater than `thresh`.
pub fn flag_frames(signal: &ResidualSignal, thresh: f64) -> FlagSet {
    let indices = signal
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > thresh)
        .map(|(i, _)| i + 1)
        .collect();
    FlagSet { indices, thresh }
}

/// Groups flagged frames into intervals: runs separated by unflagged gaps of
/// at most `gap_tol_s * fps` frames merge, and intervals shorter than
/// `min_dur_s` are dropped. Negative tolerances behave as zero.
pub fn group_segments(
    signal: &ResidualSignal,
    flags: &FlagSet,
    gap_tol_s: f64,
    min_dur_s: f64,
) -> Vec<CandidateInterval> {
    let fps = signal.fps;
    let gap_frames = gap_tol_s.max(0.0) * fps;
    let min_dur_s = min_dur_s.max(0.0);

    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &idx in &flags.indices {
        match runs.last_mut() {
            Some((_, end)) if (idx - *end - 1) as f64 <= gap_frames => *end = idx,
            _ => runs.push((idx, idx)),
        }
    }

    runs.into_iter()
        .filter(|(start, end)| (end - start + 1) as f64 / fps >= min_dur_s)
        .map(|(start, end)| {
            let peak_value = signal.values[start - 1..end]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            CandidateInterval {
                start_frame: start,
                end_frame: end,
                peak_value,
                start_s: (start - 1) as f64 / fps,
                end_s: end as f64 / fps,
            }
        })
        .collect()
}

/// Threshold, flag, and group in one call.
pub fn detect(
    signal: &ResidualSignal,
    params: &ThresholdParams,
    gap_tol_s: f64,
    min_dur_s: f64,
) -> Result<Vec<CandidateInterval>> {
    let thresh = threshold_of(signal, params)?;
    let flags = flag_frames(signal, thresh);
    Ok(group_segments(signal, &flags, gap_tol_s, min_dur_s))
}

/// Writes the candidate CSV: `video_id,start_frame,end_frame,start_s,end_s,peak_value`.
pub fn write_candidates_csv(
    video_id: &str,
    candidates: &[CandidateInterval],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("video_id,start_frame,end_frame,start_s,end_s,peak_value\n");
    for c in candidates {
        out.push_str(&format!(
            "{video_id},{},{},{:.6},{:.6},{}\n",
            c.start_frame, c.end_frame, c.start_s, c.end_s, c.peak_value
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads the candidate CSV back as `(video_id, interval)` rows.
pub fn read_candidates_csv(path: impl AsRef<Path>) -> Result<Vec<(String, CandidateInterval)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::MalformedCsv {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some("video_id,start_frame,end_frame,start_s,end_s,peak_value") => {}
        other => return Err(bad(format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad(format!("row {}: expected 6 fields", lineno + 2)));
        }
        let parse_err = |what: &str| bad(format!("row {}: bad {what}", lineno + 2));
        rows.push((
            fields[0].to_string(),
            CandidateInterval {
                start_frame: fields[1].parse().map_err(|_| parse_err("start_frame"))?,
                end_frame: fields[2].parse().map_err(|_| parse_err("end_frame"))?,
                start_s: fields[3].parse().map_err(|_| parse_err("start_s"))?,
                end_s: fields[4].parse().map_err(|_| parse_err("end_s"))?,
                peak_value: fields[5].parse().map_err(|_| parse_err("peak_value"))?,
            },
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal(fps: f64, values: Vec<f64>) -> ResidualSignal {
        ResidualSignal {
            video_id: "v".into(),
            fps,
            values,
            pixel_count: 1,
        }
    }

    fn flags_of(indices: &[usize]) -> FlagSet {
        FlagSet {
            indices: indices.to_vec(),
            thresh: 0.0,
        }
    }

    #[test]
    fn threshold_of_constant_signal_is_that_value() {
        for k in [0.0, 1.0, 5.0] {
            let t = threshold_of(
                &signal(1.0, vec![5.0; 4]),
                &ThresholdParams {
                    k,
                    stat_mode: StatMode::Population,
                },
            )
            .unwrap();
            assert_eq!(t, 5.0);
        }
    }

    #[test]
    fn threshold_median_plus_population_std() {
        // median 1, mean 3.25, var (3*(1-3.25)^2 + (10-3.25)^2)/4 = 15.1875
        let t = threshold_of(
            &signal(1.0, vec![1.0, 1.0, 1.0, 10.0]),
            &ThresholdParams {
                k: 1.0,
                stat_mode: StatMode::Population,
            },
        )
        .unwrap();
        let expected = 1.0 + 15.1875f64.sqrt();
        assert!((t - expected).abs() < 1e-12);
        assert!((t - 4.897114317).abs() < 1e-6);
    }

    #[test]
    fn threshold_even_length_median() {
        let t = threshold_of(
            &signal(1.0, vec![1.0, 2.0, 3.0, 4.0]),
            &ThresholdParams {
                k: 0.0,
                stat_mode: StatMode::Population,
            },
        )
        .unwrap();
        assert_eq!(t, 2.5);
    }

    #[test]
    fn threshold_sample_mode_uses_n_minus_one() {
        let sig = signal(1.0, vec![1.0, 3.0]);
        let pop = threshold_of(
            &sig,
            &ThresholdParams {
                k: 1.0,
                stat_mode: StatMode::Population,
            },
        )
        .unwrap();
        let samp = threshold_of(
            &sig,
            &ThresholdParams {
                k: 1.0,
                stat_mode: StatMode::Sample,
            },
        )
        .unwrap();
        assert_eq!(pop, 2.0 + 1.0);
        assert!((samp - (2.0 + 2.0f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn threshold_empty_signal_fails() {
        assert!(matches!(
            threshold_of(&signal(1.0, vec![]), &ThresholdParams::default()),
            Err(Error::EmptySignal)
        ));
    }

    #[test]
    fn flag_frames_strictly_above() {
        let sig = signal(1.0, vec![1.0, 1.0, 1.0, 10.0]);
        let flags = flag_frames(&sig, 4.897114317029974);
        assert_eq!(flags.indices, vec![4]);
    }

    #[test]
    fn flag_frames_tie_is_not_flagged() {
        let sig = signal(1.0, vec![3.0, 3.0, 3.0]);
        assert!(flag_frames(&sig, 3.0).indices.is_empty());
    }

    #[test]
    fn flag_frames_below_everything() {
        let sig = signal(1.0, vec![0.0, 1.0, 2.0]);
        assert_eq!(flag_frames(&sig, -1.0).indices, vec![1, 2, 3]);
    }

    #[test]
    fn group_single_run() {
        let sig = signal(1.0, vec![0.0; 6]);
        let out = group_segments(&sig, &flags_of(&[4, 5, 6]), 0.0, 0.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].start_frame, 4);
        assert_eq!(out[0].end_frame, 6);
        assert_eq!(out[0].start_s, 3.0);
        assert_eq!(out[0].end_s, 6.0);
    }

    // Hand-traced merge rule, both sides of the tolerance.
    #[test]
    fn group_gap_tolerance_merges_or_splits() {
        let sig = signal(1.0, vec![0.0; 10]);
        let merged = group_segments(&sig, &flags_of(&[4, 5, 9, 10]), 3.0, 0.0);
        assert_eq!(merged.len(), 1);
        assert_eq!((merged[0].start_frame, merged[0].end_frame), (4, 10));

        let split = group_segments(&sig, &flags_of(&[4, 5, 9, 10]), 1.0, 0.0);
        assert_eq!(split.len(), 2);
        assert_eq!((split[0].start_frame, split[0].end_frame), (4, 5));
        assert_eq!((split[1].start_frame, split[1].end_frame), (9, 10));
    }

    #[test]
    fn group_discards_short_intervals() {
        let sig = signal(10.0, vec![0.0; 20]);
        let out = group_segments(&sig, &flags_of(&[7]), 0.0, 0.5);
        assert!(out.is_empty());
    }

    #[test]
    fn group_empty_flags() {
        let sig = signal(1.0, vec![0.0; 3]);
        assert!(group_segments(&sig, &flags_of(&[]), 1.0, 1.0).is_empty());
    }

    #[test]
    fn group_peak_covers_bridged_gaps() {
        let sig = signal(1.0, vec![5.0, 1.0, 9.0, 1.0, 6.0]);
        let out = group_segments(&sig, &flags_of(&[1, 3, 5]), 1.0, 0.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].peak_value, 9.0);
    }

    #[test]
    fn detect_all_zero_signal_is_empty() {
        let sig = signal(1.0, vec![0.0; 8]);
        assert!(detect(&sig, &ThresholdParams::default(), 0.0, 0.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn detect_spike_pair() {
        // median 1, mean 4, population var 18
        let sig = signal(1.0, vec![1.0, 1.0, 1.0, 10.0, 10.0, 1.0]);
        let out = detect(
            &sig,
            &ThresholdParams {
                k: 1.0,
                stat_mode: StatMode::Population,
            },
            0.0,
            0.0,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].start_frame, out[0].end_frame), (4, 5));
    }

    #[test]
    fn monotonic_in_k() {
        let mut vals = Vec::new();
        let mut state = 1234u64;
        for _ in 0..300 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            vals.push((state >> 11) as f64 / (1u64 << 53) as f64 * 100.0);
        }
        let sig = signal(10.0, vals);
        let mut prev: Option<Vec<usize>> = None;
        for k in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let t = threshold_of(
                &sig,
                &ThresholdParams {
                    k,
                    stat_mode: StatMode::Population,
                },
            )
            .unwrap();
            let flags = flag_frames(&sig, t).indices;
            if let Some(prev) = &prev {
                assert!(flags.iter().all(|i| prev.contains(i)), "k = {k}");
            }
            prev = Some(flags);
        }
    }

    #[test]
    fn candidates_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cand.csv");
        let sig = signal(2.0, vec![0.0, 9.0, 9.0, 0.0]);
        let cands = group_segments(&sig, &flags_of(&[2, 3]), 0.0, 0.0);
        write_candidates_csv("vid", &cands, &path).unwrap();
        let rows = read_candidates_csv(&path).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].0, "vid");
        assert_eq!(rows[0].1, cands[0]);
    }

    #[test]
    fn candidates_csv_rejects_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cand.csv");
        fs::write(&path, "nope\n").unwrap();
        assert!(matches!(
            read_candidates_csv(&path),
            Err(Error::MalformedCsv { .. })
        ));
    }

    proptest::proptest! {
        // Scaling every value by c > 0 scales median/std/thresh by c and
        // leaves the flag set unchanged.
        #[test]
        fn scale_covariance(
            values in proptest::collection::vec(0.0f64..1e6, 1..80),
            c in 1e-3f64..1e3,
        ) {
            let sig = signal(5.0, values.clone());
            let scaled = signal(5.0, values.iter().map(|v| v * c).collect());
            let params = ThresholdParams::default();
            let t = threshold_of(&sig, &params).unwrap();
            let ts = threshold_of(&scaled, &params).unwrap();
            proptest::prop_assert!((ts - c * t).abs() <= 1e-9 * (1.0 + ts.abs()));
            proptest::prop_assert_eq!(
                flag_frames(&sig, t).indices,
                flag_frames(&scaled, ts).indices
            );
        }

        // Grouped intervals are sorted, disjoint, long enough, and cover
        // every kept flagged frame exactly once.
        #[test]
        fn group_segments_partition_properties(
            flag_bits in proptest::collection::vec(proptest::bool::ANY, 1..120),
            gap in 0.0f64..3.0,
            min_dur in 0.0f64..2.0,
        ) {
            let n = flag_bits.len();
            let sig = signal(4.0, vec![1.0; n]);
            let indices: Vec<usize> = flag_bits
                .iter()
                .enumerate()
                .filter(|(_, b)| **b)
                .map(|(i, _)| i + 1)
                .collect();
            let flags = FlagSet { indices: indices.clone(), thresh: 0.0 };
            let out = group_segments(&sig, &flags, gap, min_dur);
            let mut prev_end = 0usize;
            for c in &out {
                proptest::prop_assert!(c.start_frame > prev_end);
                proptest::prop_assert!(c.end_frame >= c.start_frame && c.end_frame <= n);
                proptest::prop_assert!(c.frame_count() as f64 / 4.0 >= min_dur);
                prev_end = c.end_frame;
            }
            for idx in indices {
                let containing = out
                    .iter()
                    .filter(|c| c.start_frame <= idx && idx <= c.end_frame)
                    .count();
                proptest::prop_assert!(containing <= 1);
            }
        }
    }
}
