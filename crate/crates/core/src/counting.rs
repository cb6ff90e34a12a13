//! Single-speed counting: split a prediction track into consecutive
//! non-overlapping windows and sum per-frame counts.
//!
//! Each frame contributes `1/l` where `l` is its predicted period length.
//! In [`CountingMode::Gated`] a frame only contributes when the geometric
//! mean of its periodicity and period score is strictly above `tau`:
//!
//! ```text
//! c_i = 1(sqrt(p_i · s_i) > tau) / l_i
//! ```
//!
//! [`CountingMode::Segmented`] disables the gate, which is appropriate for
//! clips trimmed to the repeating segment.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

pub const DEFAULT_WINDOW_SIZE: usize = 64;
pub const DEFAULT_TAU: f64 = 0.5;

/// Per-frame model output, in the timebase of the track that owns it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub periodicity: f64,
    pub period_len: f64,
    pub period_score: f64,
}

impl FramePrediction {
    pub fn new(periodicity: f64, period_len: f64, period_score: f64) -> Self {
        Self {
            periodicity,
            period_len,
            period_score,
        }
    }

    /// Checks the value ranges. `max_period` is `window_size / 2` of the
    /// owning track, or `None` to only enforce the lower bound of 2.
    pub fn validate(&self, max_period: Option<f64>) -> Result<()> {
        unit_interval("periodicity", self.periodicity)?;
        unit_interval("period_score", self.period_score)?;
        let l = self.period_len;
        if !l.is_finite() || l < 2.0 {
            return Err(Error::invalid("period_len", format!("{l} is below 2")));
        }
        if let Some(max) = max_period {
            if l > max {
                return Err(Error::invalid(
                    "period_len",
                    format!("{l} exceeds window_size/2 = {max}"),
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn unit_interval(field: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(field, format!("{v} is outside [0, 1]")));
    }
    Ok(())
}

/// Frame predictions for one video at one playback stride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrack {
    pub video_id: String,
    pub speed: usize,
    pub window_size: usize,
    pub frames: Vec<FramePrediction>,
}

impl PredictionTrack {
    pub fn new(
        video_id: impl Into<String>,
        speed: usize,
        window_size: usize,
        frames: Vec<FramePrediction>,
    ) -> Self {
        Self {
            video_id: video_id.into(),
            speed,
            window_size,
            frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.speed < 1 {
            return Err(Error::invalid("speed", "must be >= 1"));
        }
        validate_window_size(self.window_size)?;
        let max = (self.window_size / 2) as f64;
        for (i, f) in self.frames.iter().enumerate() {
            f.validate(Some(max)).map_err(|e| {
                Error::invalid("frame", format!("track '{}' frame {i}: {e}", self.video_id))
            })?;
        }
        Ok(())
    }
}

pub fn validate_window_size(window_size: usize) -> Result<()> {
    if window_size < 4 || window_size % 2 != 0 {
        return Err(Error::invalid(
            "window_size",
            format!("{window_size} must be even and >= 4"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountingMode {
    /// Every frame counts; for clips trimmed to the repeating segment.
    Segmented,
    /// Frames are gated on `sqrt(periodicity · period_score) > tau`.
    Gated,
}

/// What to do with frames after the last full window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailPolicy {
    /// Drop the incomplete tail. A track shorter than one window is an
    /// error unless `pad_short` is set.
    Drop,
    /// Keep the tail as a final, shorter window.
    Partial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingConfig {
    pub tau: f64,
    pub mode: CountingMode,
    /// With [`TailPolicy::Drop`], pad a too-short track to one window by
    /// repeating its last prediction.
    pub pad_short: bool,
    pub tail: TailPolicy,
    /// Keep the per-frame counts in the returned estimate.
    pub keep_per_frame: bool,
}

impl Default for CountingConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            mode: CountingMode::Segmented,
            pad_short: false,
            tail: TailPolicy::Partial,
            keep_per_frame: false,
        }
    }
}

impl CountingConfig {
    pub fn gated(tau: f64) -> Self {
        Self {
            tau,
            mode: CountingMode::Gated,
            ..Self::default()
        }
    }

    pub fn segmented() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        unit_interval("tau", self.tau)
    }
}

/// A video's predicted count plus the stride it was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountEstimate {
    pub video_id: String,
    pub count: f64,
    pub speed_chosen: usize,
    pub period_score_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_frame_counts: Option<Vec<f64>>,
}

pub fn per_frame_count(fp: &FramePrediction, config: &CountingConfig) -> Result<f64> {
    fp.validate(None)?;
    let counted = match config.mode {
        CountingMode::Segmented => true,
        CountingMode::Gated => (fp.periodicity * fp.period_score).sqrt() > config.tau,
    };
    Ok(if counted { 1.0 / fp.period_len } else { 0.0 })
}

/// Splits a track into consecutive non-overlapping windows starting at
/// frame 0.
pub fn window_partition<'a>(
    track: &'a PredictionTrack,
    config: &CountingConfig,
) -> Result<Vec<Cow<'a, [FramePrediction]>>> {
    let w = track.window_size;
    validate_window_size(w)?;
    let frames = track.frames.as_slice();
    if frames.is_empty() {
        return Err(Error::invalid(
            "track",
            format!("track '{}' has no frames", track.video_id),
        ));
    }

    if config.tail == TailPolicy::Partial {
        return Ok(frames.chunks(w).map(Cow::Borrowed).collect());
    }

    if frames.len() < w {
        if !config.pad_short {
            return Err(Error::TrackTooShort {
                video_id: track.video_id.clone(),
                frames: frames.len(),
                window_size: w,
            });
        }
        let mut padded = frames.to_vec();
        let last = *frames.last().expect("non-empty");
        padded.resize(w, last);
        return Ok(vec![Cow::Owned(padded)]);
    }
    Ok(frames.chunks_exact(w).map(Cow::Borrowed).collect())
}

pub fn count_track(track: &PredictionTrack, config: &CountingConfig) -> Result<CountEstimate> {
    config.validate()?;
    track.validate()?;
    let windows = window_partition(track, config)?;

    let mut count = CompensatedSum::default();
    let mut score = CompensatedSum::default();
    let mut retained = 0usize;
    let mut per_frame = config.keep_per_frame.then(Vec::new);
    for fp in windows.iter().flat_map(|w| w.iter()) {
        let c = per_frame_count(fp, config)?;
        count.add(c);
        score.add(fp.period_score);
        retained += 1;
        if let Some(v) = per_frame.as_mut() {
            v.push(c);
        }
    }

    Ok(CountEstimate {
        video_id: track.video_id.clone(),
        count: count.value(),
        speed_chosen: track.speed,
        period_score_mean: score.value() / retained as f64,
        per_frame_counts: per_frame,
    })
}

/// Mean period score over the frames kept by windowing; the scalar that
/// speed selection compares.
pub fn track_period_score(track: &PredictionTrack, config: &CountingConfig) -> Result<f64> {
    let windows = window_partition(track, config)?;
    let retained: usize = windows.iter().map(|w| w.len()).sum();
    if retained == 0 {
        return Err(Error::invalid(
            "track",
            "no frames retained after windowing",
        ));
    }
    let mut acc = CompensatedSum::default();
    for fp in windows.iter().flat_map(|w| w.iter()) {
        acc.add(fp.period_score);
    }
    Ok(acc.value() / retained as f64)
}
