//! Reference period estimator working on frame embeddings.
//!
//! This is a classical stand-in for a learned counting model so the whole
//! pipeline can run without one. For each window of frames it builds the
//! temporal self-similarity matrix (TSM) `S[i,j] = −‖e_i − e_j‖²` and, for
//! every frame, reads a *lag profile* off its TSM row:
//!
//! ```text
//! Q_i(L) = max( exp(S[i, i+L] / T), exp(S[i, i−L] / T) )
//! ```
//!
//! over the sides that fall inside the window, with temperature `T`. A
//! frame inside a repeating segment is almost identical to the frames one
//! period away on either side, so `Q_i` peaks at the period and its
//! multiples. The estimator takes the smallest strong local maximum as the
//! period and refines it to sub-frame precision with a parabola through the
//! log-profile. From the same profile:
//!
//! - `period_score` is the peak's prominence, its height above the lowest
//!   point of the profile at shorter lags. Slow motion whose period exceeds
//!   the window has similarity falling off from lag 1 with no dip, and scores
//!   zero;
//! - `periodicity` is the peak's contrast against the mean of the profile,
//!   `(Q* − mean Q) / (1 − mean Q)`, which is near zero both for frames that
//!   resemble nothing in the window and for frames that resemble everything.

pub mod synth;

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::counting::{validate_window_size, FramePrediction, PredictionTrack};
use crate::error::{Error, Result};

pub use synth::{
    generate_dataset, synth_periodic, GapConfig, SynthDatasetConfig, SynthSpec, SynthTruth,
    SynthVideo,
};

/// `T × D` matrix of per-frame embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub video_id: String,
    pub data: Array2<f64>,
}

impl EmbeddingSequence {
    pub fn new(video_id: impl Into<String>, data: Array2<f64>) -> Result<Self> {
        let seq = Self {
            video_id: video_id.into(),
            data,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> usize {
        self.data.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames() == 0 || self.dims() == 0 {
            return Err(Error::invalid(
                "embeddings",
                format!(
                    "video '{}': empty {}x{} matrix",
                    self.video_id,
                    self.frames(),
                    self.dims()
                ),
            ));
        }
        if let Some(((t, d), v)) = self.data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(
                "embeddings",
                format!(
                    "video '{}': non-finite value {v} at frame {t}, dim {d}",
                    self.video_id
                ),
            ));
        }
        Ok(())
    }

    /// Frames `0, stride, 2·stride, …`.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("stride", "must be >= 1"));
        }
        let idx: Vec<usize> = (0..self.frames()).step_by(stride).collect();
        Ok(Self {
            video_id: self.video_id.clone(),
            data: self.data.select(Axis(0), &idx),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Scale of the similarity kernel `exp(S / temperature)`.
    pub temperature: f64,
    /// A local maximum of the lag profile is accepted as the period when it
    /// reaches this fraction of the profile's global maximum.
    pub peak_ratio: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            peak_ratio: 0.5,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::invalid("temperature", "must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&self.peak_ratio) {
            return Err(Error::invalid("peak_ratio", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Negative squared Euclidean distances between all pairs of frames.
pub fn tsm(embeddings: &EmbeddingSequence) -> Result<Array2<f64>> {
    if embeddings.frames() < 2 {
        return Err(Error::invalid(
            "embeddings",
            format!(
                "video '{}': self-similarity needs at least 2 frames",
                embeddings.video_id
            ),
        ));
    }
    Ok(tsm_of(embeddings.data.view()))
}

fn tsm_of(data: ArrayView2<f64>) -> Array2<f64> {
    let n = data.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        let ei = data.row(i);
        for j in (i + 1)..n {
            let d2: f64 = ei
                .iter()
                .zip(data.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            out[[i, j]] = -d2;
            out[[j, i]] = -d2;
        }
    }
    out
}

fn fallback(window_size: usize) -> FramePrediction {
    FramePrediction {
        periodicity: 0.0,
        period_len: 2.0,
        period_score: 1.0 / (window_size / 2 - 1) as f64,
    }
}

/// Per-frame periodicity, period length and period score for one window.
///
/// `window_tsm` is the square TSM of the window's frames; it may be shorter
/// than `window_size` for a trailing or short window. Candidate periods run
/// from 2 to `min(window_size, n) / 2`. A frame whose lag profile is flat
/// gets the fallback prediction: periodicity 0, period 2 and a period score
/// spread uniformly over the `window_size/2 − 1` candidate lengths.
pub fn estimate_frame_periods(
    window_tsm: ArrayView2<f64>,
    window_size: usize,
    config: &EstimatorConfig,
) -> Result<Vec<FramePrediction>> {
    validate_window_size(window_size)?;
    config.validate()?;
    let n = window_tsm.nrows();
    if window_tsm.ncols() != n {
        return Err(Error::invalid(
            "window_tsm",
            format!("expected a square matrix, got {}x{}", n, window_tsm.ncols()),
        ));
    }
    let max_lag = (window_size / 2).min(n / 2);
    if max_lag < 2 {
        return Ok(vec![fallback(window_size); n]);
    }

    let affinity = |i: usize, j: usize| (window_tsm[[i, j]] / config.temperature).exp();
    let mut profile = vec![None; max_lag + 2];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        for (lag, slot) in profile.iter_mut().enumerate().skip(1) {
            let fwd = (i + lag < n).then(|| affinity(i, i + lag));
            let bwd = (i >= lag).then(|| affinity(i, i - lag));
            *slot = match (fwd, bwd) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            };
        }
        out.push(frame_from_profile(&profile, max_lag, window_size, config));
    }
    Ok(out)
}

/// `profile[lag]` for `lag` in `1..=max_lag + 1`; candidate periods are
/// `2..=max_lag`, which always have at least one side inside the window.
fn frame_from_profile(
    profile: &[Option<f64>],
    max_lag: usize,
    window_size: usize,
    config: &EstimatorConfig,
) -> FramePrediction {
    let q = |lag: usize| profile[lag].expect("candidate lags are always in the window");
    let candidates = 2..=max_lag;
    let peak = candidates.clone().map(q).fold(f64::NEG_INFINITY, f64::max);
    let floor = candidates.clone().map(q).fold(f64::INFINITY, f64::min);
    if peak - floor <= 1e-12 {
        return fallback(window_size);
    }

    // Prominence of each local maximum over the lowest point at a shorter
    // lag. Near-zero-lag similarity of slow motion has no dip before it and
    // so no prominence.
    let mut dip = q(1);
    let mut peaks = Vec::new();
    for lag in candidates.clone() {
        let v = q(lag);
        let left = q(lag - 1);
        let right_ok = profile[lag + 1].map_or(true, |r| v >= r);
        if v >= left && right_ok && v > dip {
            peaks.push((lag, v - dip));
        }
        dip = dip.min(v);
    }
    let best = peaks.iter().map(|&(_, p)| p).fold(0.0, f64::max);
    let Some(&(lag, _)) = peaks.iter().find(|&&(_, p)| p >= config.peak_ratio * best) else {
        return FramePrediction {
            periodicity: 0.0,
            period_len: max_lag as f64,
            period_score: 0.0,
        };
    };

    let dip = (1..lag).map(q).fold(f64::INFINITY, f64::min);
    let (offset, height) = refine_peak(profile, lag).unwrap_or((0.0, q(lag)));
    let height = height.min(1.0);
    let period_len = (lag as f64 + offset).clamp(2.0, (window_size / 2) as f64);
    let period_score = (height - dip).clamp(0.0, 1.0);
    let mean = candidates.clone().map(q).sum::<f64>() / (max_lag - 1) as f64;
    let periodicity = if mean < 1.0 {
        ((height - mean) / (1.0 - mean)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    FramePrediction {
        periodicity,
        period_len,
        period_score,
    }
}

/// Vertex of the parabola through the log-profile at `lag − 1, lag, lag + 1`.
/// Returns the offset from `lag` (within ±0.5) and the interpolated height.
fn refine_peak(profile: &[Option<f64>], lag: usize) -> Option<(f64, f64)> {
    let left = profile[lag - 1]?;
    let mid = profile[lag]?;
    let right = profile.get(lag + 1).copied().flatten()?;
    const TINY: f64 = 1e-300;
    if left < TINY || mid < TINY || right < TINY {
        return None;
    }
    let (yl, y0, yr) = (left.ln(), mid.ln(), right.ln());
    let curvature = yl - 2.0 * y0 + yr;
    if curvature >= 0.0 {
        return None;
    }
    let offset = (0.5 * (yl - yr) / curvature).clamp(-0.5, 0.5);
    let height = y0 - 0.25 * (yl - yr) * offset;
    Some((offset, height.exp()))
}

/// Subsamples at `stride` and runs the estimator window by window.
///
/// Windows are consecutive and non-overlapping from frame 0, with the last
/// one possibly shorter. Each window is analysed together with up to
/// `window_size / 2` frames of context on either side so that frames near a
/// window edge still see their neighbours one period away; the candidate
/// periods stay capped at `window_size / 2`.
pub fn predict_track(
    embeddings: &EmbeddingSequence,
    stride: usize,
    window_size: usize,
    config: &EstimatorConfig,
) -> Result<PredictionTrack> {
    validate_window_size(window_size)?;
    config.validate()?;
    embeddings.validate()?;
    let variant = embeddings.subsample(stride)?;
    let n = variant.frames();
    if n < 2 {
        return Err(Error::invalid(
            "embeddings",
            format!(
                "video '{}': {n} frame(s) at stride {stride}, need at least 2",
                embeddings.video_id
            ),
        ));
    }

    let data = variant.data.view();
    let margin = window_size / 2;
    let mut frames = Vec::with_capacity(n);
    for start in (0..n).step_by(window_size) {
        let end = (start + window_size).min(n);
        let lo = start.saturating_sub(margin);
        let hi = (end + margin).min(n);
        let context = tsm_of(data.slice(s![lo..hi, ..]));
        let preds = estimate_frame_periods(context.view(), window_size, config)?;
        frames.extend_from_slice(&preds[start - lo..end - lo]);
    }

    Ok(PredictionTrack {
        video_id: embeddings.video_id.clone(),
        speed: stride,
        window_size,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn periodic(period: usize, frames: usize) -> EmbeddingSequence {
        let spec = SynthSpec::new(frames, period, 8);
        synth_periodic(&spec).unwrap().0
    }

    #[test]
    fn tsm_examples() {
        let same = EmbeddingSequence::new("a", Array2::from_elem((4, 3), 0.7)).unwrap();
        assert!(tsm(&same).unwrap().iter().all(|&v| v == 0.0));

        let two = EmbeddingSequence::new("b", array![[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let s = tsm(&two).unwrap();
        assert_eq!(s, array![[0.0, -4.0], [-4.0, 0.0]]);

        let one = EmbeddingSequence::new("c", array![[1.0, 2.0]]).unwrap();
        assert!(tsm(&one).is_err());
    }

    #[test]
    fn embeddings_reject_non_finite() {
        assert!(EmbeddingSequence::new("x", array![[1.0, f64::NAN]]).is_err());
        assert!(EmbeddingSequence::new("x", Array2::zeros((0, 3))).is_err());
    }

    #[test]
    fn recovers_period_8() {
        let e = periodic(8, 64);
        let w = tsm(&e).unwrap();
        let preds = estimate_frame_periods(w.view(), 64, &EstimatorConfig::default()).unwrap();
        assert_eq!(preds.len(), 64);
        for (i, p) in preds.iter().enumerate().skip(8).take(48) {
            assert!((p.period_len - 8.0).abs() < 1e-9, "frame {i}: {p:?}");
            assert!(p.periodicity > 0.9, "frame {i}: {p:?}");
        }
    }

    #[test]
    fn constant_rows_are_aperiodic() {
        let e = EmbeddingSequence::new("flat", Array2::from_elem((64, 4), 1.0)).unwrap();
        let w = tsm(&e).unwrap();
        let preds = estimate_frame_periods(w.view(), 64, &EstimatorConfig::default()).unwrap();
        for p in preds {
            assert_eq!(p.periodicity, 0.0);
            assert_eq!(p.period_len, 2.0);
            assert!((p.period_score - 1.0 / 31.0).abs() < 1e-15);
        }
    }

    #[test]
    fn stride_two_halves_period() {
        let e = periodic(16, 256);
        let track = predict_track(&e, 2, 64, &EstimatorConfig::default()).unwrap();
        assert_eq!(track.frames.len(), 128);
        for p in &track.frames {
            assert!((p.period_len - 8.0).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn short_variant_gets_a_track() {
        let e = periodic(8, 64);
        let track = predict_track(&e, 5, 64, &EstimatorConfig::default()).unwrap();
        assert_eq!(track.frames.len(), 13);
        track.validate().unwrap();
    }

    #[test]
    fn tail_frames_are_predicted() {
        let e = periodic(8, 150);
        let track = predict_track(&e, 1, 64, &EstimatorConfig::default()).unwrap();
        assert_eq!(track.frames.len(), 150);
        assert!(track
            .frames
            .iter()
            .all(|p| (p.period_len - 8.0).abs() < 1e-9));
    }

    #[test]
    fn non_square_tsm_rejected() {
        let m = Array2::zeros((4, 5));
        assert!(estimate_frame_periods(m.view(), 64, &EstimatorConfig::default()).is_err());
    }
}
