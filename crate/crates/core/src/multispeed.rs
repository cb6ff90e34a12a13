//! Multi-speed evaluation.
//!
//! A counter whose period output is capped at `W/2` frames cannot represent
//! slower repetitions. Playing the video faster, by keeping every `s`-th
//! frame, shrinks a period of `P` original frames to `P/s` variant frames,
//! so strides `1..=5` with `W = 64` reach periods up to `32 × 5 = 160`.
//! The number of repetitions is the same in every variant, so the count of
//! the selected stride is reported unchanged.
//!
//! Each stride is counted independently and the stride whose track has the
//! highest mean period score wins. Scores within [`SpeedConfig::tie_tolerance`]
//! of the best are treated as ties and go to the smallest stride: a stride
//! that subsamples a short period below a few frames per cycle aliases onto
//! a multiple of it, which looks just as periodic as the full-rate track.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::counting::{count_track, CountEstimate, CountingConfig, PredictionTrack};
use crate::error::{Error, Result};

pub const DEFAULT_STRIDES: [usize; 5] = [1, 2, 3, 4, 5];
pub const DEFAULT_TIE_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedConfig {
    pub strides: Vec<usize>,
    /// Scores within this distance of the best one count as tied. Zero means
    /// only exact ties go to the smaller stride.
    #[serde(default = "default_tie_tolerance")]
    pub tie_tolerance: f64,
}

fn default_tie_tolerance() -> f64 {
    DEFAULT_TIE_TOLERANCE
}

impl Default for SpeedConfig {
    fn default() -> Self {
        Self {
            strides: DEFAULT_STRIDES.to_vec(),
            tie_tolerance: DEFAULT_TIE_TOLERANCE,
        }
    }
}

impl SpeedConfig {
    pub fn new(strides: Vec<usize>) -> Self {
        Self {
            strides,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strides.is_empty() {
            return Err(Error::invalid("strides", "must be non-empty"));
        }
        if self.strides.contains(&0) {
            return Err(Error::invalid("strides", "must be positive"));
        }
        let mut sorted = self.strides.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(
                "strides",
                format!("{:?} contains duplicates", self.strides),
            ));
        }
        if !self.tie_tolerance.is_finite() || self.tie_tolerance < 0.0 {
            return Err(Error::invalid("tie_tolerance", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn max_stride(&self) -> usize {
        self.strides.iter().copied().max().unwrap_or(1)
    }
}

/// Longest period, in original frames, that a counter with the given
/// window can express across `strides`.
pub fn max_representable_period(window_size: usize, strides: &[usize]) -> usize {
    window_size / 2 * strides.iter().copied().max().unwrap_or(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedScore {
    pub stride: usize,
    pub period_score_mean: f64,
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedSelection {
    pub chosen_stride: usize,
    /// One entry per candidate, ordered by stride.
    pub scores: Vec<SpeedScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultispeedOutcome {
    pub estimate: CountEstimate,
    pub selection: SpeedSelection,
}

/// Every `stride`-th element starting at index 0.
pub fn subsample<T: Clone>(sequence: &[T], stride: usize) -> Result<Vec<T>> {
    if stride == 0 {
        return Err(Error::invalid("stride", "must be >= 1"));
    }
    if sequence.is_empty() {
        return Err(Error::invalid("sequence", "must be non-empty"));
    }
    Ok(sequence.iter().step_by(stride).cloned().collect())
}

/// Picks the candidate with the highest `period_score_mean`; among scores
/// within `tie_tolerance` of the best, the smallest stride wins.
pub fn select_speed(candidates: &[CountEstimate], tie_tolerance: f64) -> Result<SpeedSelection> {
    if candidates.is_empty() {
        return Err(Error::invalid("candidates", "no speed candidates"));
    }
    let mut by_stride = BTreeMap::new();
    for c in candidates {
        if !c.period_score_mean.is_finite() {
            return Err(Error::invalid(
                "period_score_mean",
                format!(
                    "stride {}: {} is not finite",
                    c.speed_chosen, c.period_score_mean
                ),
            ));
        }
        let score = SpeedScore {
            stride: c.speed_chosen,
            period_score_mean: c.period_score_mean,
            count: c.count,
        };
        if by_stride.insert(c.speed_chosen, score).is_some() {
            return Err(Error::invalid(
                "candidates",
                format!("duplicate stride {}", c.speed_chosen),
            ));
        }
    }
    let scores: Vec<SpeedScore> = by_stride.into_values().collect();
    let best = scores
        .iter()
        .map(|s| s.period_score_mean)
        .fold(f64::NEG_INFINITY, f64::max);
    let chosen_stride = scores
        .iter()
        .find(|s| s.period_score_mean >= best - tie_tolerance)
        .map(|s| s.stride)
        .expect("best score is attained");
    Ok(SpeedSelection {
        chosen_stride,
        scores,
    })
}

/// Counts every configured stride and returns the selected stride's count.
/// Tracks for strides outside `speed.strides` are ignored.
pub fn multispeed_count(
    tracks: &[PredictionTrack],
    counting: &CountingConfig,
    speed: &SpeedConfig,
) -> Result<MultispeedOutcome> {
    speed.validate()?;
    counting.validate()?;
    let first = tracks
        .first()
        .ok_or_else(|| Error::invalid("tracks", "no prediction tracks"))?;

    let mut by_stride: BTreeMap<usize, &PredictionTrack> = BTreeMap::new();
    for t in tracks {
        if t.video_id != first.video_id {
            return Err(Error::invalid(
                "tracks",
                format!("mixed video ids '{}' and '{}'", first.video_id, t.video_id),
            ));
        }
        if t.window_size != first.window_size {
            return Err(Error::invalid(
                "tracks",
                format!(
                    "video '{}': mixed window sizes {} and {}",
                    t.video_id, first.window_size, t.window_size
                ),
            ));
        }
        if by_stride.insert(t.speed, t).is_some() {
            return Err(Error::invalid(
                "tracks",
                format!(
                    "video '{}': duplicate track for stride {}",
                    t.video_id, t.speed
                ),
            ));
        }
    }

    let mut estimates = Vec::with_capacity(speed.strides.len());
    for &stride in &speed.strides {
        let track = by_stride.get(&stride).ok_or_else(|| {
            Error::invalid(
                "tracks",
                format!(
                    "video '{}': missing track for stride {stride}",
                    first.video_id
                ),
            )
        })?;
        estimates.push(count_track(track, counting)?);
    }

    let selection = select_speed(&estimates, speed.tie_tolerance)?;
    let estimate = estimates
        .into_iter()
        .find(|e| e.speed_chosen == selection.chosen_stride)
        .expect("chosen stride is among the candidates");
    Ok(MultispeedOutcome {
        estimate,
        selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::FramePrediction;

    fn est(stride: usize, score: f64, count: f64) -> CountEstimate {
        CountEstimate {
            video_id: "v".into(),
            count,
            speed_chosen: stride,
            period_score_mean: score,
            per_frame_counts: None,
        }
    }

    fn constant_track(stride: usize, frames: usize, l: f64, score: f64) -> PredictionTrack {
        PredictionTrack::new(
            "v",
            stride,
            64,
            vec![FramePrediction::new(1.0, l, score); frames],
        )
    }

    #[test]
    fn subsample_examples() {
        let seq: Vec<usize> = (0..10).collect();
        assert_eq!(subsample(&seq, 1).unwrap(), seq);
        assert_eq!(subsample(&seq, 2).unwrap(), vec![0, 2, 4, 6, 8]);
        assert_eq!(subsample(&seq, 3).unwrap().len(), 4);
        assert!(subsample(&seq, 0).is_err());
        assert!(subsample::<usize>(&[], 2).is_err());
    }

    #[test]
    fn select_examples() {
        assert_eq!(
            select_speed(&[est(3, 0.1, 1.0)], 0.0)
                .unwrap()
                .chosen_stride,
            3
        );

        let c: Vec<_> = [0.3, 0.9, 0.9, 0.5, 0.4]
            .iter()
            .enumerate()
            .map(|(i, &s)| est(i + 1, s, 1.0))
            .collect();
        let sel = select_speed(&c, 0.0).unwrap();
        assert_eq!(sel.chosen_stride, 2);
        assert_eq!(sel.scores.len(), 5);

        let flat: Vec<_> = (1..=5).map(|s| est(s, 0.7, 1.0)).collect();
        assert_eq!(select_speed(&flat, 0.0).unwrap().chosen_stride, 1);

        assert!(select_speed(&[], 0.0).is_err());
        assert!(select_speed(&[est(2, 0.5, 1.0), est(2, 0.6, 1.0)], 0.0).is_err());
    }

    #[test]
    fn tolerance_prefers_smaller_stride() {
        let c = vec![est(1, 0.95, 10.0), est(5, 0.96, 3.0)];
        assert_eq!(select_speed(&c, 0.0).unwrap().chosen_stride, 5);
        assert_eq!(select_speed(&c, 0.02).unwrap().chosen_stride, 1);
    }

    #[test]
    fn default_reach_is_160_frames() {
        assert_eq!(max_representable_period(64, &DEFAULT_STRIDES), 160);
        // A 100-frame period fits under W/2 = 32 only at strides 4 and 5.
        let fits: Vec<usize> = DEFAULT_STRIDES
            .iter()
            .copied()
            .filter(|&s| 100.0 / s as f64 <= 32.0)
            .collect();
        assert_eq!(fits, vec![4, 5]);
    }

    #[test]
    fn multispeed_returns_chosen_count() {
        let tracks = vec![
            constant_track(1, 128, 8.0, 0.6),
            constant_track(2, 64, 4.0, 0.9),
        ];
        let speed = SpeedConfig::new(vec![1, 2]);
        let out = multispeed_count(&tracks, &CountingConfig::segmented(), &speed).unwrap();
        assert_eq!(out.selection.chosen_stride, 2);
        assert_eq!(out.estimate.count, 16.0);
        assert_eq!(out.estimate.speed_chosen, 2);
    }

    #[test]
    fn multispeed_errors() {
        let cfg = CountingConfig::segmented();
        let speed = SpeedConfig::new(vec![1, 2]);
        assert!(multispeed_count(&[constant_track(1, 64, 8.0, 1.0)], &cfg, &speed).is_err());

        let mut other = constant_track(2, 64, 8.0, 1.0);
        other.video_id = "w".into();
        assert!(multispeed_count(&[constant_track(1, 64, 8.0, 1.0), other], &cfg, &speed).is_err());

        let mut wide = constant_track(2, 64, 8.0, 1.0);
        wide.window_size = 32;
        assert!(multispeed_count(&[constant_track(1, 64, 8.0, 1.0), wide], &cfg, &speed).is_err());

        assert!(multispeed_count(&[], &cfg, &speed).is_err());
        assert!(multispeed_count(
            &[constant_track(1, 64, 8.0, 1.0)],
            &cfg,
            &SpeedConfig::new(vec![1, 1])
        )
        .is_err());
    }
}
