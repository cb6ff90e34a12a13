use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{read_jsonl, write_jsonl, DatasetMode};
use crate::counting::{unit_interval, validate_window_size, FramePrediction, PredictionTrack};
use crate::error::{Error, Result};
use crate::estimator::EmbeddingSequence;
use crate::multispeed::{MultispeedOutcome, SpeedScore};

/// One prediction track serialized column-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub video_id: String,
    pub speed: usize,
    pub window_size: usize,
    pub periodicity: Vec<f64>,
    pub period_length: Vec<f64>,
    pub period_score: Vec<f64>,
}

impl PredictionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.video_id.is_empty() {
            return Err(Error::invalid("video_id", "must be non-empty"));
        }
        if self.speed < 1 {
            return Err(Error::invalid("speed", "must be >= 1"));
        }
        validate_window_size(self.window_size)?;
        let n = self.periodicity.len();
        if n == 0 {
            return Err(Error::invalid(
                "periodicity",
                "must hold at least one frame",
            ));
        }
        if self.period_length.len() != n || self.period_score.len() != n {
            return Err(Error::invalid(
                "arrays",
                format!(
                    "length mismatch: periodicity {n}, period_length {}, period_score {}",
                    self.period_length.len(),
                    self.period_score.len()
                ),
            ));
        }
        let max = (self.window_size / 2) as f64;
        for i in 0..n {
            let at = |e: Error| Error::invalid("frame", format!("frame {i}: {e}"));
            unit_interval("periodicity", self.periodicity[i]).map_err(at)?;
            unit_interval("period_score", self.period_score[i]).map_err(at)?;
            let l = self.period_length[i];
            if !(2.0..=max).contains(&l) {
                return Err(at(Error::invalid(
                    "period_length",
                    format!(
                        "{l} is outside [2, {max}] for window_size {}",
                        self.window_size
                    ),
                )));
            }
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.periodicity.len()
    }

    pub fn to_track(&self) -> PredictionTrack {
        let frames = (0..self.frames())
            .map(|i| {
                FramePrediction::new(
                    self.periodicity[i],
                    self.period_length[i],
                    self.period_score[i],
                )
            })
            .collect();
        PredictionTrack::new(self.video_id.clone(), self.speed, self.window_size, frames)
    }
}

impl From<&PredictionTrack> for PredictionRecord {
    fn from(t: &PredictionTrack) -> Self {
        Self {
            video_id: t.video_id.clone(),
            speed: t.speed,
            window_size: t.window_size,
            periodicity: t.frames.iter().map(|f| f.periodicity).collect(),
            period_length: t.frames.iter().map(|f| f.period_len).collect(),
            period_score: t.frames.iter().map(|f| f.period_score).collect(),
        }
    }
}

/// Reads a prediction stream. At most one record per `(video_id, speed)`.
pub fn read_predictions(reader: impl BufRead) -> Result<Vec<PredictionRecord>> {
    read_jsonl(
        reader,
        PredictionRecord::validate,
        |r: &PredictionRecord| (r.video_id.clone(), r.speed),
    )
}

/// Validates every record, then writes them one per line.
pub fn write_predictions(writer: impl Write, records: &[PredictionRecord]) -> Result<()> {
    write_jsonl(writer, records, PredictionRecord::validate)
}

/// Frame embeddings of one video, `rows` being `T` vectors of `dims` reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingRecord {
    pub video_id: String,
    pub dims: usize,
    pub rows: Vec<Vec<f64>>,
}

impl EmbeddingRecord {
    pub fn validate(&self) -> Result<()> {
        if self.video_id.is_empty() {
            return Err(Error::invalid("video_id", "must be non-empty"));
        }
        if self.dims == 0 || self.rows.is_empty() {
            return Err(Error::invalid(
                "rows",
                "need at least one row of at least one dim",
            ));
        }
        for (t, row) in self.rows.iter().enumerate() {
            if row.len() != self.dims {
                return Err(Error::invalid(
                    "rows",
                    format!("row {t} has {} values, dims is {}", row.len(), self.dims),
                ));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    "rows",
                    format!("row {t}: non-finite value {v}"),
                ));
            }
        }
        Ok(())
    }

    pub fn to_sequence(&self) -> Result<EmbeddingSequence> {
        self.validate()?;
        let flat: Vec<f64> = self.rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((self.rows.len(), self.dims), flat)
            .expect("row lengths checked");
        EmbeddingSequence::new(self.video_id.clone(), data)
    }
}

impl From<&EmbeddingSequence> for EmbeddingRecord {
    fn from(seq: &EmbeddingSequence) -> Self {
        Self {
            video_id: seq.video_id.clone(),
            dims: seq.dims(),
            rows: seq.data.outer_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

pub fn read_embeddings(reader: impl BufRead) -> Result<Vec<EmbeddingRecord>> {
    read_jsonl(reader, EmbeddingRecord::validate, |r: &EmbeddingRecord| {
        r.video_id.clone()
    })
}

pub fn write_embeddings(writer: impl Write, records: &[EmbeddingRecord]) -> Result<()> {
    write_jsonl(writer, records, EmbeddingRecord::validate)
}

/// A video's count after speed selection, with the settings that produced
/// it so downstream reports can echo them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateRecord {
    pub video_id: String,
    pub count: f64,
    pub speed_chosen: usize,
    pub period_score_mean: f64,
    pub window_size: usize,
    pub mode: DatasetMode,
    pub tau: f64,
    pub tie_tolerance: f64,
    /// Every stride that was compared, ordered by stride.
    pub speed_scores: Vec<SpeedScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_frame_counts: Option<Vec<f64>>,
}

impl EstimateRecord {
    pub fn from_outcome(
        outcome: &MultispeedOutcome,
        window_size: usize,
        mode: DatasetMode,
        tau: f64,
        tie_tolerance: f64,
    ) -> Self {
        let e = &outcome.estimate;
        Self {
            video_id: e.video_id.clone(),
            count: e.count,
            speed_chosen: e.speed_chosen,
            period_score_mean: e.period_score_mean,
            window_size,
            mode,
            tau,
            tie_tolerance,
            speed_scores: outcome.selection.scores.clone(),
            per_frame_counts: e.per_frame_counts.clone(),
        }
    }

    pub fn strides(&self) -> Vec<usize> {
        self.speed_scores.iter().map(|s| s.stride).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.video_id.is_empty() {
            return Err(Error::invalid("video_id", "must be non-empty"));
        }
        if !self.count.is_finite() || self.count < 0.0 {
            return Err(Error::invalid(
                "count",
                format!("{} must be finite and >= 0", self.count),
            ));
        }
        validate_window_size(self.window_size)?;
        unit_interval("period_score_mean", self.period_score_mean)?;
        if !self.tau.is_finite() || self.tau < 0.0 {
            return Err(Error::invalid(
                "tau",
                format!("{} must be finite and >= 0", self.tau),
            ));
        }
        if !self.tie_tolerance.is_finite() || self.tie_tolerance < 0.0 {
            return Err(Error::invalid("tie_tolerance", "must be finite and >= 0"));
        }
        let strides = self.strides();
        if strides.windows(2).any(|w| w[0] >= w[1]) || strides.contains(&0) {
            return Err(Error::invalid(
                "speed_scores",
                format!("strides {strides:?} must be positive and strictly increasing"),
            ));
        }
        if !strides.contains(&self.speed_chosen) {
            return Err(Error::invalid(
                "speed_chosen",
                format!(
                    "{} is not among the compared strides {strides:?}",
                    self.speed_chosen
                ),
            ));
        }
        Ok(())
    }
}

pub fn read_estimates(reader: impl BufRead) -> Result<Vec<EstimateRecord>> {
    read_jsonl(reader, EstimateRecord::validate, |r: &EstimateRecord| {
        r.video_id.clone()
    })
}

pub fn write_estimates(writer: impl Write, records: &[EstimateRecord]) -> Result<()> {
    write_jsonl(writer, records, EstimateRecord::validate)
}
