//! Synthetic repeating-motion embeddings with known ground truth.
//!
//! A periodic frame `t` is embedded on a closed curve
//!
//! ```text
//! [cos θ, sin θ, ½cos 2θ, ½sin 2θ, ⅓cos 3θ, ⅓sin 3θ, 0, …],  θ = 2π(t + phase)/p
//! ```
//!
//! truncated or zero-padded to `D` dimensions. Gap frames follow a straight
//! drift that starts at distance 4 from the origin and moves one unit per
//! frame perpendicular to its offset, so it never returns close to the
//! periodic curve or to itself. Gaussian noise is added to every entry.

use std::f64::consts::TAU;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::EmbeddingSequence;
use crate::error::{Error, Result};

const HARMONIC_AMPLITUDES: [f64; 3] = [1.0, 1.0 / 2.0, 1.0 / 3.0];
const GAP_OFFSET: f64 = 4.0;
const GAP_DRIFT_PER_FRAME: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub video_id: String,
    pub total_frames: usize,
    /// Period in original frames.
    pub period: usize,
    pub dims: usize,
    pub noise_sigma: f64,
    /// Disjoint half-open `[start, end)` frame intervals of non-periodic content.
    pub gaps: Vec<(usize, usize)>,
    pub seed: u64,
    /// Phase shift in frames.
    #[serde(default)]
    pub phase: f64,
}

impl SynthSpec {
    /// Noiseless, gap-free spec.
    pub fn new(total_frames: usize, period: usize, dims: usize) -> Self {
        Self {
            video_id: "synth".into(),
            total_frames,
            period,
            dims,
            noise_sigma: 0.0,
            gaps: Vec::new(),
            seed: 0,
            phase: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_frames == 0 {
            return Err(Error::invalid("total_frames", "must be >= 1"));
        }
        if self.period < 2 {
            return Err(Error::invalid(
                "period",
                format!("{} must be >= 2", self.period),
            ));
        }
        if self.dims < 2 {
            return Err(Error::invalid(
                "dims",
                format!("{} must be >= 2", self.dims),
            ));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::invalid("noise_sigma", "must be finite and >= 0"));
        }
        if !self.phase.is_finite() {
            return Err(Error::invalid("phase", "must be finite"));
        }
        let mut gaps = self.gaps.clone();
        gaps.sort_unstable();
        for &(start, end) in &gaps {
            if start >= end || end > self.total_frames {
                return Err(Error::invalid(
                    "gaps",
                    format!(
                        "[{start}, {end}) is empty or outside [0, {})",
                        self.total_frames
                    ),
                ));
            }
        }
        if let Some(w) = gaps.windows(2).find(|w| w[1].0 < w[0].1) {
            return Err(Error::invalid(
                "gaps",
                format!("[{}, {}) overlaps [{}, {})", w[0].0, w[0].1, w[1].0, w[1].1),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub gt_count: f64,
    pub periodic_mask: Vec<bool>,
}

fn periodic_point(t: f64, period: f64, dims: usize, out: &mut [f64]) {
    out.fill(0.0);
    let theta = TAU * t / period;
    for (h, amp) in HARMONIC_AMPLITUDES.iter().enumerate() {
        let k = (h + 1) as f64;
        let (sin, cos) = (k * theta).sin_cos();
        if 2 * h < dims {
            out[2 * h] = amp * cos;
        }
        if 2 * h + 1 < dims {
            out[2 * h + 1] = amp * sin;
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dims: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dims).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Unit vector orthogonal to the unit vector `u`.
fn orthogonal_unit(rng: &mut ChaCha8Rng, u: &[f64]) -> Vec<f64> {
    loop {
        let mut v = random_unit(rng, u.len());
        let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn synth_periodic(spec: &SynthSpec) -> Result<(EmbeddingSequence, SynthTruth)> {
    spec.validate()?;
    let (t_total, d) = (spec.total_frames, spec.dims);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut mask = vec![true; t_total];
    let mut data = Array2::zeros((t_total, d));
    let mut row = vec![0.0; d];
    for t in 0..t_total {
        periodic_point(t as f64 + spec.phase, spec.period as f64, d, &mut row);
        data.row_mut(t).assign(&ndarray::ArrayView1::from(&row[..]));
    }

    let mut gaps = spec.gaps.clone();
    gaps.sort_unstable();
    for &(start, end) in &gaps {
        let offset = random_unit(&mut rng, d);
        let drift = orthogonal_unit(&mut rng, &offset);
        for t in start..end {
            let step = (t - start) as f64 * GAP_DRIFT_PER_FRAME;
            for (k, v) in data.row_mut(t).iter_mut().enumerate() {
                *v = GAP_OFFSET * offset[k] + step * drift[k];
            }
        }
        mask[start..end].fill(false);
    }

    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::invalid("noise_sigma", e.to_string()))?;
    for v in data.iter_mut() {
        *v += noise.sample(&mut rng);
    }

    let periodic = mask.iter().filter(|&&m| m).count();
    let truth = SynthTruth {
        gt_count: periodic as f64 / spec.period as f64,
        periodic_mask: mask,
    };
    let seq = EmbeddingSequence {
        video_id: spec.video_id.clone(),
        data,
    };
    Ok((seq, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    /// Range of the fraction of frames that are gap frames.
    pub fraction: (f64, f64),
    /// Upper bound on the number of gap intervals per video.
    pub max_gaps: usize,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self {
            fraction: (0.3, 0.5),
            max_gaps: 2,
        }
    }
}

/// Parameters for a batch of synthetic videos. All ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDatasetConfig {
    pub videos: usize,
    pub seed: u64,
    pub period: (usize, usize),
    pub frames: (usize, usize),
    /// Each video draws its noise level uniformly from `[0, noise_max]`.
    pub noise_max: f64,
    pub dims: usize,
    /// Every periodic stretch holds at least this many full periods.
    pub min_periods: usize,
    pub gaps: Option<GapConfig>,
}

impl Default for SynthDatasetConfig {
    fn default() -> Self {
        Self {
            videos: 50,
            seed: 0,
            period: (2, 160),
            frames: (128, 1024),
            noise_max: 0.05,
            dims: 8,
            min_periods: 2,
            gaps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub spec: SynthSpec,
    pub embeddings: EmbeddingSequence,
    pub truth: SynthTruth,
}

impl SynthDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let (pmin, pmax) = self.period;
        if pmin < 2 || pmin > pmax {
            return Err(Error::invalid(
                "period",
                format!("bad range [{pmin}, {pmax}]"),
            ));
        }
        let (fmin, fmax) = self.frames;
        if fmin == 0 || fmin > fmax {
            return Err(Error::invalid(
                "frames",
                format!("bad range [{fmin}, {fmax}]"),
            ));
        }
        if self.min_periods == 0 {
            return Err(Error::invalid("min_periods", "must be >= 1"));
        }
        if !self.noise_max.is_finite() || self.noise_max < 0.0 {
            return Err(Error::invalid("noise_max", "must be finite and >= 0"));
        }
        if self.dims < 2 {
            return Err(Error::invalid("dims", "must be >= 2"));
        }
        if let Some(g) = &self.gaps {
            let (lo, hi) = g.fraction;
            if !(0.0 < lo && lo <= hi && hi < 1.0) {
                return Err(Error::invalid(
                    "gap fraction",
                    format!("bad range [{lo}, {hi}]"),
                ));
            }
            if g.max_gaps == 0 {
                return Err(Error::invalid("max_gaps", "must be >= 1"));
            }
        }
        Ok(())
    }

    /// Draws the spec of video `index`. Each video has its own RNG stream,
    /// so a video does not depend on how many others are generated.
    pub fn video_spec(&self, index: usize) -> Result<SynthSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);

        let period = rng.random_range(self.period.0..=self.period.1);
        let noise_sigma = if self.noise_max > 0.0 {
            rng.random_range(0.0..=self.noise_max)
        } else {
            0.0
        };
        let min_stretch = self.min_periods * period;
        let (total_frames, gaps) = match &self.gaps {
            None => {
                let lo = self.frames.0.max(min_stretch);
                if lo > self.frames.1 {
                    return Err(Error::invalid(
                        "frames",
                        format!(
                            "period {period} needs {lo} frames, above the maximum {}",
                            self.frames.1
                        ),
                    ));
                }
                (rng.random_range(lo..=self.frames.1), Vec::new())
            }
            Some(g) => gapped_layout(&mut rng, self, g, period)?,
        };
        Ok(SynthSpec {
            video_id: format!("synth_{index:04}"),
            total_frames,
            period,
            dims: self.dims,
            noise_sigma,
            gaps,
            seed: rng.random(),
            phase: rng.random_range(0.0..period as f64),
        })
    }
}

/// `k` gaps interleaved with `k + 1` periodic stretches, each stretch at
/// least `min_periods` periods long.
fn gapped_layout(
    rng: &mut ChaCha8Rng,
    cfg: &SynthDatasetConfig,
    gaps: &GapConfig,
    period: usize,
) -> Result<(usize, Vec<(usize, usize)>)> {
    let fraction = rng.random_range(gaps.fraction.0..=gaps.fraction.1);
    let stretch = cfg.min_periods * period;
    let needed = |k: usize| {
        let periodic = (k + 1) * stretch;
        ((periodic as f64 / (1.0 - fraction)).ceil() as usize).max(periodic + k)
    };
    let mut k = rng.random_range(1..=gaps.max_gaps);
    while k > 1 && needed(k) > cfg.frames.1 {
        k -= 1;
    }
    let lo = cfg.frames.0.max(needed(k));
    if lo > cfg.frames.1 {
        return Err(Error::invalid(
            "frames",
            format!(
                "period {period} with gaps needs {lo} frames, above the maximum {}",
                cfg.frames.1
            ),
        ));
    }
    let total = rng.random_range(lo..=cfg.frames.1);
    let gap_frames =
        ((fraction * total as f64).round() as usize).clamp(k, total - (k + 1) * stretch);
    let periodic_frames = total - gap_frames;

    let periodic_parts = composition(rng, periodic_frames, k + 1, stretch);
    let gap_parts = composition(rng, gap_frames, k, 1);
    let mut intervals = Vec::with_capacity(k);
    let mut t = 0;
    for i in 0..k {
        t += periodic_parts[i];
        intervals.push((t, t + gap_parts[i]));
        t += gap_parts[i];
    }
    Ok((total, intervals))
}

/// Random split of `total` into `parts` integers, each at least `min`.
fn composition(rng: &mut ChaCha8Rng, total: usize, parts: usize, min: usize) -> Vec<usize> {
    let extra = total - parts * min;
    let mut cuts: Vec<usize> = (0..parts - 1)
        .map(|_| rng.random_range(0..=extra))
        .collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts.into_iter().chain(std::iter::once(extra)) {
        out.push(min + c - prev);
        prev = c;
    }
    out
}

pub fn generate_dataset(config: &SynthDatasetConfig) -> Result<Vec<SynthVideo>> {
    config.validate()?;
    (0..config.videos)
        .map(|i| {
            let spec = config.video_spec(i)?;
            let (embeddings, truth) = synth_periodic(&spec)?;
            Ok(SynthVideo {
                spec,
                embeddings,
                truth,
            })
        })
        .collect()
}
