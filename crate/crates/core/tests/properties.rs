use ndarray::Array2;
use proptest::prelude::*;
use proptest::sample::subsequence;

use repcount::counting::{
    count_track, per_frame_count, CountEstimate, CountingConfig, FramePrediction, PredictionTrack,
};
use repcount::estimator::{
    generate_dataset, predict_track, synth_periodic, tsm, EmbeddingSequence, EstimatorConfig,
    SynthDatasetConfig, SynthSpec,
};
use repcount::io::{
    read_estimates, read_predictions, write_estimates, write_predictions, DatasetMode,
    EstimateRecord, PredictionRecord,
};
use repcount::metrics::{mae, oboa, oboe, CountPair, MetricConfig};
use repcount::multispeed::{multispeed_count, select_speed, SpeedConfig, SpeedScore};

fn pairs_strategy(gt_min: f64) -> impl Strategy<Value = Vec<CountPair>> {
    prop::collection::vec((gt_min..200.0f64, 0.0..200.0f64), 1..50).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (gt, pred))| CountPair::new(format!("v{i}"), gt, pred))
            .collect()
    })
}

fn frame() -> impl Strategy<Value = FramePrediction> {
    (0.0..=1.0f64, 2.0..=32.0f64, 0.0..=1.0f64).prop_map(|(p, l, s)| FramePrediction::new(p, l, s))
}

fn track_strategy() -> impl Strategy<Value = PredictionTrack> {
    prop::collection::vec(frame(), 1..300).prop_map(|f| PredictionTrack::new("v", 1, 64, f))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn oboe_is_exact_complement(pairs in pairs_strategy(0.0), round in any::<bool>()) {
        let cfg = MetricConfig { alpha: 0.1, round_predictions: round };
        let a = oboa(&pairs, &cfg).unwrap();
        let e = oboe(&pairs, &cfg).unwrap();
        prop_assert_eq!(e.to_bits(), (1.0 - a).to_bits());
        prop_assert_eq!(a + e, 1.0);
    }

    #[test]
    fn metrics_ignore_order(pairs in pairs_strategy(1.0), seed in any::<u64>()) {
        let mut shuffled = pairs.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let cfg = MetricConfig::default();
        prop_assert_eq!(oboa(&pairs, &cfg).unwrap(), oboa(&shuffled, &cfg).unwrap());
        prop_assert!(close(mae(&pairs, &cfg).unwrap(), mae(&shuffled, &cfg).unwrap(), 1e-14));
    }

    #[test]
    fn mae_is_non_increasing_in_alpha(pairs in pairs_strategy(0.5), a in 0.0..10.0f64, b in 0.0..10.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let m_lo = mae(&pairs, &MetricConfig::with_alpha(lo)).unwrap();
        let m_hi = mae(&pairs, &MetricConfig::with_alpha(hi)).unwrap();
        prop_assert!(m_hi <= m_lo * (1.0 + 1e-15));
    }

    #[test]
    fn boundary_is_inclusive(gts in prop::collection::vec(1u32..200, 1..50), signs in prop::collection::vec(any::<bool>(), 50)) {
        let pairs: Vec<_> = gts
            .iter()
            .zip(&signs)
            .enumerate()
            .map(|(i, (&g, &up))| {
                let g = g as f64;
                CountPair::new(format!("v{i}"), g, if up { g + 1.0 } else { g - 1.0 })
            })
            .collect();
        prop_assert_eq!(oboa(&pairs, &MetricConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn gate_is_monotone_in_tau(track in track_strategy(), t1 in 0.0..1.0f64, t2 in 0.0..1.0f64) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let c_lo = count_track(&track, &CountingConfig::gated(lo)).unwrap().count;
        let c_hi = count_track(&track, &CountingConfig::gated(hi)).unwrap().count;
        prop_assert!(c_hi <= c_lo + 1e-12);
    }

    #[test]
    fn tau_zero_matches_segmented_on_positive_scores(
        frames in prop::collection::vec((1e-6..=1.0f64, 2.0..=32.0f64, 1e-6..=1.0f64), 1..300)
    ) {
        let frames = frames.into_iter().map(|(p, l, s)| FramePrediction::new(p, l, s)).collect();
        let track = PredictionTrack::new("v", 1, 64, frames);
        let gated = count_track(&track, &CountingConfig::gated(0.0)).unwrap();
        let seg = count_track(&track, &CountingConfig::segmented()).unwrap();
        prop_assert_eq!(gated.count, seg.count);
    }

    #[test]
    fn count_is_additive_over_windows(track in track_strategy(), tau in 0.0..1.0f64) {
        let cfg = CountingConfig::gated(tau);
        let whole = count_track(&track, &cfg).unwrap().count;
        let parts: f64 = track
            .frames
            .chunks(track.window_size)
            .map(|w| {
                let sub = PredictionTrack::new("v", 1, 64, w.to_vec());
                count_track(&sub, &cfg).unwrap().count
            })
            .sum();
        prop_assert!(close(whole, parts, 1e-12));
        let direct: f64 = track.frames.iter().map(|f| per_frame_count(f, &cfg).unwrap()).sum();
        prop_assert!(close(whole, direct, 1e-12));
    }

    #[test]
    fn speed_choice_ignores_candidate_order(
        scores in prop::collection::vec(0.0..1.0f64, 1..8),
        order in any::<u64>(),
        tol in prop_oneof![Just(0.0), Just(0.02), 0.0..0.2f64],
    ) {
        let cands: Vec<CountEstimate> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| CountEstimate {
                video_id: "v".into(),
                count: i as f64,
                speed_chosen: i + 1,
                period_score_mean: s,
                per_frame_counts: None,
            })
            .collect();
        let mut rotated = cands.clone();
        rotated.rotate_left(order as usize % cands.len());
        rotated.reverse();
        let a = select_speed(&cands, tol).unwrap();
        let b = select_speed(&rotated, tol).unwrap();
        prop_assert_eq!(a.chosen_stride, b.chosen_stride);
        prop_assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn clearly_worse_candidate_never_changes_choice(
        scores in prop::collection::vec(0.0..1.0f64, 1..6),
        extra in 0.0..1.0f64,
        tol in prop_oneof![Just(0.0), Just(0.02)],
    ) {
        let make = |stride: usize, s: f64| CountEstimate {
            video_id: "v".into(),
            count: 1.0,
            speed_chosen: stride,
            period_score_mean: s,
            per_frame_counts: None,
        };
        let cands: Vec<_> = scores.iter().enumerate().map(|(i, &s)| make(i + 2, s)).collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assume!(extra < best - tol);
        let before = select_speed(&cands, tol).unwrap().chosen_stride;
        let mut more = cands;
        more.push(make(1, extra));
        prop_assert_eq!(select_speed(&more, tol).unwrap().chosen_stride, before);
    }

    #[test]
    fn prediction_records_round_trip(records in prop::collection::vec(record_strategy(), 1..20)) {
        let mut records = records;
        for (i, r) in records.iter_mut().enumerate() {
            r.video_id = format!("{}-{i}", r.video_id);
        }
        let mut buf = Vec::new();
        write_predictions(&mut buf, &records).unwrap();
        prop_assert_eq!(read_predictions(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn estimate_records_round_trip(count in 0.0..1e6f64, score in 0.0..=1.0f64, tau in 0.0..1.0f64, k in 1usize..6) {
        let rec = EstimateRecord {
            video_id: "v\"quoted\"\n".into(),
            count,
            speed_chosen: k,
            period_score_mean: score,
            window_size: 64,
            mode: DatasetMode::Gapped,
            tau,
            tie_tolerance: 0.02,
            speed_scores: (1..=k).map(|s| SpeedScore { stride: s, period_score_mean: score / s as f64, count: count * s as f64 }).collect(),
            per_frame_counts: Some(vec![count / 3.0, 0.0]),
        };
        let mut buf = Vec::new();
        write_estimates(&mut buf, std::slice::from_ref(&rec)).unwrap();
        prop_assert_eq!(read_estimates(buf.as_slice()).unwrap(), vec![rec]);
    }
}

fn record_strategy() -> impl Strategy<Value = PredictionRecord> {
    (
        1usize..6,
        prop::sample::select(vec![4usize, 16, 64, 128]),
        1usize..80,
    )
        .prop_flat_map(|(speed, w, n)| {
            let half = (w / 2) as f64;
            (
                "[a-z0-9_]{1,12}",
                prop::collection::vec(0.0..=1.0f64, n),
                prop::collection::vec(2.0..=half, n),
                prop::collection::vec(0.0..=1.0f64, n),
            )
                .prop_map(move |(id, p, l, s)| PredictionRecord {
                    video_id: id,
                    speed,
                    window_size: w,
                    periodicity: p,
                    period_length: l,
                    period_score: s,
                })
        })
}

fn embeddings(t: usize, d: usize, values: &[f64]) -> EmbeddingSequence {
    EmbeddingSequence::new(
        "e",
        Array2::from_shape_vec((t, d), values.to_vec()).unwrap(),
    )
    .unwrap()
}

/// Householder reflection `I − 2vvᵀ/‖v‖²`, an orthogonal matrix.
fn reflection(v: &[f64]) -> Array2<f64> {
    let n2: f64 = v.iter().map(|x| x * x).sum();
    Array2::from_shape_fn((v.len(), v.len()), |(i, j)| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - 2.0 * v[i] * v[j] / n2
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tsm_is_symmetric_non_positive_with_zero_diagonal(
        (t, d, values) in (2usize..24, 1usize..6).prop_flat_map(|(t, d)| {
            (Just(t), Just(d), prop::collection::vec(-5.0..5.0f64, t * d))
        })
    ) {
        let s = tsm(&embeddings(t, d, &values)).unwrap();
        for i in 0..t {
            prop_assert_eq!(s[[i, i]], 0.0);
            for j in 0..t {
                prop_assert_eq!(s[[i, j]].to_bits(), s[[j, i]].to_bits());
                prop_assert!(s[[i, j]] <= 0.0);
            }
        }
    }

    #[test]
    fn tsm_is_invariant_to_rotation_and_translation(
        (t, d, values, axis, shift) in (2usize..20, 2usize..6).prop_flat_map(|(t, d)| {
            (
                Just(t),
                Just(d),
                prop::collection::vec(-3.0..3.0f64, t * d),
                prop::collection::vec(0.1..1.0f64, d),
                prop::collection::vec(-10.0..10.0f64, d),
            )
        })
    ) {
        let e = embeddings(t, d, &values);
        let mut moved = e.data.dot(&reflection(&axis));
        for mut row in moved.rows_mut() {
            row.iter_mut().zip(&shift).for_each(|(x, s)| *x += s);
        }
        let a = tsm(&e).unwrap();
        let b = tsm(&EmbeddingSequence::new("e", moved).unwrap()).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn generation_and_prediction_are_deterministic(seed in any::<u64>()) {
        let cfg = SynthDatasetConfig { videos: 3, seed, frames: (128, 256), period: (2, 40), ..SynthDatasetConfig::default() };
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        prop_assert_eq!(&a, &b);
        let est = EstimatorConfig::default();
        for v in &a {
            let x = predict_track(&v.embeddings, 2, 64, &est).unwrap();
            let y = predict_track(&v.embeddings, 2, 64, &est).unwrap();
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn count_is_robust_to_time_shift(period in 4usize..120, shift in 0.0..1.0f64, frames in 400usize..900) {
        let count_at = |phase: f64| {
            let mut spec = SynthSpec::new(frames, period, 8);
            spec.phase = phase * period as f64;
            let (emb, truth) = synth_periodic(&spec).unwrap();
            let speed = SpeedConfig::default();
            let tracks: Vec<_> = speed
                .strides
                .iter()
                .map(|&s| predict_track(&emb, s, 64, &EstimatorConfig::default()).unwrap())
                .collect();
            let out = multispeed_count(&tracks, &CountingConfig::segmented(), &speed).unwrap();
            (out.estimate.count, truth.gt_count)
        };
        let (c0, gt) = count_at(0.0);
        let (c1, _) = count_at(shift);
        prop_assert!((c0 - c1).abs() <= 1.0, "shift {shift}: {c0} vs {c1}");
        prop_assert!((c0 - gt).abs() <= 1.0, "count {c0} vs truth {gt}");
    }
}

#[test]
fn subsequence_of_pairs_keeps_oracle_agreement() {
    // Spot-check on a fixed set: any subsequence's metrics equal a direct
    // recomputation.
    let pairs: Vec<_> = (0..20)
        .map(|i| CountPair::new(format!("v{i}"), (i % 7 + 1) as f64, (i % 5) as f64 * 1.5))
        .collect();
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    runner
        .run(&subsequence(pairs, 1..20), |sub| {
            let n = sub.len() as f64;
            let hits = sub
                .iter()
                .filter(|p| (p.gt_count - p.pred_count).abs() <= 1.0)
                .count() as f64;
            let m: f64 = sub
                .iter()
                .map(|p| (p.gt_count - p.pred_count).abs() / p.gt_count)
                .sum::<f64>()
                / n;
            let cfg = MetricConfig::default();
            prop_assert_eq!(oboa(&sub, &cfg).unwrap(), hits / n);
            prop_assert!((mae(&sub, &cfg).unwrap() - m).abs() <= 1e-12);
            Ok(())
        })
        .unwrap();
}
