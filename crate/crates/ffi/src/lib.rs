//! C ABI over the `repcount` engine.
//!
//! Objects are opaque handles created by `*_new` and released by the
//! matching `*_free`. Fallible functions return an [`RcStatus`]; on failure
//! [`rc_last_error`] describes the problem. The message is thread-local and
//! stays valid until the next failing call on the same thread.
//!
//! No function unwinds across the boundary: a panic is caught and reported
//! as [`RcStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use repcount::counting::{
    count_track, per_frame_count, CountingConfig, CountingMode, FramePrediction, PredictionTrack,
    TailPolicy,
};
use repcount::metrics::{build_report, CountPair, MetricConfig};
use repcount::multispeed::{multispeed_count, SpeedConfig};
use repcount::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DivisionByZero = 3,
    EmptySet = 4,
    DuplicateId = 5,
    TrackTooShort = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RcCountingMode {
    /// Every frame counts.
    Segmented = 0,
    /// A frame counts only when sqrt(periodicity * period_score) > tau.
    Gated = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcCountingOptions {
    pub mode: RcCountingMode,
    pub tau: f64,
    /// Drop frames after the last full window instead of counting them.
    pub drop_tail: bool,
    /// With `drop_tail`, pad a track shorter than one window.
    pub pad_short: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RcMetrics {
    pub n_videos: usize,
    pub oboa: f64,
    pub oboe: f64,
    pub mae: f64,
    pub alpha_used: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RcCountResult {
    pub count: f64,
    pub period_score_mean: f64,
    pub speed_chosen: usize,
}

/// Ground-truth and predicted counts accumulated one video at a time.
pub struct RcEvalSet {
    pairs: Vec<CountPair>,
}

/// Per-frame predictions of one video at one stride.
pub struct RcTrack {
    track: PredictionTrack,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).expect("interior NULs replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> RcStatus {
    match err {
        Error::DivisionByZero { .. } => RcStatus::DivisionByZero,
        Error::EmptyEvaluationSet => RcStatus::EmptySet,
        Error::DuplicateVideoId(_) => RcStatus::DuplicateId,
        Error::TrackTooShort { .. } => RcStatus::TrackTooShort,
        Error::AtAlpha { source, .. } | Error::InFile { source, .. } => status_of(source),
        _ => RcStatus::InvalidArgument,
    }
}

struct Failure(RcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RcStatus::NullPointer, format!("{what} is NULL"))
}

/// Runs `body`, translating errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> RcStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RcStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            RcStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            RcStatus::InvalidArgument,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn read_slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn counting_config(o: &RcCountingOptions) -> CountingConfig {
    CountingConfig {
        tau: o.tau,
        mode: match o.mode {
            RcCountingMode::Segmented => CountingMode::Segmented,
            RcCountingMode::Gated => CountingMode::Gated,
        },
        pad_short: o.pad_short,
        tail: if o.drop_tail {
            TailPolicy::Drop
        } else {
            TailPolicy::Partial
        },
        keep_per_frame: false,
    }
}

/// Message of the last failed call on this thread, or NULL if none.
#[no_mangle]
pub extern "C" fn rc_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Segmented mode, tau 0.5, trailing partial window counted.
#[no_mangle]
pub extern "C" fn rc_counting_options_default() -> RcCountingOptions {
    let d = CountingConfig::default();
    RcCountingOptions {
        mode: RcCountingMode::Segmented,
        tau: d.tau,
        drop_tail: false,
        pad_short: false,
    }
}

#[no_mangle]
pub extern "C" fn rc_eval_set_new() -> *mut RcEvalSet {
    Box::into_raw(Box::new(RcEvalSet { pairs: Vec::new() }))
}

/// # Safety
/// `set` must come from [`rc_eval_set_new`] and not be used afterwards.
/// NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn rc_eval_set_free(set: *mut RcEvalSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Adds one video. Values are validated when the set is evaluated.
///
/// # Safety
/// `set` must be a live handle and `video_id` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rc_eval_set_push(
    set: *mut RcEvalSet,
    video_id: *const c_char,
    gt_count: f64,
    pred_count: f64,
) -> RcStatus {
    guard(|| {
        let set = set.as_mut().ok_or_else(|| null("set"))?;
        let id = read_str(video_id, "video_id")?;
        set.pairs.push(CountPair::new(id, gt_count, pred_count));
        Ok(())
    })
}

/// Number of videos in the set; 0 for NULL.
///
/// # Safety
/// `set` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rc_eval_set_len(set: *const RcEvalSet) -> usize {
    set.as_ref().map_or(0, |s| s.pairs.len())
}

/// OBOA, OBOE and MAE over the set with the given α.
///
/// # Safety
/// `set` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rc_evaluate(
    set: *const RcEvalSet,
    alpha: f64,
    round_predictions: bool,
    out: *mut RcMetrics,
) -> RcStatus {
    guard(|| {
        let set = set.as_ref().ok_or_else(|| null("set"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let config = MetricConfig {
            alpha,
            round_predictions,
        };
        config.validate()?;
        let r = build_report(&set.pairs, &config)?;
        *out = RcMetrics {
            n_videos: r.n_videos,
            oboa: r.oboa,
            oboe: r.oboe,
            mae: r.mae,
            alpha_used: r.alpha_used,
        };
        Ok(())
    })
}

/// Creates an empty track, or returns NULL with the last error set.
///
/// # Safety
/// `video_id` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rc_track_new(
    video_id: *const c_char,
    speed: usize,
    window_size: usize,
) -> *mut RcTrack {
    let mut handle = ptr::null_mut();
    guard(|| {
        let id = read_str(video_id, "video_id")?;
        let track = PredictionTrack::new(id, speed, window_size, Vec::new());
        track.validate()?;
        handle = Box::into_raw(Box::new(RcTrack { track }));
        Ok(())
    });
    handle
}

/// # Safety
/// `track` must come from [`rc_track_new`] and not be used afterwards.
/// NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn rc_track_free(track: *mut RcTrack) {
    if !track.is_null() {
        drop(Box::from_raw(track));
    }
}

/// Appends `n` frames given as three parallel arrays. Nothing is appended
/// if any frame is out of range.
///
/// # Safety
/// `track` must be a live handle and each array must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn rc_track_push_frames(
    track: *mut RcTrack,
    periodicity: *const f64,
    period_len: *const f64,
    period_score: *const f64,
    n: usize,
) -> RcStatus {
    guard(|| {
        let track = track.as_mut().ok_or_else(|| null("track"))?;
        let p = read_slice(periodicity, n, "periodicity")?;
        let l = read_slice(period_len, n, "period_len")?;
        let s = read_slice(period_score, n, "period_score")?;
        let max = (track.track.window_size / 2) as f64;
        let start = track.track.frames.len();
        let mut frames = Vec::with_capacity(n);
        for i in 0..n {
            let f = FramePrediction::new(p[i], l[i], s[i]);
            f.validate(Some(max)).map_err(|e| {
                Failure(
                    RcStatus::InvalidArgument,
                    format!("frame {}: {e}", start + i),
                )
            })?;
            frames.push(f);
        }
        track.track.frames.extend(frames);
        Ok(())
    })
}

/// # Safety
/// `track` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rc_track_len(track: *const RcTrack) -> usize {
    track.as_ref().map_or(0, |t| t.track.frames.len())
}

/// Contribution of one frame to the count: `1/period_len` when counted,
/// else 0.
///
/// # Safety
/// `options` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rc_per_frame_count(
    periodicity: f64,
    period_len: f64,
    period_score: f64,
    options: *const RcCountingOptions,
    out: *mut f64,
) -> RcStatus {
    guard(|| {
        let options = options.as_ref().ok_or_else(|| null("options"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let config = counting_config(options);
        config.validate()?;
        *out = per_frame_count(
            &FramePrediction::new(periodicity, period_len, period_score),
            &config,
        )?;
        Ok(())
    })
}

/// Counts a single track.
///
/// # Safety
/// `track`, `options` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rc_count_track(
    track: *const RcTrack,
    options: *const RcCountingOptions,
    out: *mut RcCountResult,
) -> RcStatus {
    guard(|| {
        let track = track.as_ref().ok_or_else(|| null("track"))?;
        let options = options.as_ref().ok_or_else(|| null("options"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let e = count_track(&track.track, &counting_config(options))?;
        *out = RcCountResult {
            count: e.count,
            period_score_mean: e.period_score_mean,
            speed_chosen: e.speed_chosen,
        };
        Ok(())
    })
}

/// Counts each of `strides` and reports the stride with the highest mean
/// period score. Scores within `tie_tolerance` of the best go to the lowest
/// stride. `tracks` must hold one track per stride, all of the same video.
///
/// # Safety
/// `tracks` must point to `n_tracks` live handles and `strides` to
/// `n_strides` values; `options` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rc_multispeed_count(
    tracks: *const *const RcTrack,
    n_tracks: usize,
    strides: *const usize,
    n_strides: usize,
    tie_tolerance: f64,
    options: *const RcCountingOptions,
    out: *mut RcCountResult,
) -> RcStatus {
    guard(|| {
        let handles = read_slice(tracks, n_tracks, "tracks")?;
        let strides = read_slice(strides, n_strides, "strides")?;
        let options = options.as_ref().ok_or_else(|| null("options"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let owned = handles
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                h.as_ref()
                    .map(|t| t.track.clone())
                    .ok_or_else(|| null(&format!("tracks[{i}]")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let speed = SpeedConfig {
            strides: strides.to_vec(),
            tie_tolerance,
        };
        let outcome = multispeed_count(&owned, &counting_config(options), &speed)?;
        *out = RcCountResult {
            count: outcome.estimate.count,
            period_score_mean: outcome.estimate.period_score_mean,
            speed_chosen: outcome.estimate.speed_chosen,
        };
        Ok(())
    })
}
