//! Command-line front end. [`run`] parses arguments, validates every flag
//! before touching the filesystem, computes all outputs in memory and only
//! then writes them.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors, 2 for I/O
//! failures.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::counting::{CountingConfig, TailPolicy, DEFAULT_TAU, DEFAULT_WINDOW_SIZE};
use crate::error::{Error, Result};
use crate::estimator::{
    generate_dataset, predict_track, EstimatorConfig, GapConfig, SynthDatasetConfig,
};
use crate::io::{
    format_alpha, parse_manifest, read_embeddings, read_estimates, read_predictions, read_results,
    render_table, write_embeddings, write_estimates, write_manifest, write_predictions,
    write_results, write_results_json, DatasetMode, EmbeddingRecord, EstimateRecord, ManifestEntry,
    PredictionRecord, ResultsConfig, ResultsDocument,
};
use crate::metrics::{build_report, mae, CountPair, MetricConfig};
use crate::multispeed::{multispeed_count, SpeedConfig, DEFAULT_TIE_TOLERANCE};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "repcount",
    version,
    about = "Repetition-count evaluation engine"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic periodic embeddings and a manifest.
    Synth(SynthArgs),
    /// Run the reference estimator on every stride of every manifest video.
    Predict(PredictArgs),
    /// Count repetitions with multi-speed selection.
    Count(CountArgs),
    /// Score count estimates against the manifest's ground truth.
    Eval(EvalArgs),
    /// Tabulate MAE over several α values.
    AuditAlpha(AuditArgs),
    /// Render results documents as one table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Segmented,
    Gapped,
}

impl From<ModeArg> for DatasetMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Segmented => DatasetMode::Segmented,
            ModeArg::Gapped => DatasetMode::Gapped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TailArg {
    Partial,
    Drop,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving manifest.csv and embeddings.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub videos: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Segmented)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 2)]
    pub period_min: usize,
    #[arg(long, default_value_t = 160)]
    pub period_max: usize,
    #[arg(long, default_value_t = 128)]
    pub frames_min: usize,
    #[arg(long, default_value_t = 1024)]
    pub frames_max: usize,
    #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
    pub noise_max: f64,
    #[arg(long, default_value_t = 8)]
    pub dims: usize,
    /// Minimum number of full periods in each repeating stretch.
    #[arg(long, default_value_t = 2)]
    pub min_periods: usize,
    /// Gapped mode: fraction of non-repeating frames, lower bound.
    #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
    pub gap_min: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub gap_max: f64,
    #[arg(long, default_value_t = 2)]
    pub max_gaps: usize,
}

#[derive(Debug, Args)]
pub struct StrideArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub strides: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output prediction stream, one record per video and stride.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub strides: StrideArgs,
    #[arg(long, default_value_t = DEFAULT_WINDOW_SIZE)]
    pub window: usize,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub peak_ratio: f64,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    /// Prediction stream. Defaults to the manifest's prediction paths.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Supplies the video list and each video's mode.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Mode for every video, overriding the manifest.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU, allow_hyphen_values = true)]
    pub tau: f64,
    #[command(flatten)]
    pub strides: StrideArgs,
    /// Scores this close to the best count as ties, won by the lower stride.
    #[arg(long, default_value_t = DEFAULT_TIE_TOLERANCE, allow_hyphen_values = true)]
    pub tie_tolerance: f64,
    /// What to do with frames after the last full window.
    #[arg(long, value_enum, default_value_t = TailArg::Partial)]
    pub tail: TailArg,
    /// With `--tail drop`, pad tracks shorter than one window.
    #[arg(long)]
    pub pad_short: bool,
    /// Store per-frame counts in the estimates.
    #[arg(long)]
    pub per_frame: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub estimates: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long)]
    pub round_predictions: bool,
    /// Results document path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the markdown table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, default_value = "repcount")]
    pub label: String,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub estimates: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,0.1",
        allow_hyphen_values = true
    )]
    pub alphas: Vec<f64>,
    #[arg(long)]
    pub round_predictions: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, required = true)]
    pub results: Vec<PathBuf>,
    /// One per results file; defaults to the file stems.
    #[arg(long)]
    pub label: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and executes the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                1
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    match execute(&cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

pub fn execute(command: &Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let outputs = match command {
        Command::Synth(a) => synth(a)?,
        Command::Predict(a) => predict(a)?,
        Command::Count(a) => count(a)?,
        Command::Eval(a) => eval(a)?,
        Command::AuditAlpha(a) => audit_alpha(a)?,
        Command::Report(a) => report(a)?,
    };
    outputs.commit(stdout, stderr)
}

/// Everything a command produces, held back until the command succeeds.
#[derive(Default)]
struct Outputs {
    dirs: Vec<PathBuf>,
    files: Vec<(PathBuf, Vec<u8>)>,
    stdout: Vec<u8>,
    summary: String,
}

impl Outputs {
    fn commit(self, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
        for d in &self.dirs {
            fs::create_dir_all(d).map_err(|e| Error::in_file(d, e.into()))?;
        }
        for (path, bytes) in &self.files {
            fs::write(path, bytes).map_err(|e| Error::in_file(path, e.into()))?;
        }
        stdout.write_all(&self.stdout)?;
        if !self.summary.is_empty() {
            writeln!(stderr, "{}", self.summary)?;
        }
        Ok(())
    }
}

fn read_file<T>(path: &Path, parse: impl FnOnce(BufReader<fs::File>) -> Result<T>) -> Result<T> {
    let file = fs::File::open(path).map_err(|e| Error::in_file(path, e.into()))?;
    parse(BufReader::new(file)).map_err(|e| Error::in_file(path, e))
}

fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::in_file(path, e.into()))?;
    parse_manifest(&text).map_err(|e| Error::in_file(path, e))
}

/// Manifest paths are relative to the manifest's directory.
fn resolve(manifest: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest.parent().unwrap_or(Path::new("")).join(p)
    }
}

fn check_non_negative(field: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::invalid(
            field,
            format!("{v} must be finite and >= 0"),
        ));
    }
    Ok(())
}

fn speed_config(strides: &StrideArgs, tie_tolerance: f64) -> Result<SpeedConfig> {
    let speed = SpeedConfig {
        strides: strides.strides.clone(),
        tie_tolerance,
    };
    speed.validate()?;
    Ok(speed)
}

fn synth(a: &SynthArgs) -> Result<Outputs> {
    let config = SynthDatasetConfig {
        videos: a.videos,
        seed: a.seed,
        period: (a.period_min, a.period_max),
        frames: (a.frames_min, a.frames_max),
        noise_max: a.noise_max,
        dims: a.dims,
        min_periods: a.min_periods,
        gaps: (a.mode == ModeArg::Gapped).then_some(GapConfig {
            fraction: (a.gap_min, a.gap_max),
            max_gaps: a.max_gaps,
        }),
    };
    config.validate()?;
    let mode = DatasetMode::from(a.mode);

    let videos = generate_dataset(&config)?;
    let manifest: Vec<ManifestEntry> = videos
        .iter()
        .map(|v| ManifestEntry {
            video_id: v.spec.video_id.clone(),
            gt_count: v.truth.gt_count,
            mode,
            embedding_path: Some(EMBEDDINGS_FILE.to_string()),
            prediction_path: None,
        })
        .collect();
    let embeddings: Vec<EmbeddingRecord> = videos
        .iter()
        .map(|v| EmbeddingRecord::from(&v.embeddings))
        .collect();

    let mut manifest_bytes = Vec::new();
    write_manifest(&mut manifest_bytes, &manifest)?;
    let mut embedding_bytes = Vec::new();
    write_embeddings(&mut embedding_bytes, &embeddings)?;
    Ok(Outputs {
        dirs: vec![a.out_dir.clone()],
        files: vec![
            (a.out_dir.join(MANIFEST_FILE), manifest_bytes),
            (a.out_dir.join(EMBEDDINGS_FILE), embedding_bytes),
        ],
        summary: format!(
            "synth: {} {mode} videos in {}",
            videos.len(),
            a.out_dir.display()
        ),
        ..Outputs::default()
    })
}

fn predict(a: &PredictArgs) -> Result<Outputs> {
    let speed = speed_config(&a.strides, 0.0)?;
    crate::counting::validate_window_size(a.window)?;
    let est = EstimatorConfig {
        temperature: a.temperature,
        peak_ratio: a.peak_ratio,
    };
    est.validate()?;

    let manifest = load_manifest(&a.manifest)?;
    // Each embedding file is read once even when many entries share it.
    let mut files: BTreeMap<PathBuf, HashMap<String, EmbeddingRecord>> = BTreeMap::new();
    for entry in &manifest {
        let rel = entry.embedding_path.as_deref().ok_or_else(|| {
            Error::invalid(
                "embedding_path",
                format!(
                    "video '{}' has no embedding_path to predict from",
                    entry.video_id
                ),
            )
        })?;
        let path = resolve(&a.manifest, rel);
        if let std::collections::btree_map::Entry::Vacant(slot) = files.entry(path) {
            let records = read_file(slot.key(), read_embeddings)?;
            slot.insert(
                records
                    .into_iter()
                    .map(|r| (r.video_id.clone(), r))
                    .collect(),
            );
        }
    }

    let mut records = Vec::with_capacity(manifest.len() * speed.strides.len());
    for entry in &manifest {
        let path = resolve(
            &a.manifest,
            entry.embedding_path.as_deref().unwrap_or_default(),
        );
        let record = files[&path].get(&entry.video_id).ok_or_else(|| {
            Error::in_file(
                &path,
                Error::invalid(
                    "embeddings",
                    format!("no record for video '{}'", entry.video_id),
                ),
            )
        })?;
        let seq = record.to_sequence()?;
        for &stride in &speed.strides {
            let track = predict_track(&seq, stride, a.window, &est)?;
            records.push(PredictionRecord::from(&track));
        }
    }

    let mut bytes = Vec::new();
    write_predictions(&mut bytes, &records)?;
    Ok(Outputs {
        files: vec![(a.out.clone(), bytes)],
        summary: format!(
            "predict: {} records for {} videos at strides {:?}",
            records.len(),
            manifest.len(),
            speed.strides
        ),
        ..Outputs::default()
    })
}

fn count(a: &CountArgs) -> Result<Outputs> {
    let speed = speed_config(&a.strides, a.tie_tolerance)?;
    check_non_negative("tau", a.tau)?;
    if a.pad_short && a.tail != TailArg::Drop {
        return Err(Error::invalid("pad_short", "only applies with --tail drop"));
    }
    if a.manifest.is_none() && a.mode.is_none() {
        return Err(Error::invalid(
            "mode",
            "pass --mode or a --manifest that lists modes",
        ));
    }
    if a.manifest.is_none() && a.predictions.is_none() {
        return Err(Error::invalid(
            "predictions",
            "pass --predictions or a --manifest with prediction paths",
        ));
    }
    let counting = |mode: DatasetMode| CountingConfig {
        tau: a.tau,
        mode: mode.counting_mode(),
        pad_short: a.pad_short,
        tail: match a.tail {
            TailArg::Partial => TailPolicy::Partial,
            TailArg::Drop => TailPolicy::Drop,
        },
        keep_per_frame: a.per_frame,
    };
    counting(DatasetMode::Gapped).validate()?;

    let manifest = a.manifest.as_deref().map(load_manifest).transpose()?;
    let mut records: Vec<PredictionRecord> = Vec::new();
    if let Some(p) = &a.predictions {
        records = read_file(p, read_predictions)?;
    } else {
        let (mpath, entries) = (a.manifest.as_deref().unwrap(), manifest.as_deref().unwrap());
        let mut paths: Vec<PathBuf> = Vec::new();
        for e in entries {
            let rel = e.prediction_path.as_deref().ok_or_else(|| {
                Error::invalid(
                    "prediction_path",
                    format!("video '{}' has no prediction_path", e.video_id),
                )
            })?;
            let path = resolve(mpath, rel);
            if !paths.contains(&path) {
                paths.push(path);
            }
        }
        for path in &paths {
            records.extend(read_file(path, read_predictions)?);
        }
    }

    // Group tracks by video, keeping first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut by_video: HashMap<String, Vec<PredictionRecord>> = HashMap::new();
    for r in records {
        if !by_video.contains_key(&r.video_id) {
            order.push(r.video_id.clone());
        }
        by_video.entry(r.video_id.clone()).or_default().push(r);
    }

    let videos: Vec<(String, DatasetMode)> = match &manifest {
        Some(entries) => {
            let listed: HashMap<&str, ()> =
                entries.iter().map(|e| (e.video_id.as_str(), ())).collect();
            if let Some(extra) = order.iter().find(|v| !listed.contains_key(v.as_str())) {
                return Err(Error::invalid(
                    "predictions",
                    format!("video '{extra}' is not in the manifest"),
                ));
            }
            entries
                .iter()
                .map(|e| (e.video_id.clone(), a.mode.map_or(e.mode, DatasetMode::from)))
                .collect()
        }
        None => {
            let mode = DatasetMode::from(a.mode.expect("checked above"));
            order.into_iter().map(|v| (v, mode)).collect()
        }
    };

    let mut estimates = Vec::with_capacity(videos.len());
    for (video_id, mode) in &videos {
        let recs = by_video.get(video_id).ok_or_else(|| {
            Error::invalid(
                "predictions",
                format!("no predictions for video '{video_id}'"),
            )
        })?;
        let tracks: Vec<_> = recs.iter().map(PredictionRecord::to_track).collect();
        let outcome = multispeed_count(&tracks, &counting(*mode), &speed)?;
        estimates.push(EstimateRecord::from_outcome(
            &outcome,
            tracks[0].window_size,
            *mode,
            a.tau,
            speed.tie_tolerance,
        ));
    }

    let mut bytes = Vec::new();
    write_estimates(&mut bytes, &estimates)?;
    Ok(Outputs {
        files: vec![(a.out.clone(), bytes)],
        summary: format!("count: {} videos", estimates.len()),
        ..Outputs::default()
    })
}

/// Pairs manifest ground truth with estimates, in manifest order. Every
/// manifest video needs exactly one estimate and vice versa.
fn pair_up(manifest: &[ManifestEntry], estimates: &[EstimateRecord]) -> Result<Vec<CountPair>> {
    let by_id: HashMap<&str, &EstimateRecord> =
        estimates.iter().map(|e| (e.video_id.as_str(), e)).collect();
    let listed: HashMap<&str, ()> = manifest.iter().map(|e| (e.video_id.as_str(), ())).collect();
    if let Some(extra) = estimates
        .iter()
        .find(|e| !listed.contains_key(e.video_id.as_str()))
    {
        return Err(Error::invalid(
            "estimates",
            format!("video '{}' is not in the manifest", extra.video_id),
        ));
    }
    manifest
        .iter()
        .map(|m| {
            let e = by_id.get(m.video_id.as_str()).ok_or_else(|| {
                Error::invalid(
                    "estimates",
                    format!("no estimate for video '{}'", m.video_id),
                )
            })?;
            Ok(CountPair::new(m.video_id.clone(), m.gt_count, e.count))
        })
        .collect()
}

fn eval(a: &EvalArgs) -> Result<Outputs> {
    let metric = MetricConfig {
        alpha: a.alpha,
        round_predictions: a.round_predictions,
    };
    metric.validate()?;
    if a.label.trim().is_empty() {
        return Err(Error::invalid("label", "must be non-empty"));
    }

    let manifest = load_manifest(&a.manifest)?;
    let estimates = read_file(&a.estimates, read_estimates)?;
    let pairs = pair_up(&manifest, &estimates)?;
    let report = build_report(&pairs, &metric)?;
    let config = ResultsConfig::from_estimates(&estimates, a.alpha, a.round_predictions)?;
    let doc = write_results(&report, &estimates, &config)?;

    let mut json = Vec::new();
    write_results_json(&mut json, &doc)?;
    let table = render_table(std::slice::from_ref(&doc), &[a.label.as_str()])?;

    let mut out = Outputs {
        summary: table.trim_end().to_string(),
        ..Outputs::default()
    };
    match &a.out {
        Some(p) => out.files.push((p.clone(), json)),
        None => out.stdout = json,
    }
    if let Some(p) = &a.table {
        out.files.push((p.clone(), table.into_bytes()));
    }
    Ok(out)
}

fn audit_alpha(a: &AuditArgs) -> Result<Outputs> {
    if a.alphas.is_empty() {
        return Err(Error::invalid("alphas", "need at least one value"));
    }
    for &alpha in &a.alphas {
        check_non_negative("alpha", alpha)?;
    }
    let manifest = load_manifest(&a.manifest)?;
    let estimates = read_file(&a.estimates, read_estimates)?;
    let pairs = pair_up(&manifest, &estimates)?;

    let mut table = String::from("| MAE α | MAE |\n| ----: | ---: |\n");
    let mut notes = Vec::new();
    for &alpha in &a.alphas {
        let cfg = MetricConfig {
            alpha,
            round_predictions: a.round_predictions,
        };
        let cell = match mae(&pairs, &cfg) {
            Ok(v) => format!("{v:.4}"),
            Err(e @ Error::DivisionByZero { .. }) => {
                notes.push(format!("α={}: {e}", format_alpha(alpha)));
                "undefined".to_string()
            }
            Err(e) => return Err(e),
        };
        table += &format!("| {} | {cell} |\n", format_alpha(alpha));
    }
    table += &format!("\n{} videos.\n", pairs.len());
    for n in notes {
        table += &format!("Note: {n}\n");
    }

    let mut out = Outputs::default();
    match &a.out {
        Some(p) => out.files.push((p.clone(), table.into_bytes())),
        None => out.stdout = table.into_bytes(),
    }
    Ok(out)
}

fn report(a: &ReportArgs) -> Result<Outputs> {
    if !a.label.is_empty() && a.label.len() != a.results.len() {
        return Err(Error::invalid(
            "label",
            format!(
                "{} labels for {} results files",
                a.label.len(),
                a.results.len()
            ),
        ));
    }
    let labels: Vec<String> = if a.label.is_empty() {
        a.results
            .iter()
            .map(|p| {
                p.file_stem().map_or_else(
                    || p.display().to_string(),
                    |s| s.to_string_lossy().into_owned(),
                )
            })
            .collect()
    } else {
        a.label.clone()
    };
    let docs: Vec<ResultsDocument> = a
        .results
        .iter()
        .map(|p| read_file(p, read_results))
        .collect::<Result<_>>()?;
    let table = render_table(&docs, &labels)?;

    let mut out = Outputs::default();
    match &a.out {
        Some(p) => out.files.push((p.clone(), table.into_bytes())),
        None => out.stdout = table.into_bytes(),
    }
    Ok(out)
}
