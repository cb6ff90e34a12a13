//! On-disk interchange formats.
//!
//! - Manifests are CSV with the header
//!   `video_id,gt_count,mode,embedding_path,prediction_path`.
//! - Predictions, embeddings and count estimates are JSON Lines, one record
//!   per line. Floats are written in their shortest round-trip form and read
//!   back bit-exactly.
//! - Results are a single JSON document with `config`, `metrics` and
//!   `per_video` blocks, plus a markdown table rendering.
//!
//! Every reader validates what it parses and reports the 1-based line of
//! the offending record.

mod manifest;
mod records;
mod results;

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use manifest::{parse_manifest, write_manifest, DatasetMode, ManifestEntry, MANIFEST_HEADER};
pub use records::{
    read_embeddings, read_estimates, read_predictions, write_embeddings, write_estimates,
    write_predictions, EmbeddingRecord, EstimateRecord, PredictionRecord,
};
pub use results::{
    format_alpha, read_results, render_table, write_results, write_results_json, ConfigMode,
    ResultsConfig, ResultsDocument, ResultsMetrics, ResultsRow,
};

/// Reads one JSON value per non-blank line, validating each. `key` extracts
/// the identity that must be unique within the stream.
fn read_jsonl<T, K>(
    reader: impl BufRead,
    validate: impl Fn(&T) -> Result<()>,
    key: impl Fn(&T) -> K,
) -> Result<Vec<T>>
where
    T: DeserializeOwned,
    K: std::hash::Hash + Eq + std::fmt::Debug,
{
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T =
            serde_json::from_str(&line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        validate(&value).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let k = key(&value);
        if seen.contains(&k) {
            return Err(Error::parse(lineno, format!("duplicate record {k:?}")));
        }
        seen.insert(k);
        out.push(value);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(
    mut writer: impl Write,
    records: &[T],
    validate: impl Fn(&T) -> Result<()>,
) -> Result<()> {
    for (i, r) in records.iter().enumerate() {
        validate(r).map_err(|e| Error::invalid("record", format!("record {i}: {e}")))?;
    }
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
