use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::counting::CountingMode;
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 5] = [
    "video_id",
    "gt_count",
    "mode",
    "embedding_path",
    "prediction_path",
];

/// Dataset protocol of a video: trimmed to the repetition, or with
/// non-repeating stretches that the periodicity gate must exclude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetMode {
    Segmented,
    Gapped,
}

impl DatasetMode {
    pub const ALL: [DatasetMode; 2] = [DatasetMode::Segmented, DatasetMode::Gapped];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetMode::Segmented => "segmented",
            DatasetMode::Gapped => "gapped",
        }
    }

    pub fn counting_mode(self) -> CountingMode {
        match self {
            DatasetMode::Segmented => CountingMode::Segmented,
            DatasetMode::Gapped => CountingMode::Gated,
        }
    }
}

impl fmt::Display for DatasetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "mode",
                    format!("unknown mode '{s}', expected one of: segmented, gapped"),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub video_id: String,
    pub gt_count: f64,
    pub mode: DatasetMode,
    pub embedding_path: Option<String>,
    pub prediction_path: Option<String>,
}

fn column_error(line: u64, column: usize, message: impl fmt::Display) -> Error {
    Error::parse(
        line,
        format!(
            "column {} ({}): {message}",
            column + 1,
            MANIFEST_HEADER[column]
        ),
    )
}

fn optional(field: &str) -> Option<String> {
    let f = field.trim();
    (!f.is_empty()).then(|| f.to_string())
}

/// Parses and validates a manifest. Errors cite the 1-based physical line.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(1, format!("unreadable header: {e}")))?;
    if header.iter().map(str::trim).ne(MANIFEST_HEADER) {
        return Err(Error::parse(
            1,
            format!(
                "header must be exactly '{}', found '{}'",
                MANIFEST_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut entries = Vec::new();
    let mut first_seen: HashMap<String, u64> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());

        let video_id = record[0].trim().to_string();
        if video_id.is_empty() {
            return Err(column_error(line, 0, "must be non-empty"));
        }
        if let Some(prev) = first_seen.get(&video_id) {
            return Err(column_error(
                line,
                0,
                format!("duplicate video_id '{video_id}' (first on line {prev})"),
            ));
        }

        let gt_count: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| column_error(line, 1, format!("'{}' is not a number", &record[1])))?;
        if !gt_count.is_finite() || gt_count < 0.0 {
            return Err(column_error(
                line,
                1,
                format!("{gt_count} must be finite and >= 0"),
            ));
        }

        let mode: DatasetMode = record[2]
            .trim()
            .parse()
            .map_err(|e: Error| column_error(line, 2, e))?;

        let embedding_path = optional(&record[3]);
        let prediction_path = optional(&record[4]);
        if embedding_path.is_none() && prediction_path.is_none() {
            return Err(column_error(
                line,
                3,
                "at least one of embedding_path and prediction_path is required",
            ));
        }

        first_seen.insert(video_id.clone(), line);
        entries.push(ManifestEntry {
            video_id,
            gt_count,
            mode,
            embedding_path,
            prediction_path,
        });
    }
    Ok(entries)
}

pub fn write_manifest(writer: impl Write, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(e.into());
    w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
    for e in entries {
        let gt = e.gt_count.to_string();
        w.write_record([
            e.video_id.as_str(),
            gt.as_str(),
            e.mode.as_str(),
            e.embedding_path.as_deref().unwrap_or(""),
            e.prediction_path.as_deref().unwrap_or(""),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "video_id,gt_count,mode,embedding_path,prediction_path\n";

    fn parse_err(text: &str) -> (u64, String) {
        match parse_manifest(text).unwrap_err() {
            Error::Parse { line, message } => (line, message),
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn three_rows() {
        let text = format!(
            "{HEADER}a,3,segmented,a.jsonl,\nb,0,gapped,,b.jsonl\nc,7.5,segmented,c.jsonl,c.p.jsonl\n"
        );
        let entries = parse_manifest(&text).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[1].mode, DatasetMode::Gapped);
        assert_eq!(entries[1].embedding_path, None);
        assert_eq!(entries[2].gt_count, 7.5);
    }

    #[test]
    fn duplicate_cites_line() {
        let text = format!("{HEADER}a,1,segmented,x,\nb,1,segmented,x,\na,2,segmented,x,\n");
        let (line, msg) = parse_err(&text);
        assert_eq!(line, 4);
        assert!(msg.contains("duplicate"), "{msg}");
    }

    #[test]
    fn unknown_mode_lists_allowed() {
        let (line, msg) = parse_err(&format!("{HEADER}a,1,trimmed,x,\n"));
        assert_eq!(line, 2);
        assert!(msg.contains("segmented") && msg.contains("gapped"), "{msg}");
    }

    #[test]
    fn other_errors() {
        assert_eq!(parse_err(&format!("{HEADER}a,-1,segmented,x,\n")).0, 2);
        assert_eq!(
            parse_err(&format!("{HEADER}a,1,segmented,x,\nb,1,gapped,,\n")).0,
            3
        );
        assert_eq!(parse_err(&format!("{HEADER}a,one,segmented,x,\n")).0, 2);
        assert_eq!(parse_err("id,gt,mode,e,p\n").0, 1);
        assert!(parse_err(&format!("{HEADER}a,1,segmented\n")).0 >= 2);
    }

    #[test]
    fn write_then_parse() {
        let entries = vec![
            ManifestEntry {
                video_id: "v,1".into(),
                gt_count: 0.1 + 0.2,
                mode: DatasetMode::Gapped,
                embedding_path: Some("e.jsonl".into()),
                prediction_path: None,
            },
            ManifestEntry {
                video_id: "w".into(),
                gt_count: 12.0,
                mode: DatasetMode::Segmented,
                embedding_path: None,
                prediction_path: Some("p.jsonl".into()),
            },
        ];
        let mut buf = Vec::new();
        write_manifest(&mut buf, &entries).unwrap();
        let back = parse_manifest(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, entries);
    }
}
