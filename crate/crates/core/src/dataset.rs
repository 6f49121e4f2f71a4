//! JSON-lines record streams.
//!
//! Every file starts with a header line carrying the tool version, the
//! command that produced it, the seed and the full configuration, followed by
//! one record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hand::GraspPose;
use crate::stability::StabilityReport;
use crate::transfer::TransferResult;
use crate::Metric;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize record: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    /// Always `"header"`; distinguishes the first line from records.
    pub kind: String,
    pub tool: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Header {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Self { kind: "header".into(), tool: crate::TOOL_VERSION.into(), command: command.into(), seed, config }
    }
}

/// Result of fitting a target hand to one source record's map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    /// Position of the source record in its dataset file.
    pub source_index: usize,
    pub source_hand: String,
    pub hand: String,
    pub object: String,
    pub metric: Metric,
    pub result: TransferResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub source_index: usize,
    pub hand: String,
    pub object: String,
    /// Pose after contact refinement.
    pub pose: GraspPose,
    pub report: StabilityReport,
}

/// Parsed contents of a JSON-lines file. Lines that fail to parse are
/// skipped and counted.
#[derive(Clone, Debug)]
pub struct Jsonl<T> {
    pub header: Option<Header>,
    pub records: Vec<T>,
    pub parse_errors: usize,
    /// 1-based line numbers of the skipped lines, with the parser message.
    pub errors: Vec<(usize, String)>,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Jsonl<T>, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_error(path))?;
    let mut out = Jsonl { header: None, records: Vec::new(), parse_errors: 0, errors: Vec::new() };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_error(path))?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            if let Ok(header) = serde_json::from_str::<Header>(&line) {
                if header.kind == "header" {
                    out.header = Some(header);
                    continue;
                }
            }
        }
        match serde_json::from_str(&line) {
            Ok(record) => out.records.push(record),
            Err(e) => {
                out.parse_errors += 1;
                out.errors.push((i + 1, e.to_string()));
            }
        }
    }
    Ok(out)
}

/// Writes the header and the records, one compact JSON value per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, header: &Header, records: &[T]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_error(path))?;
    }
    let file = File::create(path).map_err(io_error(path))?;
    let mut w = BufWriter::new(file);
    let mut put = |value: String| writeln!(w, "{value}").map_err(io_error(path));
    put(serde_json::to_string(header)?)?;
    for r in records {
        put(serde_json::to_string(r)?)?;
    }
    w.flush().map_err(io_error(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        a: u32,
    }

    #[test]
    fn round_trip_skips_bad_lines() {
        let dir = std::env::temp_dir().join(format!("grasp-dataset-{}", std::process::id()));
        let path = dir.join("rows.jsonl");
        let header = Header::new("test", 3, serde_json::json!({"x": 1}));
        write_jsonl(&path, &header, &[Row { a: 1 }, Row { a: 2 }]).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"a\": \"oops\"}\n\n{\"a\": 5}\n");
        std::fs::write(&path, text).unwrap();

        let parsed: Jsonl<Row> = read_jsonl(&path).unwrap();
        assert_eq!(parsed.header, Some(header));
        assert_eq!(parsed.records, vec![Row { a: 1 }, Row { a: 2 }, Row { a: 5 }]);
        assert_eq!(parsed.parse_errors, 1);
        assert_eq!(parsed.errors[0].0, 4);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn headerless_file_reads_all_lines_as_records() {
        let dir = std::env::temp_dir().join(format!("grasp-dataset-nohdr-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rows.jsonl");
        std::fs::write(&path, "{\"a\": 7}\n").unwrap();
        let parsed: Jsonl<Row> = read_jsonl(&path).unwrap();
        assert!(parsed.header.is_none());
        assert_eq!(parsed.records, vec![Row { a: 7 }]);
        std::fs::remove_dir_all(dir).unwrap();
    }
}
