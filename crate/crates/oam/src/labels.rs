//! Ground-truth labels as CSV with header
//! `video_id,snippet_index,verb,noun,action,background`.
//! `background` is written as `0`/`1`; `true`/`false` are also accepted.

use std::collections::BTreeMap;
use std::path::Path;

use oad_core::heads::LabelTriple;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{CliError, Result};

pub type LabelMap = BTreeMap<String, Vec<LabelTriple>>;

#[derive(Serialize, Deserialize)]
struct Row {
    video_id: String,
    snippet_index: usize,
    verb: usize,
    noun: usize,
    action: usize,
    #[serde(deserialize_with = "flag")]
    background: u8,
}

fn flag<'de, D: Deserializer<'de>>(d: D) -> Result<u8, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim() {
        "0" | "false" => Ok(0),
        "1" | "true" => Ok(1),
        other => Err(serde::de::Error::custom(format!("background must be 0 or 1, got `{other}`"))),
    }
}

/// Writes every video's labels, videos in map order.
pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for (video, rows) in labels {
        for (t, l) in rows.iter().enumerate() {
            w.serialize(Row {
                video_id: video.clone(),
                snippet_index: t,
                verb: l.verb,
                noun: l.noun,
                action: l.action,
                background: l.background as u8,
            })
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(CliError::io(path))
}

/// Reads labels; each video's snippet indices must run 0, 1, 2, ... in order.
pub fn read_labels(path: &Path) -> Result<LabelMap> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut map = LabelMap::new();
    for row in r.deserialize::<Row>() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let rows = map.entry(row.video_id.clone()).or_default();
        if row.snippet_index != rows.len() {
            return Err(CliError::format(
                path,
                format!(
                    "video `{}`: expected snippet {}, found {}",
                    row.video_id,
                    rows.len(),
                    row.snippet_index
                ),
            ));
        }
        rows.push(LabelTriple {
            verb: row.verb,
            noun: row.noun,
            action: row.action,
            background: row.background == 1,
        });
    }
    Ok(map)
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::Io {
                path: path.to_path_buf(),
                source,
            },
            _ => unreachable!("checked above"),
        }
    } else {
        CliError::format(path, e.to_string())
    }
}
