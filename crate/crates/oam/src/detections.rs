//! Detections as JSON Lines, one snippet per line:
//! `{"video_id": str, "snippet_index": int, "detections": [{"category_id": int, "confidence": float, "bbox": [x1, y1, x2, y2]}]}`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use oad_core::objects::{Detection, SnippetDetections};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub type DetectionMap = BTreeMap<(String, usize), SnippetDetections>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    video_id: String,
    snippet_index: usize,
    detections: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    category_id: usize,
    confidence: f32,
    bbox: [f32; 4],
}

pub fn parse_line(text: &str, path: &Path, line_no: usize) -> Result<SnippetDetections> {
    let line: Line = serde_json::from_str(text).map_err(|e| CliError::format(path, format!("line {line_no}: {e}")))?;
    let detections: Vec<Detection> = line
        .detections
        .into_iter()
        .map(|e| Detection {
            category_id: e.category_id,
            confidence: e.confidence,
            bbox: e.bbox,
        })
        .collect();
    for (i, d) in detections.iter().enumerate() {
        d.validate()
            .map_err(|m| CliError::format(path, format!("line {line_no}: detections[{i}]: {m}")))?;
    }
    Ok(SnippetDetections {
        video_id: line.video_id,
        snippet_index: line.snippet_index,
        detections,
    })
}

/// Reads a whole detections file. Blank lines are skipped; a key seen twice
/// is a data error.
pub fn load_detections(path: &Path) -> Result<DetectionMap> {
    let f = File::open(path).map_err(CliError::io(path))?;
    let mut map = DetectionMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(CliError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let s = parse_line(&line, path, i + 1)?;
        let key = (s.video_id.clone(), s.snippet_index);
        if map.contains_key(&key) {
            return Err(CliError::Data(format!(
                "{}: line {}: duplicate entry for video `{}` snippet {}",
                path.display(),
                i + 1,
                key.0,
                key.1
            )));
        }
        map.insert(key, s);
    }
    Ok(map)
}

pub fn to_line(s: &SnippetDetections) -> String {
    let line = Line {
        video_id: s.video_id.clone(),
        snippet_index: s.snippet_index,
        detections: s
            .detections
            .iter()
            .map(|d| Entry {
                category_id: d.category_id,
                confidence: d.confidence,
                bbox: d.bbox,
            })
            .collect(),
    };
    serde_json::to_string(&line).expect("detections serialize")
}

/// Writes entries in key order.
pub fn write_detections<'a>(path: &Path, entries: impl IntoIterator<Item = &'a SnippetDetections>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(CliError::io(path))?);
    for s in entries {
        writeln!(w, "{}", to_line(s)).map_err(CliError::io(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_lines_and_bound_violation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(
            &p,
            "{\"video_id\":\"a\",\"snippet_index\":0,\"detections\":[]}\n\
             {\"video_id\":\"a\",\"snippet_index\":1,\"detections\":[{\"category_id\":2,\"confidence\":0.5,\"bbox\":[0,0,1,1]}]}\n",
        )
        .unwrap();
        assert_eq!(load_detections(&p).unwrap().len(), 2);

        std::fs::write(
            &p,
            "{\"video_id\":\"a\",\"snippet_index\":0,\"detections\":[]}\n\
             {\"video_id\":\"a\",\"snippet_index\":1,\"detections\":[{\"category_id\":2,\"confidence\":1.3,\"bbox\":[0,0,1,1]}]}\n",
        )
        .unwrap();
        let err = load_detections(&p).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("confidence"), "{err}");
    }

    #[test]
    fn malformed_and_duplicate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        std::fs::write(&p, "{\"video_id\":\"a\",\"snippet_index\":0,\"detections\":[]}\n{oops\n").unwrap();
        let err = load_detections(&p).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("line 2"));

        let l = "{\"video_id\":\"a\",\"snippet_index\":0,\"detections\":[]}\n";
        std::fs::write(&p, format!("{l}{l}")).unwrap();
        assert!(matches!(load_detections(&p).unwrap_err(), CliError::Data(m) if m.contains("duplicate")));
    }
}
