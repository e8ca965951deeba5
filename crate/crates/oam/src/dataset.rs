//! On-disk dataset layout:
//!
//! ```text
//! <dir>/features/<video_id>.oadf
//! <dir>/detections.jsonl
//! <dir>/labels.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use oad_core::objects::SnippetDetections;
use oad_core::synth::EpisodeRecord;
use oad_core::Tensor;

use crate::detections::{load_detections, write_detections};
use crate::error::{CliError, Result};
use crate::labels::{read_labels, write_labels, LabelMap};
use crate::oadf;

pub const FEATURES_DIR: &str = "features";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const LABELS_FILE: &str = "labels.csv";

/// Problems tolerated while reading a dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadWarnings {
    /// Snippets without a detections line; they get an empty detection list.
    pub missing_detections: usize,
    /// Detection lines that match no snippet of any video.
    pub unmatched_detections: usize,
}

pub fn write_dataset(records: &[EpisodeRecord], dir: &Path) -> Result<()> {
    let features = dir.join(FEATURES_DIR);
    fs::create_dir_all(&features).map_err(CliError::io(&features))?;
    let mut labels = LabelMap::new();
    for r in records {
        let path = features.join(format!("{}.oadf", r.video_id));
        oadf::write(&path, r.len(), r.features.cols(), r.features.data())?;
        if labels.insert(r.video_id.clone(), r.labels.clone()).is_some() {
            return Err(CliError::Data(format!("duplicate video id `{}`", r.video_id)));
        }
    }
    write_detections(&dir.join(DETECTIONS_FILE), records.iter().flat_map(|r| r.detections.iter()))?;
    write_labels(&dir.join(LABELS_FILE), &labels)
}

/// Feature files in name order.
fn feature_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let features = dir.join(FEATURES_DIR);
    if !features.is_dir() {
        return Err(CliError::DatasetNotFound(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(&features).map_err(CliError::io(&features))? {
        let path = entry.map_err(CliError::io(&features))?.path();
        if path.extension().is_some_and(|e| e == "oadf") {
            files.push(path);
        }
    }
    if files.is_empty() {
        return Err(CliError::DatasetNotFound(dir.to_path_buf()));
    }
    files.sort();
    Ok(files)
}

pub fn video_id_of(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| CliError::format(path, "file name is not valid UTF-8"))
}

/// Reads every video in the directory, sorted by video id.
pub fn read_dataset(dir: &Path) -> Result<(Vec<EpisodeRecord>, ReadWarnings)> {
    let files = feature_files(dir)?;
    let labels_path = dir.join(LABELS_FILE);
    let mut labels = read_labels(&labels_path)?;
    let detections_path = dir.join(DETECTIONS_FILE);
    let mut detections = if detections_path.exists() {
        load_detections(&detections_path)?
    } else {
        Default::default()
    };

    let mut warnings = ReadWarnings::default();
    let mut records = Vec::with_capacity(files.len());
    for path in files {
        let video_id = video_id_of(&path)?;
        let f = oadf::read(&path)?;
        if f.snippets == 0 {
            return Err(CliError::Data(format!("video `{video_id}` has no snippets")));
        }
        let video_labels = labels
            .remove(&video_id)
            .ok_or_else(|| CliError::Data(format!("{}: no labels for video `{video_id}`", labels_path.display())))?;
        if video_labels.len() != f.snippets {
            return Err(CliError::Data(format!(
                "video `{video_id}`: {} snippets of features but {} labels",
                f.snippets,
                video_labels.len()
            )));
        }
        let dets = (0..f.snippets)
            .map(|t| {
                detections.remove(&(video_id.clone(), t)).unwrap_or_else(|| {
                    warnings.missing_detections += 1;
                    SnippetDetections::empty(video_id.clone(), t)
                })
            })
            .collect();
        records.push(EpisodeRecord {
            video_id,
            features: Tensor::matrix(f.snippets, f.dim, f.data)?,
            detections: dets,
            labels: video_labels,
        });
    }
    if let Some(video) = labels.keys().next() {
        return Err(CliError::Data(format!(
            "{}: labels for video `{video}` without a feature file",
            labels_path.display()
        )));
    }
    warnings.unmatched_detections = detections.len();
    Ok((records, warnings))
}

/// Splits videos (kept in id order) into training and held-out parts. The
/// last `round(n * eval_fraction)` videos are held out.
pub fn split<T>(mut records: Vec<T>, eval_fraction: f64) -> (Vec<T>, Vec<T>) {
    let n = records.len();
    let held = ((n as f64) * eval_fraction).round() as usize;
    let held = held.min(n);
    let val = records.split_off(n - held);
    (records, val)
}
