//! Mean top-5 recall over per-snippet predictions.
//!
//! For every class with at least one non-background ground-truth snippet,
//! recall is the fraction of its snippets whose top-5 list contains it. The
//! metric is the unweighted mean of these per-class recalls. Background
//! snippets are skipped and the background id never appears in a top-5 list.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::heads::{Head, HeadOutputs, LabelTriple, BACKGROUND};
use crate::scalar::Scalar;

pub const TOP_K: usize = 5;

/// The five highest logits, descending, ties by ascending class id. The
/// background id 0 is excluded before selection.
pub fn top5_ids<T: Scalar>(logits: &[T]) -> Result<[usize; TOP_K]> {
    if logits.len() < TOP_K + 1 {
        return Err(Error::Config(format!(
            "top-5 needs at least {} non-background classes, got {} logits",
            TOP_K,
            logits.len()
        )));
    }
    let mut best: [(usize, T); TOP_K] = [(usize::MAX, T::neg_infinity()); TOP_K];
    let mut filled = 0;
    for (id, &v) in logits.iter().enumerate().skip(BACKGROUND + 1) {
        // Ascending id scan: a later id only displaces on a strictly larger logit.
        let mut pos = filled;
        while pos > 0 && v > best[pos - 1].1 {
            pos -= 1;
        }
        if pos >= TOP_K {
            continue;
        }
        let end = filled.min(TOP_K - 1);
        for i in (pos..end).rev() {
            best[i + 1] = best[i];
        }
        best[pos] = (id, v);
        filled = (filled + 1).min(TOP_K);
    }
    Ok(best.map(|(id, _)| id))
}

/// One evaluated snippet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PredictionEntry {
    pub video_id: String,
    pub snippet_index: usize,
    pub verb_top5: [usize; TOP_K],
    pub noun_top5: [usize; TOP_K],
    pub action_top5: [usize; TOP_K],
    pub label: LabelTriple,
}

impl PredictionEntry {
    pub fn from_outputs<T: Scalar>(
        video_id: impl Into<String>,
        snippet_index: usize,
        outputs: &HeadOutputs<T>,
        label: LabelTriple,
    ) -> Result<Self> {
        Ok(PredictionEntry {
            video_id: video_id.into(),
            snippet_index,
            verb_top5: top5_ids(outputs.verb_logits.data())?,
            noun_top5: top5_ids(outputs.noun_logits.data())?,
            action_top5: top5_ids(outputs.action_logits.data())?,
            label,
        })
    }

    pub fn top5(&self, head: Head) -> &[usize; TOP_K] {
        match head {
            Head::Verb => &self.verb_top5,
            Head::Noun => &self.noun_top5,
            Head::Action => &self.action_top5,
        }
    }
}

/// Predictions of a whole evaluation run, kept sorted by
/// `(video_id, snippet_index)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionLog {
    entries: Vec<PredictionEntry>,
}

impl PredictionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(mut entries: Vec<PredictionEntry>) -> Self {
        entries.sort_by(|a, b| (&a.video_id, a.snippet_index).cmp(&(&b.video_id, b.snippet_index)));
        PredictionLog { entries }
    }

    pub fn push(&mut self, e: PredictionEntry) {
        self.entries.push(e);
    }

    /// Deterministic merge of per-video shards.
    pub fn merge(shards: Vec<PredictionLog>) -> Self {
        Self::from_entries(shards.into_iter().flat_map(|s| s.entries).collect())
    }

    pub fn entries(&self) -> &[PredictionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-class hit counts `(hits, total)` of one head, background excluded.
pub fn class_counts(log: &PredictionLog, head: Head) -> BTreeMap<usize, (u64, u64)> {
    let mut counts = BTreeMap::new();
    for e in log.entries() {
        if e.label.background {
            continue;
        }
        let truth = head.label(&e.label);
        let c = counts.entry(truth).or_insert((0u64, 0u64));
        c.1 += 1;
        if e.top5(head).contains(&truth) {
            c.0 += 1;
        }
    }
    counts
}

pub fn mean_top5_recall(log: &PredictionLog, head: Head) -> Result<f64> {
    let counts = class_counts(log, head);
    if counts.is_empty() {
        return Err(Error::Evaluation(format!(
            "no non-background snippets to evaluate for the {} head",
            head.name()
        )));
    }
    let mut total = 0.0;
    for &(hits, n) in counts.values() {
        total += hits as f64 / n as f64;
    }
    Ok(total / counts.len() as f64)
}

/// Expected mean top-5 recall of predictions that ignore the input:
/// `min(5, classes) / classes` for `classes` non-background classes.
pub fn chance_top5_recall(non_background_classes: usize) -> f64 {
    TOP_K.min(non_background_classes) as f64 / non_background_classes as f64
}
