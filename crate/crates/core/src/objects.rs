//! Per-snippet object detections and their aggregation into one score per
//! object category.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub category_id: usize,
    pub confidence: f32,
    /// `(x1, y1, x2, y2)` normalized to `[0, 1]`. Validated, not used by the model.
    pub bbox: [f32; 4],
}

impl Detection {
    /// Checks the confidence and box bounds; the error names the offending field.
    pub fn validate(&self) -> core::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        let [x1, y1, x2, y2] = self.bbox;
        if self.bbox.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("bbox {:?} not normalized to [0, 1]", self.bbox));
        }
        if !(x1 < x2 && y1 < y2) {
            return Err(format!("bbox {:?} requires x1 < x2 and y1 < y2", self.bbox));
        }
        Ok(())
    }
}

/// All detections on the last frame of one snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct SnippetDetections {
    pub video_id: String,
    pub snippet_index: usize,
    pub detections: Vec<Detection>,
}

impl SnippetDetections {
    pub fn empty(video_id: impl Into<String>, snippet_index: usize) -> Self {
        SnippetDetections {
            video_id: video_id.into(),
            snippet_index,
            detections: Vec::new(),
        }
    }
}

/// How confidences of one category are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    Max,
    /// Sum saturated at 1.
    Sum,
    Mean,
}

/// Object presence scores, one entry per category, shape `[1 x C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectScoreVector {
    pub scores: Tensor<f32>,
}

impl ObjectScoreVector {
    pub fn zeros(num_categories: usize) -> Self {
        ObjectScoreVector {
            scores: Tensor::zeros(&[1, num_categories]),
        }
    }

    pub fn num_categories(&self) -> usize {
        self.scores.cols()
    }

    pub fn as_slice(&self) -> &[f32] {
        self.scores.data()
    }
}

pub fn aggregate_scores(dets: &SnippetDetections, num_categories: usize) -> Result<ObjectScoreVector> {
    aggregate_scores_with(dets, num_categories, Aggregation::Max)
}

pub fn aggregate_scores_with(
    dets: &SnippetDetections,
    num_categories: usize,
    rule: Aggregation,
) -> Result<ObjectScoreVector> {
    let mut scores = vec![0.0f32; num_categories];
    let mut counts = vec![0u32; num_categories];
    for d in &dets.detections {
        if d.category_id >= num_categories {
            return Err(Error::Data(format!(
                "video `{}` snippet {}: category_id {} out of range for {} categories",
                dets.video_id, dets.snippet_index, d.category_id, num_categories
            )));
        }
        let s = &mut scores[d.category_id];
        match rule {
            Aggregation::Max => *s = s.max(d.confidence),
            Aggregation::Sum | Aggregation::Mean => *s += d.confidence,
        }
        counts[d.category_id] += 1;
    }
    match rule {
        Aggregation::Max => {}
        Aggregation::Sum => scores.iter_mut().for_each(|s| *s = s.min(1.0)),
        Aggregation::Mean => {
            for (s, &n) in scores.iter_mut().zip(&counts) {
                if n > 0 {
                    *s /= n as f32;
                }
            }
        }
    }
    Ok(ObjectScoreVector {
        scores: Tensor::new(vec![1, num_categories], scores)?,
    })
}
