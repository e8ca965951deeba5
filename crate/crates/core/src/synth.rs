//! Deterministic synthetic episodes with a planted object -> action structure.
//!
//! Each video alternates background gaps and action segments. A segment has a
//! random verb and noun. Snippet features are the verb's cluster center plus
//! Gaussian noise, so they carry the verb and nothing about the noun. Snippet
//! detections always contain the noun's object category with a high
//! confidence, plus low-confidence distractors, so they carry the noun and
//! nothing about the verb. A model that ignores detections can therefore do
//! no better than chance on nouns.
//!
//! Everything an episode contains is a function of `(seed, index)`:
//! cluster centers come from `Rng::new(seed).fork(CENTER_STREAM)` and the
//! episode itself from `Rng::new(seed).fork(index)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::heads::{HeadSizes, LabelTriple};
use crate::objects::{Detection, SnippetDetections};
use crate::rng::Rng;
use crate::tensor::Tensor;

const CENTER_STREAM: u64 = u64::MAX;
/// Segment lengths are drawn uniformly from this inclusive range.
pub const SEGMENT_LEN: (usize, usize) = (4, 12);
/// Background gaps between segments, inclusive.
pub const GAP_LEN: (usize, usize) = (1, 4);
pub const TRUE_CONFIDENCE: (f64, f64) = (0.7, 1.0);
pub const DISTRACTOR_CONFIDENCE: (f64, f64) = (0.05, 0.6);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub num_videos: usize,
    pub snippets_per_video: usize,
    pub feature_dim: usize,
    pub num_verbs: usize,
    pub num_nouns: usize,
    pub object_categories: usize,
    /// Per-category probability of a distractor detection.
    pub detection_noise: f64,
    pub feature_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_videos: 200,
            snippets_per_video: 64,
            feature_dim: 32,
            num_verbs: 8,
            num_nouns: 12,
            object_categories: 12,
            detection_noise: 0.2,
            feature_noise_sigma: 0.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_videos", self.num_videos),
            ("snippets_per_video", self.snippets_per_video),
            ("feature_dim", self.feature_dim),
            ("num_verbs", self.num_verbs),
            ("num_nouns", self.num_nouns),
            ("object_categories", self.object_categories),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.detection_noise) {
            return Err(Error::Config("detection_noise must lie in [0, 1]".into()));
        }
        if !(self.feature_noise_sigma >= 0.0) {
            return Err(Error::Config("feature_noise_sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn num_actions(&self) -> usize {
        self.num_verbs * self.num_nouns
    }

    /// Head sizes including the background class.
    pub fn head_sizes(&self) -> HeadSizes {
        HeadSizes {
            verb: self.num_verbs + 1,
            noun: self.num_nouns + 1,
            action: self.num_actions() + 1,
        }
    }

    /// Action id of a 1-based `(verb, noun)` pair.
    pub fn action_id(&self, verb: usize, noun: usize) -> usize {
        (verb - 1) * self.num_nouns + (noun - 1) + 1
    }

    /// Object category carrying noun `noun` (1-based).
    pub fn noun_category(&self, noun: usize) -> usize {
        (noun - 1) % self.object_categories
    }

    pub fn video_id(index: usize) -> String {
        format!("video_{index:04}")
    }

    /// Row `v` is the center of verb `v`; row 0 is background.
    pub fn verb_centers(&self) -> Tensor<f32> {
        let mut rng = Rng::new(self.seed).fork(CENTER_STREAM);
        let n = (self.num_verbs + 1) * self.feature_dim;
        let data = (0..n).map(|_| rng.normal() as f32).collect();
        Tensor::new(alloc::vec![self.num_verbs + 1, self.feature_dim], data).expect("positive dims")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub video_id: String,
    /// `[T x D]`.
    pub features: Tensor<f32>,
    pub detections: Vec<SnippetDetections>,
    pub labels: Vec<LabelTriple>,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn random_bbox(rng: &mut Rng) -> [f32; 4] {
    let w = rng.uniform(0.05, 0.4);
    let h = rng.uniform(0.05, 0.4);
    let x1 = rng.uniform(0.0, 1.0 - w);
    let y1 = rng.uniform(0.0, 1.0 - h);
    [x1 as f32, y1 as f32, (x1 + w) as f32, (y1 + h) as f32]
}

pub fn generate_episode(cfg: &SynthConfig, index: usize) -> Result<EpisodeRecord> {
    cfg.validate()?;
    let centers = cfg.verb_centers();
    let mut rng = Rng::new(cfg.seed).fork(index as u64);
    let t_len = cfg.snippets_per_video;

    let mut labels = Vec::with_capacity(t_len);
    // Videos may open mid-gap or straight into a segment.
    let mut gap = rng.range_inclusive(0, GAP_LEN.1);
    while labels.len() < t_len {
        for _ in 0..gap {
            labels.push(LabelTriple::BACKGROUND);
        }
        let len = rng.range_inclusive(SEGMENT_LEN.0, SEGMENT_LEN.1);
        let verb = 1 + rng.below(cfg.num_verbs);
        let noun = 1 + rng.below(cfg.num_nouns);
        let label = LabelTriple::action(verb, noun, cfg.action_id(verb, noun));
        for _ in 0..len {
            labels.push(label);
        }
        gap = rng.range_inclusive(GAP_LEN.0, GAP_LEN.1);
    }
    labels.truncate(t_len);

    let video_id = SynthConfig::video_id(index);
    let d = cfg.feature_dim;
    let mut features = Vec::with_capacity(t_len * d);
    let mut detections = Vec::with_capacity(t_len);
    for (t, label) in labels.iter().enumerate() {
        let center = centers.row(label.verb);
        for &c in center {
            features.push(c + (cfg.feature_noise_sigma * rng.normal()) as f32);
        }
        let true_category = (!label.background).then(|| cfg.noun_category(label.noun));
        let mut dets = Vec::new();
        for c in 0..cfg.object_categories {
            if Some(c) == true_category {
                dets.push(Detection {
                    category_id: c,
                    confidence: rng.uniform(TRUE_CONFIDENCE.0, TRUE_CONFIDENCE.1) as f32,
                    bbox: random_bbox(&mut rng),
                });
            } else if rng.bernoulli(cfg.detection_noise) {
                dets.push(Detection {
                    category_id: c,
                    confidence: rng.uniform(DISTRACTOR_CONFIDENCE.0, DISTRACTOR_CONFIDENCE.1) as f32,
                    bbox: random_bbox(&mut rng),
                });
            }
        }
        detections.push(SnippetDetections {
            video_id: video_id.clone(),
            snippet_index: t,
            detections: dets,
        });
    }

    Ok(EpisodeRecord {
        video_id,
        features: Tensor::new(alloc::vec![t_len, d], features)?,
        detections,
        labels,
    })
}

/// All episodes of a config, in index order.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Vec<EpisodeRecord>> {
    (0..cfg.num_videos).map(|i| generate_episode(cfg, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            num_videos: 5,
            snippets_per_video: 40,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed_and_index() {
        let cfg = small();
        assert_eq!(generate_episode(&cfg, 3).unwrap(), generate_episode(&cfg, 3).unwrap());
        assert_ne!(generate_episode(&cfg, 3).unwrap(), generate_episode(&cfg, 4).unwrap());
    }

    #[test]
    fn segments_are_contiguous_and_separated() {
        let cfg = small();
        for i in 0..cfg.num_videos {
            let ep = generate_episode(&cfg, i).unwrap();
            assert_eq!(ep.len(), cfg.snippets_per_video);
            assert_eq!(ep.features.shape(), &[cfg.snippets_per_video, cfg.feature_dim]);
            let sizes = cfg.head_sizes();
            for l in &ep.labels {
                l.validate(&sizes).unwrap();
            }
            // Consecutive segments are always separated by background.
            for w in ep.labels.windows(2) {
                if !w[0].background && !w[1].background {
                    assert_eq!(w[0], w[1]);
                }
            }
        }
    }

    #[test]
    fn noiseless_detections_hold_exactly_the_noun() {
        let cfg = SynthConfig {
            detection_noise: 0.0,
            ..small()
        };
        let ep = generate_episode(&cfg, 1).unwrap();
        for (l, d) in ep.labels.iter().zip(&ep.detections) {
            if l.background {
                assert!(d.detections.is_empty());
            } else {
                assert_eq!(d.detections.len(), 1);
                assert_eq!(d.detections[0].category_id, cfg.noun_category(l.noun));
                d.detections[0].validate().unwrap();
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig { num_verbs: 0, ..small() }.validate().is_err());
        assert!(SynthConfig { detection_noise: 1.5, ..small() }.validate().is_err());
        assert_eq!(SynthConfig::default().head_sizes(), HeadSizes { verb: 9, noun: 13, action: 97 });
    }
}
