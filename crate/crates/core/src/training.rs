//! Sequence training: one whole video per optimizer step.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::heads::{LabelTriple, LossWeights};
use crate::metrics::{PredictionEntry, PredictionLog};
use crate::model::Model;
use crate::optim::Adam;
use crate::rng::Rng;
use crate::synth::EpisodeRecord;
use crate::tensor::Tensor;

const SAMPLER_STREAM: u64 = 0x7361_6d70;

/// A video ready for the model: features, aggregated object rows, labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub video_id: alloc::string::String,
    pub features: Tensor<f32>,
    pub objects: Tensor<f32>,
    pub labels: Vec<LabelTriple>,
}

impl Sequence {
    pub fn from_episode(model: &Model<f32>, ep: &EpisodeRecord) -> Result<Self> {
        let c = model.config.object_categories;
        let mut objects = Vec::with_capacity(ep.len() * c);
        for d in &ep.detections {
            objects.extend_from_slice(model.object_row(d)?.data());
        }
        Ok(Sequence {
            video_id: ep.video_id.clone(),
            features: ep.features.clone(),
            objects: Tensor::new(alloc::vec![ep.len(), c], objects)?,
            labels: ep.labels.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub steps: u64,
    /// Videos per optimizer step (gradient accumulation).
    pub grad_accum: usize,
    pub seed: u64,
    pub log_every: u64,
    pub loss_weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            betas: (0.9, 0.999),
            eps: 1e-8,
            steps: 2000,
            grad_accum: 1,
            seed: 7,
            log_every: 50,
            loss_weights: LossWeights::default(),
        }
    }
}

/// Mean training loss over the last `log_every` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub step: u64,
    pub loss: f64,
}

/// Runs `cfg.steps` Adam steps over videos sampled uniformly (with
/// replacement) from `data`. Fails with a divergence error on a non-finite
/// loss or gradient.
pub fn train(model: &mut Model<f32>, data: &[Sequence], cfg: &TrainConfig, mut on_log: impl FnMut(LogEntry)) -> Result<()> {
    if cfg.steps == 0 {
        return Ok(());
    }
    if data.is_empty() {
        return Err(Error::Data("no training videos".into()));
    }
    if cfg.grad_accum == 0 || cfg.log_every == 0 {
        return Err(Error::Config("grad_accum and log_every must be at least 1".into()));
    }
    let mut sampler = Rng::new(cfg.seed).fork(SAMPLER_STREAM);
    let mut adam = Adam::new(&model.params, cfg.lr, cfg.betas, cfg.eps);
    let skeleton = model.clone();
    let mut window_loss = 0.0;
    let mut window_len = 0u64;
    for step in 1..=cfg.steps {
        model.params.zero_grads();
        let mut step_loss = 0.0;
        for _ in 0..cfg.grad_accum {
            let seq = &data[sampler.below(data.len())];
            let mut g = Graph::new();
            let loss = skeleton.sequence_loss(&mut g, &model.params, &seq.features, &seq.objects, &seq.labels, cfg.loss_weights)?;
            let value = g.value(loss).data()[0] as f64;
            if !value.is_finite() {
                return Err(Error::Divergence(format!("loss at step {step}")));
            }
            step_loss += value;
            g.backward_into(loss, &mut model.params)?;
        }
        if cfg.grad_accum > 1 {
            let s = 1.0 / cfg.grad_accum as f32;
            for p in model.params.iter_mut() {
                p.grad.data_mut().iter_mut().for_each(|v| *v *= s);
            }
        }
        adam.step(&mut model.params, step)?;
        window_loss += step_loss / cfg.grad_accum as f64;
        window_len += 1;
        if step % cfg.log_every == 0 {
            on_log(LogEntry {
                step,
                loss: window_loss / window_len as f64,
            });
            window_loss = 0.0;
            window_len = 0;
        }
    }
    Ok(())
}

/// Causal pass over each sequence, collecting top-5 predictions.
pub fn predict(model: &Model<f32>, data: &[Sequence]) -> Result<PredictionLog> {
    let mut log = PredictionLog::new();
    for seq in data {
        let mut state = model.stream();
        for t in 0..seq.labels.len() {
            let out = model.stream_step(&mut state, seq.features.row(t), seq.objects.row(t))?;
            log.push(PredictionEntry::from_outputs(seq.video_id.clone(), t, &out, seq.labels[t])?);
        }
    }
    Ok(PredictionLog::from_entries(log.entries().to_vec()))
}
