//! The complete detector: recurrent backbone, optional object integration,
//! max pooling and classifiers.
//!
//! Three integration modes are supported:
//!
//! * [`Integration::None`]: backbone only. The hidden state is projected to the
//!   embedding width, pooled (a single row, so the identity) and classified.
//! * [`Integration::InputConcat`]: object scores are projected to
//!   `concat_dim` and concatenated to the visual feature before the backbone;
//!   the head path is the same as `None`.
//! * [`Integration::OaModule`]: the object-aware module refines its queries
//!   with the object token and the window of recent hidden states, and the
//!   queries are max-pooled.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use crate::encoder::{CueBuffer, EncoderState, GruCell};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::heads::{self, Classifiers, HeadNodes, HeadOutputs, HeadSizes, LabelTriple, LossWeights};
use crate::layers::{InitMode, Initializer, Linear};
use crate::oam::{OAConfig, ObjectAwareModule};
use crate::objects::{aggregate_scores_with, Aggregation, SnippetDetections};
use crate::param::ParamStore;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integration {
    None,
    InputConcat,
    OaModule,
}

impl Integration {
    pub const ALL: [Integration; 3] = [Integration::None, Integration::InputConcat, Integration::OaModule];

    pub fn name(self) -> &'static str {
        match self {
            Integration::None => "none",
            Integration::InputConcat => "input_concat",
            Integration::OaModule => "oa_module",
        }
    }
}

/// Which backbone states form the temporal cues.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CueMode {
    /// The last `k` hidden states (fewer at the start of a video).
    LastK(usize),
    /// Only the current hidden state.
    Final,
}

impl CueMode {
    pub fn window(self) -> usize {
        match self {
            CueMode::LastK(k) => k,
            CueMode::Final => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub object_categories: usize,
    pub heads: HeadSizes,
    pub oam: OAConfig,
    pub cues: CueMode,
    pub integration: Integration,
    /// Width of the projected object scores in `InputConcat` mode.
    pub concat_dim: usize,
    pub aggregation: Aggregation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_dim: 32,
            hidden_dim: 32,
            object_categories: 12,
            heads: HeadSizes {
                verb: 9,
                noun: 13,
                action: 97,
            },
            oam: OAConfig::toy(),
            cues: CueMode::LastK(16),
            integration: Integration::OaModule,
            concat_dim: 32,
            aggregation: Aggregation::Max,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.oam.validate()?;
        for (name, v) in [
            ("feature_dim", self.feature_dim),
            ("hidden_dim", self.hidden_dim),
            ("object_categories", self.object_categories),
            ("concat_dim", self.concat_dim),
            ("cue window", self.cues.window()),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, n) in [("verb", self.heads.verb), ("noun", self.heads.noun), ("action", self.heads.action)] {
            if n < 6 {
                return Err(Error::Config(format!(
                    "{name} head has {n} classes; top-5 evaluation needs at least 5 plus background"
                )));
            }
        }
        if self.integration == Integration::OaModule && self.hidden_dim != self.oam.embed_dim {
            return Err(Error::Config(format!(
                "hidden_dim {} must equal embed_dim {} when the object-aware module reads the cues",
                self.hidden_dim, self.oam.embed_dim
            )));
        }
        Ok(())
    }

    fn encoder_input_dim(&self) -> usize {
        match self.integration {
            Integration::InputConcat => self.feature_dim + self.concat_dim,
            _ => self.feature_dim,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model<T = f32> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    pub encoder: GruCell,
    pub oam: Option<ObjectAwareModule>,
    pub hidden_proj: Option<Linear>,
    pub concat_proj: Option<Linear>,
    pub heads: Classifiers,
}

impl<T: Scalar> Model<T> {
    /// Fresh parameters drawn from `seed`. Modules draw from independent
    /// forks so adding one never shifts another's initialization.
    pub fn new(config: ModelConfig, seed: u64, mode: InitMode) -> Result<Self> {
        config.validate()?;
        let root = Rng::new(seed);
        let mut params = ParamStore::new();
        let d = config.oam.embed_dim;

        let concat_proj = if config.integration == Integration::InputConcat {
            let mut init = Initializer::new(&mut params, root.fork(1), mode);
            Some(init.linear("concat_proj", config.object_categories, config.concat_dim)?)
        } else {
            None
        };
        let encoder = {
            let mut init = Initializer::new(&mut params, root.fork(2), mode);
            GruCell::new(&mut init, "encoder", config.encoder_input_dim(), config.hidden_dim)?
        };
        let (oam, hidden_proj) = if config.integration == Integration::OaModule {
            let mut init = Initializer::new(&mut params, root.fork(3), mode);
            (
                Some(ObjectAwareModule::new(&mut init, "oam", config.oam, config.object_categories)?),
                None,
            )
        } else {
            let mut init = Initializer::new(&mut params, root.fork(4), mode);
            (None, Some(init.linear("hidden_proj", config.hidden_dim, d)?))
        };
        let heads = {
            let mut init = Initializer::new(&mut params, root.fork(5), mode);
            Classifiers::new(&mut init, "heads", d, config.heads)?
        };
        Ok(Model {
            config,
            params,
            encoder,
            oam,
            hidden_proj,
            concat_proj,
            heads,
        })
    }

    /// Rebuilds the architecture of `config` around existing parameters.
    /// Names, order and shapes must match exactly.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let mut model = Self::new(config, 0, InitMode::Standard)?;
        if model.params.len() != params.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                model.params.len(),
                params.len()
            )));
        }
        for (want, got) in model.params.iter().zip(params.iter()) {
            if want.name != got.name || want.value.shape() != got.value.shape() {
                return Err(Error::Config(format!(
                    "parameter mismatch: expected `{}` {:?}, got `{}` {:?}",
                    want.name,
                    want.value.shape(),
                    got.name,
                    got.value.shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config,
            params: self.params.cast(),
            encoder: self.encoder.clone(),
            oam: self.oam.clone(),
            hidden_proj: self.hidden_proj,
            concat_proj: self.concat_proj,
            heads: self.heads.clone(),
        }
    }

    /// Aggregated object scores of one snippet as a `[1 x C]` row.
    pub fn object_row(&self, dets: &SnippetDetections) -> Result<Tensor<T>> {
        let v = aggregate_scores_with(dets, self.config.object_categories, self.config.aggregation)?;
        Ok(v.scores.cast())
    }

    fn check_row(&self, what: &'static str, v: &Tensor<T>, want: usize) -> Result<()> {
        if v.numel() != want {
            return Err(Error::dim(what, v.shape(), &[want]));
        }
        Ok(())
    }

    /// Backbone step for one snippet; returns the new hidden state node.
    fn encode_step(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
        objects: NodeId,
        h_prev: NodeId,
    ) -> Result<NodeId> {
        let input = match &self.concat_proj {
            Some(proj) => {
                let p = proj.forward(g, store, objects)?;
                g.concat_cols(&[x, p])?
            }
            None => x,
        };
        self.encoder.step_graph(g, store, input, h_prev)
    }

    /// Classifier logits given the current objects and the cue window
    /// (oldest first, current hidden state last).
    fn classify_step(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        objects: NodeId,
        window: &[NodeId],
    ) -> Result<HeadNodes> {
        let current = *window.last().ok_or(Error::EmptyContext("cue window"))?;
        let pooled = match (&self.oam, &self.hidden_proj) {
            (Some(oam), _) => {
                let cues = g.concat_rows(window)?;
                let q = oam.forward_graph(g, store, objects, cues)?;
                g.max_pool_rows(q)
            }
            (None, Some(proj)) => {
                let p = proj.forward(g, store, current)?;
                g.max_pool_rows(p)
            }
            (None, None) => unreachable!("model has either an OA-module or a hidden projection"),
        };
        self.heads.classify_graph(g, store, pooled)
    }

    /// Records the whole sequence. `features` is `[T x D]`, `objects` `[T x C]`.
    pub fn sequence_graph(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        features: &Tensor<T>,
        objects: &Tensor<T>,
    ) -> Result<Vec<HeadNodes>> {
        let cfg = &self.config;
        if features.shape().len() != 2 || features.cols() != cfg.feature_dim {
            return Err(Error::dim("sequence features", features.shape(), &[0, cfg.feature_dim]));
        }
        if objects.shape() != [features.rows(), cfg.object_categories] {
            return Err(Error::dim(
                "sequence objects",
                objects.shape(),
                &[features.rows(), cfg.object_categories],
            ));
        }
        let mut h = g.input(Tensor::zeros(&[1, cfg.hidden_dim]));
        let mut window: VecDeque<NodeId> = VecDeque::with_capacity(cfg.cues.window());
        let mut out = Vec::with_capacity(features.rows());
        for t in 0..features.rows() {
            let x = g.input(Tensor::new(alloc::vec![1, cfg.feature_dim], features.row(t).to_vec())?);
            let o = g.input(Tensor::new(alloc::vec![1, cfg.object_categories], objects.row(t).to_vec())?);
            h = self.encode_step(g, store, x, o, h)?;
            if window.len() == cfg.cues.window() {
                window.pop_front();
            }
            window.push_back(h);
            let nodes: Vec<NodeId> = window.iter().copied().collect();
            out.push(self.classify_step(g, store, o, &nodes)?);
        }
        Ok(out)
    }

    /// Mean over snippets of the weighted three-head cross-entropy.
    pub fn sequence_loss(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        features: &Tensor<T>,
        objects: &Tensor<T>,
        labels: &[LabelTriple],
        weights: LossWeights,
    ) -> Result<NodeId> {
        if labels.len() != features.rows() {
            return Err(Error::Data(format!(
                "{} labels for {} snippets",
                labels.len(),
                features.rows()
            )));
        }
        let nodes = self.sequence_graph(g, store, features, objects)?;
        let mut total: Option<NodeId> = None;
        for (n, label) in nodes.into_iter().zip(labels) {
            let l = heads::loss_graph(g, n, label, weights)?;
            total = Some(match total {
                Some(acc) => g.add(acc, l)?,
                None => l,
            });
        }
        let total = total.ok_or(Error::EmptyContext("sequence_loss"))?;
        Ok(g.scale(total, T::one() / T::from_f64(labels.len() as f64)))
    }

    /// Logits for every snippet of a sequence (no gradients kept).
    pub fn sequence_outputs(&self, features: &Tensor<T>, objects: &Tensor<T>) -> Result<Vec<HeadOutputs<T>>> {
        let mut g = Graph::new();
        let nodes = self.sequence_graph(&mut g, &self.params, features, objects)?;
        Ok(nodes.into_iter().map(|n| heads::outputs(&g, n)).collect())
    }

    pub fn stream(&self) -> StreamState<T> {
        StreamState::new(&self.config)
    }

    /// Consumes one snippet and returns its logits. Depends only on this and
    /// earlier snippets of the same stream.
    pub fn stream_step(&self, state: &mut StreamState<T>, feature: &[T], objects: &[T]) -> Result<HeadOutputs<T>> {
        let cfg = &self.config;
        let feature = Tensor::new(alloc::vec![1, feature.len()], feature.to_vec())?;
        let objects = Tensor::new(alloc::vec![1, objects.len()], objects.to_vec())?;
        self.check_row("stream feature", &feature, cfg.feature_dim)?;
        self.check_row("stream objects", &objects, cfg.object_categories)?;

        let mut g = Graph::new();
        let x = g.input(feature);
        let o = g.input(objects);
        let h_prev = g.input(state.encoder.h.clone());
        let h = self.encode_step(&mut g, &self.params, x, o, h_prev)?;
        let h_value = g.value(h).clone();

        let mut window: Vec<NodeId> = Vec::with_capacity(cfg.cues.window());
        let keep = state.cues.len().min(cfg.cues.window() - 1);
        for cue in state.cues.iter().skip(state.cues.len() - keep) {
            window.push(g.input(cue.clone()));
        }
        window.push(h);
        let nodes = self.classify_step(&mut g, &self.params, o, &window)?;
        let outputs = heads::outputs(&g, nodes);

        state.cues.push(h_value.clone());
        state.encoder = EncoderState {
            h: h_value,
            t: state.encoder.t + 1,
        };
        Ok(outputs)
    }
}

/// Per-video streaming state: backbone state plus the recent cues.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamState<T = f32> {
    pub encoder: EncoderState<T>,
    pub cues: CueBuffer<T>,
}

impl<T: Scalar> StreamState<T> {
    pub fn new(config: &ModelConfig) -> Self {
        StreamState {
            encoder: EncoderState::zeros(config.hidden_dim),
            cues: CueBuffer::new(config.cues.window()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(integration: Integration) -> ModelConfig {
        ModelConfig {
            feature_dim: 5,
            hidden_dim: 8,
            object_categories: 4,
            heads: HeadSizes { verb: 6, noun: 7, action: 8 },
            oam: OAConfig {
                num_queries: 3,
                embed_dim: 8,
                num_heads: 2,
                ffn_mult: 2,
                ..OAConfig::toy()
            },
            cues: CueMode::LastK(3),
            integration,
            concat_dim: 3,
            aggregation: Aggregation::Max,
        }
    }

    fn random_inputs(rng: &mut Rng, t: usize, d: usize, c: usize) -> (Tensor<f64>, Tensor<f64>) {
        let f = (0..t * d).map(|_| rng.normal()).collect();
        let o = (0..t * c).map(|_| rng.next_f64()).collect();
        (Tensor::matrix(t, d, f).unwrap(), Tensor::matrix(t, c, o).unwrap())
    }

    #[test]
    fn streaming_matches_sequence_graph() {
        for mode in Integration::ALL {
            let model = Model::<f64>::new(tiny(mode), 3, InitMode::Random).unwrap();
            let mut rng = Rng::new(4);
            let (f, o) = random_inputs(&mut rng, 7, 5, 4);
            let batch = model.sequence_outputs(&f, &o).unwrap();
            let mut state = model.stream();
            for t in 0..7 {
                let step = model.stream_step(&mut state, f.row(t), o.row(t)).unwrap();
                assert_eq!(step, batch[t], "mode {mode:?} t {t}");
            }
            assert_eq!(state.encoder.t, 7);
        }
    }

    #[test]
    fn outputs_are_causal() {
        let model = Model::<f32>::new(tiny(Integration::OaModule), 5, InitMode::Random).unwrap();
        let mut rng = Rng::new(6);
        let (f, o) = random_inputs(&mut rng, 8, 5, 4);
        let (f, o) = (f.cast::<f32>(), o.cast::<f32>());
        let full = model.sequence_outputs(&f, &o).unwrap();
        let mut f2 = f.clone();
        for v in &mut f2.data_mut()[5 * 5..] {
            *v += 3.0;
        }
        let changed = model.sequence_outputs(&f2, &o).unwrap();
        assert_eq!(&full[..5], &changed[..5]);
        assert_ne!(full[5], changed[5]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny(Integration::OaModule);
        cfg.hidden_dim = 6;
        assert!(matches!(Model::<f32>::new(cfg, 0, InitMode::Standard), Err(Error::Config(_))));
        cfg.integration = Integration::None;
        assert!(Model::<f32>::new(cfg, 0, InitMode::Standard).is_ok());
        cfg.heads.noun = 5;
        assert!(Model::<f32>::new(cfg, 0, InitMode::Standard).is_err());
    }

    #[test]
    fn from_params_round_trip_and_mismatch() {
        let model = Model::<f32>::new(tiny(Integration::InputConcat), 9, InitMode::Standard).unwrap();
        let again = Model::from_params(model.config, model.params.clone()).unwrap();
        assert_eq!(again.params, model.params);
        assert!(Model::from_params(tiny(Integration::OaModule), model.params.clone()).is_err());
    }

    #[test]
    fn seeds_are_reproducible() {
        let a = Model::<f32>::new(ModelConfig::default(), 11, InitMode::Standard).unwrap();
        let b = Model::<f32>::new(ModelConfig::default(), 11, InitMode::Standard).unwrap();
        let c = Model::<f32>::new(ModelConfig::default(), 12, InitMode::Standard).unwrap();
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, c.params);
    }
}
