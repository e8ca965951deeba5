//! The object-aware module.
//!
//! A set of learnable queries first attends to the projected object token,
//! then to the temporal cues of the backbone, and finally passes through a
//! feed-forward layer. Every residual branch ends in a zero-initialized
//! projection, so a freshly built module returns its queries unchanged.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::layers::{sinusoid, Attention, FeedForward, Initializer, Linear, Norm};
use crate::objects::ObjectScoreVector;
use crate::param::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OAConfig {
    pub num_queries: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub ffn_mult: usize,
    pub num_blocks: usize,
    /// Self-attention among queries before each cross-attention.
    pub self_attention: bool,
    /// Add sinusoidal encodings (by age, newest = 0) to the cue rows.
    pub positional_encoding: bool,
    pub ln_eps: f64,
}

impl OAConfig {
    /// 16 queries of width 1024 in a single block.
    pub fn full() -> Self {
        OAConfig {
            embed_dim: 1024,
            ..Self::toy()
        }
    }

    pub fn toy() -> Self {
        OAConfig {
            num_queries: 16,
            embed_dim: 32,
            num_heads: 4,
            ffn_mult: 4,
            num_blocks: 1,
            self_attention: true,
            positional_encoding: false,
            ln_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_queries == 0 || self.num_blocks == 0 || self.ffn_mult == 0 {
            return Err(Error::Config(
                "num_queries, num_blocks and ffn_mult must be at least 1".into(),
            ));
        }
        if self.num_heads == 0 || self.embed_dim == 0 || !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "embed_dim {} must be a positive multiple of num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if !(self.ln_eps > 0.0) {
            return Err(Error::Config("ln_eps must be positive".into()));
        }
        Ok(())
    }
}

impl Default for OAConfig {
    fn default() -> Self {
        Self::toy()
    }
}

/// The projected object token, `[1 x d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectToken<T = f32> {
    pub token: Tensor<T>,
}

/// Pre-norm decoder layer: optional self-attention, cross-attention, FFN.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub self_norm: Option<Norm>,
    pub self_attn: Option<Attention>,
    pub cross_norm: Norm,
    pub cross_attn: Attention,
    pub ffn_norm: Norm,
    pub ffn: FeedForward,
}

impl DecoderLayer {
    fn new<T: Scalar>(init: &mut Initializer<'_, T>, name: &str, cfg: &OAConfig) -> Result<Self> {
        let d = cfg.embed_dim;
        let (self_norm, self_attn) = if cfg.self_attention {
            (
                Some(init.norm(&format!("{name}.self_norm"), d)?),
                Some(init.attention(&format!("{name}.self_attn"), d, cfg.num_heads)?),
            )
        } else {
            (None, None)
        };
        Ok(DecoderLayer {
            self_norm,
            self_attn,
            cross_norm: init.norm(&format!("{name}.cross_norm"), d)?,
            cross_attn: init.attention(&format!("{name}.cross_attn"), d, cfg.num_heads)?,
            ffn_norm: init.norm(&format!("{name}.ffn_norm"), d)?,
            ffn: init.feed_forward(&format!("{name}.ffn"), d, cfg.ffn_mult)?,
        })
    }

    pub fn forward_graph<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        queries: NodeId,
        context: NodeId,
        eps: T,
    ) -> Result<NodeId> {
        let mut q = queries;
        if let (Some(norm), Some(attn)) = (&self.self_norm, &self.self_attn) {
            let n = norm.forward(g, store, q, eps)?;
            let a = attn.forward(g, store, n, n)?;
            q = g.add(q, a)?;
        }
        let n = self.cross_norm.forward(g, store, q, eps)?;
        let a = self.cross_attn.forward(g, store, n, context)?;
        q = g.add(q, a)?;
        let n = self.ffn_norm.forward(g, store, q, eps)?;
        let f = self.ffn.forward(g, store, n)?;
        g.add(q, f)
    }
}

#[derive(Debug, Clone)]
pub struct ObjectAwareModule {
    pub config: OAConfig,
    pub num_categories: usize,
    pub queries: ParamId,
    pub object_proj: Linear,
    /// `(object layer, temporal layer)` per block.
    pub blocks: Vec<(DecoderLayer, DecoderLayer)>,
    pub out_norm: Norm,
    pub out_ffn: FeedForward,
}

impl ObjectAwareModule {
    pub fn new<T: Scalar>(
        init: &mut Initializer<'_, T>,
        name: &str,
        config: OAConfig,
        num_categories: usize,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let queries = init.normal(format!("{name}.queries"), &[config.num_queries, d], 0.02)?;
        let object_proj = init.linear(&format!("{name}.object_proj"), num_categories, d)?;
        let mut blocks = Vec::with_capacity(config.num_blocks);
        for b in 0..config.num_blocks {
            blocks.push((
                DecoderLayer::new(init, &format!("{name}.block{b}.object"), &config)?,
                DecoderLayer::new(init, &format!("{name}.block{b}.temporal"), &config)?,
            ));
        }
        Ok(ObjectAwareModule {
            config,
            num_categories,
            queries,
            object_proj,
            blocks,
            out_norm: init.norm(&format!("{name}.out_norm"), d)?,
            out_ffn: init.feed_forward(&format!("{name}.out_ffn"), d, config.ffn_mult)?,
        })
    }

    fn eps<T: Scalar>(&self) -> T {
        T::from_f64(self.config.ln_eps)
    }

    /// `f W_p + b_p` for an object score row `[1 x C]`.
    pub fn project_objects_graph<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        scores: NodeId,
    ) -> Result<NodeId> {
        if g.value(scores).numel() != self.num_categories {
            return Err(Error::dim(
                "project_objects",
                g.value(scores).shape(),
                &[1, self.num_categories],
            ));
        }
        self.object_proj.forward(g, store, scores)
    }

    /// Full module. `scores` is `[1 x C]` (or `[M x C]` for several object
    /// tokens), `cues` is `[L x d]` with the newest cue in the last row.
    pub fn forward_graph<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        scores: NodeId,
        cues: NodeId,
    ) -> Result<NodeId> {
        let d = self.config.embed_dim;
        if g.value(cues).cols() != d || g.value(cues).shape().len() != 2 {
            return Err(Error::dim("oam_forward cues", g.value(cues).shape(), &[0, d]));
        }
        let eps = self.eps();
        let object = self.project_objects_graph(g, store, scores)?;
        let cues = if self.config.positional_encoding {
            let rows = g.value(cues).rows();
            let mut pe = Vec::with_capacity(rows * d);
            for r in 0..rows {
                pe.extend(sinusoid::<T>(rows - 1 - r, d));
            }
            let pe = g.input(Tensor::new(alloc::vec![rows, d], pe)?);
            g.add(cues, pe)?
        } else {
            cues
        };
        let mut q = g.param(store, self.queries);
        for (object_layer, temporal_layer) in &self.blocks {
            q = object_layer.forward_graph(g, store, q, object, eps)?;
            q = temporal_layer.forward_graph(g, store, q, cues, eps)?;
        }
        let n = self.out_norm.forward(g, store, q, eps)?;
        let f = self.out_ffn.forward(g, store, n)?;
        g.add(q, f)
    }

    pub fn project_objects<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        f: &ObjectScoreVector,
    ) -> Result<ObjectToken<T>> {
        let mut g = Graph::new();
        let s = g.input(f.scores.cast());
        let out = self.project_objects_graph(&mut g, store, s)?;
        Ok(ObjectToken {
            token: g.value(out).clone(),
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        f: &ObjectScoreVector,
        cues: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let s = g.input(f.scores.cast());
        let c = g.input(cues.clone());
        let out = self.forward_graph(&mut g, store, s, c)?;
        Ok(g.value(out).clone())
    }
}

/// One decoder layer applied to explicit tensors.
pub fn decoder_layer<T: Scalar>(
    layer: &DecoderLayer,
    store: &ParamStore<T>,
    queries: &Tensor<T>,
    context: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let q = g.input(queries.clone());
    let c = g.input(context.clone());
    let out = layer.forward_graph(&mut g, store, q, c, eps)?;
    Ok(g.value(out).clone())
}
