//! Parameter bundles for the standard layers and their graph forwards.

use alloc::format;
use alloc::string::String;
use alloc::vec;

use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::param::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// How fresh parameters are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    /// Normal training init: the last projection of every residual branch is
    /// zero, norms are identity.
    #[default]
    Standard,
    /// Every tensor random, including zero-initialized projections and norm
    /// parameters. Used by gradient checks where zeros would hide errors.
    Random,
}

/// Allocates named parameters in a store from one seeded stream.
pub struct Initializer<'a, T: Scalar> {
    pub store: &'a mut ParamStore<T>,
    rng: Rng,
    mode: InitMode,
}

impl<'a, T: Scalar> Initializer<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: Rng, mode: InitMode) -> Self {
        Initializer { store, rng, mode }
    }

    fn draw(&mut self, shape: &[usize], std: f64, mean: f64) -> Tensor<T> {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64(mean + std * self.rng.normal()))
            .collect();
        Tensor::new(shape.to_vec(), data).expect("valid shape")
    }

    pub fn normal(&mut self, name: String, shape: &[usize], std: f64) -> Result<ParamId> {
        let t = self.draw(shape, std, 0.0);
        self.store.add(name, t)
    }

    fn zeros_or_random(&mut self, name: String, shape: &[usize], std: f64) -> Result<ParamId> {
        let t = match self.mode {
            InitMode::Standard => Tensor::zeros(shape),
            InitMode::Random => self.draw(shape, std, 0.0),
        };
        self.store.add(name, t)
    }

    /// Weight `N(0, 1/fan_in)`, bias zero.
    pub fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
        let std = 1.0 / libm::sqrt(fan_in as f64);
        let w = self.normal(format!("{name}.weight"), &[fan_in, fan_out], std)?;
        let b = self.zeros_or_random(format!("{name}.bias"), &[fan_out], 0.1)?;
        Ok(Linear { w, b, fan_in, fan_out })
    }

    /// Linear map that starts at exactly zero under [`InitMode::Standard`].
    pub fn linear_zero(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
        let std = 1.0 / libm::sqrt(fan_in as f64);
        let w = self.zeros_or_random(format!("{name}.weight"), &[fan_in, fan_out], std)?;
        let b = self.zeros_or_random(format!("{name}.bias"), &[fan_out], 0.1)?;
        Ok(Linear { w, b, fan_in, fan_out })
    }

    pub fn norm(&mut self, name: &str, dim: usize) -> Result<Norm> {
        let (gamma, beta) = match self.mode {
            InitMode::Standard => (Tensor::full(&[dim], T::one()), Tensor::zeros(&[dim])),
            InitMode::Random => (self.draw(&[dim], 0.1, 1.0), self.draw(&[dim], 0.1, 0.0)),
        };
        Ok(Norm {
            gamma: self.store.add(format!("{name}.gamma"), gamma)?,
            beta: self.store.add(format!("{name}.beta"), beta)?,
        })
    }

    pub fn attention(&mut self, name: &str, dim: usize, heads: usize) -> Result<Attention> {
        Ok(Attention {
            q: self.linear(&format!("{name}.q"), dim, dim)?,
            k: self.linear(&format!("{name}.k"), dim, dim)?,
            v: self.linear(&format!("{name}.v"), dim, dim)?,
            out: self.linear_zero(&format!("{name}.out"), dim, dim)?,
            heads,
        })
    }

    pub fn feed_forward(&mut self, name: &str, dim: usize, mult: usize) -> Result<FeedForward> {
        Ok(FeedForward {
            up: self.linear(&format!("{name}.up"), dim, dim * mult)?,
            down: self.linear_zero(&format!("{name}.down"), dim * mult, dim)?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.linear(x, w, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
        eps: T,
    ) -> Result<NodeId> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.layer_norm(x, gamma, beta, eps)
    }
}

/// Multi-head attention with input and output projections.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        query: NodeId,
        context: NodeId,
    ) -> Result<NodeId> {
        let q = self.q.forward(g, store, query)?;
        let k = self.k.forward(g, store, context)?;
        let v = self.v.forward(g, store, context)?;
        let a = g.attention(q, k, v, self.heads)?;
        self.out.forward(g, store, a)
    }
}

/// `down(gelu(up(x)))`.
#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: NodeId) -> Result<NodeId> {
        let h = self.up.forward(g, store, x)?;
        let h = g.gelu(h);
        self.down.forward(g, store, h)
    }
}

/// Sinusoidal encoding of `position` over `dim` channels
/// (`sin` on even channels, `cos` on odd, base 10000).
pub fn sinusoid<T: Scalar>(position: usize, dim: usize) -> alloc::vec::Vec<T> {
    let mut out = vec![T::zero(); dim];
    for (i, o) in out.iter_mut().enumerate() {
        let pair = (i / 2) as f64;
        let angle = position as f64 / libm::pow(10000.0, 2.0 * pair / dim as f64);
        *o = T::from_f64(if i % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) });
    }
    out
}
