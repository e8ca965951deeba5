//! Minimal gated recurrent backbone. Its hidden states are the temporal cues
//! read by the object-aware module.
//!
//! One step of the cell:
//!
//! ```text
//! z  = sigmoid(x W_z + h U_z + b_z)
//! h~ = tanh(x W_h + (z * h) U_h + b_h)
//! h' = (1 - z) * h + z * h~
//! ```

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::layers::Initializer;
use crate::param::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Visual feature of one snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSnippet<T = f32> {
    pub video_id: String,
    pub snippet_index: usize,
    pub feature: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState<T = f32> {
    /// Hidden state, shape `[1 x H]`.
    pub h: Tensor<T>,
    pub t: u64,
}

impl<T: Scalar> EncoderState<T> {
    pub fn zeros(hidden: usize) -> Self {
        EncoderState {
            h: Tensor::zeros(&[1, hidden]),
            t: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new<T: Scalar>(
        init: &mut Initializer<'_, T>,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
    ) -> Result<Self> {
        let wstd = 1.0 / libm::sqrt(input_dim as f64);
        let ustd = 1.0 / libm::sqrt(hidden_dim as f64);
        Ok(GruCell {
            w_z: init.normal(alloc::format!("{name}.w_z"), &[input_dim, hidden_dim], wstd)?,
            u_z: init.normal(alloc::format!("{name}.u_z"), &[hidden_dim, hidden_dim], ustd)?,
            b_z: init.normal(alloc::format!("{name}.b_z"), &[hidden_dim], 0.1)?,
            w_h: init.normal(alloc::format!("{name}.w_h"), &[input_dim, hidden_dim], wstd)?,
            u_h: init.normal(alloc::format!("{name}.u_h"), &[hidden_dim, hidden_dim], ustd)?,
            b_h: init.normal(alloc::format!("{name}.b_h"), &[hidden_dim], 0.1)?,
            input_dim,
            hidden_dim,
        })
    }

    /// Records one step. `x` is `[1 x D]`, `h` is `[1 x H]`.
    pub fn step_graph<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
        h: NodeId,
    ) -> Result<NodeId> {
        if g.value(x).numel() != self.input_dim {
            return Err(Error::dim("encoder step", g.value(x).shape(), &[self.input_dim]));
        }
        let (w_z, u_z, b_z) = (g.param(store, self.w_z), g.param(store, self.u_z), g.param(store, self.b_z));
        let (w_h, u_h, b_h) = (g.param(store, self.w_h), g.param(store, self.u_h), g.param(store, self.b_h));

        let xz = g.matmul(x, w_z)?;
        let hz = g.matmul(h, u_z)?;
        let pre_z = g.add(xz, hz)?;
        let pre_z = g.add_bias(pre_z, b_z)?;
        let z = g.sigmoid(pre_z);

        let xh = g.matmul(x, w_h)?;
        let zh = g.mul(z, h)?;
        let rh = g.matmul(zh, u_h)?;
        let pre_h = g.add(xh, rh)?;
        let pre_h = g.add_bias(pre_h, b_h)?;
        let cand = g.tanh(pre_h);

        let ones = g.input(Tensor::full(&[1, self.hidden_dim], T::one()));
        let keep = g.sub(ones, z)?;
        let kept = g.mul(keep, h)?;
        let fresh = g.mul(z, cand)?;
        g.add(kept, fresh)
    }

    /// One causal update. Returns the new state and its cue (`[1 x H]`).
    pub fn step<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        state: &EncoderState<T>,
        x: &FeatureSnippet<T>,
    ) -> Result<(EncoderState<T>, Tensor<T>)> {
        if x.feature.numel() != self.input_dim {
            return Err(Error::dim("encoder step", x.feature.shape(), &[self.input_dim]));
        }
        let mut g = Graph::new();
        let xi = g.input(x.feature.reshape(&[1, self.input_dim])?);
        let hi = g.input(state.h.clone());
        let out = self.step_graph(&mut g, store, xi, hi)?;
        let h = g.value(out).clone();
        Ok((EncoderState { h: h.clone(), t: state.t + 1 }, h))
    }
}

/// Runs the cell from a zero state; row `t` of the result is the cue after
/// consuming `features[0..=t]`.
pub fn encode_window<T: Scalar>(
    cell: &GruCell,
    store: &ParamStore<T>,
    features: &[FeatureSnippet<T>],
) -> Result<Tensor<T>> {
    if features.is_empty() {
        return Err(Error::EmptyContext("encode_window"));
    }
    let mut state = EncoderState::zeros(cell.hidden_dim);
    let mut data = Vec::with_capacity(features.len() * cell.hidden_dim);
    for x in features {
        let (next, cue) = cell.step(store, &state, x)?;
        data.extend_from_slice(cue.data());
        state = next;
    }
    Tensor::new(alloc::vec![features.len(), cell.hidden_dim], data)
}

/// Keeps the most recent `capacity` cues, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct CueBuffer<T = f32> {
    capacity: usize,
    rows: VecDeque<Tensor<T>>,
}

impl<T: Scalar> CueBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "cue buffer needs capacity >= 1");
        CueBuffer {
            capacity,
            rows: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, cue: Tensor<T>) {
        if self.rows.len() == self.capacity {
            self.rows.pop_front();
        }
        self.rows.push_back(cue);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.rows.iter()
    }

    /// Buffered cues stacked into `[len x H]`.
    pub fn to_tensor(&self) -> Result<Tensor<T>> {
        let first = self.rows.front().ok_or(Error::EmptyContext("cue buffer"))?;
        let h = first.numel();
        let mut data = Vec::with_capacity(self.rows.len() * h);
        for r in &self.rows {
            data.extend_from_slice(r.data());
        }
        Tensor::new(alloc::vec![self.rows.len(), h], data)
    }
}
