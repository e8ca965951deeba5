//! Reverse-mode automatic differentiation over a dynamically recorded tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Each operation computes
//! its value eagerly with the kernels in [`crate::tensor`] and records enough
//! state to apply its vector-Jacobian product later. [`Graph::backward`]
//! walks the tape in reverse creation order, which is a valid topological
//! order because nodes can only reference earlier nodes.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    AddBias(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Gelu(NodeId),
    SoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        probs: Vec<T>,
    },
    MaxPoolRows {
        x: NodeId,
        argmax: Vec<usize>,
    },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    Reshape(NodeId),
    CrossEntropy {
        logits: NodeId,
        target: usize,
        probs: Vec<T>,
    },
    Sum(NodeId),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients produced by one backward pass, keyed by parameter.
#[derive(Debug, Clone)]
pub struct ParamGrads<T> {
    pub grads: Vec<(ParamId, Tensor<T>)>,
}

#[derive(Debug, Default)]
pub struct Graph<T = f32> {
    nodes: Vec<Node<T>>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].needs_grad)
    }

    /// A constant leaf; no gradient is tracked for it.
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Input, false)
    }

    /// Leaf bound to a parameter. Repeated calls reuse the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        if self.param_nodes.len() <= id.0 {
            self.param_nodes.resize(id.0 + 1, None);
        }
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        let n = self.push(store.value(id).clone(), Op::Param(id), true);
        self.param_nodes[id.0] = Some(n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = tensor::matmul(self.value(a), self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(v, Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = tensor::transpose(self.value(a))?;
        let ng = self.ng(&[a]);
        Ok(self.push(v, Op::Transpose(a), ng))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: NodeId, s: T) -> NodeId {
        let v = self.value(a).scale(s);
        let ng = self.ng(&[a]);
        self.push(v, Op::Scale(a, s), ng)
    }

    /// Adds `bias` (length = last axis of `x`) to every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = tensor::add_bias(self.value(x), self.value(bias))?;
        let ng = self.ng(&[x, bias]);
        Ok(self.push(v, Op::AddBias(x, bias), ng))
    }

    /// `x w + b`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(tensor::sigmoid);
        let ng = self.ng(&[a]);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.tanh());
        let ng = self.ng(&[a]);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(tensor::gelu);
        let ng = self.ng(&[a]);
        self.push(v, Op::Gelu(a), ng)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let v = tensor::softmax_rows(self.value(a));
        let ng = self.ng(&[a]);
        self.push(v, Op::SoftmaxRows(a), ng)
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: T) -> Result<NodeId> {
        let (v, stats) =
            tensor::layer_norm_with_stats(self.value(x), self.value(gamma), self.value(beta), eps)?;
        let ng = self.ng(&[x, gamma, beta]);
        Ok(self.push(
            v,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat: stats.xhat,
                rstd: stats.rstd,
            },
            ng,
        ))
    }

    /// Multi-head scaled dot-product attention of `q` over `k`/`v`.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, heads: usize) -> Result<NodeId> {
        let (out, probs) =
            tensor::attention_with_probs(self.value(q), self.value(k), self.value(v), heads)?;
        let ng = self.ng(&[q, k, v]);
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
            ng,
        ))
    }

    /// Column-wise max over the rows of a matrix, shape `[cols]`.
    pub fn max_pool_rows(&mut self, x: NodeId) -> NodeId {
        let (v, argmax) = tensor::max_pool_rows(self.value(x));
        let ng = self.ng(&[x]);
        self.push(v, Op::MaxPoolRows { x, argmax }, ng)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts.first().ok_or(Error::EmptyContext("concat_cols"))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for p in parts {
            if self.value(*p).rows() != rows {
                return Err(Error::dim(
                    "concat_cols",
                    self.value(*first).shape(),
                    self.value(*p).shape(),
                ));
            }
            cols += self.value(*p).cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let v = Tensor::new(vec![rows, cols], data)?;
        let ng = self.ng(parts);
        Ok(self.push(v, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts.first().ok_or(Error::EmptyContext("concat_rows"))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        for p in parts {
            if self.value(*p).cols() != cols {
                return Err(Error::dim(
                    "concat_rows",
                    self.value(*first).shape(),
                    self.value(*p).shape(),
                ));
            }
            data.extend_from_slice(self.value(*p).data());
        }
        let rows = data.len() / cols;
        let v = Tensor::new(vec![rows, cols], data)?;
        let ng = self.ng(parts);
        Ok(self.push(v, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).reshape(shape)?;
        let ng = self.ng(&[a]);
        Ok(self.push(v, Op::Reshape(a), ng))
    }

    /// `logsumexp(logits) - logits[target]`, a scalar of shape `[1]`.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let l = self.value(logits);
        if target >= l.numel() {
            return Err(Error::Data(alloc::format!(
                "label {target} out of range for {} classes",
                l.numel()
            )));
        }
        let lse = tensor::log_sum_exp(l.data());
        let loss = lse - l.data()[target];
        let probs = l.data().iter().map(|&x| (x - lse).exp()).collect();
        let ng = self.ng(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
            ng,
        ))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(&[a]);
        self.push(v, Op::Sum(a), ng)
    }

    /// Gradients of the scalar `loss` with respect to every parameter that
    /// was bound into this graph.
    pub fn backward(&self, loss: NodeId) -> Result<ParamGrads<T>> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Rank(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            if let Op::Param(_) = node.op {
                grads[i] = Some(dy);
                continue;
            }
            self.propagate(node, &dy, &mut grads)?;
        }

        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Param(pid) = n.op {
                let idx = self.param_nodes[pid.0].expect("param node registered");
                let g = grads[idx.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(n.value.shape()));
                out.push((pid, g));
            }
        }
        Ok(ParamGrads { grads: out })
    }

    /// Runs [`Graph::backward`] and adds the result into `store`'s grads.
    pub fn backward_into(&self, loss: NodeId, store: &mut ParamStore<T>) -> Result<()> {
        let pg = self.backward(loss)?;
        for (id, g) in &pg.grads {
            store.accumulate_grad(*id, g);
        }
        Ok(())
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn propagate(&self, node: &Node<T>, dy: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let mut acc = |id: NodeId, g: Tensor<T>| {
            if !self.wants(id) {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };
        let y = &node.value;
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let m = y.rows();
                let n = y.cols();
                let k = bv.rows();
                if self.wants(*a) {
                    // dA[i][p] = sum_j dC[i][j] * B[p][j]
                    let mut da = vec![T::zero(); m * k];
                    for i in 0..m {
                        let drow = &dy.data()[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv.data()[p * n..(p + 1) * n];
                            let mut s = T::zero();
                            for (&x, &w) in drow.iter().zip(brow) {
                                s += x * w;
                            }
                            da[i * k + p] = s;
                        }
                    }
                    acc(*a, Tensor::new(av.shape().to_vec(), da)?);
                }
                if self.wants(*b) {
                    // dB[p][j] = sum_i A[i][p] * dC[i][j]
                    let mut db = vec![T::zero(); k * n];
                    for i in 0..m {
                        let drow = &dy.data()[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av.data()[i * k + p];
                            let out = &mut db[p * n..(p + 1) * n];
                            for (o, &d) in out.iter_mut().zip(drow) {
                                *o += x * d;
                            }
                        }
                    }
                    acc(*b, Tensor::new(bv.shape().to_vec(), db)?);
                }
            }
            Op::Transpose(a) => {
                let g = tensor::transpose(dy)?;
                let g = g.reshape(self.value(*a).shape())?;
                acc(*a, g);
            }
            Op::Add(a, b) => {
                acc(*a, dy.clone());
                acc(*b, dy.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, dy.clone());
                acc(*b, dy.scale(-T::one()));
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    acc(*a, dy.mul(self.value(*b))?);
                }
                if self.wants(*b) {
                    acc(*b, dy.mul(self.value(*a))?);
                }
            }
            Op::Scale(a, s) => acc(*a, dy.scale(*s)),
            Op::AddBias(x, b) => {
                acc(*x, dy.clone());
                if self.wants(*b) {
                    let bv = self.value(*b);
                    let c = bv.numel();
                    let mut db = vec![T::zero(); c];
                    for row in dy.data().chunks(c) {
                        for (o, &d) in db.iter_mut().zip(row) {
                            *o += d;
                        }
                    }
                    acc(*b, Tensor::new(bv.shape().to_vec(), db)?);
                }
            }
            Op::Sigmoid(a) => {
                let g = dy.mul(&y.map(|s| s * (T::one() - s)))?;
                acc(*a, g);
            }
            Op::Tanh(a) => {
                let g = dy.mul(&y.map(|t| T::one() - t * t))?;
                acc(*a, g);
            }
            Op::Gelu(a) => {
                let g = dy.mul(&self.value(*a).map(tensor::gelu_grad))?;
                acc(*a, g);
            }
            Op::SoftmaxRows(a) => {
                let c = y.cols();
                let mut g = dy.clone();
                for (grow, yrow) in g.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                    let mut dot = T::zero();
                    for (&d, &p) in grow.iter().zip(yrow) {
                        dot += d * p;
                    }
                    for (d, &p) in grow.iter_mut().zip(yrow) {
                        *d = p * (*d - dot);
                    }
                }
                acc(*a, g);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = y.cols();
                let gv = self.value(*gamma);
                if self.wants(*gamma) {
                    let mut dg = vec![T::zero(); d];
                    for (drow, hrow) in dy.data().chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            dg[j] += drow[j] * hrow[j];
                        }
                    }
                    acc(*gamma, Tensor::new(gv.shape().to_vec(), dg)?);
                }
                if self.wants(*beta) {
                    let mut db = vec![T::zero(); d];
                    for drow in dy.data().chunks(d) {
                        for j in 0..d {
                            db[j] += drow[j];
                        }
                    }
                    acc(*beta, Tensor::new(self.value(*beta).shape().to_vec(), db)?);
                }
                if self.wants(*x) {
                    let n = T::from_f64(d as f64);
                    let mut dx = vec![T::zero(); y.numel()];
                    for r in 0..y.rows() {
                        let drow = &dy.data()[r * d..(r + 1) * d];
                        let hrow = &xhat[r * d..(r + 1) * d];
                        let mut sum_dh = T::zero();
                        let mut sum_dh_h = T::zero();
                        for j in 0..d {
                            let dh = drow[j] * gv.data()[j];
                            sum_dh += dh;
                            sum_dh_h += dh * hrow[j];
                        }
                        let k = rstd[r] / n;
                        for j in 0..d {
                            let dh = drow[j] * gv.data()[j];
                            dx[r * d + j] = k * (n * dh - sum_dh - hrow[j] * sum_dh_h);
                        }
                    }
                    acc(*x, Tensor::new(self.value(*x).shape().to_vec(), dx)?);
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            } => {
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let (nq, d) = (qv.rows(), qv.cols());
                let nk = kv.rows();
                let dh = d / heads;
                let scale = T::one() / T::from_f64(dh as f64).sqrt();
                let mut dq = vec![T::zero(); nq * d];
                let mut dk = vec![T::zero(); nk * d];
                let mut dv = vec![T::zero(); nk * d];
                let mut ds = vec![T::zero(); nk];
                for h in 0..*heads {
                    let off = h * dh;
                    for i in 0..nq {
                        let p = &probs[(h * nq + i) * nk..(h * nq + i + 1) * nk];
                        let doi = &dy.data()[i * d + off..i * d + off + dh];
                        // dP[i][j] = dO[i] . V[j]; dV[j] += P[i][j] dO[i]
                        let mut dot = T::zero();
                        for j in 0..nk {
                            let vj = &vv.data()[j * d + off..j * d + off + dh];
                            let mut s = T::zero();
                            for (&a, &b) in doi.iter().zip(vj) {
                                s += a * b;
                            }
                            ds[j] = s;
                            dot += s * p[j];
                            let dvj = &mut dv[j * d + off..j * d + off + dh];
                            for (o, &g) in dvj.iter_mut().zip(doi) {
                                *o += p[j] * g;
                            }
                        }
                        for j in 0..nk {
                            let s = p[j] * (ds[j] - dot) * scale;
                            let kj = &kv.data()[j * d + off..j * d + off + dh];
                            let qi = &qv.data()[i * d + off..i * d + off + dh];
                            let dqi = &mut dq[i * d + off..i * d + off + dh];
                            for (o, &kk) in dqi.iter_mut().zip(kj) {
                                *o += s * kk;
                            }
                            let dkj = &mut dk[j * d + off..j * d + off + dh];
                            for (o, &qq) in dkj.iter_mut().zip(qi) {
                                *o += s * qq;
                            }
                        }
                    }
                }
                acc(*q, Tensor::new(qv.shape().to_vec(), dq)?);
                acc(*k, Tensor::new(kv.shape().to_vec(), dk)?);
                acc(*v, Tensor::new(vv.shape().to_vec(), dv)?);
            }
            Op::MaxPoolRows { x, argmax } => {
                let xv = self.value(*x);
                let c = xv.cols();
                let mut dx = vec![T::zero(); xv.numel()];
                for (j, &r) in argmax.iter().enumerate() {
                    dx[r * c + j] = dy.data()[j];
                }
                acc(*x, Tensor::new(xv.shape().to_vec(), dx)?);
            }
            Op::ConcatCols(parts) => {
                let rows = y.rows();
                let total = y.cols();
                let mut start = 0;
                for p in parts {
                    let pv = self.value(*p);
                    let c = pv.cols();
                    if self.wants(*p) {
                        let mut g = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            g.extend_from_slice(&dy.data()[r * total + start..r * total + start + c]);
                        }
                        acc(*p, Tensor::new(pv.shape().to_vec(), g)?);
                    }
                    start += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let pv = self.value(*p);
                    let n = pv.numel();
                    if self.wants(*p) {
                        let g = dy.data()[start..start + n].to_vec();
                        acc(*p, Tensor::new(pv.shape().to_vec(), g)?);
                    }
                    start += n;
                }
            }
            Op::Reshape(a) => acc(*a, dy.reshape(self.value(*a).shape())?),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => {
                let scale = dy.data()[0];
                let mut g = probs.clone();
                g[*target] -= T::one();
                for v in g.iter_mut() {
                    *v *= scale;
                }
                acc(*logits, Tensor::new(self.value(*logits).shape().to_vec(), g)?);
            }
            Op::Sum(a) => {
                let s = dy.data()[0];
                acc(*a, Tensor::full(self.value(*a).shape(), s));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_and_quadratic_gradients() {
        let mut store = ParamStore::<f64>::new();
        let p = store.add("p", Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let mut g = Graph::new();
        let n = g.param(&store, p);
        let loss = g.sum(n);
        g.backward_into(loss, &mut store).unwrap();
        assert_eq!(store.get(p).grad.data(), &[1.0, 1.0, 1.0]);

        let mut store = ParamStore::<f64>::new();
        let p = store.add("p", Tensor::vector(vec![1.0, -2.0]).unwrap()).unwrap();
        let mut g = Graph::new();
        let n = g.param(&store, p);
        let sq = g.mul(n, n).unwrap();
        let loss = g.sum(sq);
        g.backward_into(loss, &mut store).unwrap();
        assert_eq!(store.get(p).grad.data(), &[2.0, -4.0]);
    }

    #[test]
    fn unreachable_params_keep_zero_grads() {
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
        let b = store.add("b", Tensor::vector(vec![5.0]).unwrap()).unwrap();
        let mut g = Graph::new();
        let na = g.param(&store, a);
        let _nb = g.param(&store, b);
        let loss = g.sum(na);
        g.backward_into(loss, &mut store).unwrap();
        assert_eq!(store.get(b).grad.data(), &[0.0]);
    }

    #[test]
    fn backward_on_non_scalar_is_rank_error() {
        let mut store = ParamStore::<f32>::new();
        let a = store.add("a", Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
        let mut g = Graph::new();
        let na = g.param(&store, a);
        assert_eq!(g.backward(na).unwrap_err(), Error::Rank(vec![2]));
    }

    #[test]
    fn zero_grads_resets() {
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
        let mut g = Graph::new();
        let na = g.param(&store, a);
        let loss = g.sum(na);
        g.backward_into(loss, &mut store).unwrap();
        store.zero_grads();
        assert!(store.get(a).grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cross_entropy_rejects_out_of_range() {
        let mut g = Graph::<f32>::new();
        let l = g.input(Tensor::vector(vec![0.0, 1.0]).unwrap());
        assert!(matches!(g.cross_entropy(l, 2), Err(Error::Data(_))));
    }
}
