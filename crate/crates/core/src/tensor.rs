//! Dense row-major tensors and the forward kernels shared by the tape.
//!
//! All reductions accumulate in ascending index order so a fixed seed gives
//! bitwise reproducible results.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || numel != data.len() {
            return Err(Error::Shape {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        assert!(numel > 0, "tensor shape {shape:?} has no elements");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<T>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Build a matrix from equally sized rows.
    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::dim("from_rows", &[cols], &[r.len()]));
            }
            data.extend_from_slice(r);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Rows when viewed as a matrix over the last axis.
    pub fn rows(&self) -> usize {
        self.data.len() / self.cols()
    }

    /// Length of the last axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("tensor has at least one axis")
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols() + j]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        let mut acc = T::zero();
        for &v in &self.data {
            acc += v;
        }
        acc
    }

    pub fn norm(&self) -> T {
        let mut acc = T::zero();
        for &v in &self.data {
            acc += v * v;
        }
        acc.sqrt()
    }

    fn zip(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim(op, &self.shape, &other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

fn as_matrix<T: Scalar>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        [c] => Ok((1, *c)),
        s => Err(Error::dim(op, s, &[])),
    }
}

/// `c[i][j] = sum_p a[i][p] * b[p][j]`, accumulated over ascending `p`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = as_matrix(a, "matmul")?;
    let (k2, n) = as_matrix(b, "matmul")?;
    if k != k2 || b.shape().len() != 2 {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![T::zero(); m * n];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &y) in row.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = as_matrix(a, "transpose")?;
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a.data()[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out)
}

/// Adds a bias of length `cols` to every row.
pub fn add_bias<T: Scalar>(x: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let c = x.cols();
    if bias.numel() != c {
        return Err(Error::dim("add_bias", x.shape(), bias.shape()));
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c) {
        for (o, &b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Ok(out)
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let c = x.cols();
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c) {
        softmax_in_place(row);
    }
    out
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let mut max = T::neg_infinity();
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

/// `ln(sum_j exp(x_j))`, stabilized by the row maximum.
pub(crate) fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let mut max = T::neg_infinity();
    for &v in row {
        if v > max {
            max = v;
        }
    }
    let mut total = T::zero();
    for &v in row {
        total += (v - max).exp();
    }
    max + total.ln()
}

/// Per-row statistics kept by the tape for the layer-norm backward pass.
pub(crate) struct NormStats<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) fn layer_norm_with_stats<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, NormStats<T>)> {
    let d = x.cols();
    if gamma.numel() != d {
        return Err(Error::dim("layer_norm gamma", x.shape(), gamma.shape()));
    }
    if beta.numel() != d {
        return Err(Error::dim("layer_norm beta", x.shape(), beta.shape()));
    }
    let n = T::from_f64(d as f64);
    let mut out = x.clone();
    let mut xhat = vec![T::zero(); x.numel()];
    let mut rstd = Vec::with_capacity(x.rows());
    for (r, row) in out.data_mut().chunks_mut(d).enumerate() {
        let mut mean = T::zero();
        for &v in row.iter() {
            mean += v;
        }
        mean = mean / n;
        let mut var = T::zero();
        for &v in row.iter() {
            var += (v - mean) * (v - mean);
        }
        var = var / n;
        let rs = T::one() / (var + eps).sqrt();
        rstd.push(rs);
        for (j, v) in row.iter_mut().enumerate() {
            let h = (*v - mean) * rs;
            xhat[r * d + j] = h;
            *v = h * gamma.data()[j] + beta.data()[j];
        }
    }
    Ok((out, NormStats { xhat, rstd }))
}

/// Normalizes every last-axis slice: `(x - mean) / sqrt(var + eps) * gamma + beta`
/// with population variance.
pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>> {
    layer_norm_with_stats(x, gamma, beta, eps).map(|(y, _)| y)
}

pub(crate) fn check_attention_shapes<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
) -> Result<()> {
    if k.shape().len() != 2 || v.shape().len() != 2 || q.shape().len() != 2 {
        return Err(Error::dim("attention", q.shape(), k.shape()));
    }
    if k.rows() == 0 {
        return Err(Error::EmptyContext("attention"));
    }
    if q.cols() != k.cols() || k.shape() != v.shape() {
        return Err(Error::dim("attention", q.shape(), k.shape()));
    }
    if heads == 0 || !q.cols().is_multiple_of(heads) {
        return Err(Error::dim("attention heads", q.shape(), &[heads]));
    }
    Ok(())
}

/// Multi-head scaled dot-product attention. Head `h` uses columns
/// `h*dh..(h+1)*dh` of `q`, `k` and `v`; the per-head outputs are written
/// back to the same columns. Returns the output and the per-head attention
/// probabilities (`heads` matrices of `nq x nk`, concatenated).
pub(crate) fn attention_with_probs<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
) -> Result<(Tensor<T>, Vec<T>)> {
    check_attention_shapes(q, k, v, heads)?;
    let (nq, d) = (q.rows(), q.cols());
    let nk = k.rows();
    let dh = d / heads;
    let scale = T::one() / T::from_f64(dh as f64).sqrt();
    let mut probs = vec![T::zero(); heads * nq * nk];
    let mut out = vec![T::zero(); nq * d];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..nq {
            let p = &mut probs[(h * nq + i) * nk..(h * nq + i + 1) * nk];
            let qi = &q.data()[i * d + off..i * d + off + dh];
            for (j, pj) in p.iter_mut().enumerate() {
                let kj = &k.data()[j * d + off..j * d + off + dh];
                let mut s = T::zero();
                for (&a, &b) in qi.iter().zip(kj) {
                    s += a * b;
                }
                *pj = s * scale;
            }
            softmax_in_place(p);
            let o = &mut out[i * d + off..i * d + off + dh];
            for (j, &pj) in p.iter().enumerate() {
                let vj = &v.data()[j * d + off..j * d + off + dh];
                for (oo, &vv) in o.iter_mut().zip(vj) {
                    *oo += pj * vv;
                }
            }
        }
    }
    Ok((Tensor::new(vec![nq, d], out)?, probs))
}

/// `softmax_rows(q k^T / sqrt(d)) v`.
pub fn scaled_dot_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<Tensor<T>> {
    multi_head_attention(q, k, v, 1)
}

pub fn multi_head_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    heads: usize,
) -> Result<Tensor<T>> {
    attention_with_probs(q, k, v, heads).map(|(o, _)| o)
}

/// Column-wise maximum over rows, shape `[cols]`, with the winning row of
/// each column. Ties go to the lowest row index.
pub fn max_pool_rows<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let c = x.cols();
    let mut best = x.row(0).to_vec();
    let mut arg = vec![0; c];
    for r in 1..x.rows() {
        for (j, &v) in x.row(r).iter().enumerate() {
            if v > best[j] {
                best[j] = v;
                arg[j] = r;
            }
        }
    }
    (Tensor { shape: vec![c], data: best }, arg)
}

pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    let inv_sqrt2 = T::from_f64(core::f64::consts::FRAC_1_SQRT_2);
    half * x * (T::one() + (x * inv_sqrt2).erf())
}

pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    let inv_sqrt2 = T::from_f64(core::f64::consts::FRAC_1_SQRT_2);
    let inv_sqrt_2pi = T::from_f64(0.398_942_280_401_432_7);
    half * (T::one() + (x * inv_sqrt2).erf()) + x * inv_sqrt_2pi * (-half * x * x).exp()
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol * (1.0 + y.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn matmul_identity_and_dot() {
        let eye = Tensor::<f32>::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let b = Tensor::from_rows(&[&[5.0, 6.0], &[7.0, 8.0]]).unwrap();
        assert_eq!(matmul(&eye, &b).unwrap(), b);
        let row = Tensor::<f32>::from_rows(&[&[1.0, 2.0]]).unwrap();
        let col = Tensor::from_rows(&[&[3.0], &[4.0]]).unwrap();
        assert_eq!(matmul(&row, &col).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(1);
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[4, 2]);
        let c = matmul(&a, &b).unwrap();
        let mut want = [0.0; 6];
        for i in 0..3 {
            for j in 0..2 {
                for p in 0..4 {
                    want[i * 2 + j] += a.at(i, p) * b.at(p, j);
                }
            }
        }
        close(c.data(), &want, 1e-6);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[2, 3]);
        match matmul(&a, &b) {
            Err(Error::Dimension { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_rows(&Tensor::<f64>::from_rows(&[&[0.0, 0.0]]).unwrap());
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_rows(&Tensor::<f64>::from_rows(&[&[core::f64::consts::LN_2, 0.0]]).unwrap());
        close(s.data(), &[2.0 / 3.0, 1.0 / 3.0], 1e-12);
        let s = softmax_rows(&Tensor::<f32>::from_rows(&[&[1000.0, 1000.0]]).unwrap());
        assert_eq!(s.data(), &[0.5, 0.5]);
    }

    #[test]
    fn layer_norm_examples() {
        let one = Tensor::<f64>::vector(vec![1.0, 1.0]).unwrap();
        let zero = Tensor::<f64>::vector(vec![0.0, 0.0]).unwrap();
        let x = Tensor::from_rows(&[&[1.0, -1.0]]).unwrap();
        let y = layer_norm(&x, &one, &zero, 1e-12).unwrap();
        close(y.data(), &[1.0, -1.0], 1e-9);

        let gamma = Tensor::<f64>::vector(vec![2.0, 3.0, 4.0]).unwrap();
        let beta = Tensor::<f64>::vector(vec![0.1, 0.2, 0.3]).unwrap();
        let x = Tensor::from_rows(&[&[7.0, 7.0, 7.0]]).unwrap();
        let y = layer_norm(&x, &gamma, &beta, 1e-5).unwrap();
        assert_eq!(y.data(), beta.data());

        let bad = Tensor::<f64>::vector(vec![1.0]).unwrap();
        assert!(matches!(
            layer_norm(&x, &bad, &beta, 1e-5),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn layer_norm_matches_scalar_oracle() {
        let mut rng = Rng::new(5);
        let x = random(&mut rng, &[2, 5]);
        let g = random(&mut rng, &[5]);
        let b = random(&mut rng, &[5]);
        let y = layer_norm(&x, &g, &b, 1e-5).unwrap();
        let mut want = Vec::new();
        for r in 0..2 {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / 5.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
            for j in 0..5 {
                want.push((row[j] - mean) / (var + 1e-5).sqrt() * g.data()[j] + b.data()[j]);
            }
        }
        close(y.data(), &want, 1e-6);
    }

    #[test]
    fn attention_examples() {
        let mut rng = Rng::new(8);
        let q = random(&mut rng, &[3, 4]);
        let k = random(&mut rng, &[1, 4]);
        let v = random(&mut rng, &[1, 4]);
        let o = scaled_dot_attention(&q, &k, &v).unwrap();
        for i in 0..3 {
            assert_eq!(o.row(i), v.row(0));
        }

        let k = Tensor::from_rows(&[&[0.3, -0.2, 0.5, 1.0], &[0.3, -0.2, 0.5, 1.0]]).unwrap();
        let v = Tensor::from_rows(&[&[1.0, 2.0, 3.0, 4.0], &[3.0, 2.0, 1.0, 0.0]]).unwrap();
        let o = scaled_dot_attention(&q, &k, &v).unwrap();
        for i in 0..3 {
            close(o.row(i), &[2.0, 2.0, 2.0, 2.0], 1e-12);
        }

        let empty_err = check_attention_shapes(&q, &Tensor::zeros(&[1, 3]), &v, 1);
        assert!(empty_err.is_err());
    }

    #[test]
    fn attention_matches_scalar_oracle() {
        let mut rng = Rng::new(13);
        let q = random(&mut rng, &[2, 4]);
        let k = random(&mut rng, &[3, 4]);
        let v = random(&mut rng, &[3, 4]);
        let o = scaled_dot_attention(&q, &k, &v).unwrap();
        let mut want = vec![0.0; 8];
        for i in 0..2 {
            let scores: Vec<f64> = (0..3)
                .map(|j| (0..4).map(|p| q.at(i, p) * k.at(j, p)).sum::<f64>() / 2.0)
                .collect();
            let m = scores.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
            for j in 0..3 {
                let w = (scores[j] - m).exp() / z;
                for p in 0..4 {
                    want[i * 4 + p] += w * v.at(j, p);
                }
            }
        }
        close(o.data(), &want, 1e-6);
    }

    #[test]
    fn shape_validation() {
        assert!(Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f32>::new(vec![0], vec![]).is_err());
        assert!(Tensor::<f32>::new(vec![], vec![]).is_err());
    }
}
