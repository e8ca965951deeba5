use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::param::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam with bias correction. Moment buffers persist across steps and follow
/// the store's parameter order.
#[derive(Debug, Clone)]
pub struct Adam<T = f32> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, lr: f64, betas: (f64, f64), eps: f64) -> Self {
        let zeros = |p: &crate::param::Parameter<T>| Tensor::zeros(p.value.shape());
        Adam {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            m: store.iter().map(zeros).collect(),
            v: store.iter().map(zeros).collect(),
        }
    }

    /// Applies one update using the grads in `store`. `t` is the 1-based step.
    ///
    /// All grads are checked before any value is touched, so a divergence
    /// error leaves the parameters unchanged.
    pub fn step(&mut self, store: &mut ParamStore<T>, t: u64) -> Result<()> {
        assert!(t >= 1, "adam step index starts at 1");
        if let Some(p) = store.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::Divergence(p.name.clone()));
        }
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::one();
        let bc1 = T::from_f64(1.0 - libm::pow(self.beta1, t as f64));
        let bc2 = T::from_f64(1.0 - libm::pow(self.beta2, t as f64));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        for (i, p) in store.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let grad = p.grad.data();
            for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = b1 * m[j] + (one - b1) * g;
                v[j] = b2 * v[j] + (one - b2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
