use crate::error::{Error, Result};
use crate::netarch::ParamStore;
use crate::tensor::{Scalar, Tensor};

/// Adam with bias correction. Moments are stored in the parameter dtype.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub const EPS: f64 = 1e-8;

    pub fn new(store: &ParamStore<T>, beta1: f64, beta2: f64) -> Self {
        let zeros = || store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Adam { beta1, beta2, eps: Self::EPS, step: 0, m: zeros(), v: zeros() }
    }

    /// One update of every parameter in `store` with the matching gradient.
    pub fn apply(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() || store.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                store.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - self.beta1), T::of(1.0 - self.beta2));
        let c1 = T::of(1.0 / (1.0 - self.beta1.powi(t)));
        let c2 = T::of(1.0 / (1.0 - self.beta2.powi(t)));
        let lr = T::of(lr);
        let eps = T::of(self.eps);
        for (((p, g), m), v) in store.values_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if g.shape() != p.shape() {
                return Err(Error::Shape(format!("gradient shape {:?} vs parameter {:?}", g.shape(), p.shape())));
            }
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *mv = b1 * *mv + one_b1 * gv;
                *vv = b2 * *vv + one_b2 * gv * gv;
                let mhat = *mv * c1;
                let vhat = *vv * c2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
