use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Gradients, Tape, Var};
use crate::tensor::{Scalar, Tensor};

/// Standard deviation of the Gaussian weight initialisation.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    NormScale,
    NormShift,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<T>,
}

/// Ordered, named parameter tensors of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore { params: Vec::new() }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub(crate) fn add(&mut self, name: String, kind: ParamKind, shape: &[usize]) -> usize {
        let value = match kind {
            ParamKind::NormScale => Tensor::full(shape, T::one()),
            _ => Tensor::zeros(shape),
        };
        self.params.push(Param { name, kind, value });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn get(&self, i: usize) -> &Param<T> {
        &self.params[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.params.iter_mut().map(|p| &mut p.value)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Gaussian weights (std [`INIT_STD`]), unit norm scales, zero shifts
    /// and biases. Deterministic in `seed`.
    pub fn init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        for p in &mut self.params {
            match p.kind {
                ParamKind::Weight => {
                    for v in p.value.data_mut() {
                        *v = T::of(normal.sample(&mut rng));
                    }
                }
                ParamKind::NormScale => p.value.data_mut().fill(T::one()),
                ParamKind::Bias | ParamKind::NormShift => p.value.data_mut().fill(T::zero()),
            }
        }
    }

    /// Places every parameter on `tape`.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.value.clone(), trainable)).collect()
    }

    /// Gradients for bound parameters, zero where none flowed.
    pub fn collect_grads(&self, bound: &[Var], grads: &mut Gradients<T>) -> Vec<Tensor<T>> {
        self.params
            .iter()
            .zip(bound)
            .map(|(p, v)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(p.value.shape())))
            .collect()
    }

    /// FNV-1a over the raw parameter bits; equal hashes mean bitwise-equal
    /// parameters with overwhelming probability.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut buf = Vec::new();
        for p in &self.params {
            for v in p.value.data() {
                buf.clear();
                v.write_le(&mut buf);
                for b in &buf {
                    h ^= *b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }
}
