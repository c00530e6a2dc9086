use crate::autograd::{Tape, Var};
use crate::error::Result;
use crate::tensor::Scalar;

use super::params::{ParamKind, ParamStore};

pub(crate) const NORM_EPS: f64 = 1e-5;
pub(crate) const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Padding {
    Zero(usize),
    Reflect(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Conv {
    pub weight: usize,
    pub bias: Option<usize>,
    pub stride: usize,
    pub padding: Padding,
    pub transpose: bool,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        bias: bool,
    ) -> Self {
        let weight = store.add(format!("{prefix}.weight"), ParamKind::Weight, &[c_out, c_in, kernel, kernel]);
        let bias = bias.then(|| store.add(format!("{prefix}.bias"), ParamKind::Bias, &[c_out]));
        Conv { weight, bias, stride, padding, transpose: false }
    }

    /// 3x3, stride 2, padding 1, output padding 1: doubles the spatial size.
    pub fn upsample<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, c_in: usize, c_out: usize) -> Self {
        let weight = store.add(format!("{prefix}.weight"), ParamKind::Weight, &[c_in, c_out, 3, 3]);
        Conv { weight, bias: None, stride: 2, padding: Padding::Zero(1), transpose: true }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &[Var], x: Var) -> Result<Var> {
        let b = self.bias.map(|i| p[i]);
        if self.transpose {
            let Padding::Zero(pad) = self.padding else { unreachable!("transpose conv uses zero padding") };
            return tape.conv_transpose2d(x, p[self.weight], b, self.stride, pad, 1);
        }
        match self.padding {
            Padding::Zero(pad) => tape.conv2d(x, p[self.weight], b, self.stride, pad),
            Padding::Reflect(pad) => {
                let padded = tape.reflect_pad(x, pad)?;
                tape.conv2d(padded, p[self.weight], b, self.stride, 0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Norm {
    pub gamma: usize,
    pub beta: usize,
}

impl Norm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, channels: usize) -> Self {
        Norm {
            gamma: store.add(format!("{prefix}.gamma"), ParamKind::NormScale, &[channels]),
            beta: store.add(format!("{prefix}.beta"), ParamKind::NormShift, &[channels]),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &[Var], x: Var) -> Result<Var> {
        tape.instance_norm(x, p[self.gamma], p[self.beta], NORM_EPS)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, tape: &mut Tape<T>, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => x,
        }
    }
}

/// Convolution, optional instance norm, activation.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct ConvUnit {
    pub conv: Conv,
    pub norm: Option<Norm>,
    pub act: Activation,
}

impl ConvUnit {
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &[Var], x: Var) -> Result<Var> {
        let mut h = self.conv.forward(tape, p, x)?;
        if let Some(n) = &self.norm {
            h = n.forward(tape, p, h)?;
        }
        Ok(self.act.apply(tape, h))
    }
}
