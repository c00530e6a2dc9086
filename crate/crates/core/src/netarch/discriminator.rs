//! Fully convolutional patch discriminator.
//!
//! Five 4x4 convolutions with padding 1 and strides (2, 2, 2, 1, 1); widths
//! f, 2f, 4f, 8f, 1. Every layer but the first and last is instance
//! normalised; all but the last use LeakyReLU(0.2). The output is a map of
//! raw scores, one per overlapping input patch.

use serde::{Deserialize, Serialize};

use crate::autograd::conv::conv_out_len;
use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::tensor::{Scalar, Tensor};

use super::layers::{Activation, Conv, ConvUnit, Norm, Padding};
use super::params::ParamStore;

pub const KERNEL: usize = 4;
pub const PADDING: usize = 1;
pub const STRIDES: [usize; 5] = [2, 2, 2, 1, 1];

/// Which adversarial signal a discriminator provides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiscriminatorRole {
    /// Judges target-domain realism (real samples from the target domain).
    DomainRealism,
    /// Judges content (real samples from the source domain).
    Content,
}

impl DiscriminatorRole {
    pub fn label(self) -> &'static str {
        match self {
            DiscriminatorRole::DomainRealism => "D_R",
            DiscriminatorRole::Content => "D_C",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            DiscriminatorRole::DomainRealism => "d_r",
            DiscriminatorRole::Content => "d_c",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub base_filters: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig { base_filters: 64 }
    }
}

impl DiscriminatorConfig {
    /// Channel widths of the five convolutions.
    pub fn filter_schedule(&self) -> [usize; 5] {
        let f = self.base_filters;
        [f, 2 * f, 4 * f, 8 * f, 1]
    }
}

/// Patch-map size for an input side, or `None` if the input is too small.
pub fn patch_map_len(side: usize) -> Option<usize> {
    STRIDES.iter().try_fold(side, |s, &stride| conv_out_len(s, KERNEL, stride, PADDING).filter(|n| *n > 0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T> {
    role: DiscriminatorRole,
    config: DiscriminatorConfig,
    layers: Vec<ConvUnit>,
    params: ParamStore<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(role: DiscriminatorRole, config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        if config.base_filters == 0 {
            return Err(Error::InvalidInput("base_filters must be positive".into()));
        }
        let widths = config.filter_schedule();
        let mut params = ParamStore::default();
        let mut layers = Vec::with_capacity(5);
        let mut c_in = 1;
        for (i, (&c_out, &stride)) in widths.iter().zip(&STRIDES).enumerate() {
            let name = format!("l{}", i + 1);
            let first = i == 0;
            let last = i == widths.len() - 1;
            let normed = !first && !last;
            let conv = Conv::new(&mut params, &format!("{name}.conv"), c_in, c_out, KERNEL, stride, Padding::Zero(PADDING), !normed);
            let norm = normed.then(|| Norm::new(&mut params, &format!("{name}.norm"), c_out));
            let act = if last { Activation::Identity } else { Activation::LeakyRelu };
            layers.push(ConvUnit { conv, norm, act });
            c_in = c_out;
        }
        params.init(seed);
        Ok(Discriminator { role, config, layers, params })
    }

    pub fn role(&self) -> DiscriminatorRole {
        self.role
    }

    pub fn config(&self) -> DiscriminatorConfig {
        self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn init_parameters(&mut self, seed: u64) {
        self.params.init(seed);
    }

    pub fn check_input(h: usize, w: usize) -> Result<()> {
        if patch_map_len(h).is_none() || patch_map_len(w).is_none() {
            let min = (1..).find(|s| patch_map_len(*s).is_some()).expect("some size works");
            return Err(Error::Dimension(format!(
                "discriminator input must be at least {min}x{min}, got {h}x{w}"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape<T>, bound: &[Var], x: Var) -> Result<Var> {
        let (c, h, w) = tape.value(x).dims3();
        if c != 1 {
            return Err(Error::Shape(format!("discriminator expects one input channel, got {c}")));
        }
        Self::check_input(h, w)?;
        let mut cur = x;
        for layer in &self.layers {
            cur = layer.forward(tape, bound, cur)?;
        }
        Ok(cur)
    }

    /// Raw patch scores `[1, H', W']` for an image.
    pub fn run(&self, img: &Image) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(img.to_tensor());
        let out = self.forward(&mut tape, &bound, x)?;
        Ok(tape.value(out).clone())
    }
}
