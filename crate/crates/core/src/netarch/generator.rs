//! Encoder / residual transformer / decoder generator with seventeen named
//! blocks.
//!
//! | block      | op                                   | channels      | stride |
//! |------------|--------------------------------------|---------------|--------|
//! | `enc1`     | reflect-pad 3, 7x7 conv, IN, ReLU    | 1 -> f        | 1      |
//! | `enc2`     | 3x3 conv, IN, ReLU                   | f -> 2f       | 2      |
//! | `enc3`     | 3x3 conv, IN, ReLU                   | 2f -> 4f      | 2      |
//! | `enc4`     | 3x3 conv, IN, ReLU                   | 4f -> 4f      | 2      |
//! | `res1..9`  | x + IN(conv(ReLU(IN(conv(x)))))      | 4f            | 1      |
//! | `dec1`     | 3x3 transpose conv, IN, ReLU         | 4f -> 4f      | 1/2    |
//! | `dec2`     | 3x3 transpose conv, IN, ReLU         | 4f -> 2f      | 1/2    |
//! | `dec3`     | 3x3 transpose conv, IN, ReLU         | 2f -> f       | 1/2    |
//! | `dec4`     | reflect-pad 3, 7x7 conv, tanh        | f -> 1        | 1      |
//!
//! The texture taps are the outputs of `enc1..enc3`; the content features
//! are the output of `dec3`.

use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::tensor::{Scalar, Tensor};

use super::layers::{Activation, Conv, ConvUnit, Norm, Padding};
use super::params::ParamStore;
use super::FeatureMap;

/// Number of encoder blocks whose outputs feed the Gram-matrix loss.
pub const TAP_COUNT: usize = 3;
/// Total spatial reduction of the encoder.
pub const SPATIAL_DIVISOR: usize = 8;
/// Smallest side accepted by the generator (the bottleneck must be at least
/// 2x2 for reflection padding).
pub const MIN_GENERATOR_SIDE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub base_filters: usize,
    pub residual_blocks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { base_filters: 64, residual_blocks: 9 }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum BlockKind {
    Unit(ConvUnit),
    Residual { first: ConvUnit, second: ConvUnit },
}

#[derive(Clone, Debug, PartialEq)]
struct Block {
    name: String,
    kind: BlockKind,
}

#[allow(clippy::too_many_arguments)]
fn unit<T: Scalar>(
    params: &mut ParamStore<T>,
    name: &str,
    c_in: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: Padding,
    transpose: bool,
) -> Block {
    let conv = if transpose {
        Conv::upsample(params, &format!("{name}.conv"), c_in, c_out)
    } else {
        Conv::new(params, &format!("{name}.conv"), c_in, c_out, k, stride, pad, false)
    };
    let norm = Norm::new(params, &format!("{name}.norm"), c_out);
    Block { name: name.to_string(), kind: BlockKind::Unit(ConvUnit { conv, norm: Some(norm), act: Activation::Relu }) }
}

impl Block {
    fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &[Var], x: Var) -> Result<Var> {
        match &self.kind {
            BlockKind::Unit(u) => u.forward(tape, p, x),
            BlockKind::Residual { first, second } => {
                let h = first.forward(tape, p, x)?;
                let h = second.forward(tape, p, h)?;
                tape.add(x, h)
            }
        }
    }
}

/// How far a forward pass runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Depth {
    /// Only the texture taps (`enc1..enc3`).
    Taps,
    /// Everything up to and including the content features (`dec3`).
    Features,
    /// The translated image as well.
    Full,
}

/// Tape handles produced by one generator pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorVars {
    pub output: Option<Var>,
    pub taps: Vec<Var>,
    pub content: Option<Var>,
}

/// Result of running the generator on an image outside of training.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorRun<T> {
    pub translated: Image,
    pub taps: Vec<FeatureMap<T>>,
    pub content_features: FeatureMap<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    config: GeneratorConfig,
    blocks: Vec<Block>,
    params: ParamStore<T>,
}

impl<T: Scalar> Generator<T> {
    /// Builds the graph and initialises parameters from `seed`.
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self> {
        if config.base_filters == 0 {
            return Err(Error::InvalidInput("base_filters must be positive".into()));
        }
        let f = config.base_filters;
        let mut params = ParamStore::default();
        let mut blocks = vec![
            unit(&mut params, "enc1", 1, f, 7, 1, Padding::Reflect(3), false),
            unit(&mut params, "enc2", f, 2 * f, 3, 2, Padding::Zero(1), false),
            unit(&mut params, "enc3", 2 * f, 4 * f, 3, 2, Padding::Zero(1), false),
            unit(&mut params, "enc4", 4 * f, 4 * f, 3, 2, Padding::Zero(1), false),
        ];
        for r in 1..=config.residual_blocks {
            let name = format!("res{r}");
            let mut half = |suffix: &str, act| {
                let conv = Conv::new(&mut params, &format!("{name}.{suffix}"), 4 * f, 4 * f, 3, 1, Padding::Reflect(1), false);
                let norm = Norm::new(&mut params, &format!("{name}.{suffix}_norm"), 4 * f);
                ConvUnit { conv, norm: Some(norm), act }
            };
            let first = half("conv1", Activation::Relu);
            let second = half("conv2", Activation::Identity);
            blocks.push(Block { name, kind: BlockKind::Residual { first, second } });
        }
        blocks.push(unit(&mut params, "dec1", 4 * f, 4 * f, 3, 2, Padding::Zero(1), true));
        blocks.push(unit(&mut params, "dec2", 4 * f, 2 * f, 3, 2, Padding::Zero(1), true));
        blocks.push(unit(&mut params, "dec3", 2 * f, f, 3, 2, Padding::Zero(1), true));
        let out = Conv::new(&mut params, "dec4.conv", f, 1, 7, 1, Padding::Reflect(3), true);
        blocks.push(Block {
            name: "dec4".into(),
            kind: BlockKind::Unit(ConvUnit { conv: out, norm: None, act: Activation::Tanh }),
        });

        params.init(seed);
        Ok(Generator { config, blocks, params })
    }

    pub fn config(&self) -> GeneratorConfig {
        self.config
    }

    pub fn block_names(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b.name.as_str()).collect()
    }

    /// 1-based indices of the encoder blocks used as texture taps.
    pub fn tap_layers(&self) -> [usize; TAP_COUNT] {
        [1, 2, 3]
    }

    /// 1-based index of the block whose output is the content feature map.
    pub fn content_tap(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Re-draws every parameter from `seed`.
    pub fn init_parameters(&mut self, seed: u64) {
        self.params.init(seed);
    }

    pub fn check_input(h: usize, w: usize) -> Result<()> {
        if !h.is_multiple_of(SPATIAL_DIVISOR) || !w.is_multiple_of(SPATIAL_DIVISOR) {
            return Err(Error::Dimension(format!(
                "generator input must have height and width divisible by {SPATIAL_DIVISOR}, got {h}x{w}"
            )));
        }
        if h < MIN_GENERATOR_SIDE || w < MIN_GENERATOR_SIDE {
            return Err(Error::Dimension(format!(
                "generator input must be at least {MIN_GENERATOR_SIDE}x{MIN_GENERATOR_SIDE}, got {h}x{w}"
            )));
        }
        Ok(())
    }

    /// Runs the graph on `x` (a `[1, H, W]` node) with parameters previously
    /// placed on the tape by [`ParamStore::bind`].
    pub fn forward(&self, tape: &mut Tape<T>, bound: &[Var], x: Var, depth: Depth) -> Result<GeneratorVars> {
        let (c, h, w) = tape.value(x).dims3();
        if c != 1 {
            return Err(Error::Shape(format!("generator expects one input channel, got {c}")));
        }
        Self::check_input(h, w)?;
        let mut taps = Vec::with_capacity(TAP_COUNT);
        let mut content = None;
        let mut output = None;
        let mut cur = x;
        let last = self.blocks.len() - 1;
        for (i, block) in self.blocks.iter().enumerate() {
            if i == last && depth != Depth::Full {
                break;
            }
            cur = block.forward(tape, bound, cur)?;
            if i < TAP_COUNT {
                taps.push(cur);
                if depth == Depth::Taps && i + 1 == TAP_COUNT {
                    break;
                }
            }
            if i + 1 == last {
                content = Some(cur);
            }
            if i == last {
                output = Some(cur);
            }
        }
        Ok(GeneratorVars { output, taps, content })
    }

    /// Full inference pass on an image.
    pub fn run(&self, img: &Image) -> Result<GeneratorRun<T>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let x = tape.constant(img.to_tensor());
        let vars = self.forward(&mut tape, &bound, x, Depth::Full)?;
        let out = tape.value(vars.output.expect("full pass"));
        let taps = vars
            .taps
            .iter()
            .enumerate()
            .map(|(i, v)| FeatureMap { values: tape.value(*v).clone(), layer_index: i + 1 })
            .collect();
        let content_features =
            FeatureMap { values: tape.value(vars.content.expect("full pass")).clone(), layer_index: self.content_tap() };
        Ok(GeneratorRun { translated: Image::from_tensor(out)?, taps, content_features })
    }

    /// Translated network output in `[-1, 1]` for a `[1, H, W]` tensor.
    pub fn translate_tensor(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let vars = self.forward(&mut tape, &bound, xv, Depth::Full)?;
        Ok(tape.value(vars.output.expect("full pass")).clone())
    }

    /// Translates an image of any size: reflect-pads bottom and right up to a
    /// valid generator input, runs the network and crops back.
    pub fn translate_image(&self, img: &Image) -> Result<Image> {
        let (h, w) = (img.height(), img.width());
        let (ph, pw) = (padded_side(h), padded_side(w));
        let src = if (ph, pw) == (h, w) {
            img.clone()
        } else {
            log::info!("reflect-padding {h}x{w} input to {ph}x{pw}");
            Image::from_fn(ph, pw, |y, x| img.get(mirror(y, h), mirror(x, w)))?
        };
        let out = Image::from_tensor(&self.translate_tensor(&src.to_tensor())?)?;
        if (ph, pw) == (h, w) {
            return Ok(out);
        }
        Image::from_fn(h, w, |y, x| out.get(y, x))
    }

    /// Zeroes both convolution kernels of residual block `index` (1-based).
    #[doc(hidden)]
    pub fn zero_residual_block(&mut self, index: usize) {
        let prefix = format!("res{index}.");
        for name in ["conv1.weight", "conv2.weight"] {
            if let Some(p) = self.params.by_name_mut(&format!("{prefix}{name}")) {
                p.value.data_mut().fill(T::zero());
            }
        }
    }

    /// Output of residual block `index` (1-based) for a `[4f, H, W]` input.
    #[doc(hidden)]
    pub fn residual_block_forward(&self, index: usize, x: &Tensor<T>) -> Result<Tensor<T>> {
        let block = self
            .blocks
            .iter()
            .find(|b| b.name == format!("res{index}"))
            .ok_or_else(|| Error::InvalidInput(format!("no residual block {index}")))?;
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = block.forward(&mut tape, &bound, xv)?;
        Ok(tape.value(y).clone())
    }
}

fn padded_side(n: usize) -> usize {
    n.div_ceil(SPATIAL_DIVISOR).max(MIN_GENERATOR_SIDE / SPATIAL_DIVISOR) * SPATIAL_DIVISOR
}

/// Reflection index without edge repeat, valid for any overshoot.
fn mirror(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}
