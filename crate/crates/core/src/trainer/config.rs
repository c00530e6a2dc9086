use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{LossForm, LossWeights};
use crate::netarch::discriminator::patch_map_len;
use crate::netarch::generator::{MIN_GENERATOR_SIDE, SPATIAL_DIVISOR};
use crate::netarch::{DiscriminatorConfig, GeneratorConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs_total: usize,
    pub epochs_constant_lr: usize,
    pub lr_initial: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub weights: LossWeights,
    pub seed: u64,
    pub image_size: usize,
    pub base_filters: usize,
    pub residual_blocks: usize,
    pub loss_form: LossForm,
    /// Save a checkpoint every this many epochs (0 disables periodic saves;
    /// the final epoch is always saved).
    pub checkpoint_every: usize,
    pub checkpoint_dir: PathBuf,
    pub log_path: PathBuf,
    /// Skip unreadable training images with a warning instead of aborting.
    pub skip_unreadable: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs_total: 180,
            epochs_constant_lr: 100,
            lr_initial: 0.0002,
            batch_size: 1,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            weights: LossWeights::default(),
            seed: 0,
            image_size: 400,
            base_filters: 64,
            residual_blocks: 9,
            loss_form: LossForm::Log,
            checkpoint_every: 10,
            checkpoint_dir: PathBuf::from("checkpoints"),
            log_path: PathBuf::from("loss_log.csv"),
            skip_unreadable: false,
        }
    }
}

/// Keys accepted by [`TrainingConfig::set`] and the config-file parser.
pub const CONFIG_KEYS: &[&str] = &[
    "epochs_total",
    "epochs_constant_lr",
    "lr_initial",
    "batch_size",
    "adam_beta1",
    "adam_beta2",
    "lambda1",
    "lambda2",
    "w_content",
    "w_reverb",
    "seed",
    "image_size",
    "base_filters",
    "residual_blocks",
    "loss_form",
    "checkpoint_every",
    "checkpoint_dir",
    "log_path",
    "skip_unreadable",
];

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value.parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl TrainingConfig {
    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig { base_filters: self.base_filters, residual_blocks: self.residual_blocks }
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig { base_filters: self.base_filters }
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "epochs_total" => self.epochs_total = parse(key, value)?,
            "epochs_constant_lr" => self.epochs_constant_lr = parse(key, value)?,
            "lr_initial" => self.lr_initial = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "adam_beta1" => self.adam_beta1 = parse(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse(key, value)?,
            "lambda1" => self.weights.lambda1 = parse(key, value)?,
            "lambda2" => self.weights.lambda2 = parse(key, value)?,
            "w_content" => self.weights.w_content = parse(key, value)?,
            "w_reverb" => self.weights.w_reverb = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "image_size" => self.image_size = parse(key, value)?,
            "base_filters" => self.base_filters = parse(key, value)?,
            "residual_blocks" => self.residual_blocks = parse(key, value)?,
            "loss_form" => self.loss_form = value.parse()?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "checkpoint_dir" => self.checkpoint_dir = PathBuf::from(value),
            "log_path" => self.log_path = PathBuf::from(value),
            "skip_unreadable" => self.skip_unreadable = parse(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown key `{other}`; valid keys: {}", CONFIG_KEYS.join(", "))));
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are ignored.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{raw}`", n + 1)))?;
            self.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                e => e,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_kv_text(&text)
    }

    pub fn to_kv_text(&self) -> String {
        let w = &self.weights;
        format!(
            "epochs_total = {}\nepochs_constant_lr = {}\nlr_initial = {}\nbatch_size = {}\nadam_beta1 = {}\nadam_beta2 = {}\n\
             lambda1 = {}\nlambda2 = {}\nw_content = {}\nw_reverb = {}\nseed = {}\nimage_size = {}\nbase_filters = {}\n\
             residual_blocks = {}\nloss_form = {}\ncheckpoint_every = {}\ncheckpoint_dir = {}\nlog_path = {}\nskip_unreadable = {}\n",
            self.epochs_total,
            self.epochs_constant_lr,
            self.lr_initial,
            self.batch_size,
            self.adam_beta1,
            self.adam_beta2,
            w.lambda1,
            w.lambda2,
            w.w_content,
            w.w_reverb,
            self.seed,
            self.image_size,
            self.base_filters,
            self.residual_blocks,
            self.loss_form,
            self.checkpoint_every,
            self.checkpoint_dir.display(),
            self.log_path.display(),
            self.skip_unreadable
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs_total == 0 {
            return fail("epochs_total must be at least 1".into());
        }
        if self.epochs_constant_lr > self.epochs_total {
            return fail(format!(
                "epochs_constant_lr ({}) must not exceed epochs_total ({})",
                self.epochs_constant_lr, self.epochs_total
            ));
        }
        if !(self.lr_initial.is_finite() && self.lr_initial > 0.0) {
            return fail(format!("lr_initial must be positive, got {}", self.lr_initial));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.base_filters == 0 {
            return fail("base_filters must be at least 1".into());
        }
        if !self.image_size.is_multiple_of(SPATIAL_DIVISOR) || self.image_size < MIN_GENERATOR_SIDE || patch_map_len(self.image_size).is_none() {
            return fail(format!(
                "image_size must be a multiple of {SPATIAL_DIVISOR} and at least 24, got {}",
                self.image_size
            ));
        }
        self.weights.validate()
    }
}
