//! Adversarial training loop: both discriminators, then the generator, once
//! per iteration, with Adam and a constant-then-linear learning-rate decay.

mod adam;
mod config;

pub use adam::Adam;
pub use config::{TrainingConfig, CONFIG_KEYS};

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autograd::{Tape, Var};
use crate::dataset::{self, DatasetLayout};
use crate::error::{Error, Result};
use crate::imaging::{load_image, resize, Image};
use crate::losses::{
    adversarial_loss, content_loss, reverberation_loss, total_objective, LossBreakdown, LossForm, LossParts, Side,
};
use crate::netarch::checkpoint::{self, TensorArchive};
use crate::netarch::{Depth, Discriminator, DiscriminatorRole, Generator, ParamStore};
use crate::tensor::{Scalar, Tensor};

pub const LOG_HEADER: &str = "iteration,epoch,l_dr,l_dc,l_content,l_reverb,total_g,total_dr,total_dc,lr";
pub const LATEST: &str = "latest";

pub fn checkpoint_name(completed_epochs: usize) -> String {
    format!("ckpt_epoch_{completed_epochs}")
}

/// Learning rate for a 0-based epoch: constant for the first
/// `epochs_constant_lr` epochs, then linear down to zero at `epochs_total`.
pub fn lr_schedule(epoch: usize, cfg: &TrainingConfig) -> Result<f64> {
    if epoch > cfg.epochs_total {
        return Err(Error::InvalidInput(format!("epoch {epoch} is past epochs_total ({})", cfg.epochs_total)));
    }
    if epoch < cfg.epochs_constant_lr {
        return Ok(cfg.lr_initial);
    }
    let span = cfg.epochs_total - cfg.epochs_constant_lr;
    if span == 0 {
        return Ok(0.0);
    }
    Ok(cfg.lr_initial * (cfg.epochs_total - epoch) as f64 / span as f64)
}

/// One row of the loss log. Adversarial columns `l_dr`/`l_dc` hold the
/// generator-side terms; `total_dr`/`total_dc` the discriminator objectives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossLogRecord {
    /// 1-based count of generator updates so far.
    pub iteration: u64,
    /// 0-based epoch.
    pub epoch: usize,
    pub losses: LossBreakdown,
    pub lr: f64,
}

impl LossLogRecord {
    pub fn csv_row(&self) -> String {
        let l = &self.losses;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.epoch,
            l.l_dr,
            l.l_dc,
            l.l_content,
            l.l_reverb,
            l.total_generator,
            l.total_d_r,
            l.total_d_c,
            self.lr
        )
    }

    pub fn parse_csv_row(row: &str) -> Result<Self> {
        let f: Vec<&str> = row.trim().split(',').collect();
        let bad = || Error::Dataset(format!("malformed loss-log row `{row}`"));
        if f.len() != 10 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        Ok(LossLogRecord {
            iteration: f[0].parse().map_err(|_| bad())?,
            epoch: f[1].parse().map_err(|_| bad())?,
            losses: LossBreakdown {
                l_dr: num(2)?,
                l_dc: num(3)?,
                l_content: num(4)?,
                l_reverb: num(5)?,
                total_generator: num(6)?,
                total_d_r: num(7)?,
                total_d_c: num(8)?,
            },
            lr: num(9)?,
        })
    }
}

/// Reads every record of a loss-log CSV.
pub fn read_loss_log(path: &Path) -> Result<Vec<LossLogRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(LOG_HEADER) {
        return Err(Error::Dataset(format!("{} is not a loss log (bad header)", path.display())));
    }
    lines.filter(|l| !l.trim().is_empty()).map(LossLogRecord::parse_csv_row).collect()
}

/// Generator-side terms of one update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeneratorTerms {
    pub l_dr: f64,
    pub l_dc: f64,
    pub l_content: f64,
    pub l_reverb: f64,
}

/// Decorrelated 64-bit seed for stream `stream`, index `index`.
pub(crate) fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_G: u64 = 1;
const STREAM_DR: u64 = 2;
const STREAM_DC: u64 = 3;
const STREAM_EPOCH: u64 = 4;

/// `(source, target)` index pairs for one epoch: `min(n_source, n_target)`
/// source images in shuffled order, each with a uniformly drawn target.
pub fn epoch_plan(seed: u64, epoch: usize, n_source: usize, n_target: usize) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_EPOCH, epoch as u64));
    let mut order: Vec<usize> = (0..n_source).collect();
    order.shuffle(&mut rng);
    let steps = n_source.min(n_target);
    order.into_iter().take(steps).map(|s| (s, rng.gen_range(0..n_target))).collect()
}

/// Preprocessed training images as network tensors in `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct TrainingData<T> {
    pub source: Vec<Tensor<T>>,
    pub target: Vec<Tensor<T>>,
}

fn prepare(img: &Image, size: usize) -> Result<Image> {
    if img.height() == size && img.width() == size {
        Ok(img.clone())
    } else {
        resize(img, size, size)
    }
}

impl<T: Scalar> TrainingData<T> {
    pub fn from_images(source: &[Image], target: &[Image], image_size: usize) -> Result<Self> {
        if source.is_empty() || target.is_empty() {
            return Err(Error::Dataset("training needs at least one source and one target image".into()));
        }
        let conv = |set: &[Image]| -> Result<Vec<Tensor<T>>> {
            set.iter().map(|i| prepare(i, image_size).map(|i| i.to_tensor())).collect()
        };
        Ok(TrainingData { source: conv(source)?, target: conv(target)? })
    }

    /// Loads `trainS` and `trainT` under `root`.
    pub fn load(root: &Path, image_size: usize, skip_unreadable: bool) -> Result<Self> {
        let layout = DatasetLayout::new(root);
        let load_dir = |dir: PathBuf| -> Result<Vec<Image>> {
            let mut images = Vec::new();
            for path in dataset::list_images_nonempty(&dir)? {
                match load_image(&path) {
                    Ok(img) => images.push(img),
                    Err(e) if skip_unreadable => log::warn!("skipping {}: {e}", path.display()),
                    Err(e) => return Err(e),
                }
            }
            if images.is_empty() {
                return Err(Error::Dataset(format!("no readable images in {}", dir.display())));
            }
            Ok(images)
        };
        let source = load_dir(layout.train_source())?;
        let target = load_dir(layout.train_target())?;
        Self::from_images(&source, &target, image_size)
    }
}

pub enum TrainEvent<'a, T> {
    Record(&'a LossLogRecord),
    EpochEnd(&'a TrainState<T>),
}

/// Networks, optimiser moments and progress counters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T> {
    pub g: Generator<T>,
    pub d_r: Discriminator<T>,
    pub d_c: Discriminator<T>,
    pub opt_g: Adam<T>,
    pub opt_d_r: Adam<T>,
    pub opt_d_c: Adam<T>,
    /// Completed epochs.
    pub epoch: usize,
    /// Generator updates performed.
    pub iteration: u64,
    /// Seed of the data-order stream.
    pub seed: u64,
}

fn sum_into<T: Scalar>(acc: &mut Option<Vec<Tensor<T>>>, grads: Vec<Tensor<T>>) {
    match acc {
        None => *acc = Some(grads),
        Some(a) => a.iter_mut().zip(&grads).for_each(|(a, g)| a.add_assign(g)),
    }
}

fn averaged<T: Scalar>(acc: Option<Vec<Tensor<T>>>, n: usize) -> Vec<Tensor<T>> {
    let k = T::of(1.0 / n as f64);
    acc.expect("non-empty batch").into_iter().map(|t| if n == 1 { t } else { t.map(|v| v * k) }).collect()
}

fn check_batch<T>(a: &[Tensor<T>], b: &[Tensor<T>]) -> Result<()> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::InvalidInput(format!("batch sizes {} and {} must match and be non-zero", a.len(), b.len())));
    }
    Ok(())
}

impl<T: Scalar> TrainState<T> {
    pub fn new(cfg: &TrainingConfig) -> Result<Self> {
        cfg.validate()?;
        let g = Generator::new(cfg.generator_config(), derive_seed(cfg.seed, STREAM_G, 0))?;
        let d_r = Discriminator::new(
            DiscriminatorRole::DomainRealism,
            cfg.discriminator_config(),
            derive_seed(cfg.seed, STREAM_DR, 0),
        )?;
        let d_c =
            Discriminator::new(DiscriminatorRole::Content, cfg.discriminator_config(), derive_seed(cfg.seed, STREAM_DC, 0))?;
        Ok(TrainState {
            opt_g: Adam::new(g.params(), cfg.adam_beta1, cfg.adam_beta2),
            opt_d_r: Adam::new(d_r.params(), cfg.adam_beta1, cfg.adam_beta2),
            opt_d_c: Adam::new(d_c.params(), cfg.adam_beta1, cfg.adam_beta2),
            g,
            d_r,
            d_c,
            epoch: 0,
            iteration: 0,
            seed: cfg.seed,
        })
    }

    fn discriminator_grads(d: &Discriminator<T>, real: &Tensor<T>, fake: &Tensor<T>, form: LossForm) -> Result<(f64, Vec<Tensor<T>>)> {
        let mut tape = Tape::new();
        let p = d.params().bind(&mut tape, true);
        let r = tape.constant(real.clone());
        let f = tape.constant(fake.clone());
        let sr = d.forward(&mut tape, &p, r)?;
        let sf = d.forward(&mut tape, &p, f)?;
        let loss = adversarial_loss(&mut tape, d.role(), Some(sr), sf, Side::Discriminator, form)?;
        let value = tape.value(loss).item().f64();
        if !value.is_finite() {
            return Err(Error::Divergence(format!("{} discriminator loss is {value}", d.role().label())));
        }
        let mut grads = tape.backward(loss)?;
        Ok((value, d.params().collect_grads(&p, &mut grads)))
    }

    fn update_discriminator(
        d: &mut Discriminator<T>,
        opt: &mut Adam<T>,
        reals: &[Tensor<T>],
        fakes: &[Tensor<T>],
        lr: f64,
        form: LossForm,
    ) -> Result<f64> {
        check_batch(reals, fakes)?;
        let mut acc = None;
        let mut total = 0.0;
        for (r, f) in reals.iter().zip(fakes) {
            let (v, g) = Self::discriminator_grads(d, r, f, form)?;
            total += v;
            sum_into(&mut acc, g);
        }
        opt.apply(d.params_mut(), &averaged(acc, reals.len()), lr)?;
        Ok(total / reals.len() as f64)
    }

    /// Realism discriminator step: target images are real, `fakes` (already
    /// translated source images) are fake. Returns the mean objective.
    pub fn update_d_r(&mut self, targets: &[Tensor<T>], fakes: &[Tensor<T>], lr: f64, form: LossForm) -> Result<f64> {
        Self::update_discriminator(&mut self.d_r, &mut self.opt_d_r, targets, fakes, lr, form)
    }

    /// Content discriminator step: source images are real.
    pub fn update_d_c(&mut self, sources: &[Tensor<T>], fakes: &[Tensor<T>], lr: f64, form: LossForm) -> Result<f64> {
        Self::update_discriminator(&mut self.d_c, &mut self.opt_d_c, sources, fakes, lr, form)
    }

    fn target_taps(&self, y: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut tape = Tape::new();
        let p = self.g.params().bind(&mut tape, false);
        let yv = tape.constant(y.clone());
        let vars = self.g.forward(&mut tape, &p, yv, Depth::Taps)?;
        Ok(vars.taps.iter().map(|v| tape.value(*v).clone()).collect())
    }

    fn generator_grads(&self, x: &Tensor<T>, y: &Tensor<T>, cfg: &TrainingConfig) -> Result<(GeneratorTerms, Vec<Tensor<T>>)> {
        let taps_y = self.target_taps(y)?;
        let w = &cfg.weights;
        let mut tape = Tape::new();
        let gp = self.g.params().bind(&mut tape, true);
        let rp = self.d_r.params().bind(&mut tape, false);
        let cp = self.d_c.params().bind(&mut tape, false);
        let xv = tape.constant(x.clone());

        let first = self.g.forward(&mut tape, &gp, xv, Depth::Full)?;
        let gx = first.output.expect("full pass");
        let sr = self.d_r.forward(&mut tape, &rp, gx)?;
        let l_dr = adversarial_loss(&mut tape, DiscriminatorRole::DomainRealism, None, sr, Side::Generator, cfg.loss_form)?;
        let sc = self.d_c.forward(&mut tape, &cp, gx)?;
        let l_dc = adversarial_loss(&mut tape, DiscriminatorRole::Content, None, sc, Side::Generator, cfg.loss_form)?;

        // Second pass on the translation supplies both content features and
        // texture taps.
        let second = self.g.forward(&mut tape, &gp, gx, Depth::Features)?;
        let l_c = content_loss(&mut tape, second.content.expect("features pass"), first.content.expect("full pass"))?;
        let ty: Vec<Var> = taps_y.into_iter().map(|t| tape.constant(t)).collect();
        let l_r = reverberation_loss(&mut tape, &second.taps, &ty)?;

        let terms = [(l_dr, w.lambda1), (l_dc, w.lambda2), (l_c, w.w_content), (l_r, w.w_reverb)];
        let mut total: Option<Var> = None;
        for (v, k) in terms {
            let s = tape.scale(v, k);
            total = Some(match total {
                None => s,
                Some(t) => tape.add(t, s)?,
            });
        }
        let total = total.expect("four terms");
        let val = |v: Var| tape.value(v).item().f64();
        let out = GeneratorTerms { l_dr: val(l_dr), l_dc: val(l_dc), l_content: val(l_c), l_reverb: val(l_r) };
        if !val(total).is_finite() {
            let b = LossBreakdown {
                l_dr: out.l_dr,
                l_dc: out.l_dc,
                l_content: out.l_content,
                l_reverb: out.l_reverb,
                total_generator: val(total),
                total_d_r: f64::NAN,
                total_d_c: f64::NAN,
            };
            return Err(Error::Divergence(format!("generator objective: {b}")));
        }
        let mut grads = tape.backward(total)?;
        Ok((out, self.g.params().collect_grads(&gp, &mut grads)))
    }

    /// Generator step on the full weighted objective with both
    /// discriminators frozen.
    pub fn update_generator(&mut self, sources: &[Tensor<T>], targets: &[Tensor<T>], lr: f64, cfg: &TrainingConfig) -> Result<GeneratorTerms> {
        check_batch(sources, targets)?;
        let mut acc = None;
        let mut sum = GeneratorTerms::default();
        for (x, y) in sources.iter().zip(targets) {
            let (t, g) = self.generator_grads(x, y, cfg)?;
            sum.l_dr += t.l_dr;
            sum.l_dc += t.l_dc;
            sum.l_content += t.l_content;
            sum.l_reverb += t.l_reverb;
            sum_into(&mut acc, g);
        }
        self.opt_g.apply(self.g.params_mut(), &averaged(acc, sources.len()), lr)?;
        let n = sources.len() as f64;
        Ok(GeneratorTerms { l_dr: sum.l_dr / n, l_dc: sum.l_dc / n, l_content: sum.l_content / n, l_reverb: sum.l_reverb / n })
    }

    /// One iteration: realism discriminator, content discriminator, then
    /// generator. `sources[i]` is paired with `targets[i]`.
    pub fn train_step(&mut self, sources: &[Tensor<T>], targets: &[Tensor<T>], epoch: usize, cfg: &TrainingConfig) -> Result<LossLogRecord> {
        check_batch(sources, targets)?;
        let lr = lr_schedule(epoch, cfg)?;
        let fakes = sources.iter().map(|x| self.g.translate_tensor(x)).collect::<Result<Vec<_>>>()?;
        let d_r = self.update_d_r(targets, &fakes, lr, cfg.loss_form)?;
        let d_c = self.update_d_c(sources, &fakes, lr, cfg.loss_form).map_err(|e| match e {
            Error::Divergence(m) => Error::Divergence(format!("{m} (total_dr={d_r})")),
            e => e,
        })?;
        let t = self.update_generator(sources, targets, lr, cfg).map_err(|e| match e {
            Error::Divergence(m) => Error::Divergence(format!("{m} (total_dr={d_r} total_dc={d_c})")),
            e => e,
        })?;
        let parts = LossParts { l_dr: t.l_dr, l_dc: t.l_dc, l_content: t.l_content, l_reverb: t.l_reverb, d_r, d_c };
        let losses = total_objective(parts, &cfg.weights)?;
        self.iteration += 1;
        Ok(LossLogRecord { iteration: self.iteration, epoch, losses, lr })
    }

    /// Single-pair convenience wrapper around [`TrainState::train_step`].
    pub fn train_step_images(&mut self, x: &Image, y: &Image, epoch: usize, cfg: &TrainingConfig) -> Result<LossLogRecord> {
        self.train_step(&[x.to_tensor()], &[y.to_tensor()], epoch, cfg)
    }

    /// Runs epochs `self.epoch..cfg.epochs_total`, reporting every record
    /// and every completed epoch to `on_event`.
    pub fn fit(
        &mut self,
        data: &TrainingData<T>,
        cfg: &TrainingConfig,
        mut on_event: impl FnMut(TrainEvent<'_, T>) -> Result<()>,
    ) -> Result<()> {
        cfg.validate()?;
        while self.epoch < cfg.epochs_total {
            let epoch = self.epoch;
            let plan = epoch_plan(self.seed, epoch, data.source.len(), data.target.len());
            for chunk in plan.chunks(cfg.batch_size) {
                let xs: Vec<Tensor<T>> = chunk.iter().map(|(s, _)| data.source[*s].clone()).collect();
                let ys: Vec<Tensor<T>> = chunk.iter().map(|(_, t)| data.target[*t].clone()).collect();
                let rec = self.train_step(&xs, &ys, epoch, cfg)?;
                on_event(TrainEvent::Record(&rec))?;
            }
            self.epoch += 1;
            on_event(TrainEvent::EpochEnd(self))?;
        }
        Ok(())
    }

    pub fn to_archive(&self) -> TensorArchive<T> {
        let meta = json!({
            "generator": self.g.config(),
            "discriminator": self.d_r.config(),
            "epoch": self.epoch,
            "iteration": self.iteration,
            "rng": { "seed": self.seed, "epoch": self.epoch },
            "adam": {
                "beta1": self.opt_g.beta1,
                "beta2": self.opt_g.beta2,
                "eps": self.opt_g.eps,
                "steps": [self.opt_g.step, self.opt_d_r.step, self.opt_d_c.step],
            },
        });
        let mut a = TensorArchive::new(meta);
        checkpoint::push_params(&mut a, "g", self.g.params());
        checkpoint::push_params(&mut a, "d_r", self.d_r.params());
        checkpoint::push_params(&mut a, "d_c", self.d_c.params());
        for (key, opt, store) in [
            ("opt_g", &self.opt_g, self.g.params()),
            ("opt_d_r", &self.opt_d_r, self.d_r.params()),
            ("opt_d_c", &self.opt_d_c, self.d_c.params()),
        ] {
            for ((p, m), v) in store.iter().zip(&opt.m).zip(&opt.v) {
                a.push(format!("{key}/m/{}", p.name), m.clone());
                a.push(format!("{key}/v/{}", p.name), v.clone());
            }
        }
        a
    }

    /// Restores a full training checkpoint; the stored architecture must
    /// match `cfg`.
    pub fn from_archive(a: &TensorArchive<T>, cfg: &TrainingConfig) -> Result<Self> {
        let g = checkpoint::generator_from_archive(a, Some(cfg.generator_config()))?;
        let d_r = checkpoint::discriminator_from_archive(a, DiscriminatorRole::DomainRealism, Some(cfg.discriminator_config()))?;
        let d_c = checkpoint::discriminator_from_archive(a, DiscriminatorRole::Content, Some(cfg.discriminator_config()))?;
        let missing = |k: &str| Error::Checkpoint(format!("checkpoint metadata lacks `{k}`"));
        let get_u64 = |ptr: &str| a.meta.pointer(ptr).and_then(|v| v.as_u64()).ok_or_else(|| missing(ptr));
        let get_f64 = |ptr: &str| a.meta.pointer(ptr).and_then(|v| v.as_f64()).ok_or_else(|| missing(ptr));
        let (beta1, beta2, eps) = (get_f64("/adam/beta1")?, get_f64("/adam/beta2")?, get_f64("/adam/eps")?);
        let load_opt = |key: &str, store: &ParamStore<T>, step: u64| -> Result<Adam<T>> {
            let mut opt = Adam::new(store, beta1, beta2);
            opt.eps = eps;
            opt.step = step;
            for (i, p) in store.iter().enumerate() {
                for (slot, kind) in [(&mut opt.m[i], "m"), (&mut opt.v[i], "v")] {
                    let name = format!("{key}/{kind}/{}", p.name);
                    let t = a.get(&name).ok_or_else(|| Error::Checkpoint(format!("missing optimizer tensor {name}")))?;
                    if t.shape() != p.value.shape() {
                        return Err(Error::Checkpoint(format!("optimizer tensor {name} has shape {:?}", t.shape())));
                    }
                    *slot = t.clone();
                }
            }
            Ok(opt)
        };
        let opt_g = load_opt("opt_g", g.params(), get_u64("/adam/steps/0")?)?;
        let opt_d_r = load_opt("opt_d_r", d_r.params(), get_u64("/adam/steps/1")?)?;
        let opt_d_c = load_opt("opt_d_c", d_c.params(), get_u64("/adam/steps/2")?)?;
        let seed = get_u64("/rng/seed")?;
        if seed != cfg.seed {
            log::warn!("checkpoint was trained with seed {seed}; continuing its data order instead of seed {}", cfg.seed);
        }
        Ok(TrainState {
            g,
            d_r,
            d_c,
            opt_g,
            opt_d_r,
            opt_d_c,
            epoch: get_u64("/epoch")? as usize,
            iteration: get_u64("/iteration")?,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().write(path)
    }

    pub fn load(path: &Path, cfg: &TrainingConfig) -> Result<Self> {
        Self::from_archive(&TensorArchive::read(path)?, cfg)
    }

    /// Hashes of the three parameter sets (generator, realism, content).
    pub fn fingerprints(&self) -> [u64; 3] {
        [self.g.params().fingerprint(), self.d_r.params().fingerprint(), self.d_c.params().fingerprint()]
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub state: TrainState<f32>,
    pub last_record: Option<LossLogRecord>,
    pub records_written: usize,
    pub checkpoints: Vec<PathBuf>,
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

/// Keeps the header and the rows of epochs before `start_epoch`.
fn truncate_log(path: &Path, start_epoch: usize) -> Result<()> {
    let kept: Vec<String> = match fs::File::open(path) {
        Ok(f) => {
            let mut rows = Vec::new();
            for line in BufReader::new(f).lines().skip(1) {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                if LossLogRecord::parse_csv_row(&line)?.epoch < start_epoch {
                    rows.push(line);
                }
            }
            rows
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut text = String::from(LOG_HEADER);
    text.push('\n');
    for r in kept {
        text.push_str(&r);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(root: &Path, cfg: &TrainingConfig, mut state: TrainState<f32>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = TrainingData::<f32>::load(root, cfg.image_size, cfg.skip_unreadable)?;
    log::info!(
        "training on {} source / {} target images, {} steps per epoch, epochs {}..{}",
        data.source.len(),
        data.target.len(),
        data.source.len().min(data.target.len()).div_ceil(cfg.batch_size),
        state.epoch,
        cfg.epochs_total
    );
    ensure_parent(&cfg.log_path)?;
    fs::create_dir_all(&cfg.checkpoint_dir).map_err(|e| Error::io(&cfg.checkpoint_dir, e))?;
    truncate_log(&cfg.log_path, state.epoch)?;
    let file = fs::OpenOptions::new().append(true).open(&cfg.log_path).map_err(|e| Error::io(&cfg.log_path, e))?;
    let mut log = BufWriter::new(file);
    let log_path = cfg.log_path.clone();

    let mut last = None;
    let mut written = 0usize;
    let mut checkpoints = Vec::new();
    let result = state.fit(&data, cfg, |event| match event {
        TrainEvent::Record(rec) => {
            writeln!(log, "{}", rec.csv_row()).map_err(|e| Error::io(&log_path, e))?;
            last = Some(*rec);
            written += 1;
            Ok(())
        }
        TrainEvent::EpochEnd(s) => {
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            if let Some(r) = &last {
                log::info!("epoch {} done: {}", s.epoch, r.losses);
            }
            let periodic = cfg.checkpoint_every > 0 && s.epoch % cfg.checkpoint_every == 0;
            if periodic || s.epoch == cfg.epochs_total {
                let path = cfg.checkpoint_dir.join(checkpoint_name(s.epoch));
                let archive = s.to_archive();
                archive.write(&path)?;
                archive.write(cfg.checkpoint_dir.join(LATEST))?;
                checkpoints.push(path);
            }
            Ok(())
        }
    });
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    result?;
    Ok(TrainOutcome { state, last_record: last, records_written: written, checkpoints })
}

/// Trains from scratch on `<root>/trainS` and `<root>/trainT`.
pub fn train(root: &Path, cfg: &TrainingConfig) -> Result<TrainOutcome> {
    run(root, cfg, TrainState::new(cfg)?)
}

/// Continues a run from a checkpoint written by [`train`].
pub fn resume(root: &Path, cfg: &TrainingConfig, checkpoint: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let state = TrainState::load(checkpoint, cfg)?;
    if state.epoch > cfg.epochs_total {
        return Err(Error::Config(format!(
            "checkpoint has {} completed epochs but epochs_total is {}",
            state.epoch, cfg.epochs_total
        )));
    }
    run(root, cfg, state)
}

/// Loads the generator from any checkpoint written by this crate.
pub fn load_generator_checkpoint(path: &Path, expected: Option<crate::netarch::GeneratorConfig>) -> Result<Generator<f32>> {
    checkpoint::load_generator(path, expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_cfg() -> TrainingConfig {
        TrainingConfig {
            epochs_total: 2,
            epochs_constant_lr: 1,
            image_size: 24,
            base_filters: 2,
            residual_blocks: 1,
            seed: 5,
            ..Default::default()
        }
    }

    fn noise(seed: u64, lo: f64, hi: f64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(24, 24, |_, _| rng.gen_range(lo..hi)).unwrap().to_tensor()
    }

    #[test]
    fn schedule_examples() {
        let c = TrainingConfig::default();
        assert_eq!(lr_schedule(0, &c).unwrap(), 0.0002);
        assert_eq!(lr_schedule(99, &c).unwrap(), 0.0002);
        assert_eq!(lr_schedule(100, &c).unwrap(), 0.0002);
        assert_eq!(lr_schedule(180, &c).unwrap(), 0.0);
        assert!((lr_schedule(140, &c).unwrap() - 0.0001).abs() < 1e-18);
        assert!(lr_schedule(181, &c).is_err());
        let mut prev = f64::INFINITY;
        for e in 0..=180 {
            let lr = lr_schedule(e, &c).unwrap();
            assert!(lr <= prev && lr >= 0.0);
            prev = lr;
        }
        let flat = TrainingConfig { epochs_total: 4, epochs_constant_lr: 4, ..c };
        assert_eq!(lr_schedule(3, &flat).unwrap(), 0.0002);
        assert_eq!(lr_schedule(4, &flat).unwrap(), 0.0);
    }

    #[test]
    fn epoch_plan_counts_and_determinism() {
        let p = epoch_plan(1, 0, 5, 3);
        assert_eq!(p.len(), 3);
        assert!(p.iter().all(|(s, t)| *s < 5 && *t < 3));
        let mut srcs: Vec<usize> = p.iter().map(|x| x.0).collect();
        srcs.sort();
        srcs.dedup();
        assert_eq!(srcs.len(), 3);
        assert_eq!(p, epoch_plan(1, 0, 5, 3));
        assert_ne!(epoch_plan(1, 0, 50, 50), epoch_plan(1, 1, 50, 50));
    }

    #[test]
    fn csv_row_round_trip() {
        let r = LossLogRecord {
            iteration: 7,
            epoch: 2,
            losses: LossBreakdown { l_dr: 0.1, l_dc: 1.0 / 3.0, l_content: 2e-9, l_reverb: 4.5, total_generator: 8.0, total_d_r: 1.2, total_d_c: 0.7 },
            lr: 0.0002,
        };
        assert_eq!(LossLogRecord::parse_csv_row(&r.csv_row()).unwrap(), r);
        assert!(LossLogRecord::parse_csv_row("1,2,3").is_err());
    }

    #[test]
    fn discriminator_updates_leave_generator_untouched() {
        let cfg = toy_cfg();
        let mut s = TrainState::<f32>::new(&cfg).unwrap();
        let (x, y) = (noise(1, 0.0, 0.5), noise(2, 0.3, 1.0));
        let before = s.fingerprints();
        let fake = s.g.translate_tensor(&x).unwrap();
        s.update_d_r(std::slice::from_ref(&y), std::slice::from_ref(&fake), 1e-3, cfg.loss_form).unwrap();
        let mid = s.fingerprints();
        assert_eq!(mid[0], before[0]);
        assert_ne!(mid[1], before[1]);
        assert_eq!(mid[2], before[2]);
        s.update_d_c(std::slice::from_ref(&x), std::slice::from_ref(&fake), 1e-3, cfg.loss_form).unwrap();
        let after_d = s.fingerprints();
        assert_eq!(after_d[0], before[0]);
        assert_ne!(after_d[2], before[2]);
        s.update_generator(&[x], &[y], 1e-3, &cfg).unwrap();
        let after_g = s.fingerprints();
        assert_ne!(after_g[0], after_d[0]);
        assert_eq!(after_g[1..], after_d[1..]);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let cfg = toy_cfg();
        let mut s = TrainState::<f32>::new(&cfg).unwrap();
        let before = s.fingerprints();
        // epoch == epochs_total gives lr 0.
        let rec = s.train_step(&[noise(3, 0.0, 1.0)], &[noise(4, 0.0, 1.0)], 2, &cfg).unwrap();
        assert_eq!(rec.lr, 0.0);
        assert_eq!(s.fingerprints(), before);
        assert_eq!(rec.iteration, 1);
        assert!(rec.losses.is_finite());
    }

    #[test]
    fn batched_step_matches_mean_of_single_pairs() {
        let cfg = TrainingConfig { batch_size: 2, ..toy_cfg() };
        let s0 = TrainState::<f64>::new(&cfg).unwrap();
        let xs = [noise(5, 0.0, 1.0).cast::<f64>(), noise(6, 0.0, 1.0).cast()];
        let ys = [noise(7, 0.0, 1.0).cast::<f64>(), noise(8, 0.0, 1.0).cast()];
        let mut batched = s0.clone();
        let rec = batched.train_step(&xs, &ys, 0, &cfg).unwrap();
        let fakes: Vec<_> = xs.iter().map(|x| s0.g.translate_tensor(x).unwrap()).collect();
        let mut single = s0.clone();
        let a = single.update_d_r(&ys[..1], &fakes[..1], 0.0, cfg.loss_form).unwrap();
        let b = single.update_d_r(&ys[1..], &fakes[1..], 0.0, cfg.loss_form).unwrap();
        assert!((rec.losses.total_d_r - (a + b) / 2.0).abs() < 1e-12);
        assert_eq!(batched.iteration, 1);
    }

    #[test]
    fn realism_loss_falls_against_frozen_generator() {
        let cfg = TrainingConfig { base_filters: 4, ..toy_cfg() };
        let mut s = TrainState::<f32>::new(&cfg).unwrap();
        let x = noise(10, 0.0, 0.4);
        let y = noise(11, 0.5, 1.0);
        let fake = s.g.translate_tensor(&x).unwrap();
        let first = s.update_d_r(std::slice::from_ref(&y), std::slice::from_ref(&fake), 2e-4, cfg.loss_form).unwrap();
        let mut last = first;
        for _ in 0..199 {
            last = s.update_d_r(std::slice::from_ref(&y), std::slice::from_ref(&fake), 2e-4, cfg.loss_form).unwrap();
        }
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn non_finite_input_aborts() {
        let cfg = toy_cfg();
        let mut s = TrainState::<f32>::new(&cfg).unwrap();
        let mut bad = noise(1, 0.0, 1.0);
        bad.data_mut()[0] = f32::NAN;
        let e = s.train_step(&[noise(2, 0.0, 1.0)], &[bad], 0, &cfg).unwrap_err();
        assert!(matches!(e, Error::NonFiniteScores { .. } | Error::Divergence(_)), "{e}");
    }

    #[test]
    fn archive_round_trip_restores_everything() {
        let cfg = toy_cfg();
        let mut s = TrainState::<f32>::new(&cfg).unwrap();
        s.train_step(&[noise(1, 0.0, 1.0)], &[noise(2, 0.0, 1.0)], 0, &cfg).unwrap();
        s.epoch = 1;
        let back = TrainState::from_archive(&s.to_archive(), &cfg).unwrap();
        assert_eq!(back, s);
        let other = TrainingConfig { base_filters: 3, ..cfg };
        let e = TrainState::<f32>::from_archive(&s.to_archive(), &other).unwrap_err().to_string();
        assert!(e.contains("architecture mismatch"), "{e}");
    }
}
