use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use usadapt::dataset::{file_name, list_images_nonempty};
use usadapt::imaging::{load_image, save_image};
use usadapt::metrics::{evaluate_set_with, EvalOptions, MaskSource, DEFAULT_BINS};
use usadapt::synthdata::{generate_corpus_from, manifest_path, read_manifest, Preset};
use usadapt::trainer::{self, TrainingConfig};
use usadapt::Error;

#[derive(Parser)]
#[command(name = "usadapt", version, about = "Unpaired ultrasound domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic two-domain corpus.
    Synth(SynthArgs),
    /// Train the generator and both discriminators.
    Train(TrainArgs),
    /// Translate every PNG in a directory with a trained generator.
    Translate(TranslateArgs),
    /// Compare translated images against reference images.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "texture-shift")]
    preset: Preset,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    image_size: usize,
    #[arg(long, default_value_t = 50)]
    n_train: usize,
    #[arg(long, default_value_t = 10)]
    n_test: usize,
    /// Rebuild the corpus described by an existing manifest instead.
    #[arg(long, conflicts_with_all = ["preset", "seed", "image_size", "n_train", "n_test"])]
    manifest: Option<PathBuf>,
}

/// Overrides mirroring the configuration keys.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, visible_alias = "epochs")]
    epochs_total: Option<String>,
    #[arg(long, visible_alias = "epochs-constant")]
    epochs_constant_lr: Option<String>,
    #[arg(long, visible_alias = "lr")]
    lr_initial: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    adam_beta1: Option<String>,
    #[arg(long)]
    adam_beta2: Option<String>,
    #[arg(long)]
    lambda1: Option<String>,
    #[arg(long)]
    lambda2: Option<String>,
    #[arg(long)]
    w_content: Option<String>,
    #[arg(long)]
    w_reverb: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    image_size: Option<String>,
    #[arg(long)]
    base_filters: Option<String>,
    #[arg(long)]
    residual_blocks: Option<String>,
    #[arg(long)]
    loss_form: Option<String>,
    #[arg(long)]
    checkpoint_every: Option<String>,
    #[arg(long)]
    checkpoint_dir: Option<String>,
    #[arg(long)]
    log_path: Option<String>,
    #[arg(long)]
    skip_unreadable: bool,
}

impl ConfigArgs {
    fn flag_pairs(&self) -> Vec<(&'static str, &str)> {
        let fields = [
            ("epochs_total", &self.epochs_total),
            ("epochs_constant_lr", &self.epochs_constant_lr),
            ("lr_initial", &self.lr_initial),
            ("batch_size", &self.batch_size),
            ("adam_beta1", &self.adam_beta1),
            ("adam_beta2", &self.adam_beta2),
            ("lambda1", &self.lambda1),
            ("lambda2", &self.lambda2),
            ("w_content", &self.w_content),
            ("w_reverb", &self.w_reverb),
            ("seed", &self.seed),
            ("image_size", &self.image_size),
            ("base_filters", &self.base_filters),
            ("residual_blocks", &self.residual_blocks),
            ("loss_form", &self.loss_form),
            ("checkpoint_every", &self.checkpoint_every),
            ("checkpoint_dir", &self.checkpoint_dir),
            ("log_path", &self.log_path),
        ];
        let mut out: Vec<_> = fields.into_iter().filter_map(|(k, v)| v.as_deref().map(|v| (k, v))).collect();
        if self.skip_unreadable {
            out.push(("skip_unreadable", "true"));
        }
        out
    }

    fn is_empty(&self) -> bool {
        self.config.is_none() && self.overrides.is_empty() && self.flag_pairs().is_empty()
    }

    /// File first, then `--set`, then dedicated flags.
    fn resolve(&self) -> Result<TrainingConfig, Error> {
        let mut cfg = TrainingConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{kv}` is not of the form key=value")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        for (k, v) in self.flag_pairs() {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset root holding trainS/ and trainT/.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to continue from; bare names are looked up in the checkpoint directory.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Architecture to expect; when given, mismatching checkpoints are rejected.
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Translated (candidate) images.
    candidate: PathBuf,
    /// Reference target-domain images.
    reference: PathBuf,
    /// Directory of background masks named like the candidate images.
    #[arg(long, conflicts_with = "mask_threshold")]
    masks: Option<PathBuf>,
    /// Fixed intensity threshold in [0, 1] instead of Otsu.
    #[arg(long)]
    mask_threshold: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Where the CSV and JSON reports go.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value = "metrics")]
    stem: String,
    #[arg(long)]
    ssim_maps: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        Error::NonFiniteScores { .. } | Error::Divergence(_) => 4,
        _ => 3,
    }
}

fn synth(args: SynthArgs) -> Result<(), Error> {
    let spec = match &args.manifest {
        Some(m) => read_manifest(m)?.spec,
        None => args.preset.corpus(args.seed, args.image_size, args.n_train, args.n_test),
    };
    generate_corpus_from(&spec, &args.out)?;
    println!("{}", manifest_path(&args.out).display());
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), Error> {
    let cfg = args.config.resolve()?;
    let outcome = match &args.resume {
        Some(ckpt) => {
            let path = if ckpt.exists() { ckpt.clone() } else { cfg.checkpoint_dir.join(ckpt) };
            trainer::resume(&args.data, &cfg, &path)?
        }
        None => trainer::train(&args.data, &cfg)?,
    };
    match &outcome.last_record {
        Some(r) => println!("{}", r.losses),
        None => println!("no training steps run"),
    }
    println!("log: {}", cfg.log_path.display());
    if let Some(p) = outcome.checkpoints.last() {
        println!("checkpoint: {}", p.display());
    }
    Ok(())
}

fn translate(args: TranslateArgs) -> Result<(), Error> {
    let expected = if args.config.is_empty() { None } else { Some(args.config.resolve()?.generator_config()) };
    let g = trainer::load_generator_checkpoint(&args.checkpoint, expected)?;
    let files = list_images_nonempty(&args.input)?;
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    for path in &files {
        let out = g.translate_image(&load_image(path)?)?;
        save_image(&out, args.out.join(file_name(path)))?;
    }
    println!("translated {} images into {}", files.len(), args.out.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Error> {
    let mask_source = match (&args.masks, args.mask_threshold) {
        (Some(dir), _) => MaskSource::Files(dir.clone()),
        (None, Some(t)) => MaskSource::Fixed(t),
        (None, None) => MaskSource::Otsu,
    };
    let opts = EvalOptions { mask_source, bins: args.bins, ssim_maps_dir: args.ssim_maps.clone() };
    let report = evaluate_set_with(&args.candidate, &args.reference, &opts)?;
    println!("{}", report.table_lines());
    let (csv, json) = report.write(&args.out, &args.stem)?;
    log::info!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Translate(a) => translate(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
