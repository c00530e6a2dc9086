use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use usadapt::dataset::list_images;
use usadapt::imaging::load_image;
use usadapt::trainer::{read_loss_log, TrainState, TrainingConfig};

fn usadapt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_usadapt")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["synth", "--out", p(out)];
    args.extend_from_slice(extra);
    usadapt(&args)
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(tree(&path));
        } else {
            out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

const TINY: [&str; 8] = ["--image-size", "24", "--base-filters", "2", "--residual-blocks", "1", "--epochs-constant", "1"];

#[test]
fn synth_writes_layout_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = ["--preset", "reverb", "--seed", "7", "--n-train", "4", "--n-test", "2", "--image-size", "32"];
    let o = synth(&a, &args);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).trim().ends_with("manifest.json"));
    assert!(synth(&b, &args).status.success());
    for (d, n) in [("trainS", 4), ("trainT", 4), ("testS", 2), ("testT", 2), ("masks", 10)] {
        assert_eq!(list_images(&a.join(d)).unwrap().len(), n, "{d}");
    }
    assert_eq!(tree(&a), tree(&b));
    let c = dir.path().join("c");
    assert!(usadapt(&["synth", "--out", p(&c), "--manifest", p(&a.join("manifest.json"))]).status.success());
    assert_eq!(tree(&a), tree(&c));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(usadapt(&["synth"]).status.code(), Some(2));
    assert_eq!(usadapt(&["synth", "--out", "x", "--preset", "nope"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let o = usadapt(&["train", "--data", p(dir.path()), "--set", "learning_rate=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lr_initial"));
}

#[test]
fn missing_data_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = usadapt(&["train", "--data", p(&dir.path().join("none")), "--log-path", p(&dir.path().join("log.csv"))]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}

#[test]
fn train_logs_every_step_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(synth(&data, &["--n-train", "4", "--n-test", "1", "--image-size", "24"]).status.success());
    let ck = dir.path().join("ck");
    let log = dir.path().join("log.csv");
    let mut args = vec!["train", "--data", p(&data), "--checkpoint-dir", p(&ck), "--log-path", p(&log), "--checkpoint-every", "1"];
    args.extend_from_slice(&TINY);
    let mut two = args.clone();
    two.extend_from_slice(&["--epochs", "2"]);
    let o = usadapt(&two);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    assert!(out.contains("total_g=") && out.contains("ckpt_epoch_2"), "{out}");
    let rows = read_loss_log(&log).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(ck.join("ckpt_epoch_1").exists() && ck.join("latest").exists());

    let mut three = args.clone();
    three.extend_from_slice(&["--epochs", "3", "--resume", "ckpt_epoch_1"]);
    assert!(usadapt(&three).status.success());
    let rows = read_loss_log(&log).unwrap();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows[4].epoch, 1);
    assert_eq!(rows[4].iteration, 5);
    assert_eq!(rows.last().unwrap().epoch, 2);
}

#[test]
fn translate_preserves_names_and_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(synth(&data, &["--n-train", "1", "--n-test", "3", "--image-size", "20"]).status.success());
    let cfg = TrainingConfig { image_size: 24, base_filters: 2, residual_blocks: 1, ..Default::default() };
    let ckpt = dir.path().join("fresh");
    TrainState::<f32>::new(&cfg).unwrap().save(&ckpt).unwrap();
    let run = |out: &Path| {
        usadapt(&["translate", "--checkpoint", p(&ckpt), "--input", p(&data.join("testS")), "--out", p(out)])
    };
    let (o1, o2) = (dir.path().join("o1"), dir.path().join("o2"));
    assert!(run(&o1).status.success());
    assert!(run(&o2).status.success());
    let files = list_images(&o1).unwrap();
    assert_eq!(files.len(), 3);
    for f in &files {
        let img = load_image(f).unwrap();
        assert_eq!((img.height(), img.width()), (20, 20));
    }
    assert_eq!(tree(&o1), tree(&o2));
    let o = usadapt(&[
        "translate",
        "--checkpoint",
        p(&ckpt),
        "--input",
        p(&data.join("testS")),
        "--out",
        p(&o1),
        "--base-filters",
        "4",
        "--residual-blocks",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("architecture mismatch"));
}

#[test]
fn eval_self_comparison_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(synth(&data, &["--n-train", "1", "--n-test", "3", "--image-size", "32"]).status.success());
    let test_s = data.join("testS");
    let maps = dir.path().join("maps");
    let o = usadapt(&["eval", p(&test_s), p(&test_s), "--out", p(dir.path()), "--ssim-maps", p(&maps)]);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    assert!(out.contains("BD 0.000") && out.contains("HC 1.000"), "{out}");
    assert_eq!(list_images(&maps).unwrap().len(), 3);
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("filename,bd,hc,ssim"));
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json["n"], 3);

    let masked = usadapt(&["eval", p(&test_s), p(&data.join("testT")), "--masks", p(&data.join("masks")), "--out", p(dir.path())]);
    assert!(masked.status.success(), "{masked:?}");
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(usadapt(&["eval", p(&empty), p(&test_s)]).status.code(), Some(3));
}
