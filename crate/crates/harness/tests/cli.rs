use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cat_core::{init_params, save_weights, ModelConfig, Task};
use cat_harness::image::{load_image, save_image, ImageU8};

fn cat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cat")).args(args).output().unwrap()
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn gradient(h: usize, w: usize, c: usize) -> ImageU8 {
    let data = (0..h * w * c).map(|i| ((i / c % w) * 4 + i / (w * c) * 2 + i % c * 40) as u8).collect();
    ImageU8::new(h, w, c, data).unwrap()
}

#[test]
fn metrics_of_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.png");
    save_image(&gradient(20, 24, 3), &a).unwrap();
    let a = a.to_str().unwrap();
    let out = cat(&["metrics", "--ref", a, "--test", a]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "PSNR=100.0000 SSIM=1.0000");
    let out = cat(&["metrics", "--ref", a, "--test", a, "--y", "--crop", "2"]);
    assert_eq!(stdout(&out).trim(), "PSNR=100.0000 SSIM=1.0000");
}

#[test]
fn metrics_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.ppm"));
    save_image(&gradient(20, 24, 3), &a).unwrap();
    save_image(&gradient(20, 20, 3), &b).unwrap();
    let out = cat(&["metrics", "--ref", a.to_str().unwrap(), "--test", b.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = cat(&["metrics", "--ref", "missing.png", "--test", "missing.png"]);
    assert!(!out.status.success());
    assert!(!cat(&["nonsense"]).status.success());
}

#[test]
fn analyze_prints_totals() {
    let out = cat(&["analyze", "--config", config("cat-r-x4.cfg").to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    let total = text.lines().find(|l| l.starts_with("total")).unwrap();
    assert!(total.contains("16.68M") && total.contains("291.66G"), "{total}");
    let out = cat(&["analyze", "--config", "no-such.cfg"]);
    assert!(!out.status.success());
}

#[test]
fn infer_upscales_by_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = config("tiny-x4.cfg");
    let cfg = ModelConfig::load(&cfg_path).unwrap();
    let weights = dir.path().join("w.bin");
    save_weights(&init_params::<f32>(&cfg, 7).unwrap(), &weights).unwrap();
    let input = dir.path().join("in.png");
    save_image(&gradient(64, 64, 3), &input).unwrap();
    let output = dir.path().join("out.png");
    let args = |extra: &[&'static str]| {
        let mut v = vec![
            "infer".to_string(),
            "--config".into(),
            cfg_path.to_str().unwrap().into(),
            "--weights".into(),
            weights.to_str().unwrap().into(),
            "--input".into(),
            input.to_str().unwrap().into(),
            "--output".into(),
            output.to_str().unwrap().into(),
        ];
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let run = |a: Vec<String>| Command::new(env!("CARGO_BIN_EXE_cat")).args(a).output().unwrap();
    let out = run(args(&[]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let img = load_image(&output).unwrap();
    assert_eq!((img.height, img.width, img.channels), (256, 256, 3));

    // Weights for another scale are rejected.
    let other = ModelConfig::tiny(Task::Sr { scale: 2 });
    save_weights(&init_params::<f32>(&other, 7).unwrap(), &weights).unwrap();
    assert!(!run(args(&[])).status.success());
}

#[test]
fn infer_with_ensemble_and_double_weights() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = config("tiny-x2.cfg");
    let cfg = ModelConfig::load(&cfg_path).unwrap();
    let weights = dir.path().join("w.bin");
    save_weights(&init_params::<f64>(&cfg, 3).unwrap(), &weights).unwrap();
    let input = dir.path().join("in.ppm");
    save_image(&gradient(12, 10, 3), &input).unwrap();
    let output = dir.path().join("out.ppm");
    let out = cat(&[
        "infer",
        "--config",
        cfg_path.to_str().unwrap(),
        "--weights",
        weights.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
        "--ensemble",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let img = load_image(&output).unwrap();
    assert_eq!((img.height, img.width), (24, 20));
}

#[test]
fn selftest_lists_and_filters() {
    let out = cat(&["selftest", "--list"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 6);
    let out = cat(&["selftest", "--filter", "metrics"]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("[metrics] PASS"));
    assert!(!cat(&["selftest", "--filter", "nothing"]).status.success());
}

#[test]
fn overfit_exit_code_follows_target() {
    let out = cat(&["overfit", "--steps", "3"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout(&out).lines().count(), 3);
}
