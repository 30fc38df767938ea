mod common;

use std::path::Path;
use std::process::{Command, Output};

use dipl0::io::{load_image, save_image};
use dipl0::report::RunReport;
use dipl0::ImageTensor;

fn dipl0(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dipl0"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn dipl0")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_test_image(path: &Path, h: usize, w: usize, c: usize, seed: u64) -> ImageTensor {
    let mut r = common::rng(seed);
    let img = common::random_image(&mut r, h, w, c, 0.0, 1.0);
    save_image(&img, path).unwrap();
    load_image(path).unwrap()
}

#[test]
fn metrics_of_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    write_test_image(&dir.path().join("a.png"), 16, 16, 3, 1);
    let out = dipl0(dir.path(), &["metrics", "--a", "a.png", "--b", "a.png"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("psnr = inf"), "{text}");
    assert!(text.contains("ssim = 1.000000"), "{text}");
}

#[test]
fn l0_with_zero_lambda_passes_through() {
    let dir = tempfile::tempdir().unwrap();
    let img = write_test_image(&dir.path().join("in.png"), 12, 9, 3, 2);
    let out = dipl0(
        dir.path(),
        &[
            "l0", "--input", "in.png", "--lambda", "0", "--out", "out.png",
        ],
    );
    assert!(out.status.success());
    assert_eq!(load_image(&dir.path().join("out.png")).unwrap(), img);
}

#[test]
fn l0_with_large_lambda_flattens() {
    let dir = tempfile::tempdir().unwrap();
    write_test_image(&dir.path().join("in.png"), 10, 10, 1, 3);
    let out = dipl0(
        dir.path(),
        &[
            "l0", "--input", "in.png", "--lambda", "1000", "--out", "out.png",
        ],
    );
    assert!(out.status.success());
    assert!(stdout(&out).contains("regions = 1"));
    let v = load_image(&dir.path().join("out.png")).unwrap();
    assert!(v.data().iter().all(|&x| x == v.data()[0]));
}

#[test]
fn bad_invocations_fail() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = dipl0(
        dir.path(),
        &["metrics", "--a", "x.png", "--b", "x.png", "--bogus"],
    );
    assert!(!unknown.status.success());
    let missing = dipl0(dir.path(), &["metrics", "--a", "x.png", "--b", "y.png"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error"));
    let no_command = dipl0(dir.path(), &[]);
    assert!(!no_command.status.success());
}

#[test]
fn smooth_pads_and_crops_unaligned_input() {
    let dir = tempfile::tempdir().unwrap();
    write_test_image(&dir.path().join("in.png"), 100, 100, 1, 4);
    let out = dipl0(
        dir.path(),
        &[
            "smooth", "--input", "in.png", "--out", "out.png", "--report", "r.txt", "-T", "1",
            "-K", "1", "--quiet",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        load_image(&dir.path().join("out.png")).unwrap().shape(),
        (100, 100, 1)
    );
    let report = RunReport::read(&dir.path().join("r.txt")).unwrap();
    assert_eq!(report.history.len(), 1);
    assert_eq!(report.config.lambda, 0.025);
    assert_eq!(report.config.beta, 2.25);
    assert_eq!(report.config.alpha, 1e-3);
    assert!(report.timing.is_none());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    write_test_image(&dir.path().join("in.png"), 16, 16, 3, 5);
    std::fs::write(
        dir.path().join("cfg.toml"),
        "lambda = 0.05\nbeta = 2.0\ninner_iterations = 1\n",
    )
    .unwrap();
    let out = dipl0(
        dir.path(),
        &[
            "smooth",
            "--input",
            "in.png",
            "--reference",
            "in.png",
            "--out",
            "out.png",
            "--report",
            "r.txt",
            "--config",
            "cfg.toml",
            "--lambda",
            "0.075",
            "-T",
            "2",
            "--timing",
            "--quiet",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = RunReport::read(&dir.path().join("r.txt")).unwrap();
    assert_eq!(report.config.lambda, 0.075);
    assert_eq!(report.config.beta, 2.0);
    assert_eq!(report.config.inner_iterations, 1);
    assert_eq!(report.history.len(), 2);
    assert!(report
        .history
        .iter()
        .all(|r| r.psnr.is_some() && r.ssim.is_some()));
    assert!(report.timing.is_some());
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_test_image(&dir.path().join("in.png"), 16, 16, 1, 6);
    std::fs::write(dir.path().join("cfg.toml"), "lamda = 0.05\n").unwrap();
    let out = dipl0(
        dir.path(),
        &[
            "smooth", "--input", "in.png", "--out", "o.png", "--config", "cfg.toml",
        ],
    );
    assert!(!out.status.success());
    let out = dipl0(
        dir.path(),
        &[
            "smooth", "--input", "in.png", "--out", "o.png", "--gamma", "0",
        ],
    );
    assert!(!out.status.success());
}

#[test]
fn sweep_writes_a_table() {
    let dir = tempfile::tempdir().unwrap();
    write_test_image(&dir.path().join("a.png"), 16, 16, 1, 7);
    write_test_image(&dir.path().join("b.png"), 16, 16, 1, 8);
    let out = dipl0(
        dir.path(),
        &[
            "sweep",
            "--input",
            "a.png",
            "--reference",
            "b.png",
            "--out-table",
            "t.csv",
            "--lambdas",
            "0.025,0.05",
            "--betas",
            "2.25",
            "--iteration-counts",
            "1,2",
            "--alphas",
            "0.001",
            "-K",
            "1",
            "-T",
            "1",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "parameter,lambda,beta,T,alpha,psnr,ssim");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("lambda,0.025,2.25,1,0.001,"));
}

#[test]
fn demo_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dipl0(
        dir.path(),
        &[
            "demo",
            "--size",
            "32",
            "--seed",
            "1",
            "--out-dir",
            "d",
            "-T",
            "1",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["clean.png", "corrupted.png", "smoothed.png", "report.txt"] {
        assert!(dir.path().join("d").join(f).exists(), "{f}");
    }
    assert!(stdout(&out).contains("smoothed:"));
}
