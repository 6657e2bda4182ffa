use std::path::Path;
use std::process::{Command, Output};

use flownet_core::flow::{read_flo_file, write_flo_file};
use flownet_core::image::Image;
use flownet_core::FlowField;

fn flownet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flownet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let o = flownet(args, cwd);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn single_error_line(o: &Output) -> String {
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr.clone()).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
    err
}

const MODEL_CFG: &str = "variant=simple\nchannel_scale=16\ninput_height=64\ninput_width=64\n";
const TRAIN_CFG: &str = "total_iters=4\nbatch_size=2\nval_fraction=0.25\nval_every=2\n";

#[test]
fn viz_of_zero_flow_is_white() {
    let dir = tempfile::tempdir().unwrap();
    write_flo_file(dir.path().join("zero.flo"), &FlowField::zeros(7, 5)).unwrap();
    ok(&["viz", "zero.flo"], dir.path());
    let img = Image::load(dir.path().join("zero.png")).unwrap();
    assert_eq!((img.width(), img.height()), (7, 5));
    assert!(img.data().iter().all(|&v| v == 1.0));
}

#[test]
fn generate_twice_gives_identical_manifests() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(
            &["generate", "--count", "4", "--seed", "7", "--width", "64", "--height", "48", "--out", out],
            dir.path(),
        );
    }
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/manifest.txt"), read("b/manifest.txt"));
    assert_eq!(read("a/0000003-img2.png"), read("b/0000003-img2.png"));
    assert_eq!(read("a/resolved.cfg"), read("b/resolved.cfg"));
}

#[test]
fn generate_is_reproducible_from_its_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["generate", "--count", "2", "--seed", "3", "--width", "64", "--height", "48", "--out", "a", "--set", "sprite_count_max=18"],
        dir.path(),
    );
    let snap = std::fs::read_to_string(dir.path().join("a/resolved.cfg")).unwrap();
    let generator: String = snap
        .lines()
        .filter_map(|l| l.strip_prefix("generator."))
        .map(|l| format!("{l}\n"))
        .collect();
    assert!(generator.contains("sprite_count_max=18"));
    std::fs::write(dir.path().join("gen.cfg"), generator).unwrap();
    ok(&["generate", "--config", "gen.cfg", "--count", "2", "--seed", "3", "--out", "b"], dir.path());
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/manifest.txt"), read("b/manifest.txt"));
}

#[test]
fn gradcheck_passes_on_every_op() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["gradcheck"], dir.path());
    let rows: Vec<&str> = out.lines().filter(|l| l.ends_with("PASS") || l.ends_with("FAIL")).collect();
    assert!(rows.len() >= 30);
    assert!(rows.iter().all(|r| r.ends_with("PASS")));
    for op in ["conv2d", "upconv2d", "relu", "concat", "resize", "correlation"] {
        assert!(rows.iter().filter(|r| r.starts_with(op)).count() >= 5, "{op}");
    }
}

#[test]
fn unknown_config_key_fails_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = flownet(&["generate", "--count", "1", "--seed", "0", "--out", "d", "--set", "bogus=1"], dir.path());
    let err = single_error_line(&o);
    assert!(err.contains("bogus"), "{err}");
    assert!(!dir.path().join("d/manifest.txt").exists());
}

#[test]
fn usage_and_io_errors_are_single_lines() {
    let dir = tempfile::tempdir().unwrap();
    single_error_line(&flownet(&["frobnicate"], dir.path()));
    single_error_line(&flownet(&["viz", "missing.flo"], dir.path()));
    single_error_line(&flownet(&["eval", "--data", "nowhere", "--out", "e"], dir.path()));
}

#[test]
fn train_eval_infer_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["generate", "--count", "4", "--seed", "1", "--width", "64", "--height", "48", "--out", "data"], p);
    std::fs::write(p.join("model.cfg"), MODEL_CFG).unwrap();
    std::fs::write(p.join("train.cfg"), TRAIN_CFG).unwrap();
    ok(&["train", "--model", "model.cfg", "--data", "data", "--config", "train.cfg", "--out", "run"], p);
    for f in ["final.ckpt", "metrics.tsv", "resolved.cfg"] {
        assert!(p.join("run").join(f).exists(), "{f}");
    }
    let snap = std::fs::read_to_string(p.join("run/resolved.cfg")).unwrap();
    assert!(snap.contains("model.channel_scale=16"));
    assert!(snap.contains("train.total_iters=4"));

    let report = ok(
        &["eval", "--checkpoint", "run/final.ckpt", "--data", "data", "--out", "ev", "--variational"],
        p,
    );
    assert!(report.lines().any(|l| l.starts_with("FlowNetS\t")));
    assert!(report.lines().any(|l| l.starts_with("FlowNetS+v\t")));

    ok(
        &[
            "infer", "--checkpoint", "run/final.ckpt", "--img1", "data/0000000-img1.png", "--img2",
            "data/0000000-img2.png", "--out", "inf",
        ],
        p,
    );
    let flow = read_flo_file(p.join("inf/flow.flo")).unwrap();
    assert_eq!((flow.width(), flow.height()), (64, 48));
    assert!(p.join("inf/flow.png").exists());

    ok(&["finetune", "--checkpoint", "run/final.ckpt", "--data", "data", "--config", "train.cfg", "--out", "ft"], p);
    assert!(p.join("ft/finetune_val.tsv").exists());
}

#[test]
fn variational_flags_require_the_switch() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "--count", "1", "--seed", "1", "--width", "64", "--height", "48", "--out", "data"], dir.path());
    let o = flownet(&["eval", "--data", "data", "--out", "e", "--set", "lambda=2"], dir.path());
    single_error_line(&o);
    let o = flownet(&["eval", "--data", "data", "--out", "e", "--variational", "--set", "nope=2"], dir.path());
    assert!(single_error_line(&o).contains("nope"));
}
