//! End-to-end runs of the `clue` binary on tiny generated datasets.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

const BIN: &str = env!("CARGO_BIN_EXE_clue");

fn clue(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("CLUE_DATA_DIR")
        .output()
        .expect("run clue")
}

fn ok(args: &[&str]) -> String {
    let out = clue(args);
    assert!(
        out.status.success(),
        "clue {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// 14-episode dataset and one 2-epoch model trained on it, shared by the tests.
struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    train: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let train = dir.path().join("train");
        ok(&["gen", "--out", p(&data), "--seed", "3", "--counts", "2,2,2,2,2,2,2"]);
        ok(&["train", "--data", p(&data), "--out", p(&train), "--epochs", "2", "--seed", "1"]);
        Fixture { _dir: dir, data, train }
    })
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_is_reproducible_and_validates_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["gen", "--out", p(d), "--seed", "1", "--counts", "1,1,1,1,1,1,2"]);
    }
    assert_eq!(tree(&a), tree(&b));
    assert!(fs::read_to_string(a.join("resolved_config.txt")).unwrap().contains("counts=1,1,1,1,1,1,2\n"));

    let bad = clue(&["gen", "--out", p(&dir.path().join("c")), "--counts", "0,1,1,1,1,1,1"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("SAFE"));
}

#[test]
fn gen_full_counts() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["gen", "--out", p(dir.path()), "--counts", "68,22,41,33,18,43,24"]);
    assert!(stdout.contains("total\t249"), "{stdout}");
    let manifest = fs::read_to_string(dir.path().join("manifest.tsv")).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.starts_with('e')).count(), 249);
}

#[test]
fn eval_reproduces_training_metrics() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let weights = f.train.join("weights");
    ok(&["eval", "--data", p(&f.data), "--out", p(dir.path()), "--weights", p(&weights)]);
    for name in ["per_seed.csv", "summary.csv", "confusion_clue_1.csv"] {
        assert_eq!(
            fs::read(f.train.join(name)).unwrap(),
            fs::read(dir.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn zero_epochs_saves_initial_weights() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    ok(&["train", "--data", p(&f.data), "--out", p(&out), "--epochs", "0", "--modality", "v,a"]);
    let resolved = fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert!(resolved.contains("modalities=v,a\n"), "{resolved}");
    assert!(resolved.contains("epochs=0\n"));
    assert!(out.join("weights/manifest.tsv").is_file());
    assert!(!fs::read_to_string(out.join("weights/manifest.tsv")).unwrap().contains("proprio."));
    ok(&["eval", "--data", p(&f.data), "--out", p(&dir.path().join("e")), "--weights", p(&out.join("weights"))]);
}

#[test]
fn ablate_writes_seven_rows() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    ok(&["ablate", "--data", p(&f.data), "--out", p(dir.path()), "--epochs", "1", "--seeds", "0", "--set", "backbone_trainable=false"]);
    let csv = fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
    let ids: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, ["p", "a", "v+attn", "v+p+attn", "v+a+attn", "v+a+p", "v+a+p+attn"]);
}

#[test]
fn noise_curve_with_saved_weights() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let weights = f.train.join("weights");
    ok(&["noise", "--data", p(&f.data), "--out", p(dir.path()), "--weights", p(&weights), "--probs", "0,0.4,0.8"]);
    let csv = fs::read_to_string(dir.path().join("noise.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    // at p = 0 the curve reproduces the clean evaluation of the same seed
    let clean = fs::read_to_string(f.train.join("per_seed.csv")).unwrap();
    let header: Vec<&str> = clean.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "weighted_f1").unwrap();
    let f1 = clean.lines().nth(1).unwrap().split(',').nth(col).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), format!("0.000000,{f1},0.000000"));
}

#[test]
fn cam_writes_one_image_and_one_table() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let weights = f.train.join("weights");
    ok(&["cam", "--data", p(&f.data), "--out", p(dir.path()), "--weights", p(&weights), "--episode", "e12", "--class", "FCA", "--frame", "2"]);
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["cam_e12_FCA_2.ppm", "cam_e12_FCA_2.tsv", "resolved_config.txt"]);
    let ppm = fs::read(dir.path().join("cam_e12_FCA_2.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n32 32\n255\n"));

    let tsv = fs::read_to_string(dir.path().join("cam_e12_FCA_2.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 2, "last VGG16 convolution at 32x32 is 2x2");

    let finer = dir.path().join("finer");
    ok(&["cam", "--data", p(&f.data), "--out", p(&finer), "--weights", p(&weights), "--episode", "e12", "--set", "cam_layer=conv7"]);
    let tsv = fs::read_dir(&finer)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "tsv"))
        .unwrap();
    let tsv = fs::read_to_string(tsv).unwrap();
    assert_eq!(tsv.lines().count(), 8);
    assert!(tsv.lines().all(|l| l.split('\t').count() == 8));

    let bad = clue(&["cam", "--data", p(&f.data), "--out", p(dir.path()), "--weights", p(&weights), "--episode", "e12", "--class", "XYZ"]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = clue(&["cam", "--data", p(&f.data), "--out", p(&finer), "--weights", p(&weights), "--episode", "e12", "--set", "cam_layer=conv99"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("conv13"));
}

#[test]
fn backbone_export_and_import_round_trip() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let bb = dir.path().join("bb");
    let weights = f.train.join("weights");
    ok(&["export-weights", "--weights", p(&weights), "--out", p(&bb)]);
    let manifest = fs::read_to_string(bb.join("manifest.tsv")).unwrap();
    assert!(manifest.lines().all(|l| !l.starts_with("visual.") && !l.starts_with("fusion.")));
    let imported = dir.path().join("imp");
    ok(&["import-weights", "--data", p(&f.data), "--backbone", p(&bb), "--out", p(&imported)]);
    for line in manifest.lines() {
        let file = line.split('\t').nth(3).unwrap();
        assert_eq!(
            fs::read(bb.join(file)).unwrap(),
            fs::read(imported.join("weights").join(format!("visual.backbone.{file}"))).unwrap()
        );
    }
}

#[test]
fn usage_errors_exit_with_two_before_any_output() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let unknown = clue(&["train", "--data", p(&f.data), "--out", p(&out), "--set", "lstm_size=3"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("lstm_size"));
    assert!(!out.exists());

    let missing = clue(&["train", "--data", p(&dir.path().join("nowhere")), "--out", p(&out)]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nowhere"));

    assert_eq!(clue(&["train", "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(clue(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn diverging_training_exits_with_one() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = clue(&[
        "train", "--data", p(&f.data), "--out", p(dir.path()), "--epochs", "3", "--set", "learning_rate=1e30",
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn config_file_and_data_dir_from_the_environment() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# tiny run\nepochs=1\nseeds=2\n").unwrap();
    let out = dir.path().join("o");
    let status = Command::new(BIN)
        .args(["train", "--out", p(&out), "--config", p(&cfg)])
        .env("CLUE_DATA_DIR", &f.data)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let resolved = fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert!(resolved.contains("epochs=1\n") && resolved.contains("seeds=2\n"));

    fs::write(&cfg, "epochs=1\nbogus=2\n").unwrap();
    let bad = clue(&["train", "--data", p(&f.data), "--out", p(&out), "--config", p(&cfg)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 2"));
}
