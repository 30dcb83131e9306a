use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use idam_core::data::{parse_transform, read_pair_list, Split};
use idam_core::geometry::compute_metrics;

const SMALL: &[&str] = &[
    "--set",
    "data.synthetic_train=4",
    "--set",
    "data.synthetic_test=3",
    "--set",
    "data.points=500",
    "--set",
    "data.crop=400",
    "--set",
    "train.epochs=2",
    "--set",
    "train.lr=0.003",
];

fn idam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idam")).current_dir(dir).env("RUST_BACKTRACE", "0").args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = idam(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn with(extra: &[&str]) -> Vec<String> {
    SMALL.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run(dir: &Path, cmd: &str, extra: &[&str]) -> String {
    let mut args = with(extra);
    args.insert(0, cmd.to_string());
    ok(dir, &args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split([',', '\t']).map(str::to_string).collect())
        .collect()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn gen_data_is_byte_identical_for_a_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path(), "gen-data", &["--set", "seed=5"]);
    run(b.path(), "gen-data", &["--set", "seed=5"]);
    let (fa, fb) = (files(&a.path().join("pairs")), files(&b.path().join("pairs")));
    assert_eq!(fa.len(), 3 * 7 + 2);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{x:?}");
    }
    let c = tempfile::tempdir().unwrap();
    run(c.path(), "gen-data", &["--set", "seed=6"]);
    assert_ne!(fs::read(&fa[0]).unwrap(), fs::read(files(&c.path().join("pairs"))[0].clone()).unwrap());
}

#[test]
fn gen_data_flags_and_empty_splits() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), "gen-data", &["--set", "data.protocol=\"noisy\"", "--set", "data.synthetic_train=0"]);
    let list = read_pair_list(dir.path().join("pairs/pairs.tsv")).unwrap();
    assert_eq!(list.len(), 3);
    assert!(list.iter().all(|e| e.noisy && e.cropped && e.split == Split::Test));
    let cloud = fs::read_to_string(dir.path().join("pairs").join(format!("{}_src.xyz", list[0].id))).unwrap();
    assert_eq!(cloud.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).count(), 400);
}

#[test]
fn train_register_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(d, "gen-data", &[]);
    run(d, "train", &[]);
    let csv = fs::read_to_string(d.join("train_loss.csv")).unwrap();
    assert!(csv.starts_with("# seed=0 config={"));
    assert!(csv.lines().any(|l| l == "epoch,match_loss,neg_entropy_loss,hybrid_loss,wall_seconds"));
    let rows = data_rows(&d.join("train_loss.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.len() == 5 && r[1..].iter().all(|v| v.parse::<f64>().unwrap().is_finite())));

    let before = fs::read(d.join("model.idam")).unwrap();
    run(d, "train", &["--set", "train.resume=true", "--set", "train.epochs=0", "--set", "train.loss_csv=\"resume.csv\""]);
    assert_eq!(fs::read(d.join("model.idam")).unwrap(), before);

    let list = read_pair_list(d.join("pairs/pairs.tsv")).unwrap();
    let id = &list.iter().find(|e| e.split == Split::Test).unwrap().id;
    let (src, tgt) = (format!("pairs/{id}_src.xyz"), format!("pairs/{id}_tgt.xyz"));
    let printed = run(d, "register", &[&src, &tgt, "--dump", "scores.csv"]);
    let t = parse_transform(printed.trim()).unwrap();
    assert!(t.is_proper_rotation(1e-6));
    let dump = data_rows(&d.join("scores.csv"));
    // keep count for 400 points is 67 on each side
    assert_eq!(dump.iter().filter(|r| r[0] == "source").count(), 67);
    assert_eq!(dump.iter().filter(|r| r[0] == "target").count(), 67);
    assert!(dump.iter().filter(|r| r[0] == "source").all(|r| r[6].parse::<f64>().is_ok_and(|v| (0.0..=1.0).contains(&v))));
    assert!(dump.iter().filter(|r| r[0] == "target").all(|r| r[6].is_empty()));
}

#[test]
fn missing_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), "gen-data", &[]);
    let list = read_pair_list(dir.path().join("pairs/pairs.tsv")).unwrap();
    let id = &list[0].id;
    let out = idam(dir.path(), &["register", &format!("pairs/{id}_src.xyz"), &format!("pairs/{id}_tgt.xyz")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.idam"));
}

#[test]
fn bad_configuration_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!idam(dir.path(), &["--set", "nope.x=1", "selftest"]).status.success());
    assert!(!idam(dir.path(), &["--set", "data.protocol=\"sideways\"", "gen-data"]).status.success());
    assert!(!idam(dir.path(), &["--config", "missing.json", "selftest"]).status.success());
}

#[test]
fn benchmark_metrics_match_written_transforms() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(d, "gen-data", &[]);
    run(d, "train", &[]);
    run(d, "benchmark", &["--set", "benchmark.methods=[\"idam\",\"icp\",\"oracle\"]"]);
    let rows = data_rows(&d.join("benchmark.csv"));
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["idam", "icp", "oracle"]);
    let oracle = &rows[2];
    assert!(oracle[1..5].iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
    assert!(rows[..2].iter().all(|r| r[5].parse::<f64>().unwrap() > 0.0));

    let list = read_pair_list(d.join("pairs/pairs.tsv")).unwrap();
    let transforms = data_rows(&d.join("benchmark_transforms.tsv"));
    for row in &rows {
        let (pred, gt): (Vec<_>, Vec<_>) = transforms
            .iter()
            .filter(|t| t[0] == row[0])
            .map(|t| {
                let entry = list.iter().find(|e| e.id == t[1]).unwrap();
                assert_eq!(entry.split, Split::Test);
                let gt = fs::read_to_string(d.join("pairs").join(format!("{}_gt.txt", t[1]))).unwrap();
                let gt_line = gt.lines().find(|l| !l.starts_with('#')).unwrap();
                (parse_transform(&t[2]).unwrap(), parse_transform(gt_line).unwrap())
            })
            .unzip();
        assert_eq!(pred.len(), 3);
        let m = compute_metrics(&pred, &gt).unwrap();
        for (col, v) in [m.rmse_rot_deg, m.mae_rot_deg, m.rmse_trans, m.mae_trans].into_iter().enumerate() {
            let written: f64 = row[col + 1].parse().unwrap();
            assert!((written - v).abs() <= 1e-9 * v.abs().max(1.0), "{} column {}: {written} vs {v}", row[0], col + 1);
        }
    }
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["selftest"]);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 6);
}
