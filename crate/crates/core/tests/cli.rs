//! Drives the `alsf` binary end to end and checks exit codes.

use std::path::Path;
use std::process::{Command, Output};

use alsf::io::load_model;
use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn alsf(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alsf"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SYNTH: &str = "\
[spec]
d = 64
class_subspace_dim = 4
shared_subspace_dim = 2
noise_sigma = 0.0
patches_per_class = 200
seed = 3

[layout]
train_images_per_class = 2
test_images_per_class = 3
test_tiles = 4
";

const RULE: &str = "patch_size = 8\nsubtract_patch_mean = true\n";

/// Writes a zero-noise dataset, trains on it and returns the directory.
fn trained() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("synth.toml"), SYNTH).unwrap();
    let out = alsf(&["synth", "-o", "data/set.manifest", "--config", "synth.toml"], p);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = alsf(
        &["train", "data/set.manifest", "-o", "model.alsf", "--config", "data/hyperparams.toml"],
        p,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

#[test]
fn synth_train_eval_classify() {
    let dir = trained();
    let p = dir.path();
    let model = load_model(&p.join("model.alsf")).expect("checksum and shapes verify");
    assert_eq!(model.labels, ["class0", "class1"]);
    let report = std::fs::read_to_string(p.join("model.alsf.report.txt")).unwrap();
    assert!(report.contains("class class0: 200 patches, D 64x16, A 16x64"), "{report}");

    let out = alsf(&["eval", "model.alsf", "data/set.manifest"], p);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip_while(|l| !l.starts_with("true\\predicted"))
        .skip(1)
        .take(2)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows, [[1.0, 0.0], [0.0, 1.0]], "{text}");

    std::fs::write(p.join("rule.toml"), RULE).unwrap();
    let args = ["classify", "model.alsf", "data/images", "--config", "rule.toml"];
    let first = alsf(&args, p);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let second = alsf(&args, p);
    assert_eq!(first.stdout, second.stdout);

    let csv = stdout(&first);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "path,grid_rows,grid_cols,positive_ratio,largest_region,rule_score,decision,error"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2 * (2 + 3));
    for row in rows {
        let want = if row[0].contains("class1_") { "class1" } else { "negative" };
        assert_eq!(row[6], want, "{row:?}");
    }
}

#[test]
fn threads_flag_does_not_change_the_model() {
    let dir = trained();
    let p = dir.path();
    let out = alsf(
        &[
            "train",
            "data/set.manifest",
            "-o",
            "seq.alsf",
            "--config",
            "data/hyperparams.toml",
            "--threads",
            "1",
        ],
        p,
    );
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read(p.join("seq.alsf")).unwrap(),
        std::fs::read(p.join("model.alsf")).unwrap()
    );
}

#[test]
fn empty_directory_is_a_data_error() {
    let dir = trained();
    let p = dir.path();
    std::fs::create_dir(p.join("empty")).unwrap();
    let out = alsf(&["classify", "model.alsf", "empty"], p);
    assert_eq!(code(&out), 3);
}

#[test]
fn class_without_images_fails_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    GrayImage::from_pixel(30, 30, Luma([90])).save(p.join("a.png")).unwrap();
    std::fs::write(
        p.join("m.manifest"),
        "patch_size = 5\npatches_per_class = 10\n[class a]\ntrain = a.png\n[class b]\n",
    )
    .unwrap();
    let out = alsf(&["train", "m.manifest", "-o", "m.alsf"], p);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    std::fs::write(
        p.join("n.manifest"),
        "patch_size = 5\n[class a]\ntrain = a.png\n[class b]\ntrain = missing.png\n",
    )
    .unwrap();
    let out = alsf(&["train", "n.manifest", "-o", "n.alsf"], p);
    assert_eq!(code(&out), 3);
    assert!(!p.join("n.alsf").exists());
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = alsf(&["bench", "--n-patches", "0"], p);
    assert_eq!(code(&out), 2);

    std::fs::write(p.join("bad.toml"), "k_per_class = 0\n").unwrap();
    std::fs::write(p.join("m.manifest"), "[class a]\ntrain = a.png\n").unwrap();
    let out = alsf(&["train", "m.manifest", "-o", "x.alsf", "--config", "bad.toml"], p);
    assert_eq!(code(&out), 2);

    std::fs::write(p.join("broken.manifest"), "patch_size = twenty\n").unwrap();
    let out = alsf(&["train", "broken.manifest", "-o", "x.alsf"], p);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn bench_reports_counts_and_timings() {
    let dir = tempfile::tempdir().unwrap();
    let out = alsf(
        &["bench", "--dim", "64", "--n-patches", "200", "--repetitions", "3", "--baseline-patches", "10"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("alsf_solver_calls = 0"), "{text}");
    assert!(text.contains("baseline_solver_calls = 40"), "{text}");
    assert!(text.contains("speedup = "));
}

/// Random-texture images at the reference resolution, random 20x20 patches
/// and 400 atoms per class.
#[test]
fn reference_scale_manifest_reports_400_atom_dictionaries() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for name in ["a0", "a1", "b0", "b1"] {
        let bias = if name.starts_with('a') { 60 } else { 140 };
        GrayImage::from_fn(272, 205, |_, _| Luma([bias + rng.random_range(0..60u8)]))
            .save(p.join(format!("{name}.png")))
            .unwrap();
    }
    std::fs::write(
        p.join("adl.manifest"),
        "patch_size = 20\npatches_per_class = 800\ncenter_mask = true\n\
         [class healthy]\ntrain = a0.png\ntrain = a1.png\n\
         [class diseased]\ntrain = b0.png\ntrain = b1.png\n",
    )
    .unwrap();
    std::fs::write(p.join("hp.toml"), "k_per_class = 400\nk_shared = 20\nmax_iters = 1\n").unwrap();
    let out = alsf(&["train", "adl.manifest", "-o", "adl.alsf", "--config", "hp.toml"], p);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(p.join("adl.alsf.report.txt")).unwrap();
    assert!(report.contains("patch_dimension = 400"));
    assert!(report.contains("class healthy: 800 patches, D 400x400, A 400x400"), "{report}");
    assert!(report.contains("class diseased: 800 patches, D 400x400, A 400x400"));
}
