//! End-to-end subcommand tests driving the compiled binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn icx(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icx"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth_fixture(dir: &Path, seed: u64) {
    let out = icx(
        &[
            "synth",
            "--out-dir",
            "data",
            "--seed",
            &seed.to_string(),
            "--ambient-dim",
            "12",
            "--train",
            "800",
            "--val",
            "400",
            "--spatial",
            "6x6",
            "--lesion-density",
            "0.0278",
            "--spatial-count",
            "4",
        ],
        dir,
    );
    assert_success(&out);
}

#[test]
fn missing_flags_print_usage_and_exit_one() {
    let dir = TempDir::new().unwrap();
    let out = icx(&["qwk"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "{stderr}");
}

#[test]
fn unknown_subcommand_exits_one() {
    let dir = TempDir::new().unwrap();
    let out = icx(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let dir = TempDir::new().unwrap();
    let out = icx(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn qwk_prints_six_decimals() {
    let dir = TempDir::new().unwrap();
    synth_fixture(dir.path(), 3);
    // labels against themselves: perfect agreement
    let out = icx(
        &["qwk", "--labels", "data/val.lbl", "--preds", "data/val.lbl"],
        dir.path(),
    );
    assert_success(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1.000000");
}

#[test]
fn pca_report_has_one_line_per_threshold() {
    let dir = TempDir::new().unwrap();
    synth_fixture(dir.path(), 5);
    let out = icx(
        &[
            "pca",
            "--features",
            "data/train.fmat",
            "--thresholds",
            "0.9,0.99",
        ],
        dir.path(),
    );
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2, "{stdout}");
    assert!(lines[0].starts_with("threshold 0.9000 -> k = "), "{stdout}");
}

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    fs::create_dir(dir.path().join("a")).unwrap();
    fs::create_dir(dir.path().join("b")).unwrap();
    for sub in ["a", "b"] {
        let out = icx(
            &[
                "synth",
                "--out-dir",
                &format!("{sub}/data"),
                "--seed",
                "11",
                "--ambient-dim",
                "8",
                "--train",
                "300",
                "--val",
                "200",
            ],
            dir.path(),
        );
        assert_success(&out);
    }
    for file in [
        "train.fmat",
        "train.lbl",
        "val.fmat",
        "val.lbl",
        "truth.txt",
    ] {
        let a = fs::read(dir.path().join("a/data").join(file)).unwrap();
        let b = fs::read(dir.path().join("b/data").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn ica_fit_writes_a_readable_model() {
    let dir = TempDir::new().unwrap();
    synth_fixture(dir.path(), 7);
    let out = icx(
        &[
            "ica",
            "--features",
            "data/train.fmat",
            "--n-components",
            "3",
            "--labels",
            "data/train.lbl",
            "--seed",
            "1",
            "--out",
            "model.txt",
        ],
        dir.path(),
    );
    assert_success(&out);
    let model = icx_core::model_file::read_model(dir.path().join("model.txt")).unwrap();
    let ica = model.ica.unwrap();
    assert_eq!(ica.n_components, 3);
    assert_eq!(
        ica.normalization,
        icx_core::ica::Normalization::ClassZeroMean
    );
}

#[test]
fn head_fit_and_eval_round_trip() {
    let dir = TempDir::new().unwrap();
    synth_fixture(dir.path(), 9);
    let out = icx(
        &[
            "head",
            "fit",
            "--features",
            "data/train.fmat",
            "--labels",
            "data/train.lbl",
            "--epochs",
            "200",
            "--out",
            "head.txt",
        ],
        dir.path(),
    );
    assert_success(&out);
    let out = icx(
        &[
            "head",
            "eval",
            "--head",
            "head.txt",
            "--features",
            "data/val.fmat",
            "--labels",
            "data/val.lbl",
        ],
        dir.path(),
    );
    assert_success(&out);
    let kappa: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(kappa > 0.5, "validation kappa {kappa}");
}

#[test]
fn select_writes_report_and_model() {
    let dir = TempDir::new().unwrap();
    synth_fixture(dir.path(), 13);
    let out = icx(
        &[
            "select",
            "--train-features",
            "data/train.fmat",
            "--train-labels",
            "data/train.lbl",
            "--val-features",
            "data/val.fmat",
            "--val-labels",
            "data/val.lbl",
            "--n-min",
            "1",
            "--n-max",
            "4",
            "--seed",
            "13",
            "--out-dir",
            "sel",
        ],
        dir.path(),
    );
    assert_success(&out);
    let report = fs::read_to_string(dir.path().join("sel/selection_report.txt")).unwrap();
    assert!(report.contains("kappa_full"), "{report}");
    let model = icx_core::model_file::read_model(dir.path().join("sel/model.txt")).unwrap();
    assert!(model.ica.is_some() && model.head.is_some());
}

#[test]
fn explain_emits_heatmaps_and_contributions() {
    let dir = TempDir::new().unwrap();
    synth_fixture(dir.path(), 17);
    let out = icx(
        &[
            "select",
            "--train-features",
            "data/train.fmat",
            "--train-labels",
            "data/train.lbl",
            "--val-features",
            "data/val.fmat",
            "--val-labels",
            "data/val.lbl",
            "--n-min",
            "3",
            "--n-max",
            "3",
            "--seed",
            "17",
            "--out-dir",
            "sel",
        ],
        dir.path(),
    );
    assert_success(&out);
    let out = icx(
        &[
            "explain",
            "--model",
            "sel/model.txt",
            "--fmap",
            "data/val.fmap",
            "--image",
            "1",
            "--out-dir",
            "exp",
        ],
        dir.path(),
    );
    assert_success(&out);
    for component in 0..3 {
        let pgm = fs::read(dir.path().join(format!("exp/img0001_ic{component}.pgm"))).unwrap();
        assert!(pgm.starts_with(b"P5\n6 6\n255\n"), "bad PGM header");
        assert_eq!(pgm.len(), 11 + 36);
    }
    let table = fs::read_to_string(dir.path().join("exp/img0001_contributions.txt")).unwrap();
    assert!(table.starts_with("class"), "{table}");
    assert_eq!(table.lines().count(), 6);
}

#[test]
fn explain_projects_through_a_convolution_stack() {
    let dir = TempDir::new().unwrap();
    synth_fixture(dir.path(), 37);
    let out = icx(
        &[
            "select",
            "--train-features",
            "data/train.fmat",
            "--train-labels",
            "data/train.lbl",
            "--val-features",
            "data/val.fmat",
            "--val-labels",
            "data/val.lbl",
            "--n-min",
            "3",
            "--n-max",
            "3",
            "--seed",
            "37",
            "--out-dir",
            "sel",
        ],
        dir.path(),
    );
    assert_success(&out);
    // a 2x2/s2 pool maps a 12x12 input onto the fixture's 6x6 grid
    let out = icx(
        &[
            "explain",
            "--model",
            "sel/model.txt",
            "--fmap",
            "data/val.fmap",
            "--image",
            "0",
            "--component",
            "0",
            "--arch",
            "2,2,0",
            "--input-size",
            "12x12",
            "--out-dir",
            "exp",
        ],
        dir.path(),
    );
    assert_success(&out);
    let pgm = fs::read(dir.path().join("exp/img0000_ic0.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n12 12\n255\n"), "bad projected header");
    assert_eq!(pgm.len(), 13 + 144);

    // a stack inconsistent with the grid is a dimension error (exit 1)
    let out = icx(
        &[
            "explain",
            "--model",
            "sel/model.txt",
            "--fmap",
            "data/val.fmap",
            "--image",
            "0",
            "--arch",
            "2,2,0",
            "--input-size",
            "20x20",
            "--out-dir",
            "exp",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: dimension:"), "{stderr}");
}

#[test]
fn head_eval_works_on_component_heads() {
    let dir = TempDir::new().unwrap();
    synth_fixture(dir.path(), 41);
    let out = icx(
        &[
            "ica",
            "--features",
            "data/train.fmat",
            "--n-components",
            "3",
            "--labels",
            "data/train.lbl",
            "--seed",
            "41",
            "--out",
            "ic.txt",
        ],
        dir.path(),
    );
    assert_success(&out);
    let out = icx(
        &[
            "head", "fit", "--features", "data/train.fmat", "--labels", "data/train.lbl",
            "--ic-model", "ic.txt", "--epochs", "300", "--out", "ic_head.txt",
        ],
        dir.path(),
    );
    assert_success(&out);
    let out = icx(
        &[
            "head", "eval", "--head", "ic_head.txt", "--features", "data/val.fmat",
            "--labels", "data/val.lbl",
        ],
        dir.path(),
    );
    assert_success(&out);
    let kappa: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(kappa > 0.5, "component-head validation kappa {kappa}");
}

#[test]
fn tsne_writes_svg() {
    let dir = TempDir::new().unwrap();
    synth_fixture(dir.path(), 19);
    let out = icx(
        &[
            "tsne",
            "--features",
            "data/val.fmat",
            "--labels",
            "data/val.lbl",
            "--perplexity",
            "15",
            "--iterations",
            "250",
            "--seed",
            "2",
            "--out",
            "embed.svg",
        ],
        dir.path(),
    );
    assert_success(&out);
    let svg = fs::read_to_string(dir.path().join("embed.svg")).unwrap();
    assert!(svg.starts_with("<svg "));
    assert_eq!(svg.matches("<circle").count(), 400);
}

#[test]
fn pipeline_validates_paths_before_computing() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("bad.cfg"),
        "[pipeline]\ntrain_features = missing.fmat\ntrain_labels = missing.lbl\n\
         val_features = missing.fmat\nval_labels = missing.lbl\nout_dir = out\n",
    )
    .unwrap();
    let out = icx(&["pipeline", "--config", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: validation:"), "{stderr}");
    // validation happened before any computation: nothing was produced
    assert!(!dir.path().join("out").exists());
}

#[test]
fn numerical_failures_exit_two() {
    let dir = TempDir::new().unwrap();
    // noiseless planting has numerical rank 3 inside 12 ambient dims
    let out = icx(
        &[
            "synth",
            "--out-dir",
            "data",
            "--seed",
            "23",
            "--ambient-dim",
            "12",
            "--train",
            "400",
            "--val",
            "100",
            "--noise-sigma",
            "0",
        ],
        dir.path(),
    );
    assert_success(&out);
    let out = icx(
        &[
            "ica",
            "--features",
            "data/train.fmat",
            "--n-components",
            "4",
            "--out",
            "model.txt",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: rank:"), "{stderr}");
}

#[test]
fn pipeline_runs_and_reruns_identically() {
    let dir = TempDir::new().unwrap();
    synth_fixture(dir.path(), 29);
    fs::write(
        dir.path().join("pipe.cfg"),
        "[pipeline]\n\
         train_features = data/train.fmat\n\
         train_labels = data/train.lbl\n\
         val_features = data/val.fmat\n\
         val_labels = data/val.lbl\n\
         fmap = data/val.fmap\n\
         out_dir = out\n\
         n_min = 1\n\
         n_max = 4\n\
         epsilon = 0.015\n\
         seed = 29\n\
         head_epochs = 300\n\
         explain_images = 0,1\n",
    )
    .unwrap();
    let out = icx(&["pipeline", "--config", "pipe.cfg"], dir.path());
    assert_success(&out);
    let manifest1 = fs::read_to_string(dir.path().join("out/manifest.txt")).unwrap();
    assert!(manifest1.contains("model.txt"));
    assert!(manifest1.contains("selection_report.txt"));
    assert!(manifest1.contains("img0000_ic0.pgm"));

    fs::remove_dir_all(dir.path().join("out")).unwrap();
    let out = icx(&["pipeline", "--config", "pipe.cfg"], dir.path());
    assert_success(&out);
    let manifest2 = fs::read_to_string(dir.path().join("out/manifest.txt")).unwrap();
    assert_eq!(manifest1, manifest2, "pipeline reruns differ");
}

#[test]
fn pipeline_worker_count_does_not_change_outputs() {
    let dir = TempDir::new().unwrap();
    synth_fixture(dir.path(), 31);
    fs::write(
        dir.path().join("pipe.cfg"),
        "[pipeline]\n\
         train_features = data/train.fmat\n\
         train_labels = data/train.lbl\n\
         val_features = data/val.fmat\n\
         val_labels = data/val.lbl\n\
         fmap = data/val.fmap\n\
         out_dir = out\n\
         n_min = 3\n\
         n_max = 3\n\
         seed = 31\n\
         head_epochs = 200\n\
         explain_images = 0,1,2,3\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_icx"))
        .args(["pipeline", "--config", "pipe.cfg"])
        .env("ICX_THREADS", "0")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_success(&out);
    let sequential = fs::read_to_string(dir.path().join("out/manifest.txt")).unwrap();

    fs::remove_dir_all(dir.path().join("out")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_icx"))
        .args(["pipeline", "--config", "pipe.cfg"])
        .env("ICX_THREADS", "4")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_success(&out);
    let parallel = fs::read_to_string(dir.path().join("out/manifest.txt")).unwrap();
    assert_eq!(sequential, parallel);
}
