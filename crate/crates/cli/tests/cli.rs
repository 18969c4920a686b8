//! End-to-end exercises of the `idsr` binary: every subcommand, the exit-code
//! contract, and the identity-operator sanity path.

use std::path::Path;
use std::process::{Command, Output};

use idsr_core::gallery::load_gallery;
use idsr_core::lcnn::{identity_model, LcnnModel, CANONICAL_PLAN};

fn idsr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idsr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn expect_ok(args: &[&str]) -> String {
    let out = idsr(args);
    assert!(
        out.status.success(),
        "idsr {:?} failed:\n{}\n{}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn expect_code(args: &[&str], code: i32) -> String {
    let out = idsr(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "idsr {:?}: expected exit {code}, got {:?}\n{}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_covers_every_subcommand() {
    let top = expect_ok(&["--help"]);
    for name in [
        "gen-gallery",
        "gen-images",
        "train",
        "degrade",
        "sr",
        "eval",
        "ablate",
    ] {
        assert!(top.contains(name), "missing {name} in top-level help");
        expect_ok(&[name, "--help"]);
    }
    expect_ok(&["ablate", "gallery-size", "--help"]);
    expect_ok(&["ablate", "scale", "--help"]);
}

#[test]
fn gen_gallery_defaults_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.rkg");
    let stdout = expect_ok(&[
        "gen-gallery",
        "--out",
        out.to_str().unwrap(),
        "--count",
        "16",
        "--seed",
        "3",
    ]);
    assert!(stdout.contains("16 kernels"));
    let gallery = load_gallery(&out).unwrap();
    assert_eq!(gallery.len(), 16);
    assert_eq!(gallery.config.kernel_size, 21);

    // empty gallery is valid but warned about
    let empty = dir.path().join("empty.rkg");
    let out2 = idsr(&[
        "gen-gallery",
        "--out",
        empty.to_str().unwrap(),
        "--count",
        "0",
    ]);
    assert!(out2.status.success());
    assert!(String::from_utf8_lossy(&out2.stderr).contains("warning"));
    assert_eq!(load_gallery(&empty).unwrap().len(), 0);

    // inverted sigma range is a usage error
    let err = expect_code(
        &[
            "gen-gallery",
            "--out",
            dir.path().join("bad.rkg").to_str().unwrap(),
            "--sigma-min",
            "6",
            "--sigma-max",
            "0.175",
        ],
        2,
    );
    assert!(err.contains("sigma"));
}

#[test]
fn train_smoke_run_writes_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let gallery = dir.path().join("g.rkg");
    expect_ok(&[
        "gen-gallery",
        "--out",
        gallery.to_str().unwrap(),
        "--count",
        "24",
        "--seed",
        "5",
    ]);
    let run = dir.path().join("run");
    expect_ok(&[
        "train",
        "--gallery",
        gallery.to_str().unwrap(),
        "--out-dir",
        run.to_str().unwrap(),
        "--epochs",
        "1",
        "--batch-size",
        "8",
        "--seed",
        "2",
    ]);
    let model = LcnnModel::load(&run.join("model.lcnn")).unwrap();
    assert_eq!(model.param_count(), 28_224);
    assert_eq!(model.provenance().epochs_completed, 1);
    // periodic checkpoints: a 3-epoch run with --checkpoint-every 1 leaves
    // the intermediate epochs behind
    let run3 = dir.path().join("run3");
    expect_ok(&[
        "train",
        "--gallery",
        gallery.to_str().unwrap(),
        "--out-dir",
        run3.to_str().unwrap(),
        "--epochs",
        "3",
        "--batch-size",
        "8",
        "--checkpoint-every",
        "1",
    ]);
    assert!(run3.join("ckpt-epoch-001.lcnn").exists());
    assert!(run3.join("ckpt-epoch-002.lcnn").exists());
    assert!(!run3.join("ckpt-epoch-003.lcnn").exists(), "final epoch is model.lcnn");
    assert!(run3.join("model.lcnn").exists());
    let history = std::fs::read_to_string(run.join("history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 2, "header + one epoch");
    assert!(run.join("config.txt").exists());
}

#[test]
fn gen_gallery_defaults_are_canonical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("default.rkg");
    expect_ok(&["gen-gallery", "--out", out.to_str().unwrap()]);
    let gallery = load_gallery(&out).unwrap();
    assert_eq!(gallery.len(), 3200);
    assert_eq!(gallery.config.kernel_size, 21);
    assert_eq!(gallery.config.sigma_min, 0.175);
    assert_eq!(gallery.config.sigma_max, 6.0);
}

#[test]
fn train_missing_gallery_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    expect_code(
        &[
            "train",
            "--gallery",
            dir.path().join("missing.rkg").to_str().unwrap(),
            "--out-dir",
            dir.path().join("run").to_str().unwrap(),
        ],
        3,
    );
}

#[test]
fn config_file_defaults_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let gallery = dir.path().join("g.rkg");
    expect_ok(&[
        "gen-gallery",
        "--out",
        gallery.to_str().unwrap(),
        "--count",
        "12",
    ]);
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "epochs = 1\nbatch_size = 6\n").unwrap();

    let run1 = dir.path().join("run1");
    expect_ok(&[
        "train",
        "--gallery",
        gallery.to_str().unwrap(),
        "--out-dir",
        run1.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    let h1 = std::fs::read_to_string(run1.join("history.tsv")).unwrap();
    assert_eq!(h1.lines().count(), 2, "config file set one epoch");

    let run2 = dir.path().join("run2");
    expect_ok(&[
        "train",
        "--gallery",
        gallery.to_str().unwrap(),
        "--out-dir",
        run2.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--epochs",
        "2",
    ]);
    let h2 = std::fs::read_to_string(run2.join("history.tsv")).unwrap();
    assert_eq!(h2.lines().count(), 3, "flag overrides config file");
}

/// degrade -> sr with the identity network -> eval: the SR output equals the
/// bicubic baseline, so the measured gain is exactly zero.
#[test]
fn identity_checkpoint_matches_bicubic_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("identity.lcnn");
    identity_model(&CANONICAL_PLAN).save(&ckpt).unwrap();

    let hr = dir.path().join("hr");
    expect_ok(&[
        "gen-images",
        "--out-dir",
        hr.to_str().unwrap(),
        "--count",
        "2",
        "--height",
        "96",
        "--width",
        "96",
        "--seed",
        "9",
    ]);
    let lr = dir.path().join("lr");
    expect_ok(&[
        "degrade",
        "--hr-dir",
        hr.to_str().unwrap(),
        "--out-dir",
        lr.to_str().unwrap(),
        "--scale",
        "2",
        "--seed",
        "4",
    ]);
    let sr = dir.path().join("sr");
    let manifest = lr.join("manifest.tsv");
    expect_ok(&[
        "sr",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        sr.to_str().unwrap(),
        "--scale",
        "2",
    ]);
    let stdout = expect_ok(&[
        "eval",
        "--manifest",
        manifest.to_str().unwrap(),
        "--sr-dir",
        sr.to_str().unwrap(),
    ]);
    assert!(
        stdout.contains("gain +0.000000"),
        "identity model should show zero gain: {stdout}"
    );

    // scale mismatch between manifest and flag is a usage error
    expect_code(
        &[
            "sr",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--manifest",
            manifest.to_str().unwrap(),
            "--out-dir",
            dir.path().join("sr4").to_str().unwrap(),
            "--scale",
            "4",
        ],
        2,
    );
}

#[test]
fn collapsed_sr_agrees_with_full_network_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.lcnn");
    LcnnModel::init(3).save(&ckpt).unwrap();
    let hr = dir.path().join("hr");
    expect_ok(&[
        "gen-images",
        "--out-dir",
        hr.to_str().unwrap(),
        "--count",
        "1",
        "--height",
        "64",
        "--width",
        "64",
        "--seed",
        "1",
    ]);
    let lr = dir.path().join("lr");
    expect_ok(&[
        "degrade",
        "--hr-dir",
        hr.to_str().unwrap(),
        "--out-dir",
        lr.to_str().unwrap(),
        "--scale",
        "2",
        "--seed",
        "2",
    ]);
    for (out, extra) in [("full", None), ("fast", Some("--collapse"))] {
        let mut args = vec![
            "sr",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--lr-dir",
            lr.to_str().unwrap(),
            "--out-dir",
        ];
        let out_dir = dir.path().join(out);
        let out_str = out_dir.to_str().unwrap().to_owned();
        args.push(Box::leak(out_str.into_boxed_str()));
        args.extend(["--scale", "2"]);
        if let Some(flag) = extra {
            args.push(flag);
        }
        expect_ok(&args);
    }
    let a = idsr_core::img::load_png(&dir.path().join("full/img-000.png")).unwrap();
    let b = idsr_core::img::load_png(&dir.path().join("fast/img-000.png")).unwrap();
    // identical up to 8-bit quantization of two near-equal float images
    assert!(a.max_abs_diff(&b) <= 1.01 / 255.0);
}

#[test]
fn ablate_rejects_empty_sweep_and_resumes_legs() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("identity.lcnn");
    identity_model(&CANONICAL_PLAN).save(&ckpt).unwrap();

    expect_code(
        &[
            "ablate",
            "scale",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--scales",
            "",
            "--out-dir",
            dir.path().join("sweep0").to_str().unwrap(),
        ],
        2,
    );

    let sweep = dir.path().join("sweep");
    let args = [
        "ablate",
        "scale",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scales",
        "8",
        "--out-dir",
        sweep.to_str().unwrap(),
        "--image-count",
        "1",
        "--image-size",
        "128",
    ];
    let first = expect_ok(&args);
    assert!(!first.contains("resumed"));
    assert!(sweep.join("scale-8/report.tsv").exists());
    assert!(sweep.join("report.tsv").exists());
    let second = expect_ok(&args);
    assert!(second.contains("resumed"), "second run should skip the leg");
}

#[test]
fn eval_missing_manifest_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    expect_code(
        &[
            "eval",
            "--manifest",
            dir.path().join("nope.tsv").to_str().unwrap(),
            "--sr-dir",
            dir.path().to_str().unwrap(),
        ],
        3,
    );
}

#[test]
fn corrupt_gallery_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.rkg");
    std::fs::write(&bad, b"THISISNOTAVALIDGALLERYFILE").unwrap();
    expect_code(
        &[
            "train",
            "--gallery",
            bad.to_str().unwrap(),
            "--out-dir",
            dir.path().join("run").to_str().unwrap(),
        ],
        4,
    );
    let _ = Path::new("");
}
