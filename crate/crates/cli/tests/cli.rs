//! End-to-end command tests: in-process for logic, through the binary
//! for exit codes and stdout contracts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use priornet_cli::{manifest, ppm, run, CliError};
use priornet_core::model::{ModelWeights, PriorNetConfig};
use priornet_testkit::corpus;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_priornet"))
}

fn args(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

/// Write a tiny clean/depth corpus and its manifest; returns the
/// manifest path and the scene list.
fn write_scene_corpus(dir: &Path, n: usize, extent: usize, seed: u64) -> PathBuf {
    let scenes = corpus::scenes(n, extent, extent, seed);
    let mut rows = Vec::new();
    for (i, scene) in scenes.iter().enumerate() {
        let clean = dir.join(format!("clean_{i:03}.ppm"));
        let depth = dir.join(format!("depth_{i:03}.pgm"));
        ppm::write_image(&scene.clean, &clean).unwrap();
        ppm::write_depth(&scene.depth, &depth).unwrap();
        rows.push((clean, depth));
    }
    let path = dir.join("scenes.tsv");
    manifest::write(&path, &rows).unwrap();
    path
}

/// Synthesize a hazy set from the scene corpus and pair it with the
/// clean originals for training/eval.
fn write_hazy_manifest(dir: &Path, scene_manifest: &Path, seed: u64) -> PathBuf {
    let config = dir.join("synth.cfg");
    fs::write(&config, format!("seed = {seed}\n")).unwrap();
    let hazy_dir = dir.join("hazy");
    run(&args(&[
        "synth",
        "--manifest",
        scene_manifest.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        hazy_dir.to_str().unwrap(),
    ]))
    .unwrap();

    let listing = fs::read_to_string(scene_manifest).unwrap();
    let mut rows = Vec::new();
    for line in listing.lines() {
        let clean: PathBuf = line.split('\t').next().unwrap().into();
        let stem = clean.file_stem().unwrap().to_string_lossy().into_owned();
        let hazy = hazy_dir.join(format!("{stem}_hazy.ppm"));
        assert!(hazy.is_file(), "synth left no {hazy:?}");
        assert!(hazy_dir.join(format!("{stem}_hazy.txt")).is_file());
        rows.push((hazy, dir.join(&clean)));
    }
    let path = dir.join("pairs.tsv");
    manifest::write(&path, &rows).unwrap();
    path
}

#[test]
fn synth_train_eval_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = write_scene_corpus(dir.path(), 3, 16, 50);
    let pairs = write_hazy_manifest(dir.path(), &scenes, 51);

    let train_cfg = dir.path().join("train.cfg");
    fs::write(
        &train_cfg,
        "iterations = 6\nbatch_size = 2\nperceptual_enabled = false\nseed = 52\ncheckpoint_every = 3\n",
    )
    .unwrap();
    let weights = dir.path().join("model.prnw");
    run(&args(&[
        "train",
        "--manifest",
        pairs.to_str().unwrap(),
        "--config",
        train_cfg.to_str().unwrap(),
        "--out",
        weights.to_str().unwrap(),
    ]))
    .unwrap();
    assert!(weights.is_file());
    // loss CSV plus the two checkpoints
    let csv = fs::read_to_string(dir.path().join("model.csv")).unwrap();
    assert!(csv.starts_with("iteration,mse,perceptual,total\n"));
    assert_eq!(csv.lines().count(), 1 + 6);
    assert!(dir.path().join("model.prnw.ckpt-3").is_file());
    assert!(dir.path().join("model.prnw.ckpt-6").is_file());

    // batch dehaze into a directory
    let restored = dir.path().join("restored");
    run(&args(&[
        "dehaze",
        "--weights",
        weights.to_str().unwrap(),
        "--manifest",
        pairs.to_str().unwrap(),
        "--out",
        restored.to_str().unwrap(),
    ]))
    .unwrap();
    assert_eq!(fs::read_dir(&restored).unwrap().count(), 3);

    // evaluation emits per-image rows plus the mean
    let report = dir.path().join("report.csv");
    run(&args(&[
        "eval",
        "--weights",
        weights.to_str().unwrap(),
        "--manifest",
        pairs.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]))
    .unwrap();
    let text = fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "image_id,psnr_db,ssim");
    assert_eq!(lines.len(), 1 + 3 + 1);
    assert!(lines[4].starts_with("mean,"));

    // the mean row is the arithmetic mean of the per-image rows
    let parse = |line: &str| -> (f64, f64) {
        let mut f = line.split(',');
        f.next();
        (
            f.next().unwrap().parse().unwrap(),
            f.next().unwrap().parse().unwrap(),
        )
    };
    let rows: Vec<(f64, f64)> = lines[1..4].iter().map(|l| parse(l)).collect();
    let (mp, ms) = parse(lines[4]);
    let want_p = rows.iter().map(|r| r.0).sum::<f64>() / 3.0;
    let want_s = rows.iter().map(|r| r.1).sum::<f64>() / 3.0;
    assert!((mp - want_p).abs() < 5e-4);
    assert!((ms - want_s).abs() < 5e-4);
}

#[test]
fn eval_on_identical_pairs_reports_perfect_scores() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = corpus::scenes(2, 16, 16, 60);
    let mut rows = Vec::new();
    for (i, s) in scenes.iter().enumerate() {
        let path = dir.path().join(format!("img_{i}.ppm"));
        ppm::write_image(&s.clean, &path).unwrap();
        rows.push((path.clone(), path));
    }
    // identical hazy and clean columns, identity-ish model
    let pairs = dir.path().join("same.tsv");
    // manifest loader rejects duplicate first columns, so two rows of
    // different files each self-paired
    manifest::write(&pairs, &rows).unwrap();

    let mut model = ModelWeights::build(PriorNetConfig::default(), 1).unwrap();
    for (name, t) in model.params_mut().iter_mut() {
        let fill = if name == "conv5.bias" { 1.0 } else { 0.0 };
        t.data_mut().iter_mut().for_each(|v| *v = fill);
    }
    let weights = dir.path().join("identity.prnw");
    fs::write(&weights, model.to_bytes()).unwrap();

    let report = dir.path().join("report.csv");
    run(&args(&[
        "eval",
        "--weights",
        weights.to_str().unwrap(),
        "--manifest",
        pairs.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]))
    .unwrap();
    let text = fs::read_to_string(&report).unwrap();
    let mean = text.lines().last().unwrap();
    assert_eq!(mean, "mean,99.0000,1.0000", "{text}");
}

#[test]
fn dcp_single_image_and_manifest_modes() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = corpus::scenes(2, 24, 24, 70);
    let pairs_path = dir.path().join("pairs.tsv");
    let mut rows = Vec::new();
    for (i, s) in scenes.iter().enumerate() {
        let clean = dir.path().join(format!("clean_{i}.ppm"));
        let hazy = dir.path().join(format!("hazy_{i}.ppm"));
        ppm::write_image(&s.clean, &clean).unwrap();
        ppm::write_image(&corpus::hazy_of(s, 0.9, 1.0), &hazy).unwrap();
        rows.push((hazy, clean));
    }
    manifest::write(&pairs_path, &rows).unwrap();

    let single_out = dir.path().join("single.ppm");
    run(&args(&[
        "dcp",
        "--in",
        rows[0].0.to_str().unwrap(),
        "--out",
        single_out.to_str().unwrap(),
    ]))
    .unwrap();
    assert!(single_out.is_file());

    let report = dir.path().join("dcp.csv");
    run(&args(&[
        "dcp",
        "--manifest",
        pairs_path.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]))
    .unwrap();
    assert_eq!(fs::read_to_string(&report).unwrap().lines().count(), 4);
}

#[test]
fn info_reports_the_parameter_audit() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("default.prnw");
    let model = ModelWeights::build(PriorNetConfig::default(), 9).unwrap();
    fs::write(&weights, model.to_bytes()).unwrap();

    let output = bin()
        .args(["info", "--weights", weights.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("parameters: 2781"), "{stdout}");
    assert!(stdout.contains("variant: full"), "{stdout}");
    let bytes_line = stdout
        .lines()
        .find(|l| l.starts_with("serialized_bytes: "))
        .unwrap();
    let size: usize = bytes_line.rsplit(' ').next().unwrap().parse().unwrap();
    assert_eq!(size, model.to_bytes().len());
}

#[test]
fn exit_codes_follow_the_error_taxonomy() {
    let dir = tempfile::tempdir().unwrap();

    // 1: usage
    let status = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(status.status.code(), Some(1));
    let status = bin().args(["dehaze", "--weights", "w"]).output().unwrap();
    assert_eq!(status.status.code(), Some(1));

    // 2: i/o, weight file does not exist
    let status = bin()
        .args(["info", "--weights", dir.path().join("missing.prnw").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));

    // 3: format, corrupt magic
    let bad = dir.path().join("bad.prnw");
    fs::write(&bad, b"XXXXGARBAGE").unwrap();
    let output = bin()
        .args(["info", "--weights", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("bad magic"), "{stderr}");

    // diagnostics go to stderr, stdout stays clean
    assert!(output.stdout.is_empty());
}

#[test]
fn manifest_loader_rejects_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("a.ppm");
    fs::write(&img, b"P6\n1 1\n255\n\x00\x00\x00").unwrap();

    let three_cols = dir.path().join("three.tsv");
    fs::write(&three_cols, "a.ppm\ta.ppm\ta.ppm\n").unwrap();
    match manifest::DatasetManifest::load(&three_cols).unwrap_err() {
        CliError::Format(msg) => assert!(msg.contains("line 1"), "{msg}"),
        other => panic!("{other:?}"),
    }

    let dangling = dir.path().join("dangling.tsv");
    fs::write(&dangling, "a.ppm\tmissing.ppm\n").unwrap();
    assert!(matches!(
        manifest::DatasetManifest::load(&dangling).unwrap_err(),
        CliError::Io(_)
    ));

    let duplicated = dir.path().join("dup.tsv");
    fs::write(&duplicated, "a.ppm\ta.ppm\na.ppm\ta.ppm\n").unwrap();
    match manifest::DatasetManifest::load(&duplicated).unwrap_err() {
        CliError::Format(msg) => assert!(msg.contains("duplicate"), "{msg}"),
        other => panic!("{other:?}"),
    }

    // comments and blank lines are fine
    let ok = dir.path().join("ok.tsv");
    fs::write(&ok, "# header\n\na.ppm\ta.ppm\n").unwrap();
    assert_eq!(manifest::DatasetManifest::load(&ok).unwrap().len(), 1);
}
