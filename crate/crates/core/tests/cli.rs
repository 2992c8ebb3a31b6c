//! The command line, driven in-process on small generated fixtures.

mod common;

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use common::synth::synthetic_image;
use common::{copy_dir, fixture_dir, run_cli, stub_adapter};
use morphvuln::cli::{self, Cli, CliError, RunMetadata};
use morphvuln::raster;
use serde_json::{json, Value};

const PROTOCOL: &str = "subject_a,sample_a,subject_b,sample_b\ns1,s1_a,s2,s2_a\ns2,s2_a,s3,s3_a\n";

/// Three 64x64 images and a two-pair protocol under `dir`.
fn scaffold(dir: &Path) {
    let images = dir.join("images");
    fs::create_dir_all(&images).unwrap();
    for (i, name) in ["s1_a", "s2_a", "s3_a"].iter().enumerate() {
        raster::save_image(&synthetic_image(100 + i as u64, 64, 64), images.join(format!("{name}.png"))).unwrap();
    }
    fs::write(dir.join("pairs.csv"), PROTOCOL).unwrap();
}

fn adapter_json(script: &str, args: &[&str]) -> Value {
    serde_json::to_value(stub_adapter(script, args)).unwrap()
}

fn write_config(dir: &Path, cfg: Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn base_config() -> Value {
    json!({
        "output_root": "out",
        "image_root": "images",
        "landmark_root": "lm",
        "pair_protocol": "pairs.csv",
        "landmark_adapter": adapter_json("detector.py", &[]),
        "workers": 2
    })
}

fn run_parsed(args: &[&str]) -> Result<i32, CliError> {
    let mut full = vec!["morphvuln"];
    full.extend_from_slice(args);
    cli::run(&Cli::try_parse_from(full).unwrap().command)
}

#[test]
fn landmarks_then_landmark_morph() {
    let tmp = tempfile::tempdir().unwrap();
    scaffold(tmp.path());
    let config = write_config(tmp.path(), base_config());
    let config = config.to_str().unwrap();

    assert_eq!(run_cli(&["landmarks", "--config", config]), 0);
    let lm_files: Vec<Vec<u8>> = ["s1_a", "s2_a", "s3_a"]
        .iter()
        .map(|s| fs::read(tmp.path().join("lm").join(format!("{s}.txt"))).unwrap())
        .collect();
    let parsed = morphvuln::landmarks::parse_points_text(std::str::from_utf8(&lm_files[0]).unwrap()).unwrap();
    assert_eq!(parsed.len(), 10);
    // A re-run rewrites identical bytes.
    assert_eq!(run_cli(&["landmarks", "--config", config]), 0);
    for (s, before) in ["s1_a", "s2_a", "s3_a"].iter().zip(&lm_files) {
        assert_eq!(&fs::read(tmp.path().join("lm").join(format!("{s}.txt"))).unwrap(), before);
    }

    assert_eq!(run_cli(&["morph", "--config", config]), 0);
    let out = tmp.path().join("out");
    for name in ["opencv_s1_s2.png", "opencv_s2_s3.png"] {
        let img = raster::load_image(out.join("morphs").join(name)).unwrap();
        assert_eq!((img.width(), img.height()), (64, 64));
    }
    assert_eq!(fs::read_dir(out.join("morphs")).unwrap().count(), 2);
    let manifest = fs::read_to_string(out.join("morph_manifest.csv")).unwrap();
    let lines: Vec<&str> = manifest.lines().collect();
    assert_eq!(lines[0], "index,subject_a,subject_b,status,output_path");
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.contains(",ok,")));

    let meta = RunMetadata::load(&out.join("run-morph.json")).unwrap();
    assert_eq!(meta.exit_code, 0);
    assert_eq!(meta.config_hash, meta.config.hash());
}

#[test]
fn unreadable_image_fails_alone() {
    let tmp = tempfile::tempdir().unwrap();
    scaffold(tmp.path());
    fs::write(tmp.path().join("images/broken.png"), b"not a png").unwrap();
    let config = write_config(tmp.path(), base_config());

    assert_eq!(run_cli(&["landmarks", "--config", config.to_str().unwrap()]), 2);
    for s in ["s1_a", "s2_a", "s3_a"] {
        assert!(tmp.path().join("lm").join(format!("{s}.txt")).is_file());
    }
    assert!(!tmp.path().join("lm/broken.txt").exists());
    let manifest = fs::read_to_string(tmp.path().join("out/landmarks_manifest.csv")).unwrap();
    let broken = manifest.lines().find(|l| l.contains("broken.png")).unwrap();
    assert!(broken.contains("failed:"), "{broken}");
}

#[test]
fn morph_reports_partial_failure() {
    let tmp = tempfile::tempdir().unwrap();
    scaffold(tmp.path());
    let config = write_config(tmp.path(), base_config());
    let config = config.to_str().unwrap();
    assert_eq!(run_cli(&["landmarks", "--config", config]), 0);
    fs::remove_file(tmp.path().join("lm/s3_a.txt")).unwrap();

    assert_eq!(run_cli(&["morph", "--config", config]), 2);
    let manifest = fs::read_to_string(tmp.path().join("out/morph_manifest.csv")).unwrap();
    assert!(manifest.lines().nth(1).unwrap().contains(",ok,"));
    assert!(manifest.lines().nth(2).unwrap().contains("failed:"));
    assert!(tmp.path().join("out/morphs/opencv_s1_s2.png").is_file());
}

#[test]
fn missing_protocol_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    scaffold(tmp.path());
    let mut cfg = base_config();
    cfg["pair_protocol"] = json!("nowhere.csv");
    let config = write_config(tmp.path(), cfg);
    let config = config.to_str().unwrap();

    assert_eq!(run_cli(&["morph", "--config", config]), 1);
    match run_parsed(&["morph", "--config", config]) {
        Err(e @ CliError::MissingFile { .. }) => assert!(e.to_string().contains("nowhere.csv"), "{e}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn invalid_settings_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    copy_dir(&fixture_dir("e2e"), tmp.path());
    let config = tmp.path().join("config.json");
    let config = config.to_str().unwrap();
    assert_eq!(run_cli(&["evaluate", "--config", config, "--target-fmr", "0"]), 1);
    assert_eq!(run_cli(&["evaluate", "--config", config, "--target-fmr", "1"]), 1);
    assert!(!tmp.path().join("out/report.txt").exists());

    // Only the probe direction is requested but one entry has no probe manifest.
    assert_eq!(run_cli(&["evaluate", "--config", config, "--direction", "probes"]), 1);
    assert_eq!(run_cli(&["evaluate", "--config", tmp.path().join("absent.json").to_str().unwrap()]), 1);

    scaffold(tmp.path());
    let mut cfg = base_config();
    cfg["alpha"] = json!(1.5);
    let bad = write_config(tmp.path(), cfg);
    assert_eq!(run_cli(&["morph", "--config", bad.to_str().unwrap()]), 1);
}

#[test]
fn references_only_direction() {
    let tmp = tempfile::tempdir().unwrap();
    copy_dir(&fixture_dir("e2e"), tmp.path());
    let config = tmp.path().join("config.json");
    assert_eq!(
        run_cli(&["evaluate", "--config", config.to_str().unwrap(), "--direction", "references"]),
        0
    );
    let out = tmp.path().join("out");
    assert!(!out.join("scores_SYNTH_cosine_opencv_probes.csv").exists());
    let text = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.contains("50.0 | N/A  50.0 | N/A"), "{text}");
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let full = fs::read_to_string(fixture_dir("e2e/expected/report.csv")).unwrap();
    // The reference side is unchanged by dropping the probe side.
    let ref_fields = |s: &str| -> Vec<String> {
        s.lines()
            .nth(1)
            .unwrap()
            .split(',')
            .enumerate()
            .filter(|(i, _)| [0, 1, 2, 3, 5, 7, 9].contains(i))
            .map(|(_, f)| f.to_string())
            .collect()
    };
    assert_eq!(ref_fields(&csv), ref_fields(&full));
}

#[test]
fn replay_checks_the_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    copy_dir(&fixture_dir("e2e"), tmp.path());
    let config = tmp.path().join("config.json");
    assert_eq!(run_cli(&["evaluate", "--config", config.to_str().unwrap()]), 0);
    let out = tmp.path().join("out");
    let meta_path = out.join("run-evaluate.json");
    let report = fs::read(out.join("report.txt")).unwrap();

    fs::remove_file(out.join("report.txt")).unwrap();
    assert_eq!(run_cli(&["evaluate", "--replay", meta_path.to_str().unwrap()]), 0);
    assert_eq!(fs::read(out.join("report.txt")).unwrap(), report);

    // Wrong subcommand for the recorded run.
    assert!(matches!(
        run_parsed(&["report", "--replay", meta_path.to_str().unwrap()]),
        Err(CliError::Replay(_))
    ));

    let mut meta: Value = serde_json::from_str(&fs::read_to_string(&meta_path).unwrap()).unwrap();
    meta["config"]["target_fmr"] = json!(0.2);
    let tampered = tmp.path().join("tampered.json");
    fs::write(&tampered, meta.to_string()).unwrap();
    assert_eq!(run_cli(&["evaluate", "--replay", tampered.to_str().unwrap()]), 1);
    assert!(matches!(
        run_parsed(&["evaluate", "--replay", tampered.to_str().unwrap()]),
        Err(CliError::Replay(_))
    ));
}

#[test]
fn report_rerenders_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    copy_dir(&fixture_dir("e2e"), tmp.path());
    let config = tmp.path().join("config.json");
    let config = config.to_str().unwrap();
    assert_eq!(run_cli(&["evaluate", "--config", config]), 0);
    let out = tmp.path().join("out");
    fs::remove_file(out.join("report.txt")).unwrap();

    assert_eq!(run_cli(&["report", "--config", config]), 0);
    assert_eq!(
        fs::read_to_string(out.join("report.txt")).unwrap(),
        fs::read_to_string(fixture_dir("e2e/expected/report.txt")).unwrap()
    );
    assert!(out.join("run-report.json").is_file());
}

#[test]
fn latent_tool_with_alignment_and_cache() {
    let tmp = tempfile::tempdir().unwrap();
    scaffold(tmp.path());
    let log = tmp.path().join("projections.log");
    let mut cfg = base_config();
    let obj = cfg.as_object_mut().unwrap();
    obj.remove("landmark_root");
    obj.insert("tool".into(), json!("latent"));
    obj.insert(
        "generator_adapter".into(),
        adapter_json("generator.py", &["--size", "32", "--log", log.to_str().unwrap()]),
    );
    obj.insert("projection_steps".into(), json!(7));
    obj.insert("latent_cache".into(), json!("cache"));
    obj.insert(
        "alignment_template".into(),
        json!({
            "anchors": [
                {"name": "left_eye", "indices": [0], "target": {"x": 12.0, "y": 14.0}},
                {"name": "right_eye", "indices": [1], "target": {"x": 36.0, "y": 14.0}}
            ],
            "output_width": 48,
            "output_height": 48
        }),
    );
    let config = write_config(tmp.path(), cfg);
    let config = config.to_str().unwrap();

    assert_eq!(run_cli(&["morph", "--config", config]), 0);
    let out = tmp.path().join("out");
    for name in ["stylegan_s1_s2.png", "stylegan_s2_s3.png"] {
        let img = raster::load_image(out.join("morphs").join(name)).unwrap();
        assert_eq!((img.width(), img.height()), (32, 32));
    }
    let requests: Vec<Value> = fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    // s2_a is shared by both pairs and projected once.
    assert_eq!(requests.len(), 3);
    assert!(requests.iter().all(|r| r["steps"] == 7 && r.get("seed").is_none()));
    assert_eq!(fs::read_dir(tmp.path().join("cache")).unwrap().count(), 3);

    // Second run: everything comes from the cache, outputs are identical.
    let first = fs::read(out.join("morphs/stylegan_s1_s2.png")).unwrap();
    assert_eq!(run_cli(&["morph", "--config", config, "--seed", "9"]), 0);
    assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 3);
    assert_eq!(fs::read(out.join("morphs/stylegan_s1_s2.png")).unwrap(), first);
    let meta = RunMetadata::load(&out.join("run-morph.json")).unwrap();
    assert_eq!(meta.config.seed, Some(9));
}
