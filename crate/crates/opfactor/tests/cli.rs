mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;
use opfactor::corpus::load_corpus;
use opfactor::report::matrix_from_csv;
use opfactor_core::eval::{distance_matrix, FeatureKind, MatrixKind};
use opfactor_core::FrameParams;

fn opfactor(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opfactor"))
        .env_remove("OPFACTOR_CONFIG")
        .arg("--store")
        .arg(store)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> String {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn enroll_verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let ref_wav = write(dir.path(), "ref.wav", &wav_bytes(150.0, 1));
    let (ppm, pgm) = photo(RED, 1);
    let ref_img = write(dir.path(), "ref.ppm", &ppm);
    write(dir.path(), "ref.mask.pgm", &pgm);
    ok(&opfactor(&store, &["enroll", "--id", "car-1", "--tag", "TAG-0001", "--audio", &ref_wav, "--image", &ref_img]));

    let probe_wav = write(dir.path(), "probe.wav", &wav_bytes(150.0, 2));
    let (ppm, pgm) = photo(RED, 2);
    let probe_img = write(dir.path(), "probe.ppm", &ppm);
    let probe_mask = write(dir.path(), "probe-mask.pgm", &pgm);
    let verify = |tag: &str| {
        opfactor(&store, &["verify", "--tag", tag, "--audio", &probe_wav, "--image", &probe_img, "--mask", &probe_mask])
    };

    let accept = verify("TAG-0001");
    let r = json(&ok(&accept));
    assert_eq!(r["verdict"], "accept");
    assert_eq!(r["request_id"], "cli");

    let deny = verify("TAG-9999");
    assert_eq!(deny.status.code(), Some(1));
    let r = json(std::str::from_utf8(&deny.stdout).unwrap().trim());
    assert_eq!(r["verdict"], "deny");
    assert!(r["reason"].as_str().unwrap().starts_with("rfid rejected"));

    // accept appended the probe to both reference sets
    let shown = json(&ok(&opfactor(&store, &["show", "--id", "car-1"])));
    assert_eq!(shown["audio_refs"].as_array().unwrap().len(), 2);
    assert_eq!(shown["visual_refs"].as_array().unwrap().len(), 2);
    assert!(ok(&opfactor(&store, &["list"])).contains("car-1"));

    assert_eq!(opfactor(&store, &["verify"]).status.code(), Some(2));
    assert_eq!(opfactor(&store, &["frobnicate"]).status.code(), Some(2));
    let missing = opfactor(&dir.path().join("nowhere"), &["verify", "--tag", "x"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
    let bad_audio = opfactor(&store, &["verify", "--tag", "TAG-0001", "--audio", &ref_img]);
    assert_eq!(bad_audio.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_audio.stdout).contains("audio error"));

    ok(&opfactor(&store, &["delete", "--id", "car-1"]));
    assert_eq!(verify("TAG-0001").status.code(), Some(1));
}

#[test]
fn matrix_cli_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("unused");
    let fleet = dir.path().join("fleet");
    ok(&opfactor(&store, &["synth", "fleet", "--out", fleet.to_str().unwrap(), "--clips", "4"]));
    let manifest = fleet.join("fleet.manifest");
    let out = dir.path().join("m.csv");
    ok(&opfactor(
        &store,
        &["matrix", "--corpus", manifest.to_str().unwrap(), "--kind", "audio", "--out", out.to_str().unwrap()],
    ));
    let from_cli = matrix_from_csv(&std::fs::read_to_string(&out).unwrap(), MatrixKind::SampleLevel).unwrap();

    let samples = load_corpus(&manifest, FeatureKind::Audio, &FrameParams::default(), 8).unwrap();
    let in_process = distance_matrix(&samples).unwrap();
    assert_eq!(from_cli.row_labels, in_process.row_labels);
    assert_eq!(from_cli.values, in_process.values);
    assert_eq!(from_cli.rows(), 24);

    let report = json(&ok(&opfactor(&store, &["accuracy", "--corpus", manifest.to_str().unwrap(), "--kind", "audio"])));
    assert_eq!(report["threshold"], 100.0);
    assert!(report["accuracy"].as_f64().unwrap() >= 0.95);
}

#[test]
fn palette_accuracy_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("unused");
    let pal = dir.path().join("pal");
    ok(&opfactor(&store, &["synth", "palette", "--out", pal.to_str().unwrap(), "--images", "4"]));
    let manifest = pal.join("palette.manifest");
    let report = json(&ok(&opfactor(&store, &["accuracy", "--corpus", manifest.to_str().unwrap(), "--kind", "visual"])));
    assert_eq!(report["threshold"], 0.2);
    assert!(report["accuracy"].as_f64().unwrap() >= 0.9);

    let pgm = dir.path().join("h.pgm");
    let svg = dir.path().join("h.svg");
    ok(&opfactor(
        &store,
        &[
            "heatmap", "--corpus", manifest.to_str().unwrap(), "--kind", "visual",
            "--out", pgm.to_str().unwrap(), "--svg", svg.to_str().unwrap(), "--cell", "2",
        ],
    ));
    let (w, h, _) = opfactor::pnm::read_pgm(&std::fs::read(&pgm).unwrap()).unwrap();
    assert_eq!((w, h), (32, 32));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn tables_mark_threshold_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("unused");
    let audio = ok(&opfactor(&store, &["table", "--matrix", &fixture("reference_audio.csv"), "--threshold", "100"]));
    assert_eq!(audio.matches("(FP)").count(), 1);
    assert!(audio.contains("76.6 (FP)"));
    assert!(!audio.contains("(FN)"));
    assert!(audio.contains("**43.6**"));

    let visual = ok(&opfactor(&store, &["table", "--matrix", &fixture("reference_visual.csv"), "--threshold", "0.2"]));
    assert_eq!(visual.matches("(FN)").count(), 1);
    assert!(visual.contains("0.224 (FN)"));
    assert!(!visual.contains("(FP)"));
}

#[test]
fn sweep_reports_invalid_durations() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let out = ok(&opfactor(
        &dir.path().join("unused"),
        &["sweep", "--durations", "1,0.01", "--clips", "3", "--csv", csv.to_str().unwrap()],
    ));
    let rows = json(&out);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["report"]["accuracy"].as_f64().unwrap() >= 0.95);
    assert!(rows[1]["report"].is_null());
    assert!(!rows[1]["errors"].as_array().unwrap().is_empty());
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 3);
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("unused");
    let shown = ok(&opfactor(&store, &["show-config"]));
    let defaults = opfactor::config::Config::from_toml(&shown).unwrap();
    assert_eq!(defaults, opfactor::config::Config::default());

    let cfg = write(dir.path(), "c.toml", b"[thresholds]\naudio_max_distance = 50.0\nvisual_max_distance = 0.2\n");
    let shown = ok(&opfactor(&store, &["--config", &cfg, "show-config"]));
    assert_eq!(opfactor::config::Config::from_toml(&shown).unwrap().thresholds.audio_max_distance, 50.0);

    let bad = write(dir.path(), "bad.toml", b"[thresholds]\naudio_max_distance = -1.0\nvisual_max_distance = 0.2\n");
    assert_eq!(opfactor(&store, &["--config", &bad, "show-config"]).status.code(), Some(3));
}
