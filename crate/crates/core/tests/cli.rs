//! End-to-end runs of the `semvs` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semvs::cli::Report;
use semvs::synth::{generate_scene, SynthSpec};

fn semvs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semvs"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn facade(dir: &Path) -> PathBuf {
    generate_scene(&SynthSpec::facade(96, 72), &dir.join("scene"))
        .unwrap()
        .0
}

fn run_ok(args: &[&str]) {
    let out = semvs(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Artifact file names and bytes, sorted by name.
fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("dmap" | "ply" | "txt")
            )
        })
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn run_produces_report_and_clouds() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = facade(tmp.path());
    let out = tmp.path().join("out");
    run_ok(&[
        "run",
        "--scene",
        scene.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--split",
    ]);
    let report: Report =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.pairs_selected.unwrap() >= 1);
    let fused = report.fused.unwrap();
    assert!(fused.points > 0);
    assert!(fused.per_class["building"] > 0);
    for id in 0..4 {
        assert!(report.valid_after_filter[&id] <= report.valid_before_filter[&id]);
    }
    let building = semvs::scene_io::read_ply(&out.join("cloud_building.ply")).unwrap();
    assert_eq!(building.len(), fused.per_class["building"]);
    assert!(building.iter().all(|v| v.label == 0));
}

#[test]
fn missing_scene_fails_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = semvs(&[
        "run",
        "--scene",
        "/no/such/scene.json",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/no/such/scene.json"), "{stderr}");
    assert!(stderr.contains("[load]"), "{stderr}");
}

#[test]
fn untextured_sky_fuses_to_nothing_with_a_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = facade(tmp.path());
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    let output = semvs(&[
        "run",
        "--scene",
        scene.to_str().unwrap(),
        "--out",
        out_s,
        "--classes",
        "sky",
    ]);
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("zero points"));
    let report: Report =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.fused.unwrap().points, 0);
    assert!(report
        .warnings
        .iter()
        .any(|w| w.contains("zero points for sky")));
    assert!(semvs::scene_io::read_ply(&out.join("cloud.ply"))
        .unwrap()
        .is_empty());
}

#[test]
fn reruns_and_staged_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = facade(tmp.path());
    let scene_s = scene.to_str().unwrap();
    let dir = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();
    let (a, b, staged) = (dir("a"), dir("b"), dir("staged"));
    run_ok(&["run", "--scene", scene_s, "--out", &a, "--seed", "4"]);
    run_ok(&[
        "run", "--scene", scene_s, "--out", &b, "--seed", "4", "--jobs", "1",
    ]);
    for stage in ["pairs", "depth", "filter", "fuse"] {
        run_ok(&[stage, "--scene", scene_s, "--out", &staged, "--seed", "4"]);
    }
    let first = artifacts(Path::new(&a));
    assert!(first.iter().any(|(n, _)| n == "cloud.ply"));
    assert_eq!(first.len(), 1 + 4 + 4 + 1);
    assert_eq!(first, artifacts(Path::new(&b)));
    assert_eq!(first, artifacts(Path::new(&staged)));
}

#[test]
fn per_view_depth_invocations_match_a_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = facade(tmp.path());
    let scene_s = scene.to_str().unwrap();
    let single = tmp.path().join("single");
    let split = tmp.path().join("split");
    run_ok(&["run", "--scene", scene_s, "--out", single.to_str().unwrap()]);
    run_ok(&[
        "pairs",
        "--scene",
        scene_s,
        "--out",
        split.to_str().unwrap(),
    ]);
    for id in ["3", "1", "0", "2"] {
        run_ok(&[
            "depth",
            "--scene",
            scene_s,
            "--out",
            split.to_str().unwrap(),
            "--ref",
            id,
        ]);
    }
    for id in 0..4 {
        let name = format!("depth_{id}.dmap");
        assert_eq!(
            fs::read(single.join(&name)).unwrap(),
            fs::read(split.join(&name)).unwrap()
        );
    }
}

#[test]
fn config_file_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = facade(tmp.path());
    let config = tmp.path().join("run.json");
    let out = tmp.path().join("out");
    fs::write(
        &config,
        serde_json::json!({
            "scene": scene,
            "out": out,
            "seed": 2,
            "filter": {"k": 2, "tau": 0.01},
            "classes": ["window"]
        })
        .to_string(),
    )
    .unwrap();
    run_ok(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--classes",
        "building",
        "--k",
        "1",
    ]);
    let report: Report =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.seed, 2);
    let per_class = report.fused.unwrap().per_class;
    assert!(per_class.contains_key("building"));
    assert!(!per_class.contains_key("window"));
}

#[test]
fn synth_subcommand_writes_a_loadable_scene() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    fs::write(
        &spec,
        serde_json::to_string(&SynthSpec::slanted_plane(64, 48)).unwrap(),
    )
    .unwrap();
    let out = tmp.path().join("scene");
    run_ok(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let scene = semvs::load_scene(&out.join("scene.json")).unwrap();
    assert_eq!(scene.views().len(), 2);
    assert!(out.join("gt_1.dmap").exists());

    fs::write(&spec, "{\"rectangles\": []}").unwrap();
    let bad = semvs(&[
        "synth",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("[synth]"));
}
