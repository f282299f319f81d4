//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{
    compute_all, inject_label_noise, matcher, median_relative_error, mutually_visible, valid_set,
};
use semvs::geometry::{
    backproject_world, plane_homography, project, Camera, Intrinsics, Pixel, PlaneHypothesis, Pose,
};
use semvs::raster::{GrayImage, LabelMap};
use semvs::semantic_fusion::PixelRef;
use semvs::synth::{generate_scene, render, SynthSpec};
use semvs::{
    filter_all, fuse, select_pairs, split_by_class, ClassTable, DepthMaps, FilterParams,
    MatchParams, PairParams, Scene, SemanticMode, SparsePoint, View,
};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn random_camera(rng: &mut ChaCha8Rng) -> Camera<f64> {
    let f = rng.random_range(100.0..800.0);
    let k = Intrinsics::with_skew(
        f,
        f * rng.random_range(0.9..1.1),
        rng.random_range(100.0..400.0),
        rng.random_range(80.0..300.0),
        rng.random_range(-0.5..0.5),
    )
    .unwrap();
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let r = Rotation3::new(axis * rng.random_range(0.0..3.0)).into_inner();
    let c = Vector3::new(
        rng.random_range(-20.0..20.0),
        rng.random_range(-20.0..20.0),
        rng.random_range(-20.0..20.0),
    );
    Camera::new(k, Pose::new(r, c).unwrap())
}

/// Pixel-to-pixel transfer through a plane by explicit ray casting.
fn transfer_oracle(
    r: &Camera<f64>,
    s: &Camera<f64>,
    anchor: (f64, f64),
    hyp: &PlaneHypothesis<f64>,
    q: (f64, f64),
) -> Option<(f64, f64)> {
    let k_inv = r.intrinsics.matrix().try_inverse()?;
    let rot = r.pose.rotation();
    let c = r.pose.center();
    // Plane in world coordinates: point on it and normal.
    let x0_cam = k_inv * Vector3::new(anchor.0, anchor.1, 1.0) * hyp.depth;
    let x0 = rot.transpose() * x0_cam + c;
    let n = rot.transpose() * hyp.normal;
    let dir = rot.transpose() * (k_inv * Vector3::new(q.0, q.1, 1.0));
    let t = n.dot(&(x0 - c)) / n.dot(&dir);
    let xw = c + dir * t;
    let xs = s.pose.rotation() * (xw - s.pose.center());
    if xs.z <= 0.0 {
        return None;
    }
    let p = s.intrinsics.matrix() * (xs / xs.z);
    Some((p.x, p.y))
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_round_trip: f64 = 0.0;
    for _ in 0..1000 {
        let cam = random_camera(&mut rng);
        let p: Pixel<f64> = Pixel::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let depth = rng.random_range(0.1..100.0);
        let x =
            backproject_world(&p, depth, &cam.intrinsics, &cam.pose).map_err(|e| e.to_string())?;
        let (q, d) = project(&x, &cam.intrinsics, &cam.pose).map_err(|e| e.to_string())?;
        let scale = p.u.hypot(p.v).max(1.0);
        let err = ((q.u - p.u).hypot(q.v - p.v) / scale).max((d - depth).abs() / depth);
        worst_round_trip = worst_round_trip.max(err);
    }
    check(
        worst_round_trip <= 1e-9,
        format!("round-trip relative error {worst_round_trip:.3e} > 1e-9"),
    )?;

    let mut worst_px: f64 = 0.0;
    let mut configs = 0;
    while configs < 100 {
        let reference = random_camera(&mut rng);
        // Source: nearby camera looking roughly the same way.
        let jitter = Rotation3::new(Vector3::new(
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
        ))
        .into_inner();
        let offset = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        let source = Camera::new(
            reference.intrinsics,
            Pose::new(
                jitter * reference.pose.rotation(),
                reference.pose.center() + offset,
            )
            .unwrap(),
        );
        let anchor = (rng.random_range(50.0..400.0), rng.random_range(50.0..300.0));
        let ray = reference.intrinsics.ray(&Pixel::new(anchor.0, anchor.1));
        let mut n = Vector3::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            -1.0,
        )
        .normalize();
        if n.dot(&ray) > 0.0 {
            n = -n;
        }
        let hyp = PlaneHypothesis::new(rng.random_range(5.0..50.0), n).unwrap();
        let Ok(h) = plane_homography(&reference, &source, &Pixel::new(anchor.0, anchor.1), &hyp)
        else {
            continue;
        };
        let mut ok = true;
        let mut local: f64 = 0.0;
        for dy in -3..=3 {
            for dx in -3..=3 {
                let q = (anchor.0 + dx as f64, anchor.1 + dy as f64);
                let Some(expected) = transfer_oracle(&reference, &source, anchor, &hyp, q) else {
                    ok = false;
                    continue;
                };
                let w = h * Vector3::new(q.0, q.1, 1.0);
                local = local.max((w.x / w.z - expected.0).hypot(w.y / w.z - expected.1));
            }
        }
        if ok {
            worst_px = worst_px.max(local);
            configs += 1;
        }
    }
    check(
        worst_px <= 1e-6,
        format!("homography disagrees with oracle by {worst_px:.3e} px"),
    )?;
    Ok(format!(
        "1000 round trips, max rel err {worst_round_trip:.2e}; 100 homographies, max {worst_px:.2e} px"
    ))
}

fn criterion_2() -> Outcome {
    let fronto = render(&SynthSpec::fronto_plane(160, 120)).map_err(|e| e.to_string())?;
    let pairs = select_pairs(&fronto.scene, &PairParams::default());
    let params = MatchParams {
        seed: 1,
        ..Default::default()
    };
    let map = matcher(&fronto.scene, &pairs, 0, &params).run();
    let fronto_err = median_relative_error(&map, &fronto.rendered[0]);
    let valid = map.valid_fraction();
    check(
        fronto_err < 0.01,
        format!("fronto-parallel median error {fronto_err:.4} >= 0.01"),
    )?;
    check(
        valid >= 0.95,
        format!("fronto-parallel valid fraction {valid:.4} < 0.95"),
    )?;

    let slanted = render(&SynthSpec::slanted_plane(160, 120)).map_err(|e| e.to_string())?;
    let pairs = select_pairs(&slanted.scene, &PairParams::default());
    let slanted_map = matcher(&slanted.scene, &pairs, 0, &params).run();
    let locked = MatchParams {
        lock_normals: true,
        ..params
    };
    let locked_map = matcher(&slanted.scene, &pairs, 0, &locked).run();
    let slanted_err = median_relative_error(&slanted_map, &slanted.rendered[0]);
    let locked_err = median_relative_error(&locked_map, &slanted.rendered[0]);
    check(
        slanted_err < 0.02,
        format!("slanted median error {slanted_err:.4} >= 0.02"),
    )?;
    check(
        slanted_err < locked_err,
        format!("slanted planes {slanted_err:.4} not better than fronto-parallel ablation {locked_err:.4}"),
    )?;
    Ok(format!(
        "fronto median {:.3}% valid {:.1}%; slanted median {:.3}% vs locked normals {:.3}%",
        100.0 * fronto_err,
        100.0 * valid,
        100.0 * slanted_err,
        100.0 * locked_err
    ))
}

fn criterion_3() -> Outcome {
    let specs = [
        ("fronto", SynthSpec::fronto_plane(160, 120)),
        ("slanted", SynthSpec::slanted_plane(160, 120)),
        ("facade", SynthSpec::facade(128, 96)),
    ];
    let mut checked = 0usize;
    for (name, spec) in specs {
        let synth = render(&spec).map_err(|e| e.to_string())?;
        let pairs = select_pairs(&synth.scene, &PairParams::default());
        for id in pairs.references() {
            let mut previous: Option<Vec<f32>> = None;
            let mut violations = 0usize;
            matcher(&synth.scene, &pairs, id, &MatchParams::default()).run_observed(|_, map| {
                if let Some(prev) = &previous {
                    violations += prev.iter().zip(map.costs()).filter(|(a, b)| b > a).count();
                    checked += prev.len();
                }
                previous = Some(map.costs().to_vec());
            });
            check(
                violations == 0,
                format!("{name} view {id}: {violations} pixels increased cost"),
            )?;
        }
    }
    Ok(format!("{checked} pixel-sweep transitions, none increased"))
}

struct Facade {
    synth: semvs::synth::SynthScene,
    pairs: semvs::PairSet,
    raw: DepthMaps,
    filtered: DepthMaps,
}

fn facade() -> Facade {
    let synth = render(&SynthSpec::facade(128, 96)).unwrap();
    let pairs = select_pairs(&synth.scene, &PairParams::default());
    let raw = compute_all(&synth.scene, &pairs, &MatchParams::default());
    let filtered = filter_all(&synth.scene, &pairs, &raw, &FilterParams::default()).unwrap();
    Facade {
        synth,
        pairs,
        raw,
        filtered,
    }
}

fn criterion_4(f: &Facade) -> Outcome {
    let gt = f.synth.ground_truth();
    let params = FilterParams { k: 2, tau: 0.01 };
    let out = filter_all(&f.synth.scene, &f.pairs, &gt, &params).map_err(|e| e.to_string())?;
    let mut visible_total = 0;
    for id in f.pairs.references() {
        let visible = mutually_visible(&f.synth, &f.pairs, id, params.k);
        visible_total += visible.len();
        let lost = visible.iter().filter(|&&i| !out[&id].is_valid(i)).count();
        check(
            lost == 0,
            format!("view {id}: {lost} mutually visible ground-truth pixels invalidated"),
        )?;
    }
    check(visible_total > 0, "no mutually visible pixels")?;

    let run =
        |k, tau| filter_all(&f.synth.scene, &f.pairs, &f.raw, &FilterParams { k, tau }).unwrap();
    let by_k: Vec<DepthMaps> = (1..=3).map(|k| run(k, 0.01)).collect();
    let by_tau: Vec<DepthMaps> = [0.005, 0.01, 0.02].iter().map(|&t| run(2, t)).collect();
    for id in f.raw.keys() {
        let k: Vec<BTreeSet<usize>> = by_k.iter().map(|m| valid_set(&m[id])).collect();
        let t: Vec<BTreeSet<usize>> = by_tau.iter().map(|m| valid_set(&m[id])).collect();
        let raw = valid_set(&f.raw[id]);
        check(
            k[0].is_subset(&raw),
            format!("view {id}: filtering added pixels"),
        )?;
        check(
            k[2].is_subset(&k[1]) && k[1].is_subset(&k[0]),
            format!("view {id}: not monotone in k"),
        )?;
        check(
            t[0].is_subset(&t[1]) && t[1].is_subset(&t[2]),
            format!("view {id}: not monotone in tau"),
        )?;
    }
    Ok(format!(
        "{visible_total} mutually visible ground-truth pixels kept; k and tau subset chains hold"
    ))
}

fn criterion_5(f: &Facade) -> Outcome {
    const BUILDING: u8 = 0;
    let params = FilterParams::default();
    let scene = &f.synth.scene;
    let mode = |filter: Option<u8>, strict| SemanticMode {
        class_filter: filter.map(|c| BTreeSet::from([c])),
        cross_view_strict: strict,
    };
    let building = fuse(
        scene,
        &f.filtered,
        &f.pairs,
        &params,
        &mode(Some(BUILDING), false),
    )
    .map_err(|e| e.to_string())?;
    check(!building.is_empty(), "building cloud is empty")?;
    check(
        building.points.iter().all(|p| p.label == BUILDING),
        "non-building label in building cloud",
    )?;
    let foreign_origin = building
        .points
        .iter()
        .filter(|p| {
            *scene
                .view(p.origin.view)
                .unwrap()
                .labels
                .get(p.origin.x, p.origin.y)
                != BUILDING
        })
        .count();
    check(
        foreign_origin == 0,
        format!("{foreign_origin} building points originate from sky/window pixels"),
    )?;

    let all = fuse(scene, &f.filtered, &f.pairs, &params, &mode(None, false))
        .map_err(|e| e.to_string())?;
    let parts = split_by_class(&all, scene.classes());
    let mut merged: Vec<_> = parts
        .values()
        .flat_map(|c| c.points.iter().cloned())
        .collect();
    let total: usize = parts.values().map(|c| c.len()).sum();
    merged.sort_by_key(|p| all.points.iter().position(|q| q == p).unwrap());
    check(
        total == all.len() && merged == all.points,
        "split_by_class is not a partition",
    )?;

    let mut noisy: Scene = scene.clone();
    let flipped = inject_label_noise(&mut noisy, 1, 0.05, &[0, 3], 5);
    let loose = fuse(&noisy, &f.filtered, &f.pairs, &params, &mode(None, false))
        .map_err(|e| e.to_string())?;
    let strict = fuse(&noisy, &f.filtered, &f.pairs, &params, &mode(None, true))
        .map_err(|e| e.to_string())?;
    let loose_origins: BTreeSet<PixelRef> = loose.points.iter().map(|p| p.origin).collect();
    let outside = strict
        .points
        .iter()
        .filter(|p| !loose_origins.contains(&p.origin))
        .count();
    check(
        outside == 0,
        format!("{outside} strict points absent from the non-strict cloud"),
    )?;
    let disagreeing = strict
        .points
        .iter()
        .flat_map(|p| p.contributors.iter().map(move |c| (p.label, c)))
        .filter(|(label, c)| *noisy.view(c.view).unwrap().labels.get(c.x, c.y) != *label)
        .count();
    check(
        disagreeing == 0,
        format!("{disagreeing} confirming neighbors disagree in label"),
    )?;
    check(
        strict.len() < loose.len(),
        "label noise did not remove any strict point",
    )?;
    Ok(format!(
        "{} building points; partition of {} points exact; {flipped} labels flipped, strict {} of non-strict {}",
        building.len(),
        all.len(),
        strict.len(),
        loose.len()
    ))
}

fn semvs_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_semvs"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    check(
        out.status.success(),
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)),
    )
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("dmap" | "ply")))
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

fn criterion_6() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (manifest, _) = generate_scene(&SynthSpec::facade(128, 96), &tmp.path().join("scene"))
        .map_err(|e| e.to_string())?;
    let scene = manifest.to_str().unwrap();
    let dir = |n: &str| tmp.path().join(n).to_string_lossy().into_owned();
    let (a, b, staged) = (dir("a"), dir("b"), dir("staged"));
    semvs_cli(&[
        "run", "--scene", scene, "--out", &a, "--seed", "11", "--split",
    ])?;
    semvs_cli(&[
        "run", "--scene", scene, "--out", &b, "--seed", "11", "--split",
    ])?;
    for stage in ["pairs", "depth", "filter"] {
        semvs_cli(&[stage, "--scene", scene, "--out", &staged, "--seed", "11"])?;
    }
    semvs_cli(&[
        "fuse", "--scene", scene, "--out", &staged, "--seed", "11", "--split",
    ])?;
    let first = artifacts(Path::new(&a));
    check(
        first.len() == 4 + 4 + 1 + 5,
        format!("unexpected artifact count {}", first.len()),
    )?;
    check(first == artifacts(Path::new(&b)), "two runs differ")?;
    check(
        first == artifacts(Path::new(&staged)),
        "staged run differs from single run",
    )?;
    let bytes: usize = first.iter().map(|(_, d)| d.len()).sum();
    Ok(format!(
        "{} artifacts ({bytes} bytes) identical across reruns and staged run",
        first.len()
    ))
}

fn layout_view(id: u32, x: f64, yaw_deg: f64) -> View {
    let k = Intrinsics::new(30.0, 30.0, 50.0, 50.0).unwrap();
    let r: Matrix3<f64> = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw_deg.to_radians())
        .into_inner()
        .transpose();
    let pose = Pose::new(r, Vector3::new(x, 0.0, 0.0)).unwrap();
    View::new(
        id,
        Camera::new(k, pose),
        GrayImage::filled(100, 100, 0.5),
        None,
        LabelMap::filled(100, 100, 0),
    )
    .unwrap()
}

fn layout(cams: &[(f64, f64)], point: Vector3<f64>) -> Scene {
    let views: Vec<View> = cams
        .iter()
        .enumerate()
        .map(|(i, &(x, yaw))| layout_view(i as u32, x, yaw))
        .collect();
    let ids = views.iter().map(|v| v.id).collect();
    Scene::new(
        views,
        vec![SparsePoint {
            xyz: point,
            visible_in: ids,
        }],
        ClassTable::default(),
    )
    .unwrap()
}

fn criterion_7() -> Outcome {
    // Cameras at x = 0, 1, 2 toed in by +10°, 0°, -10°: pairwise angles 10°,
    // 10°, 20°; baselines 1, 1, 2 with lower median 1, so every pair lies in
    // [0.05, 2]. Ranking: shared points, then angle, then id.
    let scene = layout(
        &[(0.0, 10.0), (1.0, 0.0), (2.0, -10.0)],
        Vector3::new(1.0, 0.0, 5.67),
    );
    let set = select_pairs(&scene, &PairParams::default());
    let expected = "0 1 1 10.000000 1.000000\n\
                    0 2 1 20.000000 2.000000\n\
                    1 0 1 10.000000 1.000000\n\
                    1 2 1 10.000000 1.000000\n\
                    2 1 1 10.000000 1.000000\n\
                    2 0 1 20.000000 2.000000\n";
    check(
        set.to_string() == expected,
        format!("pair set differs:\n{set}"),
    )?;

    let mut boundary = Vec::new();
    for (yaw, accept) in [(5.0, true), (60.0, true), (4.999, false), (60.001, false)] {
        let scene = layout(&[(0.0, 0.0), (0.5, -yaw)], Vector3::new(0.0, 0.0, 3.0));
        let set = select_pairs(&scene, &PairParams::default());
        check(
            !set.is_empty() == accept,
            format!("angle {yaw}°: accepted = {}", !set.is_empty()),
        )?;
        boundary.push(format!("{yaw}°:{}", if accept { "in" } else { "out" }));
    }
    Ok(format!(
        "6 hand-derived pairs exact; boundaries {}",
        boundary.join(" ")
    ))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut failed = 0;
    let mut report = |n: u32, name: &str, outcome: Outcome| match &outcome {
        Ok(detail) => println!("criterion {n} PASS  {name}: {detail}"),
        Err(why) => {
            failed += 1;
            println!("criterion {n} FAIL  {name}: {why}");
        }
    };
    report(1, "geometry round trip", criterion_1());
    report(2, "patchmatch accuracy", criterion_2());
    report(3, "cost monotonicity", criterion_3());
    let f = facade();
    report(4, "filter correctness", criterion_4(&f));
    report(5, "semantic fusion", criterion_5(&f));
    report(6, "determinism", criterion_6());
    report(7, "pair selection", criterion_7());
    println!(
        "acceptance: {} of 7 passed in {:.1}s",
        7 - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
