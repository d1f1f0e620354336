//! End-to-end runs of the `railpath` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use railpath::io::{load_heatmap, save_heatmap, save_scene};
use railpath::{GridDims, Heatmap, RailPolyline, Scene, Track};
use serde_json::Value;

fn railpath(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_railpath"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Two small scenes with one switch and one distractor in `dir/data`.
fn synth(dir: &Path, extra: &[&str]) -> Vec<PathBuf> {
    let mut args = vec![
        "synth",
        "--out-dir",
        "data",
        "--count",
        "2",
        "--width",
        "320",
        "--height",
        "180",
        "--gauge-bottom",
        "48",
        "--gauge-top",
        "6",
        "--curvature",
        "20",
        "--distractors",
        "1",
        "--seed",
        "3",
    ];
    args.extend_from_slice(extra);
    ok(&railpath(dir, &args)).lines().map(PathBuf::from).collect()
}

#[test]
fn synth_extract_eval_recovers_every_path() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let stems = synth(dir, &[]);
    assert_eq!(
        stems,
        [PathBuf::from("data/scene0000"), PathBuf::from("data/scene0001")]
    );
    for suffix in [
        ".scene.json",
        ".center.tpeh",
        ".prob.tpeh",
        ".dist_left.tpeh",
        ".dist_right.tpeh",
        ".seg.tpeh",
    ] {
        assert!(dir.join(format!("data/scene0000{suffix}")).exists(), "{suffix}");
    }

    ok(&railpath(
        dir,
        &[
            "extract",
            "data/scene0000",
            "data/scene0001",
            "--out-dir",
            "paths",
        ],
    ));
    ok(&railpath(
        dir,
        &[
            "eval",
            "data/scene0000",
            "data/scene0001",
            "--paths-dir",
            "paths",
            "--seg-dir",
            "data",
            "--out",
            "m.json",
        ],
    ));
    let m = json(dir.join("m.json"));
    assert_eq!(m["images"].as_array().unwrap().len(), 2);
    assert_eq!(m["images"][0]["name"], "scene0000");
    for level in ["tp_pixel", "all_pixel", "path_level"] {
        assert!(m["micro"][level]["precision"].as_f64().unwrap() > 0.99, "{level}");
        assert!(m["micro"][level]["recall"].as_f64().unwrap() > 0.99, "{level}");
        assert!(m["macro"][level]["f1"].is_number());
    }
    assert_eq!(m["micro"]["path_level"]["fp"], 0);
    assert_eq!(m["micro"]["path_level"]["fn"], 0);
    // The predicted masks are the ground truth here.
    assert_eq!(m["mean_miou"], 1.0);
    assert!(m["config"]["tree"]["tau_seg"].is_number());
}

#[test]
fn three_channel_extraction_with_snapping() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    ok(&railpath(
        dir,
        &["extract", "data/scene0000", "--mode", "three-channel", "--seg"],
    ));
    let doc = json(dir.join("data/scene0000.paths.json"));
    assert_eq!(doc["config"]["mode"], "three_channel");
    assert!(!doc["paths"].as_array().unwrap().is_empty());
    assert_eq!(doc["paths"][0]["triplets"][0]["mode"], "three_channel");
    let out = ok(&railpath(dir, &["eval", "data/scene0000"]));
    let m: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(m["micro"]["path_level"]["recall"], 1.0);
}

#[test]
fn gtgen_reproduces_noiseless_synth_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    ok(&railpath(
        dir,
        &["gtgen", "data/scene0001.scene.json", "--out-dir", "gt"],
    ));
    for suffix in [
        ".center.tpeh",
        ".prob.tpeh",
        ".dist_left.tpeh",
        ".dist_right.tpeh",
        ".seg.tpeh",
    ] {
        let a = std::fs::read(dir.join(format!("data/scene0001{suffix}"))).unwrap();
        let b = std::fs::read(dir.join(format!("gt/scene0001{suffix}"))).unwrap();
        assert_eq!(a, b, "{suffix}");
    }
}

#[test]
fn noise_flags_perturb_heatmaps_but_not_scenes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    std::fs::rename(dir.join("data"), dir.join("clean")).unwrap();
    synth(
        dir,
        &["--value-sigma", "0.5", "--jitter-sigma", "1", "--dropout", "0.05"],
    );
    let scene = |d: &str| std::fs::read(dir.join(format!("{d}/scene0000.scene.json"))).unwrap();
    assert_eq!(scene("clean"), scene("data"));
    let clean = load_heatmap(&dir.join("clean/scene0000.center.tpeh")).unwrap();
    let noisy = load_heatmap(&dir.join("data/scene0000.center.tpeh")).unwrap();
    assert_ne!(clean, noisy);
    ok(&railpath(dir, &["extract", "data/scene0000"]));
    let m: Value = serde_json::from_str(&ok(&railpath(dir, &["eval", "data/scene0000"]))).unwrap();
    assert!(m["micro"]["tp_pixel"]["recall"].as_f64().unwrap() > 0.9);
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    let run = |jobs: &str, out: &str| {
        ok(&railpath(
            dir,
            &[
                "--jobs",
                jobs,
                "extract",
                "data/scene0000",
                "data/scene0001",
                "--out-dir",
                out,
            ],
        ));
    };
    run("1", "one");
    run("4", "four");
    for s in ["scene0000", "scene0001"] {
        let a = std::fs::read(dir.join(format!("one/{s}.paths.json"))).unwrap();
        let b = std::fs::read(dir.join(format!("four/{s}.paths.json"))).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn config_file_is_merged_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"tree": {"tau_seg": 5.5, "tau_start": 60.0}, "fit_degree": 2}"#,
    )
    .unwrap();
    ok(&railpath(
        dir,
        &[
            "extract",
            "data/scene0000",
            "--config",
            "cfg.json",
            "--tau-start",
            "70",
        ],
    ));
    let cfg = &json(dir.join("data/scene0000.paths.json"))["config"];
    assert_eq!(cfg["tree"]["tau_seg"], 5.5);
    assert_eq!(cfg["tree"]["tau_start"], 70.0);
    assert_eq!(cfg["fit_degree"], 2);
    assert_eq!(cfg["peak"]["nms_radius"], 2);

    std::fs::write(dir.join("typo.json"), r#"{"tree": {"tau_sge": 5.5}}"#).unwrap();
    let out = railpath(dir, &["extract", "data/scene0000", "--config", "typo.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tree.tau_sge"));
}

#[test]
fn render_writes_an_overview_and_one_image_per_path() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    ok(&railpath(dir, &["extract", "data/scene0000"]));
    ok(&railpath(
        dir,
        &["render", "data/scene0000", "--score", "--out-dir", "png"],
    ));
    let n_paths = json(dir.join("data/scene0000.paths.json"))["paths"]
        .as_array()
        .unwrap()
        .len();
    let mut names: Vec<String> = std::fs::read_dir(dir.join("png"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut want: Vec<String> = (0..n_paths).map(|i| format!("scene0000.path{i}.png")).collect();
    want.push("scene0000.overview.png".into());
    want.sort();
    assert_eq!(names, want);

    let first = std::fs::read(dir.join("png/scene0000.overview.png")).unwrap();
    ok(&railpath(
        dir,
        &["render", "data/scene0000", "--score", "--out-dir", "png"],
    ));
    assert_eq!(
        first,
        std::fs::read(dir.join("png/scene0000.overview.png")).unwrap()
    );
    assert_eq!(&first[1..4], b"PNG");
}

#[test]
fn bench_reports_timings() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, &[]);
    let out = ok(&railpath(
        dir,
        &[
            "--jobs",
            "1",
            "bench",
            "data/scene0000",
            "--runs",
            "5",
            "--warmup",
            "1",
        ],
    ));
    let r: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(r["runs"], 5);
    assert_eq!(r["threads"], 1);
    let (min, med, max) = (
        r["min_ms"].as_f64().unwrap(),
        r["median_ms"].as_f64().unwrap(),
        r["max_ms"].as_f64().unwrap(),
    );
    assert!(min <= med && med <= max);
}

#[test]
fn exit_codes_classify_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // Success, including help.
    assert_eq!(code(&railpath(dir, &["--help"])), 0);

    // Usage and validation errors.
    assert_eq!(code(&railpath(dir, &["extract"])), 1);
    assert_eq!(code(&railpath(dir, &["frobnicate"])), 1);
    std::fs::write(
        dir.join("bad.scene.json"),
        r#"{"width": 8, "height": 8, "tracks": [{"id": 0}]}"#,
    )
    .unwrap();
    assert_eq!(code(&railpath(dir, &["gtgen", "bad.scene.json"])), 1);
    let swapped = r#"{"width": 8, "height": 8, "tracks": [
        {"id": 2, "left": [[6, 7], [6, 0]], "right": [[2, 7], [2, 0]]}]}"#;
    std::fs::write(dir.join("swapped.scene.json"), swapped).unwrap();
    let out = railpath(dir, &["gtgen", "swapped.scene.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("track 2"));
    assert_eq!(
        code(&railpath(dir, &["synth", "--out-dir", "x", "--gauge-top", "1"])),
        1
    );
    std::fs::write(dir.join("junk.center.tpeh"), b"NOPE").unwrap();
    assert_eq!(code(&railpath(dir, &["extract", "junk"])), 1);

    // I/O errors.
    assert_eq!(code(&railpath(dir, &["extract", "missing"])), 2);
    assert_eq!(code(&railpath(dir, &["eval", "missing"])), 2);

    // No track near the bottom centre.
    let dims = GridDims::new(64, 32).unwrap();
    save_heatmap(&Heatmap::zeros(dims), &dir.join("empty.center.tpeh")).unwrap();
    let out = railpath(dir, &["extract", "empty"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));

    // A batch reports the first failure in input order and still writes
    // the images that succeed.
    let rail = |x: f64| RailPolyline::new(vec![[x, 31.0], [x, 0.0]]).unwrap();
    let scene = Scene::new(dims, vec![Track::new(0, rail(26.0), rail(38.0))]).unwrap();
    save_scene(&scene, &dir.join("good.scene.json")).unwrap();
    ok(&railpath(dir, &["gtgen", "good.scene.json"]));
    let out = railpath(dir, &["extract", "empty", "good", "missing"]);
    assert_eq!(code(&out), 3);
    assert!(dir.join("good.paths.json").exists());
}
