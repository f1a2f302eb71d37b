//! VO runner, metrics, report emission and the command-line front end.

use std::fs;
use std::path::Path;

use attnvo::data::*;
use attnvo::harness::cli::{read_masks, run, write_masks, Cli};
use attnvo::harness::*;
use attnvo::vision::{mask_reduction, BinaryMask};
use attnvo::Error;
use clap::Parser;

fn straight(dir: &Path, frames: usize, seed: u64) -> Dataset {
    let cfg = SyntheticSceneConfig {
        width: 128,
        height: 128,
        frame_count: frames,
        rng_seed: seed,
        trajectory: TrajectoryKind::Straight { speed: 2.0 },
        ..SyntheticSceneConfig::default()
    };
    synth_generate(&cfg, dir).unwrap();
    Dataset::load(dir).unwrap()
}

fn masks(ds: &Dataset, keep: impl Fn(usize, usize) -> bool) -> Vec<BinaryMask> {
    ds.images
        .iter()
        .map(|img| {
            let mut m = BinaryMask::for_image(img.width(), img.height(), 32, false).unwrap();
            for r in 0..m.rows() {
                for c in 0..m.cols() {
                    m.set(r, c, keep(r, c));
                }
            }
            m
        })
        .collect()
}

fn cli(args: &[&str]) -> attnvo::Result<()> {
    run(Cli::try_parse_from(std::iter::once("attnvo").chain(args.iter().copied())).unwrap())
}

#[test]
fn exact_features_on_circle_reproduce_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticSceneConfig {
        export_exact_features: true,
        ..SyntheticSceneConfig::default()
    };
    synth_generate(&cfg, dir.path()).unwrap();
    let ds = Dataset::load(dir.path()).unwrap();
    let vo = VoConfig {
        detector: DetectorConfig::External {
            dir: dir.path().join("features"),
        },
        ..VoConfig::default()
    };
    let (est, report) = run_vo(&ds, &vo, None).unwrap();
    assert_eq!(est.poses.len(), 100);
    assert_eq!(est.poses[0], attnvo::geometry::Pose::identity());
    assert!(report.ate_rmse < 0.05, "ATE {}", report.ate_rmse);
    assert_eq!(report.skipped_pairs, 0);
    assert_eq!(report.outliers.mean, 0.0);
}

#[test]
fn all_true_masks_are_neutral() {
    let dir = tempfile::tempdir().unwrap();
    let ds = straight(dir.path(), 20, 0);
    let vo = VoConfig::default();
    let (est_a, a) = run_vo(&ds, &vo, None).unwrap();
    let (est_b, b) = run_vo(&ds, &vo, Some(&masks(&ds, |_, _| true))).unwrap();
    assert_eq!(est_a, est_b);
    assert!(b.config.masked && !a.config.masked);
    let mut b = b.without_timing();
    b.config.masked = false;
    assert_eq!(a.without_timing(), b);
}

#[test]
fn reruns_are_identical_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let ds = straight(dir.path(), 20, 3);
    let vo = VoConfig {
        seed: 11,
        ..VoConfig::default()
    };
    let (ea, a) = run_vo(&ds, &vo, None).unwrap();
    let (eb, b) = run_vo(&ds, &vo, None).unwrap();
    assert_eq!(ea, eb);
    assert_eq!(a.without_timing().to_json().unwrap(), b.without_timing().to_json().unwrap());
    assert!(a.wall_time_s > 0.0);
}

#[test]
fn mask_reduction_is_the_mean_over_applied_masks() {
    let dir = tempfile::tempdir().unwrap();
    let ds = straight(dir.path(), 12, 0);
    // alternate between two patterns so the mean is not a single mask's value
    let mut ms = masks(&ds, |r, _| r != 0);
    for m in ms.iter_mut().skip(1).step_by(2) {
        m.set(1, 1, false);
        m.set(2, 2, false);
    }
    let (_, rep) = run_vo(&ds, &VoConfig::default(), Some(&ms)).unwrap();
    let expected = ms.iter().map(mask_reduction).sum::<f64>() / ms.len() as f64;
    assert!((rep.mask_reduction - expected).abs() < 1e-15);
    assert!((expected - (0.25 + 0.375) / 2.0).abs() < 1e-15);
}

#[test]
fn empty_masks_make_the_run_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let ds = straight(dir.path(), 10, 0);
    let err = run_vo(&ds, &VoConfig::default(), Some(&masks(&ds, |_, _| false))).unwrap_err();
    assert!(matches!(err, Error::RunDegenerate { skipped: 9, total: 9 }));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn mismatched_masks_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ds = straight(dir.path(), 5, 0);
    let mut ms = masks(&ds, |_, _| true);
    ms.pop();
    assert!(matches!(run_vo(&ds, &VoConfig::default(), Some(&ms)), Err(Error::InvalidArgument(_))));
    let wrong = vec![BinaryMask::for_image(64, 64, 16, true).unwrap(); 5];
    assert!(run_vo(&ds, &VoConfig::default(), Some(&wrong)).is_err());
}

#[test]
fn static_camera_has_subpixel_reprojection() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticSceneConfig {
        width: 128,
        height: 128,
        frame_count: 6,
        trajectory: TrajectoryKind::Straight { speed: 1e-9 },
        ..SyntheticSceneConfig::default()
    };
    synth_generate(&cfg, dir.path()).unwrap();
    let ds = Dataset::load(dir.path()).unwrap();
    let r = reprojection_summary(&ds, &VoConfig::default(), None).unwrap();
    assert!(r < 0.5, "{r}");
}

#[test]
fn report_round_trips_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let ds = straight(&dir.path().join("ds"), 12, 0);
    let (_, rep) = run_vo(&ds, &VoConfig::default(), None).unwrap();

    let json = dir.path().join("out/report.json");
    emit_report(&rep, ReportFormat::Json, &json, None).unwrap();
    let back = TrajectoryReport::from_json(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(back, rep);

    let svg = dir.path().join("out/trajectory.svg");
    let written = emit_report(&rep, ReportFormat::Svg, &svg, Some(&[1.0, 0.5, 0.25])).unwrap();
    assert_eq!(written.len(), 2);
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polyline").count(), 2);
    assert!(text.contains("class=\"estimate\"") && text.contains("class=\"groundtruth\""));
    assert!(!text.contains("href"));
    let loss = fs::read_to_string(&written[1]).unwrap();
    assert_eq!(loss.matches("<polyline").count(), 1);
    assert_eq!(emit_report(&rep, ReportFormat::Svg, &svg, None).unwrap().len(), 1);

    let unwritable = dir.path().join("out/report.json/nested.csv");
    assert!(matches!(emit_report(&rep, ReportFormat::Csv, &unwritable, None), Err(Error::Io(_))));
}

#[test]
fn report_schemas_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let ds = straight(dir.path(), 8, 0);
    let (_, rep) = run_vo(&ds, &VoConfig::default(), None).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");

    let csv = rep.to_csv();
    let names: Vec<&str> = csv.lines().map(|l| l.split(',').next().unwrap()).collect();
    let expected_csv = fs::read_to_string(golden.join("report_metrics.txt")).unwrap();
    assert_eq!(names, expected_csv.lines().collect::<Vec<_>>());
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));

    let value: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
    let mut keys: Vec<String> = Vec::new();
    collect_keys(&value, "", &mut keys);
    let expected_json = fs::read_to_string(golden.join("report_keys.txt")).unwrap();
    assert_eq!(keys, expected_json.lines().map(String::from).collect::<Vec<_>>());
}

/// Dotted key paths; arrays contribute their first element's keys once.
fn collect_keys(v: &serde_json::Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, child) in map {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                out.push(path.clone());
                collect_keys(child, &path, out);
            }
        }
        serde_json::Value::Array(items) => {
            if let Some(first) = items.first() {
                collect_keys(first, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

#[test]
fn comparing_a_report_with_itself_gives_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let ds = straight(dir.path(), 8, 0);
    let (_, rep) = run_vo(&ds, &VoConfig::default(), None).unwrap();
    let cmp = compare_reports(&rep, &rep).unwrap();
    assert_eq!(cmp.rows.len(), rep.metrics().len());
    assert!(cmp.rows.iter().all(|r| r.delta == 0.0));
    let mut other = rep.clone();
    other.frames += 1;
    assert!(compare_reports(&rep, &other).is_err());
}

#[test]
fn masks_survive_a_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = straight(&dir.path().join("ds"), 4, 0);
    let ms = masks(&ds, |r, c| (r + c) % 2 == 0);
    write_masks(&dir.path().join("masks"), &ms).unwrap();
    assert_eq!(read_masks(&dir.path().join("masks"), 4).unwrap(), ms);
    assert!(matches!(read_masks(&dir.path().join("masks"), 5), Err(Error::NotFound(_))));
}

#[test]
fn command_line_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_string_lossy().into_owned();
    fs::write(
        p("scene.json"),
        r#"{"width": 128, "height": 128, "frame_count": 13, "trajectory": {"kind": "straight", "speed": 2.0}}"#,
    )
    .unwrap();
    fs::write(p("train.json"), r#"{"epochs": 2, "downscale": 2}"#).unwrap();

    cli(&["synth-gen", "--config", &p("scene.json"), "--out", &p("ds"), "--seed", "4"]).unwrap();
    cli(&["train", "--dataset", &p("ds"), "--config", &p("train.json"), "--out", &p("ck/m.ckpt"), "--seed", "1"]).unwrap();
    assert_eq!(attnvo::learn::read_loss_csv(&dir.path().join("ck/m_loss.csv")).unwrap().len(), 2);
    cli(&["infer-mask", "--dataset", &p("ds"), "--ckpt", &p("ck/m.ckpt"), "--out", &p("masks")]).unwrap();
    let ms = read_masks(&dir.path().join("masks"), 13).unwrap();
    assert!(ms.iter().all(|m| m.block_size() == 32 && m.kept_count() == 9));

    for name in ["a", "b"] {
        cli(&["vo-run", "--dataset", &p("ds"), "--seed", "5", "--report", &p(&format!("{name}.json"))]).unwrap();
    }
    let load = |n: &str| TrajectoryReport::from_json(&fs::read_to_string(p(n)).unwrap()).unwrap();
    assert_eq!(load("a.json").without_timing(), load("b.json").without_timing());

    cli(&[
        "vo-run", "--dataset", &p("ds"), "--masks", &p("masks"), "--seed", "5", "--report", &p("m.json"),
        "--csv", &p("m.csv"), "--svg", &p("m.svg"), "--loss", &p("ck/m_loss.csv"),
    ])
    .unwrap();
    assert!((load("m.json").mask_reduction - 7.0 / 16.0).abs() < 1e-12);
    assert!(dir.path().join("m_loss.svg").exists());

    cli(&["evaluate", "--dataset", &p("ds"), "--compare", &p("a.json"), &p("b.json"), "--out", &p("cmp.csv")]).unwrap();
    let table = fs::read_to_string(p("cmp.csv")).unwrap();
    for line in table.lines().skip(1) {
        let delta: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        let metric = line.split(',').next().unwrap();
        if !metric.contains("time") {
            assert_eq!(delta, 0.0, "{line}");
        }
    }
    assert!(dir.path().join("cmp.md").exists());

    let bad = cli(&["vo-run", "--dataset", &p("ds"), "--detector", "orb", "--report", &p("x.json")]).unwrap_err();
    assert_eq!(bad.exit_code(), 2);
    let missing_masks = cli(&[
        "vo-run", "--dataset", &p("ds"), "--detector", "fast", "--masks", &p("none"), "--report", &p("x.json"),
    ])
    .unwrap_err();
    assert_eq!(missing_masks.exit_code(), 2);
}

#[test]
fn trajectory_estimate_from_world_poses_has_zero_self_error() {
    let dir = tempfile::tempdir().unwrap();
    let ds = straight(dir.path(), 6, 0);
    let est = TrajectoryEstimate::from_world_poses(&ds.groundtruth.iter().map(|g| g.pose).collect::<Vec<_>>());
    assert_eq!(est.poses[0], attnvo::geometry::Pose::identity());
    assert!(ate_rmse(&est, &ds.groundtruth).unwrap() < 1e-12);
    assert!(matches!(ate_rmse(&est, &ds.groundtruth[1..]), Err(Error::InvalidArgument(_))));
}
