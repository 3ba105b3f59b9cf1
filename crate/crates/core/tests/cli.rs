mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use fracanom::cli::{distill_demo, run};
use fracanom::dataset_io::load_image;
use fracanom::distill::SgdConfig;

fn run_args(args: &[&str]) -> i32 {
    run(std::iter::once("fracanom").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn eval_json(dir: &Path, csv: &str) -> (i32, Option<f64>) {
    let scores = dir.join("scores.csv");
    let json = dir.join("report.json");
    let _ = fs::remove_file(&json);
    fs::write(&scores, csv).unwrap();
    let code = run_args(&["eval", s(&scores), "--json", s(&json)]);
    let auroc = fs::read_to_string(&json)
        .ok()
        .map(|t| serde_json::from_str::<serde_json::Value>(&t).unwrap()["image_auroc"].as_f64().unwrap());
    (code, auroc)
}

#[test]
fn gen_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    let out = dir.path().join("out");
    assert_eq!(run_args(&["gen", "--input", s(&empty), "--out", s(&out)]), 2);
    assert_eq!(run_args(&["gen", "--input", s(&dir.path().join("missing")), "--out", s(&out)]), 2);

    let input = dir.path().join("in");
    common::write_normals(&input, 2, 48, 3);
    assert_eq!(run_args(&["gen", "--input", s(&input), "--out", s(&out), "--count", "1", "--seed", "5"]), 0);
    assert_eq!(fs::read_dir(out.join("images")).unwrap().count(), 1);
    assert_eq!(fs::read_dir(out.join("masks")).unwrap().count(), 1);
    assert!(out.join("manifest.json").is_file());

    let bad_range = ["gen", "--input", s(&input), "--out", s(&out), "--rotation-range", "80,10"];
    assert_eq!(run_args(&bad_range), 2);
    let outside = ["gen", "--input", s(&input), "--out", s(&out), "--rotation-range", "10,120"];
    assert_eq!(run_args(&outside), 2);
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[fag]\nunknown_key = 1\n").unwrap();
    assert_eq!(run_args(&["gen", "--input", s(&input), "--out", s(&out), "--config", s(&cfg)]), 2);
    assert_eq!(run_args(&["gen", "--input", s(&input)]), 2);
}

#[test]
fn gen_flags_reach_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    common::write_normals(&input, 1, 48, 4);
    let out = dir.path().join("out");
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"fag": {"dilation_iterations": 2, "rotation_range": [20.0, 40.0]}}"#).unwrap();
    let args = ["gen", "--input", s(&input), "--out", s(&out), "--count", "2", "--config", s(&cfg), "--dilate-iters", "4"];
    assert_eq!(run_args(&args), 0);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["dilation_iterations"], 4);
    assert_eq!(manifest["config"]["rotation_range"], serde_json::json!([20.0, 40.0]));
}

#[test]
fn preview_panels() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("n.png");
    fracanom::dataset_io::save_rgb(&img, &common::textured(40, 30, 8)).unwrap();
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    assert_eq!(run_args(&["preview", "--input", s(&img), "--out", s(&a), "--seed", "3"]), 0);
    assert_eq!(run_args(&["preview", "--input", s(&img), "--out", s(&b), "--seed", "3"]), 0);
    assert_eq!(load_image(&a, None).unwrap().dims(), (120, 30));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(run_args(&["preview", "--input", s(&dir.path().join("none.png")), "--out", s(&a)]), 2);
    let obj = ["preview", "--input", s(&img), "--out", s(&a), "--object-threshold", "on"];
    assert_eq!(run_args(&obj), 0);
}

#[test]
fn distill_demo_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let zero = distill_demo(1, &SgdConfig { steps: 0, ..Default::default() }, true, &dir.path().join("z")).unwrap();
    assert_eq!(zero.initial_kd, zero.final_kd);
    let csv = fs::read_to_string(dir.path().join("z/loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run_args(&["distill-demo", "--seed", "4", "--steps", "3", "--out", s(&a)]), 0);
    assert_eq!(run_args(&["distill-demo", "--seed", "4", "--steps", "3", "--out", s(&b)]), 0);
    assert_eq!(fs::read(a.join("loss.csv")).unwrap(), fs::read(b.join("loss.csv")).unwrap());
    assert_eq!(fs::read_to_string(a.join("loss.csv")).unwrap().lines().count(), 5);
    assert!(a.join("attention.png").is_file());

    let off = dir.path().join("off");
    assert_eq!(run_args(&["distill-demo", "--bkd", "off", "--out", s(&off)]), 0);
    assert!(!off.join("attention.png").exists());
    assert_eq!(run_args(&["distill-demo", "--lr", "-1", "--out", s(&off)]), 2);
}

#[test]
fn eval_scores() {
    let dir = tempfile::tempdir().unwrap();
    let example = "path,score,label\na,0.1,0\nb,0.4,0\nc,0.35,1\nd,0.8,1\n";
    assert_eq!(eval_json(dir.path(), example), (0, Some(0.75)));
    assert_eq!(eval_json(dir.path(), "a,0.1,0\nb,0.9,1\n"), (0, Some(1.0)));
    assert_eq!(eval_json(dir.path(), "a,0.1,1\nb,0.9,1\n"), (2, None));
    assert_eq!(eval_json(dir.path(), "a,0.1,7\n"), (2, None));
}

#[test]
fn binary_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("s.csv");
    fs::write(&scores, "a,0.3,0\nb,0.2,0\n").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_fracanom")).arg("eval").arg(&scores).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let help = Command::new(env!("CARGO_BIN_EXE_fracanom")).arg("--help").output().unwrap();
    assert!(help.status.success());
    assert!(String::from_utf8_lossy(&help.stdout).contains("distill-demo"));
}
