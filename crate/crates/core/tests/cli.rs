use std::path::Path;
use std::process::{Command, Output};

use keynerf::field::{FieldConfig, FieldParams};
use keynerf::io::{read_checkpoint, read_metrics_csv, read_pfm, read_schedule};

fn keynerf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keynerf")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = keynerf(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn full_command_line_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    ok(&["synth", "--out", p(&scene), "--views", "24", "--size", "16", "--holdout", "2"]);
    assert!(scene.join("transforms_train.json").exists() && scene.join("test/r_001.png").exists());

    let sched = dir.path().join("views.json");
    let out = ok(&["select-views", "--scene", p(&scene), "--k", "6", "--out", p(&sched)]);
    let file = read_schedule(&sched).unwrap();
    assert!(out.contains(&format!("K_min = {}", file.k_min)));
    assert_eq!(file.order.len(), 24);
    assert_eq!(file.selected, file.order[..6]);
    assert_eq!(file.coverage, file.order[..file.k_min]);

    let ent = dir.path().join("ent/view0.pfm");
    ok(&["entropy", "--scene", p(&scene), "--view", "0", "--window", "5", "--out", p(&ent)]);
    let (w, h, values) = read_pfm(&ent).unwrap();
    assert_eq!((w, h), (16, 16));
    assert!(values.iter().all(|&e| (0.0..=25f32.log2()).contains(&e)));
    assert!(ent.with_extension("pgm").exists());

    // zero iterations: the checkpoint is the seeded initialization
    let field = FieldConfig { l_pos: 2, l_dir: 1, trunk_depth: 1, trunk_width: 8, head_width: 4 };
    let config = serde_json::json!({
        "scene": "scene",
        "eval_split": "test",
        "out_dir": "run",
        "train": { "k": 4, "n_iter": 0, "seed": 5, "field": field },
        "render": { "n_samples": 8 }
    });
    let cfg_path = dir.path().join("run.json");
    std::fs::write(&cfg_path, config.to_string()).unwrap();
    ok(&["train", "--config", p(&cfg_path)]);
    let run = dir.path().join("run");
    assert_eq!(read_checkpoint(&run.join("checkpoint.bin")).unwrap(), FieldParams::<f32>::init(field, 5).unwrap());
    let chosen: Vec<usize> = serde_json::from_slice(&std::fs::read(run.join("views.json")).unwrap()).unwrap();
    assert_eq!(chosen, file.order[..4]);
    assert!(read_metrics_csv(&run.join("metrics.csv")).unwrap().is_empty());

    let ckpt = run.join("checkpoint.bin");
    let png = dir.path().join("render/pose1.png");
    ok(&["render", "--ckpt", p(&ckpt), "--scene", p(&scene), "--pose", "1", "--samples", "8", "--out", p(&png)]);
    let img = image::open(&png).unwrap();
    assert_eq!((img.width(), img.height()), (16, 16));

    let report = dir.path().join("eval.json");
    let out = ok(&["eval", "--ckpt", p(&ckpt), "--scene", p(&scene), "--views", "0,1", "--lpips", "0.2", "--samples", "8", "--out", p(&report)]);
    let json: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(json["psnr"].as_f64().unwrap() > 0.0);
    assert!(json["avg"].as_f64().unwrap() > 0.0);
    let csv = std::fs::read_to_string(report.with_extension("csv")).unwrap();
    assert!(csv.starts_with("psnr,ssim,lpips,avg\n"));
}

#[test]
fn short_training_run_logs_and_improves() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    ok(&["synth", "--out", p(&scene), "--views", "12", "--size", "16", "--holdout", "1"]);
    let config = serde_json::json!({
        "scene": p(&scene),
        "eval_split": "test",
        "out_dir": p(&dir.path().join("run")),
        "train": {
            "k": 4, "n_iter": 60, "batch": 128, "lr": 5e-3, "log_every": 20, "eval_every": 60,
            "field": { "l_pos": 4, "l_dir": 1, "trunk_depth": 2, "trunk_width": 16, "head_width": 8 }
        },
        "render": { "n_samples": 16 }
    });
    let cfg_path = dir.path().join("run.json");
    std::fs::write(&cfg_path, config.to_string()).unwrap();
    ok(&["train", "--config", p(&cfg_path)]);
    let rows = read_metrics_csv(&dir.path().join("run/metrics.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.iteration).collect::<Vec<_>>(), [20, 40, 60]);
    assert!(rows[2].loss < rows[0].loss);
    assert!(rows[2].psnr.unwrap().is_finite() && rows[0].psnr.is_none());
}

#[test]
fn eval_of_ground_truth_views_is_perfect() {
    use keynerf::metrics::{psnr, ssim_rgb};
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("s");
    ok(&["synth", "--out", p(&scene), "--views", "4", "--size", "16", "--holdout", "1"]);
    let a = keynerf::io::load_scene(&scene, "train").unwrap();
    assert_eq!(psnr(&a.images[0], &a.images[0]).unwrap(), f64::INFINITY);
    assert_eq!(ssim_rgb(&a.images[0], &a.images[0]).unwrap(), 1.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // usage errors
    assert_eq!(keynerf(&["select-views"]).status.code(), Some(2));
    assert_eq!(keynerf(&["synth", "--out", "x", "--views", "0"]).status.code(), Some(2));

    let scene = dir.path().join("one");
    ok(&["synth", "--out", p(&scene), "--views", "1", "--size", "8", "--holdout", "0"]);
    let out = keynerf(&["select-views", "--scene", p(&scene), "--k", "1", "--out", p(&dir.path().join("v.json"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let scene = dir.path().join("many");
    ok(&["synth", "--out", p(&scene), "--views", "12", "--size", "8", "--holdout", "0"]);
    let out = keynerf(&["select-views", "--scene", p(&scene), "--k", "1", "--out", p(&dir.path().join("v.json"))]);
    assert_eq!(out.status.code(), Some(2), "K below K_min");
    assert_eq!(keynerf(&["entropy", "--scene", p(&scene), "--view", "99", "--out", p(&dir.path().join("e.pfm"))]).status.code(), Some(2));

    let missing = keynerf(&["render", "--ckpt", p(&dir.path().join("nope.bin")), "--scene", p(&scene), "--pose", "0", "--out", "x.png"]);
    assert_eq!(missing.status.code(), Some(4));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"scene": "many", "out_dir": "r", "bogus": 1}"#).unwrap();
    assert_eq!(keynerf(&["train", "--config", p(&bad)]).status.code(), Some(4));
}
