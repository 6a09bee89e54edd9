use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn labelnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labelnav")).args(args).output().unwrap()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_db(dir: &TempDir) -> PathBuf {
    let db = path(dir, "db.json");
    let out = labelnav(&["gen-db", "--region", "250x150", "--count", "215", "--seed", "7", "--out", s(&db)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    db
}

fn simulate(dir: &TempDir, db: &Path, extra: &[&str]) -> PathBuf {
    let scene = path(dir, "scene.json");
    let mut args = vec!["simulate", "--db", s(db), "--x", "120", "--y", "70", "--out", s(&scene)];
    args.extend_from_slice(extra);
    let out = labelnav(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    scene
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn gen_db_writes_requested_objects() {
    let dir = TempDir::new().unwrap();
    let db = gen_db(&dir);
    let v: Value = serde_json::from_slice(&std::fs::read(&db).unwrap()).unwrap();
    assert_eq!(v["objects"].as_array().unwrap().len(), 215);
    assert_eq!(v["region"]["max"], serde_json::json!([250.0, 150.0]));

    let again = path(&dir, "again.json");
    labelnav(&["gen-db", "--region", "250x150", "--count", "215", "--seed", "7", "--out", s(&again)]);
    assert_eq!(std::fs::read(&db).unwrap(), std::fs::read(&again).unwrap());

    let empty = path(&dir, "empty.json");
    assert!(labelnav(&["gen-db", "--count", "0", "--out", s(&empty)]).status.success());
    let v: Value = serde_json::from_slice(&std::fs::read(&empty).unwrap()).unwrap();
    assert!(v["objects"].as_array().unwrap().is_empty());
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = labelnav(&["gen-db", "--region", "250by150", "--out", s(&path(&dir, "x.json"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = labelnav(&["match", "--db", "missing.json", "--scene", "missing.json"]);
    assert_eq!(out.status.code(), Some(2));
    let db = gen_db(&dir);
    let scene = simulate(&dir, &db, &[]);
    let out = labelnav(&["match", "--db", s(&db), "--scene", s(&scene), "--prior", "circle:1,2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = labelnav(&["match", "--db", s(&db), "--scene", s(&scene), "--n-min", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn noiseless_scene_is_located() {
    let dir = TempDir::new().unwrap();
    let db = gen_db(&dir);
    let scene = simulate(&dir, &db, &[]);
    let out = labelnav(&["match", "--db", s(&db), "--scene", s(&scene), "--hfov-deg", "35", "--top-k", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["status"], "accepted");
    assert!((v["x"].as_f64().unwrap() - 120.0).abs() < 1e-6);
    assert!((v["y"].as_f64().unwrap() - 70.0).abs() < 1e-6);
    assert!((v["height_m"].as_f64().unwrap() - 100.0).abs() < 0.5);
    assert!(v["n_matched"].as_u64().unwrap() >= 6);
    assert!(!v["candidates"].as_array().unwrap().is_empty());

    let out = labelnav(&["match", "--db", s(&db), "--scene", s(&scene), "--prior", "disc:120,70,15"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn rejections_exit_3() {
    let dir = TempDir::new().unwrap();
    let db = gen_db(&dir);
    let scene = path(&dir, "small.json");
    let objs: Vec<Value> = (0..5)
        .map(|k| serde_json::json!({"label": "obj", "u": 100.0 + 80.0 * k as f64, "v": 50.0 + 70.0 * k as f64}))
        .collect();
    std::fs::write(&scene, serde_json::json!({"image": {"w": 640, "h": 480}, "objects": objs}).to_string()).unwrap();
    let out = labelnav(&["match", "--db", s(&db), "--scene", s(&scene)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["status"], "rejected");

    let sim = simulate(&dir, &db, &[]);
    let text = std::fs::read_to_string(&sim).unwrap().replace("\"obj\"", "\"lake\"");
    std::fs::write(&sim, text).unwrap();
    let out = labelnav(&["match", "--db", s(&db), "--scene", s(&sim)]);
    assert_eq!(out.status.code(), Some(3));

    let out = labelnav(&["match", "--db", s(&db), "--scene", s(&sim), "--label-map", "lake=obj"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn match_ignores_truth_record() {
    let dir = TempDir::new().unwrap();
    let db = gen_db(&dir);
    let scene = simulate(&dir, &db, &["--sigma-px", "1", "--seed", "3"]);
    let base = labelnav(&["match", "--db", s(&db), "--scene", s(&scene)]).stdout;
    let mut v: Value = serde_json::from_slice(&std::fs::read(&scene).unwrap()).unwrap();
    assert!(v.get("truth").is_some());
    for (k, t) in [(-1e9, 5.0), (0.0, 1e-300), (42.0, -7.5), (f64::MAX, 3.0)].into_iter().enumerate() {
        v["truth"] = serde_json::json!({"x": t.0, "y": t.1, "alt": k as f64 * 13.0});
        let p = path(&dir, &format!("fuzz{k}.json"));
        std::fs::write(&p, v.to_string()).unwrap();
        assert_eq!(labelnav(&["match", "--db", s(&db), "--scene", s(&p)]).stdout, base);
    }
    v.as_object_mut().unwrap().remove("truth");
    let p = path(&dir, "no_truth.json");
    std::fs::write(&p, v.to_string()).unwrap();
    assert_eq!(labelnav(&["match", "--db", s(&db), "--scene", s(&p)]).stdout, base);
}

const SMOKE: &str = r#"
[output]
report_csv = "r.csv"
report_json = "r.json"
trials_csv = "t.csv"

[database]
width_m = 140.0
height_m = 110.0
n_objects = 110
seed = 3
labels = { obj = 1.0 }

[defaults]
n_trials = 4
inset = true

[[case]]
name = "quiet"

[[case]]
name = "noisy"
sigma_att_deg = 0.05
sigma_px = 3.0
"#;

fn evaluate(dir: &TempDir, config: &str, workers: &str) -> Output {
    let cfg = path(dir, "run.toml");
    std::fs::write(&cfg, config).unwrap();
    labelnav(&["evaluate", "--config", s(&cfg), "--out-dir", s(dir.path()), "--workers", workers])
}

#[test]
fn evaluate_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let out = evaluate(&a, SMOKE, "1");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("quiet: 4 trials in"));
    assert!(evaluate(&b, SMOKE, "2").status.success());
    for f in ["r.csv", "r.json", "t.csv"] {
        assert_eq!(std::fs::read(path(&a, f)).unwrap(), std::fs::read(path(&b, f)).unwrap(), "{f}");
    }
    let csv = std::fs::read_to_string(path(&a, "r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(!csv.contains("time"));
}

#[test]
fn evaluate_rejects_bad_configs() {
    let dir = TempDir::new().unwrap();
    let dup = format!("{SMOKE}\n[[case]]\nname = \"quiet\"\n");
    let out = evaluate(&dir, &dup, "1");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate"));

    let unknown = SMOKE.replace("sigma_px = 3.0", "sigma_pixels = 3.0");
    assert_eq!(evaluate(&dir, &unknown, "1").status.code(), Some(2));

    let no_trials = SMOKE.replace("n_trials = 4", "n_trials = 0");
    assert_eq!(evaluate(&dir, &no_trials, "1").status.code(), Some(2));
}

#[test]
fn bundled_config_parses() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/table1.toml");
    let dir = TempDir::new().unwrap();
    let out = labelnav(&["evaluate", "--config", s(&cfg), "--out-dir", s(dir.path()), "--trials", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(path(&dir, "table1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}
