use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gert")).args(args).output().expect("gert runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

/// Every file under `dir`, by relative path.
fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        if e.file_type().unwrap().is_file() {
            out.insert(e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap());
        }
    }
    out
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&gert(&["sweep", "--frobnicate"])), 2);
    assert_eq!(code(&gert(&["sweep"])), 2);
    assert_eq!(code(&gert(&["trace", "--scene", "x", "--tx", "1,2", "--rx", "0,0,0"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "seed = 1\n[grid]\nspacing = 5.0\n");
    let o = gert(&["sweep", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("spacing"));

    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&gert(&["build", "--config", missing.to_str().unwrap()])), 2);
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = gert(&["trace", "--scene", dir.path().to_str().unwrap(), "--tx", "0,0,10", "--rx", "5,0,2"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&gert(&["report", "--run", dir.path().to_str().unwrap()])), 1);
}

#[test]
fn terrain_only_scene_has_one_direct_path() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "empty.geojson", r#"{"type":"FeatureCollection","features":[]}"#);
    let cfg = write(
        dir.path(),
        "run.toml",
        r#"
out = "run"
[scene]
footprints = "empty.geojson"
[scene.region]
lat_min = 48.1365
lat_max = 48.1385
lon_min = 11.5735
lon_max = 11.5775
[fetch]
dem = false
"#,
    );
    let o = gert(&["build", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let scene = dir.path().join("run/scene");
    assert!(scene.join("scene.toml").is_file());

    let o = gert(&[
        "trace",
        "--scene",
        scene.to_str().unwrap(),
        "--tx",
        "-30,10,25",
        "--rx",
        "40,-20,1.5",
        "--max-order",
        "0",
        "--json",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let paths = doc["paths"]["paths"].as_array().unwrap();
    assert_eq!(paths.len(), 1);
    let d = (70.0f64.powi(2) + 30.0f64.powi(2) + 23.5f64.powi(2)).sqrt();
    let delay = paths[0]["delay_s"].as_f64().unwrap();
    assert!((delay - d / 299_792_458.0).abs() < 1e-15, "{delay}");
    assert_eq!(doc["metrics"]["k_factor"], serde_json::json!("infinite"));
}

const SMALL_SWEEP: &str = r#"
seed = 7
out = "unused"
[scene.manhattan]
blocks = 2
block_m = 20.0
street_m = 20.0
height_m = 15.0
[trace]
max_reflection_order = 1
[grid]
spacing_m = 10.0
[perturbation]
kinds = ["material", "height"]
count = 3
[sweep]
raw_samples = true
bin_width_m = 20.0
[[tx]]
x = 30.0
y = 30.0
z = 25.0
"#;

#[test]
fn sweep_is_reproducible_and_report_regenerates_products() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_SWEEP);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = gert(&["sweep", "--config", &cfg, "--out", a.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = gert(&["sweep", "--config", &cfg, "--out", b.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let mut ta = tree(&a);
    let mut tb = tree(&b);
    let meta: serde_json::Value = serde_json::from_slice(&ta["run_metadata.json"]).unwrap();
    assert_eq!(meta["threads"], 1);
    ta.remove("run_metadata.json");
    tb.remove("run_metadata.json");
    assert!(ta.contains_key("sweep.json") && ta.contains_key("summary.csv") && ta.contains_key("config.toml"));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (name, bytes) in &ta {
        assert!(bytes == &tb[name], "{name} differs between runs");
    }

    let echo = String::from_utf8(ta["config.toml"].clone()).unwrap();
    assert!(echo.contains("seed = 7"));

    let r = dir.path().join("r");
    let o = gert(&["report", "--run", a.to_str().unwrap(), "--out", r.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let tr = tree(&r);
    for (name, bytes) in &tr {
        assert!(bytes == &ta[name], "{name} differs after report");
    }
    assert_eq!(tr.len() + 1, ta.len());
}

#[test]
fn seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_SWEEP);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&gert(&["sweep", "--config", &cfg, "--out", a.to_str().unwrap()])), 0);
    assert_eq!(code(&gert(&["sweep", "--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "8"])), 0);
    assert_ne!(fs::read(a.join("raw_samples.csv")).unwrap(), fs::read(b.join("raw_samples.csv")).unwrap());
}
