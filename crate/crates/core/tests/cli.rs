use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

fn remkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_remkit")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_json(dir: &Path, name: &str, v: serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    p
}

fn scene_config(dir: &Path) -> PathBuf {
    write_json(
        dir,
        "scene.json",
        json!({
            "scene": {
                "extent": { "origin": { "x": 0.0, "y": 0.0 }, "bin_size": 5.0, "n_cols": 24, "n_rows": 20 },
                "transmitters": [
                    { "position": { "x": 30.0, "y": 40.0 }, "tx_power": 15.0, "ref_loss": 40.0, "exponent": 3.0 },
                    { "position": { "x": 100.0, "y": 80.0 }, "tx_power": 12.0, "ref_loss": 40.0, "exponent": 3.4 }
                ],
                "shadow_sigma": 6.0,
                "shadow_correlation_length": 20.0,
                "seed": 4
            },
            "origin": { "lat": 51.5, "lon": -0.12 }
        }),
    )
}

fn contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn synth_writes_outputs_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scene_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = remkit(&["synth", s(&cfg), s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let files = contents(&a);
    let names: Vec<&str> = files.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(names, ["manifest.json", "samples.csv", "truth.csv", "truth.json"]);
    assert_eq!(files, contents(&b));

    let truth = fs::read_to_string(a.join("truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 20);
    assert!(truth.lines().all(|l| l.split(',').count() == 24));
    let samples = fs::read_to_string(a.join("samples.csv")).unwrap();
    assert!(samples.starts_with("x_m,y_m,value,cell_id\n"));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let reseeded = tmp.path().join("c");
    assert!(remkit(&["--seed", "99", "synth", s(&cfg), s(&reseeded)]).status.success());
    assert_ne!(fs::read(reseeded.join("truth.csv")).unwrap(), truth.as_bytes());
}

#[test]
fn malformed_inputs_exit_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\n  \"scene\": {\n    \"extent\": ,\n}").unwrap();
    let o = remkit(&["synth", s(&bad), s(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));

    let cfg = scene_config(tmp.path());
    let out = tmp.path().join("synth");
    assert!(remkit(&["--quiet", "synth", s(&cfg), s(&out)]).status.success());
    let methods = write_json(tmp.path(), "methods.json", json!([{ "method": "idw" }, { "method": "splines" }]));
    let o = remkit(&["crossval", s(&out.join("samples.csv")), s(&methods), s(&tmp.path().join("r"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("splines"), "{}", stderr(&o));

    let o = remkit(&["crossval", s(&tmp.path().join("missing.csv")), s(&methods), s(&tmp.path().join("r"))]);
    assert_eq!(o.status.code(), Some(2));

    assert_eq!(remkit(&["synth"]).status.code(), Some(2));
    assert_eq!(remkit(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(remkit(&["--help"]).status.code(), Some(0));
}

const HEADER: &str = "timestamp_s,lat_deg,lon_deg,rsrp_dbm,rsrq_db,sinr_db,pci,n_prb";

#[test]
fn ingest_reports_and_quarantines() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, format!("{HEADER}\n")).unwrap();
    let o = remkit(&["ingest", s(&empty), "--origin", "40.0,-74.0", s(&tmp.path().join("e"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("0 rows"));
    assert_eq!(fs::read_to_string(tmp.path().join("e/rssi_samples.csv")).unwrap(), "x_m,y_m,value,cell_id\n");

    let walk = tmp.path().join("walk.csv");
    fs::write(&walk, format!("{HEADER}\n1.0,40.0001,-74.0,-90,-10,12.5,7,20\n2.0,40.0002,-74.0,-200,-10,,7,20\n"))
        .unwrap();
    let out = tmp.path().join("w");
    let o = remkit(&["ingest", s(&walk), "--origin", "40.0,-74.0", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("2 rows, 1 RSSI samples, 1 SINR samples, 1 quarantined"), "{}", stderr(&o));

    let rssi = fs::read_to_string(out.join("rssi_samples.csv")).unwrap();
    let row: Vec<&str> = rssi.lines().nth(1).unwrap().split(',').collect();
    let value: f64 = row[2].parse().unwrap();
    assert!((value - (-90.0 + 10.0 * 20f64.log10() + 10.0)).abs() < 1e-9);
    assert_eq!(row[3], "7");
    let y: f64 = row[1].parse().unwrap();
    assert!((y - 6371000.0 * 0.0001f64.to_radians()).abs() < 1e-6);

    let q = fs::read_to_string(out.join("quarantine.csv")).unwrap();
    assert!(q.starts_with("line,reasons\n3,"), "{q}");
    assert!(q.contains("rsrp"), "{q}");
}

fn two_by_two(dir: &Path, csv: &str) -> PathBuf {
    let p = dir.join("r.csv");
    fs::write(&p, csv).unwrap();
    write_json(
        dir,
        "r.json",
        json!({ "origin_lat": 0.0, "origin_lon": 0.0, "bin_size_m": 5.0, "n_cols": 2, "n_rows": 2,
                "metric": "rssi", "unit": "dBm" }),
    );
    p
}

#[test]
fn render_maps_values_to_gray_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let r = two_by_two(tmp.path(), "-80,-70\n-60,-50\n");
    let out = tmp.path().join("r.pgm");
    let o = remkit(&["render", s(&r), s(&out), "--scale", "-80:-50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    // t = (v + 80) / 30; level = 1 + round(254 t).
    let mut expected = b"P5\n2 2\n255\n".to_vec();
    expected.extend([1, 86, 170, 255]);
    assert_eq!(fs::read(&out).unwrap(), expected);

    let r = two_by_two(tmp.path(), ",\n,\n");
    assert!(remkit(&["render", s(&r), s(&out)]).status.success());
    assert!(fs::read(&out).unwrap().ends_with(&[0, 0, 0, 0]));

    let o = remkit(&["render", s(&r), s(&out), "--scale", "-60:-60"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn crossval_and_sinr_map() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scene_config(tmp.path());
    let out = tmp.path().join("synth");
    assert!(remkit(&["--quiet", "synth", s(&cfg), s(&out)]).status.success());
    let methods = write_json(
        tmp.path(),
        "methods.json",
        json!([{ "method": "idw" }, { "method": "rbf" }, { "method": "ok" },
               { "method": "rf", "seed": 1 }, { "method": "gbt", "seed": 1 }, { "method": "mri" }]),
    );
    let report = tmp.path().join("report");
    let o = remkit(&[
        "--quiet", "crossval", s(&out.join("samples.csv")), s(&methods), s(&report), "--scene", s(&cfg),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(report.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",ok")), "{csv}");
    let md = fs::read_to_string(report.with_extension("md")).unwrap();
    assert!(md.starts_with("| Method | RMSE (dB) | NMSE | MAPE (%) |"));
    assert!(tmp.path().join("report.manifest.json").exists());

    let sinr = tmp.path().join("sinr.csv");
    fs::write(&sinr, "x_m,y_m,value,cell_id\n0,0,5,\n20,0,9,\n0,20,12,\n20,20,3,\n10,30,7,\n").unwrap();
    let map = tmp.path().join("sinr_map.csv");
    let idw = write_json(tmp.path(), "idw.json", json!({ "method": "idw" }));
    let o = remkit(&["--quiet", "map", s(&sinr), s(&map), "--metric", "sinr", "--method", s(&idw)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(map.with_extension("json")).unwrap()).unwrap();
    assert_eq!(meta["metric"], "sinr");
    assert_eq!(meta["unit"], "dB");
    let text = fs::read_to_string(&map).unwrap();
    assert_eq!(text.lines().count(), meta["n_rows"].as_u64().unwrap() as usize);
}
