use std::path::Path;
use std::process::{Command, Output};

fn shadowlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shadowlab"))
        .args(args)
        .env_remove("SHADOWLAB_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "{}", stderr(&o));
    o
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A field and its slope field on a window wide enough for the ray margin.
fn slope_snapshot(dir: &Path) -> String {
    let d = path(dir);
    ok(shadowlab(&[
        "field", "--kernel", "gaussian", "--nx", "200", "--ny", "48", "--h", "0.25", "--seed", "5",
        "--out", d,
    ]));
    ok(shadowlab(&[
        "slope",
        "--input",
        &format!("{d}/field_0000.shdw"),
        "--out",
        d,
    ]));
    format!("{d}/field_0000.slope.shdw")
}

#[test]
fn field_runs_are_byte_identical() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for dir in [&a, &b] {
        ok(shadowlab(&[
            "field",
            "--kernel",
            "bump",
            "--grid-size",
            "32",
            "--samples",
            "2",
            "--seed",
            "11",
            "--out",
            path(dir),
        ]));
    }
    for name in ["field_0000.shdw", "field_0001.shdw"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap()
        );
    }
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("field.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["seed"], 11);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn seed_comes_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_shadowlab"))
        .args([
            "field",
            "--kernel",
            "gaussian",
            "--grid-size",
            "8",
            "--out",
            "-",
        ])
        .env("SHADOWLAB_SEED", "77")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&o.stdout).contains("\"seed\":77"));
}

#[test]
fn missing_kernel_family_is_a_config_error() {
    let o = shadowlab(&["field", "--grid-size", "8", "--out", "-"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kernel.family"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("c.json");
    std::fs::write(&cfg, r#"{"kernel": {"family": "gaussian"}, "grdi": {}}"#).unwrap();
    let o = shadowlab(&["field", "--config", path(&cfg), "--out", "-"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grdi"));
}

#[test]
fn stdout_streams_the_header() {
    let o = ok(shadowlab(&[
        "field",
        "--kernel",
        "gaussian",
        "--grid-size",
        "8",
        "--out",
        "-",
    ]));
    let text = String::from_utf8(o.stdout).unwrap();
    let header: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(header["magic"], "SHDW1");
    assert_eq!(header["content"], "field");
}

#[test]
fn huge_level_always_crosses() {
    let t = tempfile::tempdir().unwrap();
    let input = slope_snapshot(t.path());
    let o = ok(shadowlab(&[
        "perc",
        "--input",
        &input,
        "--level",
        "1e9",
        "--format",
        "json",
        "--out",
        path(t.path()),
    ]));
    assert!(o.stdout.is_empty());
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("perc.json")).unwrap())
            .unwrap();
    assert_eq!(rows[0]["crossing"], true);
    assert_eq!(rows[0]["open_fraction"], 1.0);
    assert!(t.path().join("mask.shdw").exists());
}

#[test]
fn chemdist_reports_a_path() {
    let t = tempfile::tempdir().unwrap();
    let input = slope_snapshot(t.path());
    let o = ok(shadowlab(&[
        "chemdist", "--input", &input, "--level", "1e9", "--from", "0,0", "--to", "3,4",
        "--format", "json", "--out", "-",
    ]));
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    // diagonal steps: 3 of length sqrt(2) and 1 straight, at h = 0.25
    let expected = 0.25 * (3.0 * 2f64.sqrt() + 1.0);
    assert_eq!(rows[0]["found"], true);
    assert!((rows[0]["length"].as_f64().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn chemdist_outside_the_window_is_a_bounds_error() {
    let t = tempfile::tempdir().unwrap();
    let input = slope_snapshot(t.path());
    let o = shadowlab(&[
        "chemdist", "--input", &input, "--level", "1", "--from", "0,0", "--to", "500,2", "--out",
        "-",
    ]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
}

#[test]
fn bad_magic_is_a_format_error() {
    let t = tempfile::tempdir().unwrap();
    let bad = t.path().join("bad.shdw");
    std::fs::write(&bad, b"{\"magic\":\"NOPE\"}\n").unwrap();
    let o = shadowlab(&["slope", "--input", path(&bad), "--out", "-"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn mismatched_grids_are_inconsistent() {
    let t = tempfile::tempdir().unwrap();
    let d = path(t.path());
    let input = slope_snapshot(t.path());
    let other = t.path().join("other");
    ok(shadowlab(&[
        "field",
        "--kernel",
        "gaussian",
        "--nx",
        "220",
        "--ny",
        "48",
        "--h",
        "0.25",
        "--out",
        path(&other),
    ]));
    let o = shadowlab(&[
        "slope",
        "--input",
        &format!("{d}/field_0000.shdw"),
        "--against",
        &format!("{}/field_0000.shdw", path(&other)),
        "--out",
        "-",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(Path::new(&input).exists());
}

#[test]
fn missing_level_is_a_config_error() {
    let t = tempfile::tempdir().unwrap();
    let input = slope_snapshot(t.path());
    let o = shadowlab(&["perc", "--input", &input, "--out", "-"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn crossing_decay_has_one_row_per_scale() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"kernel": {"family": "gaussian"}, "levels": [0.9], "n_samples": 10, "geometry": {"lambdas": [1, 2, 3]}}"#,
    )
    .unwrap();
    ok(shadowlab(&[
        "experiment",
        "crossing-decay",
        "--config",
        path(&cfg),
        "--out",
        path(t.path()),
    ]));
    let csv = std::fs::read_to_string(t.path().join("crossing-decay.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
    assert!(csv.starts_with("seed,lambda,level,"));
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(t.path().join("crossing-decay.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["manifest"], "experiment.manifest.json");
}

#[test]
fn replay_is_bitwise_identical_across_thread_counts() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    ok(shadowlab(&[
        "experiment",
        "chemical-scaling",
        "--kernel",
        "gaussian",
        "--samples",
        "12",
        "--seed",
        "3",
        "--threads",
        "1",
        "--out",
        path(&a),
    ]));
    let manifest = a.join("experiment.manifest.json");
    ok(shadowlab(&[
        "replay",
        path(&manifest),
        "--threads",
        "4",
        "--out",
        path(&b),
    ]));
    for name in ["chemical-scaling.csv", "chemical-scaling.json"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}
