#![allow(clippy::field_reassign_with_default)]

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use flowrecon::config::{Config, NoiseLevel, Truth, VelocityProfile};
use flowrecon::io::{self, GridKind};
use flowrecon::stages::{self, NoiseFile};
use flowrecon::study::run_study;
use flowrecon_core::RadiusFunction;
use tempfile::TempDir;

fn flowrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowrecon")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = flowrecon(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, cfg: &Config) -> String {
    let p = dir.join("config.json");
    io::write_json(&p, cfg).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn phantom_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["--out", path(d), "--seed", "7", "phantom", "--h", "0.0625", "--noise", "1"]);
    }
    for f in ["magnitude.json", "phase.json", "u.json", "truth.json", "noise.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let other = dir.path().join("c");
    ok(&["--out", path(&other), "--seed", "8", "phantom", "--h", "0.0625", "--noise", "1"]);
    assert_ne!(fs::read(a.join("magnitude.json")).unwrap(), fs::read(other.join("magnitude.json")).unwrap());
}

#[test]
fn zero_noise_phantom_records_zero_delta() {
    let dir = TempDir::new().unwrap();
    ok(&["--out", path(dir.path()), "phantom", "--h", "0.0625", "--sigma-mag", "0", "--sigma-complex", "0"]);
    let text = fs::read_to_string(dir.path().join("noise.json")).unwrap();
    assert!(text.contains("\"delta\": 0.0"), "{text}");
    let noise: NoiseFile = io::read_json(&dir.path().join("noise.json")).unwrap();
    assert_eq!(noise.delta, 0.0);
}

#[test]
fn circle_magnitude_sums_to_its_area() {
    let dir = TempDir::new().unwrap();
    let mut cfg = Config::default();
    cfg.truth = Truth {
        radius: RadiusFunction::constant(0.5, 0),
        velocity: VelocityProfile::Poiseuille { u_max: 1.0 },
    };
    let config = write_config(dir.path(), &cfg);
    let h = 1.0 / 32.0;
    ok(&["--config", &config, "--out", path(dir.path()), "phantom", "--h", "0.03125", "--sigma-mag", "0", "--sigma-complex", "0"]);
    let (m, kind) = io::read_grid(&dir.path().join("magnitude.json"), None).unwrap();
    assert_eq!(kind, GridKind::Magnitude);
    let expected = PI * 0.25 / (h * h);
    let sum: f64 = m.values.iter().sum();
    assert!((sum - expected).abs() <= 0.02 * expected, "{sum} vs {expected}");
}

#[test]
fn ingest_recovers_the_phantom_grids() {
    let dir = TempDir::new().unwrap();
    let (raw, ingested) = (dir.path().join("raw"), dir.path().join("ingested"));
    ok(&["--out", path(&raw), "phantom", "--h", "0.03125", "--noise", "3"]);
    ok(&[
        "--out",
        path(&ingested),
        "ingest",
        "--magnitude",
        path(&raw.join("magnitude.json")),
        "--complex",
        path(&raw.join("phase.json")),
    ]);
    let (m0, _) = io::read_grid(&raw.join("magnitude.json"), None).unwrap();
    let (m1, k1) = io::read_grid(&ingested.join("magnitude.json"), None).unwrap();
    let (u0, _) = io::read_grid(&raw.join("u.json"), None).unwrap();
    let (u1, k2) = io::read_grid(&ingested.join("u.json"), None).unwrap();
    assert_eq!((k1, k2), (GridKind::Magnitude, GridKind::Velocity));
    // peaks are located to within one histogram bin
    let diff = m0.max_abs_diff(&m1).unwrap();
    assert!(diff <= 2.0 / 64.0, "{diff}");
    assert_eq!(u0.values, u1.values);
    let noise: NoiseFile = io::read_json(&ingested.join("noise.json")).unwrap();
    let truth: NoiseFile = io::read_json(&raw.join("noise.json")).unwrap();
    assert!(noise.estimated && noise.delta > 0.5 * truth.delta && noise.delta < 2.0 * truth.delta);
}

#[test]
fn constant_magnitude_is_a_degenerate_histogram() {
    let dir = TempDir::new().unwrap();
    ok(&["--out", path(dir.path()), "phantom", "--h", "0.0625"]);
    let (mut m, _) = io::read_grid(&dir.path().join("magnitude.json"), None).unwrap();
    m.values.iter_mut().for_each(|v| *v = 0.7);
    let flat = dir.path().join("flat.json");
    io::write_grid(&flat, &m, GridKind::Magnitude).unwrap();
    let out = flowrecon(&[
        "--out",
        path(&dir.path().join("x")),
        "ingest",
        "--magnitude",
        path(&flat),
        "--complex",
        path(&dir.path().join("phase.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("histogram"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_geometry_file_is_named() {
    let dir = TempDir::new().unwrap();
    ok(&["--out", path(dir.path()), "phantom", "--h", "0.0625"]);
    let missing = dir.path().join("nowhere").join("geometry.json");
    let out = flowrecon(&[
        "--out",
        path(dir.path()),
        "recon-velocity",
        "--grid",
        path(&dir.path().join("u.json")),
        "--geometry",
        path(&missing),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains(path(&missing)));

    // a pipeline over a directory without data names the stage and the file
    let empty = dir.path().join("empty");
    let out = flowrecon(&["--out", path(&empty), "pipeline"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(4));
    assert!(err.contains("geometry stage") && err.contains("magnitude.json"), "{err}");
}

#[test]
fn stages_rerun_from_files_and_pipeline_summarizes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["--out", path(d), "--seed", "3", "phantom", "--h", "0.0625", "--noise", "1"]);
    let out = ok(&["--out", path(d), "pipeline"]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for stage in ["geometry", "velocity", "wss"] {
        assert!(summary[stage]["residual"].as_f64().unwrap().is_finite(), "{stage}");
    }
    let stored: serde_json::Value = io::read_json(&d.join(stages::SUMMARY_FILE)).unwrap();
    assert_eq!(stored, summary);

    // each stage alone, from the files of the previous one, reproduces the pipeline
    let again = d.join("again");
    let geometry = again.join("g.json");
    let velocity = again.join("v.json");
    let tau = again.join("t.csv");
    ok(&["--out", path(d), "recon-geometry", "--input", path(&d.join("magnitude.json")), "--out", path(&geometry)]);
    ok(&[
        "--out",
        path(d),
        "recon-velocity",
        "--grid",
        path(&d.join("u.json")),
        "--geometry",
        path(&geometry),
        "--out",
        path(&velocity),
    ]);
    ok(&["wss", "--geometry", path(&geometry), "--velocity", path(&velocity), "--out", path(&tau)]);
    assert_eq!(fs::read(&geometry).unwrap(), fs::read(d.join("geometry.json")).unwrap());
    assert_eq!(fs::read(&velocity).unwrap(), fs::read(d.join("vel.json")).unwrap());
    assert_eq!(fs::read(&tau).unwrap(), fs::read(d.join("tau.csv")).unwrap());
    let header = fs::read_to_string(&tau).unwrap();
    assert!(header.starts_with("phi,tau_raw,tau_filtered\n"));
}

#[test]
fn fixed_parameters_and_viscosity_flags() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["--out", path(d), "phantom", "--h", "0.0625", "--noise", "1"]);
    ok(&["--out", path(d), "recon-geometry", "--input", path(&d.join("magnitude.json")), "--alpha", "0.01", "--n-fourier", "3"]);
    let g: serde_json::Value = io::read_json(&d.join("geometry.json")).unwrap();
    assert_eq!(g["alpha"].as_f64(), Some(0.01));
    assert_eq!(g["radius"]["a"].as_array().unwrap().len(), 3);
    ok(&[
        "--out",
        path(d),
        "recon-velocity",
        "--grid",
        path(&d.join("u.json")),
        "--geometry",
        path(&d.join("geometry.json")),
        "--beta",
        "1e-5",
        "--cutoff",
        "80",
    ]);
    let v: serde_json::Value = io::read_json(&d.join("vel.json")).unwrap();
    assert_eq!(v["beta"].as_f64(), Some(1e-5));
    assert!(v["modes"].as_array().unwrap().iter().all(|m| m["lambda"].as_f64().unwrap() <= 80.0));
    let tau = |visc: &str, file: &str| {
        let f = d.join(file);
        ok(&[
            "wss",
            "--geometry",
            path(&d.join("geometry.json")),
            "--velocity",
            path(&d.join("vel.json")),
            "--viscosity",
            visc,
            "--out",
            path(&f),
        ]);
        io::read_wss_csv(&f).unwrap().0
    };
    let (one, two) = (tau("1", "t1.csv"), tau("2", "t2.csv"));
    assert!(one.values.iter().zip(&two.values).all(|(a, b)| (2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0)));
}

#[test]
fn bad_configuration_exits_with_code_2() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, r#"{"resolutions": [0.5]}"#).unwrap();
    let out = flowrecon(&["--config", path(&p), "--out", path(dir.path()), "phantom"]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(&p, r#"{"resolution": [0.1]}"#).unwrap();
    let out = flowrecon(&["--config", path(&p), "phantom"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_noise_level_has_no_slopes_but_a_table() {
    let mut cfg = Config::default();
    cfg.resolutions = vec![1.0 / 16.0];
    cfg.noise_levels = vec![NoiseLevel {
        sigma_mag: 0.015,
        sigma_complex: 0.01,
    }];
    cfg.seeds = vec![1];
    cfg.study.table_noise = 0;
    cfg.study.velocity = false;
    let report = run_study(&cfg).unwrap();
    assert!(report.slopes.is_empty());
    assert_eq!(report.alpha_table.rows.len(), 1);
    assert!(report.alpha_table.rows[0].best.is_some());
    assert!(report.records.iter().all(|r| r.failure.is_none()));
}

#[test]
fn rate_study_writes_reports() {
    let dir = TempDir::new().unwrap();
    let mut cfg = Config::default();
    cfg.resolutions = vec![1.0 / 16.0];
    cfg.seeds = vec![1];
    cfg.study.velocity = false;
    let config = write_config(dir.path(), &cfg);
    let out = dir.path().join("study");
    ok(&["--config", &config, "--out", path(&out), "--threads", "1", "rate-study"]);
    for f in ["report.json", "records.csv", "alpha_table.csv", "config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let table = fs::read_to_string(out.join("alpha_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert_eq!(table.matches('*').count(), 1);
    let records = fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + cfg.noise_levels.len());
}
