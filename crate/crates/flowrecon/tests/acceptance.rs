#![allow(clippy::field_reassign_with_default, clippy::neg_cmp_op_on_partial_ord)]

//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.
//!
//! Run with `cargo test --release -p flowrecon --test acceptance -- --nocapture --test-threads=1`.

use std::f64::consts::TAU;
use std::path::Path;
use std::time::{Duration, Instant};

use flowrecon::config::{Choice, Config, NoiseLevel, ParameterMode, Truth, VelocityProfile};
use flowrecon::stages::{self, PipelineSummary};
use flowrecon::study::{run_study, write_report, CellRecord};
use flowrecon_core::bessel::bessel_j;
use flowrecon_core::eigenbasis::DiskEigenBasis;
use flowrecon_core::phantom::{rasterize_characteristic, NoiseSpec};
use flowrecon_core::quadrature::GaussLegendre;
use flowrecon_core::velocity::{proxy_h2_distance, reference_coefficients, VelocityProblem};
use flowrecon_core::{DiskTransform, GeometryBounds, GridGeometry, RadiusFunction};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn verdict(name: &str, pass: bool, elapsed: Duration, limit: Option<Duration>, detail: &str) {
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let ok = pass && in_time;
    let limit = limit.map_or(String::new(), |l| format!(" / {:.0} s", l.as_secs_f64()));
    println!(
        "{} {name}: {detail} [{:.1} s{limit}]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    assert!(pass, "{name}: {detail}");
    assert!(in_time, "{name}: over the time limit");
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// Rejection-sampled admissible radius.
fn random_radius(rng: &mut ChaCha8Rng, order: usize, amplitude: f64) -> RadiusFunction {
    loop {
        let b0 = uniform(rng, 0.4, 0.6);
        let a = (0..order).map(|_| uniform(rng, -amplitude, amplitude)).collect();
        let b = (0..order).map(|_| uniform(rng, -amplitude, amplitude)).collect();
        let r = RadiusFunction::new(b0, a, b).unwrap();
        if r.is_admissible(&GeometryBounds::default()) {
            return r;
        }
    }
}

#[test]
fn geometry_round_trip_and_diffeomorphism() {
    let start = Instant::now();
    let bounds = GeometryBounds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut round_trip, mut min_det, mut fd) = (0.0_f64, f64::INFINITY, 0.0_f64);
    for _ in 0..1000 {
        let t = DiskTransform::new(random_radius(&mut rng, 4, 0.04), bounds).unwrap();
        let (r, phi) = (uniform(&mut rng, 0.0, 1.0).sqrt() * 0.999, uniform(&mut rng, 0.0, TAU));
        let x = [r * phi.cos(), r * phi.sin()];
        let back = t.map_inverse(t.map_forward(x).unwrap()).unwrap();
        round_trip = round_trip.max((back[0] - x[0]).abs().max((back[1] - x[1]).abs()));
        let j = t.jacobian(x).unwrap();
        min_det = min_det.min(j.det());
        let e = 1e-6;
        let mut numeric = [[0.0; 2]; 2];
        for c in 0..2 {
            let mut p = x;
            let mut m = x;
            p[c] += e;
            m[c] -= e;
            let (fp, fm) = (t.map_forward(p).unwrap(), t.map_forward(m).unwrap());
            for row in 0..2 {
                numeric[row][c] = (fp[row] - fm[row]) / (2.0 * e);
            }
        }
        let diff = (0..4).map(|k| (numeric[k / 2][k % 2] - j.0[k / 2][k % 2]).abs()).fold(0.0, f64::max);
        fd = fd.max(diff / j.max_abs());
    }
    let pass = round_trip <= 1e-10 && min_det >= bounds.r0 * bounds.r0 && fd <= 1e-5;
    verdict(
        "geometry round trip",
        pass,
        start.elapsed(),
        Some(Duration::from_secs(5)),
        &format!("round trip {round_trip:.1e}, min det {min_det:.4} (r0² = {}), Jacobian FD {fd:.1e}", bounds.r0 * bounds.r0),
    );
}

#[test]
fn conditional_stability_inequality() {
    let start = Instant::now();
    let b = GeometryBounds::default();
    let g = GridGeometry::full_fov(256).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..50 {
        let r1 = random_radius(&mut rng, 4, 0.04);
        let r2 = random_radius(&mut rng, 4, 0.04);
        let f1 = rasterize_characteristic(&r1, &g, 64).unwrap();
        let f2 = rasterize_characteristic(&r2, &g, 64).unwrap();
        let rhs = (b.r1 - b.r0) / b.r0 * f1.l2_distance(&f2).unwrap().powi(2) + 1e-3;
        worst = worst.max(r1.sub(&r2).sobolev_norm_sq(0) - rhs);
    }
    verdict(
        "conditional stability",
        worst <= 0.0,
        start.elapsed(),
        Some(Duration::from_secs(30)),
        &format!("largest lhs - rhs over 50 pairs {worst:.3e}"),
    );
}

#[test]
fn geometry_convergence_rate() {
    let start = Instant::now();
    let mut cfg = Config::default();
    cfg.seeds = (1..=10).collect();
    cfg.study.velocity = false;
    cfg.study.wss = false;
    let report = run_study(&cfg).unwrap();
    let pooled = |q: &str| {
        report
            .slopes
            .iter()
            .find(|s| s.quantity == q && s.h.is_none())
            .map_or(f64::NAN, |s| s.slope)
    };
    let (l2, h2) = (pooled("R_L2"), pooled("R_H2"));
    let per_h: Vec<String> = report
        .slopes
        .iter()
        .filter(|s| s.quantity == "R_L2" && s.h.is_some())
        .map(|s| format!("{:.2}", s.slope))
        .collect();
    verdict(
        "geometry rate",
        l2 >= 0.7 && h2 >= 0.35,
        start.elapsed(),
        Some(Duration::from_secs(180)),
        &format!("pooled L2 slope {l2:.3} (>= 0.7), H2 slope {h2:.3} (>= 0.35); per-h L2 [{}]", per_h.join(", ")),
    );
}

#[test]
fn sub_pixel_circle() {
    let start = Instant::now();
    let h = 1.0 / 32.0;
    let cfg = Config::default();
    let g = GridGeometry::full_fov_with_spacing(h).unwrap();
    let m = rasterize_characteristic(&RadiusFunction::constant(0.5, 0), &g, 16).unwrap();
    let geom = stages::reconstruct_geometry(&cfg, &m, 0.0, false).unwrap();
    let err = (0..720)
        .map(|k| (geom.radius.eval(TAU * k as f64 / 720.0) - 0.5).abs())
        .fold(0.0, f64::max);
    verdict(
        "sub-pixel resolution",
        err < h / 4.0,
        start.elapsed(),
        Some(Duration::from_secs(10)),
        &format!("max radius error {err:.2e} (h/4 = {:.2e})", h / 4.0),
    );
}

#[test]
fn eigenbasis_suite() {
    let start = Instant::now();
    let basis = DiskEigenBasis::new(300.0).unwrap();
    let n = basis.len();
    let (rs, ws) = GaussLegendre::new(256).on_interval(0.0, 1.0);
    let na = 512;
    let angular: Vec<Vec<f64>> = (0..na)
        .map(|k| basis.modes().iter().map(|m| m.angular(TAU * k as f64 / na as f64).0).collect())
        .collect();
    let mut gram = vec![0.0; n * n];
    for (r, w) in rs.iter().zip(&ws) {
        let radial: Vec<f64> = basis.modes().iter().map(|m| m.radial(*r).0).collect();
        for ang in &angular {
            let vals: Vec<f64> = radial.iter().zip(ang).map(|(a, b)| a * b).collect();
            let weight = w * r * TAU / na as f64;
            for i in 0..n {
                for j in i + 1..n {
                    gram[i * n + j] += weight * vals[i] * vals[j];
                }
            }
        }
    }
    let off = gram.iter().fold(0.0_f64, |a, v| a.max(v.abs()));

    // x² J'' + x J' + (x² − m²) J with J' and J'' from the neighbouring orders
    let j = |m: i64, x: f64| {
        let v = bessel_j(m.unsigned_abs() as u32, x).unwrap();
        if m < 0 && m % 2 != 0 {
            -v
        } else {
            v
        }
    };
    let mut bessel = 0.0_f64;
    for mode in DiskEigenBasis::new(400.0).unwrap().modes() {
        let m = mode.m as i64;
        for k in 1..=200 {
            let x = mode.zero * k as f64 / 200.0;
            let d1 = (j(m - 1, x) - j(m + 1, x)) / 2.0;
            let d2 = (j(m - 2, x) - 2.0 * j(m, x) + j(m + 2, x)) / 4.0;
            let res = x * x * d2 + x * d1 + (x * x - (m * m) as f64) * j(m, x);
            bessel = bessel.max(res.abs());
        }
    }

    let mut tangential = 0.0_f64;
    for mode in DiskEigenBasis::new(400.0).unwrap().modes() {
        for k in 0..360 {
            let (s, c) = (TAU * k as f64 / 360.0).sin_cos();
            let g = mode.gradient([c, s]);
            tangential = tangential.max((-g[0] * s + g[1] * c).abs());
        }
    }
    verdict(
        "eigenbasis",
        off <= 1e-6 && bessel <= 1e-8 && tangential <= 1e-12,
        start.elapsed(),
        Some(Duration::from_secs(20)),
        &format!("Gram off-diagonal {off:.1e}, Bessel residual {bessel:.1e}, tangential gradient {tangential:.1e}"),
    );
}

#[test]
fn velocity_semiconvergence() {
    let start = Instant::now();
    let cfg = Config::default();
    let truth = cfg.truth_model().unwrap();
    let h = 1.0 / 32.0;
    let vcfg = cfg.velocity.core_config().unwrap();
    let transform = DiskTransform::new(truth.radius.clone(), cfg.bounds).unwrap();
    let grid = GridGeometry::full_fov_with_spacing(h).unwrap();
    let problem = VelocityProblem::new(&transform, &grid, [0.0, 0.0], &vcfg).unwrap();
    let reference = reference_coefficients(problem.basis(), &transform, truth.velocity(), 128, 256).unwrap();
    let betas: Vec<f64> = (0..12).map(|k| 10f64.powf(-2.0 - 0.5 * k as f64)).collect();
    let mut interior = true;
    let mut monotone = true;
    let mut minima = Vec::new();
    for seed in 1..=3 {
        let noise = NoiseSpec::new(0.015, 0.01, seed).unwrap();
        let data = stages::synthesize(&cfg, &truth, h, &noise).unwrap();
        assert!(data.eps > 0.0);
        let solves = problem.sweep(&data.velocity, &betas, &vcfg).unwrap();
        let errors: Vec<f64> = solves
            .iter()
            .map(|s| proxy_h2_distance(&s.coefficients, &reference).unwrap())
            .collect();
        let best = errors
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        interior &= best > 0 && best + 1 < betas.len();
        // β decreases along the sweep, so residuals must not increase
        monotone &= solves.windows(2).all(|w| w[1].residual <= w[0].residual * (1.0 + 1e-12));
        minima.push(format!("{:.1e}", betas[best]));
    }
    verdict(
        "velocity semiconvergence",
        interior && monotone,
        start.elapsed(),
        Some(Duration::from_secs(60)),
        &format!("error minima at beta [{}], interior {interior}, residual monotone {monotone}", minima.join(", ")),
    );
}

fn pipeline_config(beta: f64) -> Config {
    let mut cfg = Config::default();
    cfg.truth = Truth {
        radius: RadiusFunction::constant(0.5, 4),
        velocity: VelocityProfile::Poiseuille { u_max: 1.0 },
    };
    cfg.bounds = GeometryBounds::new(0.45, 0.85, 2).unwrap();
    cfg.resolutions = vec![1.0 / 64.0];
    cfg.velocity.beta = Choice::Value(beta);
    cfg
}

fn run_pipeline(cfg: &Config, dir: &Path, level: NoiseLevel, seed: u64) -> PipelineSummary {
    stages::cmd_phantom(cfg, dir, cfg.resolutions[0], level, seed).unwrap();
    stages::cmd_pipeline(cfg, dir, dir).unwrap()
}

/// `β` minimizing the proxy error against the true coefficients on one
/// calibration seed, over a 12-point geometric sweep.
fn calibrate_beta(cfg: &Config, level: NoiseLevel, seed: u64) -> f64 {
    let truth = cfg.truth_model().unwrap();
    let h = cfg.resolutions[0];
    let data = stages::synthesize(cfg, &truth, h, &NoiseSpec::new(level.sigma_mag, level.sigma_complex, seed).unwrap())
        .unwrap();
    let geom = stages::reconstruct_geometry(cfg, &data.magnitude, data.delta, cfg.geometry.recenter).unwrap();
    let vcfg = cfg.velocity.core_config().unwrap();
    let transform = DiskTransform::new(geom.radius.clone(), geom.bounds).unwrap();
    let problem = VelocityProblem::new(&transform, &data.velocity.geometry, geom.center, &vcfg).unwrap();
    let true_transform = DiskTransform::new(truth.radius.clone(), truth.bounds).unwrap();
    let reference = reference_coefficients(problem.basis(), &true_transform, truth.velocity(), 128, 256).unwrap();
    let betas: Vec<f64> = (2..14).map(|k| 1e-9 * 3f64.powi(k)).collect();
    let solves = problem.sweep(&data.velocity, &betas, &vcfg).unwrap();
    solves
        .iter()
        .map(|s| (s.beta, proxy_h2_distance(&s.coefficients, &reference).unwrap()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0
}

#[test]
fn wall_shear_stress_end_to_end() {
    let start = Instant::now();
    let exact = 2.0 * 1.0 / 0.5;
    let dir = tempfile::tempdir().unwrap();
    let quiet = NoiseLevel {
        sigma_mag: 0.0,
        sigma_complex: 0.0,
    };
    let cfg = pipeline_config(1e-8);
    let noiseless = run_pipeline(&cfg, &dir.path().join("noiseless"), quiet, 1);
    let mean_error = (noiseless.wss.mean - exact).abs() / exact;

    let mid = NoiseLevel {
        sigma_mag: 0.015,
        sigma_complex: 0.01,
    };
    let beta = calibrate_beta(&cfg, mid, 0);
    let cfg = pipeline_config(beta);
    let errors: Vec<f64> = (1..=5)
        .map(|seed| {
            let s = run_pipeline(&cfg, &dir.path().join(format!("seed{seed}")), mid, seed);
            s.errors.expect("phantom directories carry the truth").tau_l2
        })
        .collect();
    let noisy = errors.iter().sum::<f64>() / errors.len() as f64;
    verdict(
        "wall shear stress",
        mean_error <= 0.03 && noisy <= 0.10,
        start.elapsed(),
        Some(Duration::from_secs(120)),
        &format!(
            "noiseless mean {:.4} vs {exact} ({:.2}%), mid-noise relative L2 error {:.3} over 5 seeds at calibrated beta {beta:.2e}",
            noiseless.wss.mean,
            100.0 * mean_error,
            noisy
        ),
    );
}

/// Chosen parameters never increase as the noise level drops, per `(h, seed)`.
fn monotone_in_noise(records: &[CellRecord], pick: fn(&CellRecord) -> f64) -> bool {
    records.iter().all(|a| {
        records
            .iter()
            .filter(|b| b.h == a.h && b.seed == a.seed && b.noise_index > a.noise_index)
            .all(|b| !(pick(b) > pick(a)))
    })
}

#[test]
fn discrepancy_principles() {
    let start = Instant::now();
    let mut cfg = Config::default();
    cfg.parameter_mode = ParameterMode::Discrepancy;
    cfg.study.wss = false;
    let report = run_study(&cfg).unwrap();
    let records = &report.records;
    let failures = records.iter().filter(|r| r.failure.is_some()).count();
    let alpha_ok = records
        .iter()
        .filter(|r| !r.flags.iter().any(|f| f == "alpha_unreachable"))
        .all(|r| r.geometry_residual <= 4.0 * r.delta);
    let beta_ok = records
        .iter()
        .filter(|r| !r.flags.iter().any(|f| f == "beta_unreachable"))
        .all(|r| r.velocity_residual <= 2.0 * r.delta_u);
    let flagged = |f: &str| records.iter().filter(|r| r.flags.iter().any(|x| x == f)).count();
    let alpha_mono = monotone_in_noise(records, |r| r.chosen_alpha);
    let beta_mono = monotone_in_noise(records, |r| r.chosen_beta);
    verdict(
        "discrepancy principles",
        failures == 0 && alpha_ok && beta_ok && alpha_mono && beta_mono,
        start.elapsed(),
        None,
        &format!(
            "{} runs, {failures} failed; alpha bound {alpha_ok} ({} flagged), beta bound {beta_ok} ({} flagged); monotone alpha {alpha_mono}, beta {beta_mono}",
            records.len(),
            flagged("alpha_unreachable"),
            flagged("beta_unreachable"),
        ),
    );
}

#[test]
fn default_study_is_deterministic() {
    let start = Instant::now();
    let cfg = Config::default();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        write_report(&run_study(&cfg).unwrap(), d.path()).unwrap();
    }
    let files = ["report.json", "records.csv", "alpha_table.csv", "beta_table.csv"];
    let identical = files
        .iter()
        .all(|f| std::fs::read(dirs[0].path().join(f)).unwrap() == std::fs::read(dirs[1].path().join(f)).unwrap());
    let size = std::fs::metadata(dirs[0].path().join("report.json")).unwrap().len();
    verdict(
        "determinism",
        identical,
        start.elapsed(),
        None,
        &format!("two default-study runs, {} report files byte-identical: {identical} (report {size} bytes)", files.len()),
    );
}
