//! Convergence-rate studies over `(h, noise, seed)` cells.

use std::fmt::Write as _;
use std::path::Path;

use flowrecon_core::geo_ident::{gauss_newton_minimize, initial_radius, radius_errors, ForwardModel};
use flowrecon_core::phantom::NoiseSpec;
use flowrecon_core::velocity::proxy_h2_distance;
use flowrecon_core::wss::wss_error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{Config, ParameterMode, TruthModel};
use crate::error::Result;
use crate::io;
use crate::stages::{self, DeltaU};

/// A cell whose noisiest-level mean relative error exceeds this is left out
/// of the slope fits.
pub const PRE_ASYMPTOTIC_GUARD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellErrors {
    #[serde(rename = "R_L2")]
    pub radius_l2: f64,
    #[serde(rename = "R_H2")]
    pub radius_h2: f64,
    #[serde(rename = "v_proxyH2")]
    pub velocity_proxy_h2: f64,
    /// Relative, after low-pass filtering.
    #[serde(rename = "tau_L2")]
    pub tau_l2: f64,
}

/// One `(h, noise, seed)` cell. Failed or skipped quantities are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub h: f64,
    pub noise_index: usize,
    pub sigma_mag: f64,
    pub sigma_complex: f64,
    pub seed: u64,
    pub delta: f64,
    #[serde(rename = "delta_R_measured")]
    pub delta_r_measured: f64,
    pub eps: f64,
    #[serde(rename = "delta_U")]
    pub delta_u: f64,
    pub errors: CellErrors,
    /// `‖v†‖` in the proxy norm, for relative errors.
    pub velocity_reference_norm: f64,
    pub chosen_alpha: f64,
    pub chosen_beta: f64,
    /// `‖F(R) − m^δ‖` at the returned radius.
    pub geometry_residual: f64,
    /// Weighted velocity data residual.
    pub velocity_residual: f64,
    pub flags: Vec<String>,
    pub failure: Option<String>,
}

/// Errors at fixed parameters, for the tables.
#[derive(Debug, Clone, Default)]
struct CellSweeps {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slope {
    pub quantity: String,
    pub driver: String,
    /// `None` for the fit pooled over resolutions.
    pub h: Option<f64>,
    pub slope: f64,
    pub ci95: Option<[f64; 2]>,
    pub points: usize,
    pub levels: usize,
    pub excluded_level: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub h: f64,
    /// Seed-averaged error per parameter.
    pub values: Vec<f64>,
    /// Index of the row minimum; ties go to the larger parameter.
    pub best: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterTable {
    pub quantity: String,
    pub noise_index: usize,
    pub parameters: Vec<f64>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    pub k: f64,
    pub mu: f64,
    pub expected_radius_l2: f64,
    pub expected_radius_h2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub config: Config,
    pub annotations: Option<Annotations>,
    pub records: Vec<CellRecord>,
    pub slopes: Vec<Slope>,
    pub alpha_table: ParameterTable,
    pub beta_table: Option<ParameterTable>,
}

fn nan_errors() -> CellErrors {
    CellErrors {
        radius_l2: f64::NAN,
        radius_h2: f64::NAN,
        velocity_proxy_h2: f64::NAN,
        tau_l2: f64::NAN,
    }
}

fn run_cell(cfg: &Config, truth: &TruthModel, h: f64, noise_index: usize, seed: u64, tables: bool) -> (CellRecord, CellSweeps) {
    let level = cfg.noise_levels[noise_index];
    let mut record = CellRecord {
        h,
        noise_index,
        sigma_mag: level.sigma_mag,
        sigma_complex: level.sigma_complex,
        seed,
        delta: f64::NAN,
        delta_r_measured: f64::NAN,
        eps: f64::NAN,
        delta_u: f64::NAN,
        errors: nan_errors(),
        velocity_reference_norm: f64::NAN,
        chosen_alpha: f64::NAN,
        chosen_beta: f64::NAN,
        geometry_residual: f64::NAN,
        velocity_residual: f64::NAN,
        flags: Vec::new(),
        failure: None,
    };
    let mut sweeps = CellSweeps::default();
    if let Err(e) = fill_cell(cfg, truth, &mut record, &mut sweeps, tables) {
        record.failure = Some(e.to_string());
    }
    if tables {
        sweeps.alpha.resize(cfg.study.alpha_grid.len(), f64::NAN);
        if cfg.study.velocity {
            sweeps.beta.resize(cfg.study.beta_grid.len(), f64::NAN);
        }
    }
    (record, sweeps)
}

fn fill_cell(cfg: &Config, truth: &TruthModel, rec: &mut CellRecord, sweeps: &mut CellSweeps, tables: bool) -> Result<()> {
    let noise = NoiseSpec::new(rec.sigma_mag, rec.sigma_complex, rec.seed)?;
    let data = stages::synthesize(cfg, truth, rec.h, &noise)?;
    rec.delta = data.delta;
    rec.eps = data.eps;

    let geom = stages::reconstruct_geometry(cfg, &data.magnitude, data.delta, cfg.study.recenter)?;
    rec.chosen_alpha = geom.alpha;
    rec.geometry_residual = geom.residual;
    if geom.unreachable {
        rec.flags.push("alpha_unreachable".into());
    }
    let (l2, h2) = radius_errors(&geom.radius, &truth.radius);
    rec.delta_r_measured = l2;
    rec.errors.radius_l2 = l2;
    rec.errors.radius_h2 = h2;

    if tables {
        let gcfg = cfg.geometry.core_config(rec.h, cfg.bounds)?;
        let model = ForwardModel::new(&data.magnitude.geometry, &gcfg, geom.center)?;
        let init = initial_radius(&data.magnitude, &cfg.bounds, gcfg.n_fourier);
        for &alpha in &cfg.study.alpha_grid {
            let e = gauss_newton_minimize(&model, &data.magnitude, alpha, &gcfg, &init)
                .map(|r| radius_errors(&r.radius, &truth.radius).0)
                .unwrap_or(f64::NAN);
            sweeps.alpha.push(e);
        }
    }

    if !cfg.study.velocity {
        return Ok(());
    }
    let outcome = stages::reconstruct_velocity(cfg, &data.velocity, &geom, &DeltaU::Realized(Box::new(truth.clone())))?;
    rec.delta_u = outcome.result.delta_u.unwrap_or(f64::NAN);
    rec.chosen_beta = outcome.result.beta;
    rec.velocity_residual = outcome.result.residual;
    if outcome.result.unreachable {
        rec.flags.push("beta_unreachable".into());
    }
    let reference = outcome.reference.as_ref().expect("realized delta_U projects the truth");
    rec.velocity_reference_norm = reference.proxy_h2_norm_sq().sqrt();
    rec.errors.velocity_proxy_h2 = proxy_h2_distance(&outcome.coefficients, reference)?;

    if tables {
        let vcfg = cfg.velocity.core_config()?;
        for solve in outcome.problem.sweep(&data.velocity, &cfg.study.beta_grid, &vcfg)? {
            sweeps.beta.push(proxy_h2_distance(&solve.coefficients, reference)?);
        }
    }

    if cfg.study.wss {
        let (_, filtered) = stages::compute_wss(cfg, &geom, &outcome.coefficients)?;
        let exact = truth.wss(cfg.wss.samples)?.scaled(cfg.wss.viscosity);
        rec.errors.tau_l2 = wss_error(&filtered, &exact)?;
    }
    Ok(())
}

/// Least-squares slope of `y` on `x` after removing a mean per group, with a
/// two-sided 95% t interval.
pub fn fixed_effects_slope(points: &[(usize, f64, f64)]) -> Option<(f64, Option<[f64; 2]>)> {
    let mut groups: Vec<usize> = points.iter().map(|p| p.0).collect();
    groups.sort_unstable();
    groups.dedup();
    let mut centered = Vec::with_capacity(points.len());
    for g in &groups {
        let members: Vec<_> = points.iter().filter(|p| p.0 == *g).collect();
        let n = members.len() as f64;
        let mx = members.iter().map(|p| p.1).sum::<f64>() / n;
        let my = members.iter().map(|p| p.2).sum::<f64>() / n;
        centered.extend(members.iter().map(|p| (p.1 - mx, p.2 - my)));
    }
    let sxx: f64 = centered.iter().map(|(x, _)| x * x).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = centered.iter().map(|(x, y)| x * y).sum::<f64>() / sxx;
    let dof = centered.len() as i64 - groups.len() as i64 - 1;
    let ci = (dof > 0).then(|| {
        let ssr: f64 = centered.iter().map(|(x, y)| (y - slope * x).powi(2)).sum();
        let se = (ssr / dof as f64 / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof as f64).expect("positive dof").inverse_cdf(0.975);
        [slope - t * se, slope + t * se]
    });
    Some((slope, ci))
}

struct Quantity {
    name: &'static str,
    driver: &'static str,
    error: fn(&CellRecord) -> f64,
    x: fn(&CellRecord) -> f64,
    /// Relative error, for the pre-asymptotic guard.
    relative: fn(&CellRecord, &TruthModel) -> f64,
}

const QUANTITIES: [Quantity; 4] = [
    Quantity {
        name: "R_L2",
        driver: "delta",
        error: |r| r.errors.radius_l2,
        x: |r| r.delta,
        relative: |r, t| r.errors.radius_l2 / t.radius.sobolev_norm(0),
    },
    Quantity {
        name: "R_H2",
        driver: "delta",
        error: |r| r.errors.radius_h2,
        x: |r| r.delta,
        relative: |r, t| r.errors.radius_h2 / t.radius.sobolev_norm(2),
    },
    Quantity {
        name: "v_proxyH2",
        driver: "delta_U",
        error: |r| r.errors.velocity_proxy_h2,
        x: |r| r.delta_u,
        relative: |r, _| r.errors.velocity_proxy_h2 / r.velocity_reference_norm,
    },
    Quantity {
        name: "tau_L2",
        driver: "delta_U",
        error: |r| r.errors.tau_l2,
        x: |r| r.delta_u,
        relative: |r, _| r.errors.tau_l2,
    },
];

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn fit_slopes(cfg: &Config, truth: &TruthModel, records: &[CellRecord]) -> Vec<Slope> {
    let mut out = Vec::new();
    for q in &QUANTITIES {
        let valid: Vec<&CellRecord> = records
            .iter()
            .filter(|r| {
                let (x, y) = ((q.x)(r), (q.error)(r));
                x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()
            })
            .collect();
        let mut levels: Vec<usize> = valid.iter().map(|r| r.noise_index).collect();
        levels.sort_unstable();
        levels.dedup();
        if levels.is_empty() {
            continue;
        }
        let noisiest = *levels
            .iter()
            .max_by(|a, b| {
                let m = |l: usize| mean(valid.iter().filter(|r| r.noise_index == l).map(|r| (q.x)(r)));
                m(**a).total_cmp(&m(**b))
            })
            .expect("non-empty");
        let noisiest_error = mean(valid.iter().filter(|r| r.noise_index == noisiest).map(|r| (q.relative)(r, truth)));
        let excluded = (noisiest_error > PRE_ASYMPTOTIC_GUARD).then_some(noisiest);
        let kept: Vec<&CellRecord> = valid.into_iter().filter(|r| Some(r.noise_index) != excluded).collect();
        let group_of = |h: f64| cfg.resolutions.iter().position(|x| *x == h).unwrap_or(usize::MAX);
        let mut fit = |h: Option<f64>| {
            let pts: Vec<(usize, f64, f64)> = kept
                .iter()
                .filter(|r| h.is_none_or(|h| r.h == h))
                .map(|r| (group_of(r.h), (q.x)(r).ln(), (q.error)(r).ln()))
                .collect();
            let mut lv: Vec<usize> = kept
                .iter()
                .filter(|r| h.is_none_or(|h| r.h == h))
                .map(|r| r.noise_index)
                .collect();
            lv.sort_unstable();
            lv.dedup();
            if lv.len() < 3 {
                return;
            }
            if let Some((slope, ci95)) = fixed_effects_slope(&pts) {
                out.push(Slope {
                    quantity: q.name.into(),
                    driver: q.driver.into(),
                    h,
                    slope,
                    ci95,
                    points: pts.len(),
                    levels: lv.len(),
                    excluded_level: excluded,
                });
            }
        };
        for &h in &cfg.resolutions {
            fit(Some(h));
        }
        fit(None);
    }
    out
}

/// Index of the smallest finite value; ties go to the larger parameter.
pub fn row_minimum(values: &[f64], parameters: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) if *v < values[b] || (*v == values[b] && parameters[i] > parameters[b]) => Some(i),
            keep => keep,
        };
    }
    best
}

fn table(cfg: &Config, quantity: &str, parameters: &[f64], cells: &[(f64, Vec<f64>)]) -> ParameterTable {
    let rows = cfg
        .resolutions
        .iter()
        .map(|&h| {
            let values: Vec<f64> = (0..parameters.len())
                .map(|j| mean(cells.iter().filter(|(ch, _)| *ch == h).map(|(_, v)| v[j])))
                .collect();
            let best = row_minimum(&values, parameters);
            TableRow { h, values, best }
        })
        .collect();
    ParameterTable {
        quantity: quantity.into(),
        noise_index: cfg.study.table_noise,
        parameters: parameters.to_vec(),
        rows,
    }
}

/// Runs every cell of the study and assembles the report.
pub fn run_study(cfg: &Config) -> Result<RateReport> {
    cfg.validate()?;
    let truth = cfg.truth_model()?;
    let cells: Vec<(f64, usize, u64)> = cfg
        .resolutions
        .iter()
        .flat_map(|&h| {
            (0..cfg.noise_levels.len()).flat_map(move |n| cfg.seeds.iter().map(move |&s| (h, n, s)))
        })
        .collect();
    let results: Vec<(CellRecord, CellSweeps)> = cells
        .par_iter()
        .map(|&(h, n, s)| run_cell(cfg, &truth, h, n, s, n == cfg.study.table_noise))
        .collect();
    let mut alpha_cells = Vec::new();
    let mut beta_cells = Vec::new();
    let mut records = Vec::with_capacity(results.len());
    for (rec, sweeps) in results {
        if rec.noise_index == cfg.study.table_noise {
            alpha_cells.push((rec.h, sweeps.alpha));
            beta_cells.push((rec.h, sweeps.beta));
        }
        records.push(rec);
    }
    let slopes = fit_slopes(cfg, &truth, &records);
    let annotations = match cfg.parameter_mode {
        ParameterMode::Apriori { k, mu } => Some(Annotations {
            k,
            mu,
            expected_radius_l2: 1.0,
            expected_radius_h2: 1.0 - 2.0 / k,
        }),
        ParameterMode::Discrepancy => None,
    };
    Ok(RateReport {
        config: cfg.clone(),
        annotations,
        alpha_table: table(cfg, "R_L2", &cfg.study.alpha_grid, &alpha_cells),
        beta_table: cfg
            .study
            .velocity
            .then(|| table(cfg, "v_proxyH2", &cfg.study.beta_grid, &beta_cells)),
        records,
        slopes,
    })
}

fn records_csv(records: &[CellRecord]) -> String {
    let mut out = String::from(
        "h,sigma_mag,sigma_complex,seed,delta,delta_R_measured,eps,delta_U,R_L2,R_H2,v_proxyH2,tau_L2,chosen_alpha,chosen_beta,geometry_residual,velocity_residual,flags,failure\n",
    );
    for r in records {
        let failure = r.failure.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.h,
            r.sigma_mag,
            r.sigma_complex,
            r.seed,
            r.delta,
            r.delta_r_measured,
            r.eps,
            r.delta_u,
            r.errors.radius_l2,
            r.errors.radius_h2,
            r.errors.velocity_proxy_h2,
            r.errors.tau_l2,
            r.chosen_alpha,
            r.chosen_beta,
            r.geometry_residual,
            r.velocity_residual,
            r.flags.join(";"),
            failure
        )
        .expect("String write");
    }
    out
}

/// Rows are resolutions, columns parameters; the row minimum carries a `*`.
pub fn table_csv(t: &ParameterTable) -> String {
    let mut out = String::from("h");
    for p in &t.parameters {
        write!(out, ",{p}").expect("String write");
    }
    out.push('\n');
    for row in &t.rows {
        write!(out, "{}", row.h).expect("String write");
        for (j, v) in row.values.iter().enumerate() {
            let mark = if row.best == Some(j) { "*" } else { "" };
            write!(out, ",{v}{mark}").expect("String write");
        }
        out.push('\n');
    }
    out
}

/// Writes `report.json`, `records.csv` and the parameter tables to `out`.
pub fn write_report(report: &RateReport, out: &Path) -> Result<()> {
    io::write_json(&out.join("report.json"), report)?;
    io::write_text(&out.join("records.csv"), &records_csv(&report.records))?;
    io::write_text(&out.join("alpha_table.csv"), &table_csv(&report.alpha_table))?;
    if let Some(t) = &report.beta_table {
        io::write_text(&out.join("beta_table.csv"), &table_csv(t))?;
    }
    Ok(())
}

pub fn cmd_rate_study(cfg: &Config, out: &Path) -> Result<RateReport> {
    let report = run_study(cfg)?;
    write_report(&report, out)?;
    Ok(report)
}
