//! The processing stages, in memory and as file-to-file commands.

use std::path::{Path, PathBuf};

use flowrecon_core::eigenbasis::VelocityCoefficients;
use flowrecon_core::geo_ident::{
    barycenter, choose_alpha_discrepancy, gauss_newton_minimize, initial_radius, ForwardModel,
};
use flowrecon_core::grid::PhaseContrastData;
use flowrecon_core::phantom::{
    add_magnitude_noise, estimate_noise_level, magnitude_peaks, rasterize_characteristic, retrieve_velocity,
    synth_phase_contrast, voxel_means, NoiseSpec, DEFAULT_BINS,
};
use flowrecon_core::velocity::{choose_beta_discrepancy, compute_delta_u, reference_coefficients, VelocityProblem};
use flowrecon_core::wss::{lowpass_filter, mean_wss, wall_shear_stress, wss_error, WssProfile};
use flowrecon_core::{DiskTransform, GridGeometry, VoxelGrid};
use serde::{Deserialize, Serialize};

use crate::config::{Config, Level, NoiseLevel, Truth, TruthModel};
use crate::error::{AppError, Result, StageContext};
use crate::io::{self, GeometryResult, GridKind, VelocityResult};

pub const MAGNITUDE_FILE: &str = "magnitude.json";
pub const PHASE_FILE: &str = "phase.json";
pub const VELOCITY_GRID_FILE: &str = "u.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const NOISE_FILE: &str = "noise.json";
pub const GEOMETRY_FILE: &str = "geometry.json";
pub const VELOCITY_FILE: &str = "vel.json";
pub const WSS_FILE: &str = "tau.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Exterior mask threshold for noise estimation on normalized magnitudes.
pub const EXTERIOR_THRESHOLD: f64 = 0.1;

/// Synthetic data for one `(h, noise, seed)` cell.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub magnitude: VoxelGrid,
    pub phase: PhaseContrastData,
    pub velocity: VoxelGrid,
    /// Exact voxel means of `u†`.
    pub clean_velocity: VoxelGrid,
    /// Realized `‖m^δ − χ‖_{L²(D)}`.
    pub delta: f64,
    /// Realized `‖u^ε − ū‖_{L²}` over voxels meeting the true domain.
    pub eps: f64,
}

pub fn synthesize(cfg: &Config, truth: &TruthModel, h: f64, noise: &NoiseSpec) -> Result<Phantom> {
    let grid = GridGeometry::full_fov_with_spacing(h).map_err(|e| AppError::Config(e.to_string()))?;
    let s = cfg.phantom.subsamples;
    let chi = rasterize_characteristic(&truth.radius, &grid, s)?;
    let (magnitude, delta) = add_magnitude_noise(&chi, noise);
    let u = truth.velocity();
    let phase = synth_phase_contrast(&u, &truth.radius, &grid, cfg.venc(truth), noise, s)?;
    let velocity = retrieve_velocity(&phase);
    let clean_velocity = voxel_means(&u, &truth.radius, &grid, s);
    let eps = chi
        .values
        .iter()
        .zip(velocity.values.iter().zip(&clean_velocity.values))
        .filter(|(c, _)| **c > 0.0)
        .map(|(_, (a, b))| (a - b) * (a - b))
        .sum::<f64>()
        * grid.cell_area();
    Ok(Phantom {
        magnitude,
        phase,
        velocity,
        clean_velocity,
        delta,
        eps: eps.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub truth: Truth,
    pub bounds: flowrecon_core::GeometryBounds,
    pub venc: f64,
    pub h: f64,
    pub subsamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFile {
    pub delta: f64,
    pub eps: Option<f64>,
    pub sigma_mag: Option<f64>,
    pub sigma_complex: Option<f64>,
    pub seed: Option<u64>,
    /// Set when `delta` is estimated from the data.
    pub estimated: bool,
}

/// Writes magnitude, phase-contrast and retrieved-velocity grids with the
/// truth and the realized noise levels to `out`.
pub fn cmd_phantom(cfg: &Config, out: &Path, h: f64, level: NoiseLevel, seed: u64) -> Result<()> {
    let truth = cfg.truth_model()?;
    let noise = NoiseSpec::new(level.sigma_mag, level.sigma_complex, seed).map_err(|e| AppError::Config(e.to_string()))?;
    let p = synthesize(cfg, &truth, h, &noise)?;
    io::write_grid(&out.join(MAGNITUDE_FILE), &p.magnitude, GridKind::Magnitude)?;
    io::write_complex(&out.join(PHASE_FILE), &p.phase)?;
    io::write_grid(&out.join(VELOCITY_GRID_FILE), &p.velocity, GridKind::Velocity)?;
    io::write_json(
        &out.join(TRUTH_FILE),
        &TruthFile {
            truth: cfg.truth.clone(),
            bounds: cfg.bounds,
            venc: p.phase.venc,
            h: p.magnitude.geometry.h,
            subsamples: cfg.phantom.subsamples,
        },
    )?;
    io::write_json(
        &out.join(NOISE_FILE),
        &NoiseFile {
            delta: p.delta,
            eps: Some(p.eps),
            sigma_mag: Some(level.sigma_mag),
            sigma_complex: Some(level.sigma_complex),
            seed: Some(seed),
            estimated: false,
        },
    )
}

/// Normalized magnitude and retrieved velocity from raw grids, with `δ`
/// estimated on the exterior mask before clamping.
pub fn ingest(raw_magnitude: &VoxelGrid, raw_phase: &PhaseContrastData, bins: usize) -> Result<(VoxelGrid, VoxelGrid, f64)> {
    raw_magnitude.geometry.check_same(&raw_phase.geometry)?;
    let peaks = magnitude_peaks(raw_magnitude, bins)?;
    let scale = 1.0 / (peaks.m1 - peaks.m0);
    let rescaled = raw_magnitude.map(|v| (v - peaks.m0) * scale);
    let m = rescaled.map(|v| v.clamp(0.0, 1.0));
    let u = retrieve_velocity(raw_phase);
    let mask: Vec<bool> = m.values.iter().map(|v| *v < EXTERIOR_THRESHOLD).collect();
    let delta = estimate_noise_level(&rescaled, &mask)?;
    Ok((m, u, delta))
}

pub fn cmd_ingest(magnitude: &Path, complex: &Path, out: &Path, bins: Option<usize>) -> Result<()> {
    let (raw, _) = io::read_grid(magnitude, Some(GridKind::Magnitude))?;
    let phase = io::read_complex(complex)?;
    let (m, u, delta) = ingest(&raw, &phase, bins.unwrap_or(DEFAULT_BINS))?;
    io::write_grid(&out.join(MAGNITUDE_FILE), &m, GridKind::Magnitude)?;
    io::write_grid(&out.join(VELOCITY_GRID_FILE), &u, GridKind::Velocity)?;
    io::write_json(
        &out.join(NOISE_FILE),
        &NoiseFile {
            delta,
            eps: None,
            sigma_mag: None,
            sigma_complex: None,
            seed: None,
            estimated: true,
        },
    )
}

/// Geometry identification with the configured parameter rule.
pub fn reconstruct_geometry(cfg: &Config, magnitude: &VoxelGrid, delta: f64, recenter: bool) -> Result<GeometryResult> {
    let h = magnitude.geometry.h;
    let gcfg = cfg.geometry.core_config(h, cfg.bounds)?;
    let center = if recenter { barycenter(magnitude)? } else { [0.0, 0.0] };
    let model = ForwardModel::new(&magnitude.geometry, &gcfg, center)?;
    let init = initial_radius(magnitude, &cfg.bounds, gcfg.n_fourier);
    let (result, unreachable) = match cfg.alpha_rule(delta) {
        Some(alpha) => (gauss_newton_minimize(&model, magnitude, alpha, &gcfg, &init)?, false),
        None => {
            let choice = choose_alpha_discrepancy(&model, magnitude, delta, &gcfg, &init)?;
            (choice.result, choice.unreachable)
        }
    };
    Ok(GeometryResult {
        radius: result.radius,
        alpha: result.alpha,
        residual: result.residual_norm,
        iterations: result.iterations,
        center,
        bounds: cfg.bounds,
        delta,
        unreachable,
    })
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn read_noise_file(dir_of: &Path) -> Result<Option<NoiseFile>> {
    let p = sibling(dir_of, NOISE_FILE);
    if p.exists() {
        io::read_json(&p).map(Some)
    } else {
        Ok(None)
    }
}

/// `δ` from the argument, the sibling noise file, or the exterior-mask estimate.
fn magnitude_noise_level(level: Level, grid_path: &Path, m: &VoxelGrid) -> Result<f64> {
    match level {
        Level::Value(v) => Ok(v),
        Level::Auto(_) => match read_noise_file(grid_path)? {
            Some(n) => Ok(n.delta),
            None => {
                let mask: Vec<bool> = m.values.iter().map(|v| *v < EXTERIOR_THRESHOLD).collect();
                Ok(estimate_noise_level(m, &mask)?)
            }
        },
    }
}

pub fn cmd_recon_geometry(cfg: &Config, grid: &Path, delta: Level, out: &Path) -> Result<GeometryResult> {
    let (m, _) = io::read_grid(grid, Some(GridKind::Magnitude))?;
    let delta = magnitude_noise_level(delta, grid, &m)?;
    let result = reconstruct_geometry(cfg, &m, delta, cfg.geometry.recenter)?;
    io::write_json(out, &result)?;
    Ok(result)
}

/// Where the velocity data error bound comes from.
#[derive(Debug, Clone)]
pub enum DeltaU {
    Value(f64),
    /// Realized `‖T̃ v† − u^ε‖`, with `v†` the true field projected on the basis.
    Realized(Box<TruthModel>),
    /// `C (δ_R^{1/2} U3 + ε)`.
    Bound { eps: f64 },
    Unknown,
}

#[derive(Debug, Clone)]
pub struct VelocityOutcome {
    pub result: VelocityResult,
    pub coefficients: VelocityCoefficients,
    pub problem: VelocityProblem,
    pub transform: DiskTransform,
    /// `v†` on the same basis, when the truth is known.
    pub reference: Option<VelocityCoefficients>,
}

pub fn reconstruct_velocity(cfg: &Config, u: &VoxelGrid, geometry: &GeometryResult, delta_u: &DeltaU) -> Result<VelocityOutcome> {
    let vcfg = cfg.velocity.core_config()?;
    let transform = DiskTransform::new(geometry.radius.clone(), geometry.bounds)?;
    let problem = VelocityProblem::new(&transform, &u.geometry, geometry.center, &vcfg)?;
    let mut reference = None;
    let du = match delta_u {
        DeltaU::Value(v) => Some(*v),
        DeltaU::Realized(truth) => {
            let t = DiskTransform::new(truth.radius.clone(), truth.bounds)?;
            let r = reference_coefficients(
                problem.basis(),
                &t,
                truth.velocity(),
                cfg.study.reference_radial,
                cfg.study.reference_angular,
            )?;
            let d = problem.weighted_distance(&problem.predict(&r.c), &problem.data_vector(u)?);
            reference = Some(r);
            Some(d)
        }
        DeltaU::Bound { eps } => Some(compute_delta_u(cfg.velocity.delta_r, *eps, &cfg.velocity.norm_bounds)),
        DeltaU::Unknown => None,
    };
    let rule = match du {
        Some(d) => cfg.beta_rule(d),
        None => match cfg.velocity.beta {
            crate::config::Choice::Value(v) => Some(v),
            _ => {
                return Err(AppError::Config(
                    "the beta rule needs delta_U: pass --delta-u or provide a noise file".into(),
                ))
            }
        },
    };
    let (solve, unreachable) = match rule {
        Some(beta) => (problem.reconstruct(u, beta, &vcfg)?, false),
        None => {
            let choice = choose_beta_discrepancy(&problem, u, du.expect("rule requires delta_U"), &vcfg)?;
            (choice.solve, choice.unreachable)
        }
    };
    let result = VelocityResult::new(&solve.coefficients, solve.beta, solve.residual, du, unreachable);
    Ok(VelocityOutcome {
        result,
        coefficients: solve.coefficients,
        problem,
        transform,
        reference,
    })
}

/// `δ_U` source for data in `grid_path`'s directory: realized when the truth
/// file is present, the bound from the noise file otherwise.
fn velocity_noise_level(level: Level, grid_path: &Path) -> Result<DeltaU> {
    if let Level::Value(v) = level {
        return Ok(DeltaU::Value(v));
    }
    let truth_path = sibling(grid_path, TRUTH_FILE);
    if truth_path.exists() {
        let t: TruthFile = io::read_json(&truth_path)?;
        return Ok(DeltaU::Realized(Box::new(TruthModel::new(&t.truth, t.bounds)?)));
    }
    Ok(match read_noise_file(grid_path)?.and_then(|n| n.eps) {
        Some(eps) => DeltaU::Bound { eps },
        None => DeltaU::Unknown,
    })
}

pub fn cmd_recon_velocity(cfg: &Config, grid: &Path, geometry: &Path, delta_u: Level, out: &Path) -> Result<VelocityResult> {
    let (u, _) = io::read_grid(grid, Some(GridKind::Velocity))?;
    let geom: GeometryResult = io::read_json(geometry)?;
    let source = velocity_noise_level(delta_u, grid)?;
    let outcome = reconstruct_velocity(cfg, &u, &geom, &source)?;
    io::write_json(out, &outcome.result)?;
    Ok(outcome.result)
}

/// Raw and low-pass filtered stress, scaled by the viscosity.
pub fn compute_wss(cfg: &Config, geometry: &GeometryResult, v: &VelocityCoefficients) -> Result<(WssProfile, WssProfile)> {
    let raw = wall_shear_stress(&geometry.radius, v, &geometry.bounds, cfg.wss.samples)?.scaled(cfg.wss.viscosity);
    let filtered = lowpass_filter(&raw, cfg.wss.lowpass)?;
    Ok((raw, filtered))
}

pub fn cmd_wss(cfg: &Config, geometry: &Path, velocity: &Path, out: &Path) -> Result<(WssProfile, WssProfile)> {
    let geom: GeometryResult = io::read_json(geometry)?;
    let vel: VelocityResult = io::read_json(velocity)?;
    let v = vel.coefficients(velocity)?;
    let (raw, filtered) = compute_wss(cfg, &geom, &v)?;
    io::write_wss_csv(out, &raw, &filtered)?;
    Ok((raw, filtered))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub residual: f64,
    pub alpha: f64,
    pub delta: f64,
    pub unreachable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocitySummary {
    pub residual: f64,
    pub beta: f64,
    pub delta_u: Option<f64>,
    pub unreachable: bool,
    pub modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WssSummary {
    /// Relative `L²` size of the part removed by the filter.
    pub residual: f64,
    pub mean: f64,
    pub mean_filtered: f64,
}

/// Errors against the truth, when the data directory holds one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineErrors {
    pub radius_l2: f64,
    pub radius_h2: f64,
    pub tau_l2: f64,
    pub tau_mean: f64,
    pub tau_mean_reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub geometry: GeometrySummary,
    pub velocity: VelocitySummary,
    pub wss: WssSummary,
    pub errors: Option<PipelineErrors>,
}

/// Geometry, velocity and stress from the grids in `data`, each stage
/// reading the previous stage's file in `out`.
pub fn cmd_pipeline(cfg: &Config, data: &Path, out: &Path) -> Result<PipelineSummary> {
    let auto = Level::Auto(crate::config::AutoTag::Auto);
    let magnitude = data.join(MAGNITUDE_FILE);
    let geometry_path = out.join(GEOMETRY_FILE);
    let velocity_path = out.join(VELOCITY_FILE);
    let wss_path = out.join(WSS_FILE);
    let geom = cmd_recon_geometry(cfg, &magnitude, auto, &geometry_path).stage("geometry")?;
    let vel = cmd_recon_velocity(cfg, &data.join(VELOCITY_GRID_FILE), &geometry_path, cfg.velocity.delta_u, &velocity_path)
        .stage("velocity")?;
    let (raw, filtered) = cmd_wss(cfg, &geometry_path, &velocity_path, &wss_path).stage("wss")?;
    let removed = wss_error(&filtered, &raw)?;
    let truth_path = data.join(TRUTH_FILE);
    let errors = if truth_path.exists() {
        let t: TruthFile = io::read_json(&truth_path)?;
        let model = TruthModel::new(&t.truth, t.bounds)?;
        let reference = model.wss(cfg.wss.samples)?.scaled(cfg.wss.viscosity);
        let (l2, h2) = flowrecon_core::geo_ident::radius_errors(&geom.radius, &model.radius);
        Some(PipelineErrors {
            radius_l2: l2,
            radius_h2: h2,
            tau_l2: wss_error(&filtered, &reference)?,
            tau_mean: mean_wss(&raw),
            tau_mean_reference: mean_wss(&reference),
        })
    } else {
        None
    };
    let summary = PipelineSummary {
        geometry: GeometrySummary {
            residual: geom.residual,
            alpha: geom.alpha,
            delta: geom.delta,
            unreachable: geom.unreachable,
        },
        velocity: VelocitySummary {
            residual: vel.residual,
            beta: vel.beta,
            delta_u: vel.delta_u,
            unreachable: vel.unreachable,
            modes: vel.modes.len(),
        },
        wss: WssSummary {
            residual: removed,
            mean: mean_wss(&raw),
            mean_filtered: mean_wss(&filtered),
        },
        errors,
    };
    io::write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}
