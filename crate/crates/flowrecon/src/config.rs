//! Run and study configuration, read from a single JSON file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use flowrecon_core::eigenbasis::{DiskEigenBasis, VelocityCoefficients};
use flowrecon_core::geo_ident::GeoIdentConfig;
use flowrecon_core::phantom::poiseuille_velocity;
use flowrecon_core::velocity::{NormBounds, Solver, VelocityReconConfig};
use flowrecon_core::wss::{poiseuille_wss, wall_shear_stress, WssProfile};
use flowrecon_core::{DiskTransform, GeometryBounds, RadiusFunction};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::io;

/// A fixed regularization parameter, the discrepancy principle, or the rule
/// of the study's `parameter_mode`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Choice {
    Value(f64),
    Rule(Rule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Auto,
    Disc,
}

impl FromStr for Choice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(Choice::Rule(Rule::Auto)),
            "disc" => Ok(Choice::Rule(Rule::Disc)),
            _ => match s.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(Choice::Value(v)),
                _ => Err(format!("expected a positive number, \"disc\" or \"auto\", got {s:?}")),
            },
        }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Choice::Value(v) => write!(f, "{v}"),
            Choice::Rule(Rule::Auto) => f.write_str("auto"),
            Choice::Rule(Rule::Disc) => f.write_str("disc"),
        }
    }
}

/// A noise level given explicitly or taken from the available data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Level {
    Value(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Level::Auto(AutoTag::Auto));
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(Level::Value(v)),
            _ => Err(format!("expected a non-negative number or \"auto\", got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParameterMode {
    /// `α = δ^{4/k}` and `β = δ_U^{2/(2μ+1)}`.
    Apriori {
        k: f64,
        #[serde(default = "default_mu")]
        mu: f64,
    },
    Discrepancy,
}

fn default_mu() -> f64 {
    0.125
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocityProfile {
    /// `u = u_max (1 − |y|²/R(φ)²)`.
    Poiseuille { u_max: f64 },
    /// Eigenbasis coefficients on the unit disk, pushed through the true transform.
    Manufactured { cutoff: f64, coefficients: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub radius: RadiusFunction,
    pub velocity: VelocityProfile,
}

/// A true flow with everything needed to synthesize data and score results.
#[derive(Debug, Clone)]
pub struct TruthModel {
    pub radius: RadiusFunction,
    pub bounds: GeometryBounds,
    profile: VelocityProfile,
    manufactured: Option<(Arc<DiskTransform>, VelocityCoefficients)>,
}

impl TruthModel {
    pub fn new(truth: &Truth, bounds: GeometryBounds) -> Result<Self> {
        let manufactured = match &truth.velocity {
            VelocityProfile::Poiseuille { u_max } => {
                if !(u_max.is_finite() && *u_max > 0.0) {
                    return Err(AppError::Config(format!("u_max must be positive, got {u_max}")));
                }
                None
            }
            VelocityProfile::Manufactured { cutoff, coefficients } => {
                let basis = Arc::new(DiskEigenBasis::new(*cutoff).map_err(|e| AppError::Config(e.to_string()))?);
                let v = VelocityCoefficients::new(basis, coefficients.clone())
                    .map_err(|e| AppError::Config(format!("manufactured velocity: {e}")))?;
                let t = DiskTransform::new(truth.radius.clone(), bounds)
                    .map_err(|e| AppError::Config(format!("true radius: {e}")))?;
                Some((Arc::new(t), v))
            }
        };
        truth
            .radius
            .check_admissible(&bounds)
            .map_err(|e| AppError::Config(format!("true radius: {e}")))?;
        Ok(TruthModel {
            radius: truth.radius.clone(),
            bounds,
            profile: truth.velocity.clone(),
            manufactured,
        })
    }

    /// Physical velocity `u†(y)`, zero outside the domain.
    pub fn velocity(&self) -> impl Fn([f64; 2]) -> f64 + Sync + Send + '_ {
        move |y| match (&self.profile, &self.manufactured) {
            (VelocityProfile::Poiseuille { u_max }, _) => poiseuille_velocity(&self.radius, *u_max, y),
            (_, Some((t, v))) => {
                if !self.radius.contains(y) {
                    return 0.0;
                }
                t.map_inverse(y).and_then(|x| v.eval(x)).unwrap_or(0.0)
            }
            _ => 0.0,
        }
    }

    /// Largest speed, bounded from samples for manufactured flows.
    pub fn max_speed(&self) -> f64 {
        match (&self.profile, &self.manufactured) {
            (VelocityProfile::Poiseuille { u_max }, _) => *u_max,
            (_, Some((_, v))) => {
                let mut m = 0.0_f64;
                for i in 0..=64 {
                    for k in 0..128 {
                        let r = i as f64 / 64.0;
                        let phi = std::f64::consts::TAU * k as f64 / 128.0;
                        m = m.max(v.eval([r * phi.cos(), r * phi.sin()]).unwrap_or(0.0).abs());
                    }
                }
                m
            }
            _ => 0.0,
        }
    }

    /// Exact wall shear stress.
    pub fn wss(&self, samples: usize) -> Result<WssProfile> {
        Ok(match (&self.profile, &self.manufactured) {
            (VelocityProfile::Poiseuille { u_max }, _) => poiseuille_wss(&self.radius, *u_max, samples)?,
            (_, Some((_, v))) => wall_shear_stress(&self.radius, v, &self.bounds, samples)?,
            _ => unreachable!("manufactured profiles always carry coefficients"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub sigma_mag: f64,
    pub sigma_complex: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSettings {
    /// Velocity encoding; `None` uses three times the largest speed.
    pub venc: Option<f64>,
    pub subsamples: usize,
}

impl Default for PhantomSettings {
    fn default() -> Self {
        PhantomSettings {
            venc: None,
            subsamples: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySettings {
    pub alpha: Choice,
    pub alpha0: f64,
    /// Heaviside smoothing width; `None` uses `gamma_factor · h`.
    pub gamma: Option<f64>,
    pub gamma_factor: f64,
    pub n_fourier: usize,
    pub quad_order: usize,
    pub gn_max_iter: usize,
    pub gn_tol: f64,
    /// Center the reconstruction at the data barycenter instead of the origin.
    pub recenter: bool,
    /// Used instead of a noise-driven rule when `δ = 0`.
    pub noiseless_alpha: f64,
}

impl Default for GeometrySettings {
    fn default() -> Self {
        GeometrySettings {
            alpha: Choice::Rule(Rule::Auto),
            alpha0: 1.0,
            gamma: None,
            gamma_factor: 0.5,
            n_fourier: 4,
            quad_order: 4,
            gn_max_iter: 50,
            gn_tol: 1e-8,
            recenter: true,
            noiseless_alpha: 1e-8,
        }
    }
}

impl GeometrySettings {
    pub fn core_config(&self, h: f64, bounds: GeometryBounds) -> Result<GeoIdentConfig> {
        let cfg = GeoIdentConfig {
            gamma: self.gamma.unwrap_or(self.gamma_factor * h),
            alpha0: self.alpha0,
            n_fourier: self.n_fourier,
            quad_order: self.quad_order,
            gn_max_iter: self.gn_max_iter,
            gn_tol: self.gn_tol,
            bounds,
        };
        cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VelocitySettings {
    pub beta: Choice,
    pub beta0: f64,
    pub cutoff: Option<f64>,
    pub subsamples: usize,
    pub solver: Solver,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// `δ_U`; `auto` uses the realized data error when the truth is known
    /// and `C (δ_R^{1/2} U3 + ε)` otherwise.
    pub delta_u: Level,
    /// A-priori radius error `δ_R` for the bound above.
    pub delta_r: f64,
    pub norm_bounds: NormBounds,
    pub noiseless_beta: f64,
}

impl Default for VelocitySettings {
    fn default() -> Self {
        VelocitySettings {
            beta: Choice::Rule(Rule::Auto),
            beta0: 1.0,
            cutoff: None,
            subsamples: 16,
            solver: Solver::Cholesky,
            cg_tol: 1e-10,
            cg_max_iter: 5000,
            delta_u: Level::Auto(AutoTag::Auto),
            delta_r: 0.0,
            norm_bounds: NormBounds::default(),
            noiseless_beta: 1e-8,
        }
    }
}

impl VelocitySettings {
    pub fn core_config(&self) -> Result<VelocityReconConfig> {
        let cfg = VelocityReconConfig {
            cutoff: self.cutoff,
            beta0: self.beta0,
            subsamples: self.subsamples,
            solver: self.solver,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
            ..VelocityReconConfig::default()
        };
        cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WssSettings {
    pub samples: usize,
    pub lowpass: usize,
    /// Dynamic viscosity multiplying the normalized stress.
    pub viscosity: f64,
}

impl Default for WssSettings {
    fn default() -> Self {
        WssSettings {
            samples: flowrecon_core::wss::DEFAULT_SAMPLES,
            lowpass: flowrecon_core::wss::DEFAULT_LOWPASS,
            viscosity: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySettings {
    pub velocity: bool,
    pub wss: bool,
    /// Overrides `geometry.recenter` inside studies.
    pub recenter: bool,
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    /// Index into `noise_levels` of the level used for the parameter tables.
    pub table_noise: usize,
    /// Quadrature of the reference coefficients `v†`.
    pub reference_radial: usize,
    pub reference_angular: usize,
}

impl Default for StudySettings {
    fn default() -> Self {
        StudySettings {
            velocity: true,
            wss: true,
            recenter: false,
            alpha_grid: (0..10).map(|k| 10f64.powf(-0.5 * k as f64)).collect(),
            beta_grid: (4..16).map(|k| 10f64.powf(-0.5 * k as f64)).collect(),
            table_noise: 1,
            reference_radial: 128,
            reference_angular: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub truth: Truth,
    pub resolutions: Vec<f64>,
    pub noise_levels: Vec<NoiseLevel>,
    pub seeds: Vec<u64>,
    pub parameter_mode: ParameterMode,
    pub output_dir: PathBuf,
    pub bounds: GeometryBounds,
    pub phantom: PhantomSettings,
    pub geometry: GeometrySettings,
    pub velocity: VelocitySettings,
    pub wss: WssSettings,
    pub study: StudySettings,
}

impl Default for Config {
    /// The default study: `R† = 0.5 + 0.05 cos 2φ + 0.03 sin 3φ`, Poiseuille
    /// flow with `u_max = 1`, `h ∈ {1/16, 1/24, 1/32, 1/48}`, four noise
    /// levels over 1.5 decades and five seeds.
    fn default() -> Self {
        Config {
            truth: Truth {
                radius: RadiusFunction::new(0.5, vec![0.0, 0.0, 0.03, 0.0], vec![0.0, 0.05, 0.0, 0.0])
                    .expect("finite coefficients"),
                velocity: VelocityProfile::Poiseuille { u_max: 1.0 },
            },
            resolutions: vec![1.0 / 16.0, 1.0 / 24.0, 1.0 / 32.0, 1.0 / 48.0],
            noise_levels: [(0.05, 0.03), (0.015, 0.01), (0.005, 0.003), (0.0015, 0.001)]
                .iter()
                .map(|&(sigma_mag, sigma_complex)| NoiseLevel {
                    sigma_mag,
                    sigma_complex,
                })
                .collect(),
            seeds: (1..=5).collect(),
            parameter_mode: ParameterMode::Apriori { k: 4.0, mu: default_mu() },
            output_dir: PathBuf::from("out"),
            bounds: GeometryBounds::default(),
            phantom: PhantomSettings::default(),
            geometry: GeometrySettings::default(),
            velocity: VelocitySettings::default(),
            wss: WssSettings::default(),
            study: StudySettings::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_text(path)?;
        let cfg: Config =
            serde_json::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AppError::Config(m));
        if self.resolutions.is_empty() || self.noise_levels.is_empty() || self.seeds.is_empty() {
            return bad("resolutions, noise_levels and seeds must be non-empty".into());
        }
        if let Some(h) = self.resolutions.iter().find(|h| !(**h > 0.0 && **h <= 0.25)) {
            return bad(format!("resolution {h} outside (0, 0.25]"));
        }
        for n in &self.noise_levels {
            if !(n.sigma_mag >= 0.0 && n.sigma_complex >= 0.0) {
                return bad(format!("negative noise level {n:?}"));
            }
        }
        GeometryBounds::new(self.bounds.r0, self.bounds.r1, self.bounds.eta).map_err(|e| AppError::Config(e.to_string()))?;
        if let ParameterMode::Apriori { k, mu } = self.parameter_mode {
            if !(k > 0.0 && mu >= 0.0) {
                return bad(format!("invalid a-priori exponents k = {k}, mu = {mu}"));
            }
        }
        if self.phantom.subsamples == 0 {
            return bad("phantom subsamples must be positive".into());
        }
        if let Some(v) = self.phantom.venc {
            if !(v > 0.0) {
                return bad(format!("venc must be positive, got {v}"));
            }
        }
        for (name, c) in [("alpha", self.geometry.alpha), ("beta", self.velocity.beta)] {
            if let Choice::Value(v) = c {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if !(self.geometry.noiseless_alpha >= 0.0 && self.velocity.noiseless_beta > 0.0) {
            return bad("noiseless parameters must be positive".into());
        }
        if !(self.wss.viscosity > 0.0) {
            return bad("viscosity must be positive".into());
        }
        if self.study.table_noise >= self.noise_levels.len() {
            return bad(format!("table_noise {} out of range", self.study.table_noise));
        }
        self.geometry.core_config(self.resolutions[0], self.bounds)?;
        self.velocity.core_config()?;
        TruthModel::new(&self.truth, self.bounds)?;
        Ok(())
    }

    pub fn truth_model(&self) -> Result<TruthModel> {
        TruthModel::new(&self.truth, self.bounds)
    }

    pub fn venc(&self, truth: &TruthModel) -> f64 {
        self.phantom.venc.unwrap_or(3.0 * truth.max_speed())
    }

    /// `α` for realized noise level `delta`, or `None` for the discrepancy principle.
    pub fn alpha_rule(&self, delta: f64) -> Option<f64> {
        match (self.geometry.alpha, self.parameter_mode) {
            (Choice::Value(v), _) => Some(v),
            _ if delta == 0.0 => Some(self.geometry.noiseless_alpha),
            (Choice::Rule(Rule::Disc), _) | (_, ParameterMode::Discrepancy) => None,
            (_, ParameterMode::Apriori { k, .. }) => Some(delta.powf(4.0 / k)),
        }
    }

    /// `β` for data error bound `delta_u`, or `None` for the discrepancy principle.
    pub fn beta_rule(&self, delta_u: f64) -> Option<f64> {
        match (self.velocity.beta, self.parameter_mode) {
            (Choice::Value(v), _) => Some(v),
            _ if delta_u == 0.0 => Some(self.velocity.noiseless_beta),
            (Choice::Rule(Rule::Disc), _) | (_, ParameterMode::Discrepancy) => None,
            (_, ParameterMode::Apriori { mu, .. }) => Some(delta_u.powf(2.0 / (2.0 * mu + 1.0))),
        }
    }
}
