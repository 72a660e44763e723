//! Geometry identification: fit a Fourier radius function to a normalized
//! magnitude image by Tikhonov regularization.
//!
//! The forward operator replaces the characteristic function of `Ω_R` by a
//! smoothed Heaviside of the signed radial distance,
//!
//! ```text
//! F(R)|_{V_i} = h⁻² ∫_{V_i} H_γ(R(φ(ξ)) − |ξ|) dξ,
//! ```
//!
//! integrated with a tensor Gauss–Legendre rule per voxel. The functional
//! `‖F(R) − m‖² + α ‖R‖²_{H²}` is minimized by projected Gauss–Newton, and
//! `α` is picked by the discrepancy principle.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{sobolev_weights, GeometryBounds, RadiusFunction};
use crate::grid::{GridGeometry, VoxelGrid};
use crate::linalg::{dot, norm2, Cholesky, DenseMatrix};
use crate::math;
use crate::par;
use crate::quadrature::GaussLegendre;

/// Sobolev order of the penalty.
pub const PENALTY_ORDER: u32 = 2;
/// Largest number of halvings of `α` in the discrepancy sweep.
pub const MAX_HALVINGS: u32 = 40;
/// The discrepancy sweep stops once `‖F(R_α) − m‖ ≤ τ δ`.
pub const DISCREPANCY_FACTOR: f64 = 4.0;
const MIN_STEP: f64 = 1.0 / (1u64 << 30) as f64;

/// `H_γ(x) = arctan(x/γ)/π + 1/2`.
#[inline]
pub fn smooth_heaviside(x: f64, gamma: f64) -> f64 {
    math::atan(x / gamma) / PI + 0.5
}

/// `H_γ′(x) = (γ/π) / (γ² + x²)`.
#[inline]
pub fn smooth_heaviside_derivative(x: f64, gamma: f64) -> f64 {
    gamma / (PI * (gamma * gamma + x * x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeoIdentConfig {
    pub gamma: f64,
    pub alpha0: f64,
    pub n_fourier: usize,
    pub quad_order: usize,
    pub gn_max_iter: usize,
    pub gn_tol: f64,
    pub bounds: GeometryBounds,
}

impl GeoIdentConfig {
    /// Defaults for voxel size `h`: `γ = h/2`, `α0 = 1`, `N = 4`, 4×4 nodes
    /// per voxel, at most 50 Gauss–Newton steps with step tolerance `1e-8`.
    pub fn for_spacing(h: f64) -> Self {
        GeoIdentConfig {
            gamma: 0.5 * h,
            alpha0: 1.0,
            n_fourier: 4,
            quad_order: 4,
            gn_max_iter: 50,
            gn_tol: 1e-8,
            bounds: GeometryBounds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.alpha0 > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if self.quad_order < 2 {
            return Err(Error::InvalidParameter("quad_order must be at least 2".into()));
        }
        if !(self.gn_tol > 0.0) {
            return Err(Error::InvalidParameter("gn_tol must be positive".into()));
        }
        GeometryBounds::new(self.bounds.r0, self.bounds.r1, self.bounds.eta)?;
        Ok(())
    }
}

/// Quadrature nodes of every voxel with the Fourier basis evaluated at each.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    grid: GridGeometry,
    gamma: f64,
    n_fourier: usize,
    center: [f64; 2],
    nodes_per_voxel: usize,
    /// Local weights, summing to one.
    weights: Vec<f64>,
    rho: Vec<f64>,
    /// `[1, sin φ, cos φ, sin 2φ, cos 2φ, …]` per node.
    basis: Vec<f64>,
}

impl ForwardModel {
    /// Model for domains `center + Ω_R` on `grid`.
    pub fn new(grid: &GridGeometry, cfg: &GeoIdentConfig, center: [f64; 2]) -> Result<Self> {
        cfg.validate()?;
        grid.validate()?;
        let q = cfg.quad_order;
        let gl = GaussLegendre::new(q);
        let offs: Vec<f64> = gl.nodes.iter().map(|x| 0.5 * (x + 1.0) * grid.h).collect();
        let mut weights = Vec::with_capacity(q * q);
        for wy in &gl.weights {
            for wx in &gl.weights {
                weights.push(0.25 * wx * wy);
            }
        }
        let nb = 1 + 2 * cfg.n_fourier;
        let per_voxel = par::map_indexed(grid.len(), |i| {
            let c = grid.voxel_corner(i);
            let mut rho = Vec::with_capacity(q * q);
            let mut basis = Vec::with_capacity(q * q * nb);
            for oy in &offs {
                for ox in &offs {
                    let x = c[0] + ox - center[0];
                    let y = c[1] + oy - center[1];
                    rho.push(math::hypot(x, y));
                    push_fourier_row(&mut basis, math::angle(x, y), cfg.n_fourier);
                }
            }
            (rho, basis)
        });
        let mut rho = Vec::with_capacity(grid.len() * q * q);
        let mut basis = Vec::with_capacity(grid.len() * q * q * nb);
        for (r, b) in per_voxel {
            rho.extend(r);
            basis.extend(b);
        }
        Ok(ForwardModel {
            grid: *grid,
            gamma: cfg.gamma,
            n_fourier: cfg.n_fourier,
            center,
            nodes_per_voxel: q * q,
            weights,
            rho,
            basis,
        })
    }

    pub fn grid(&self) -> &GridGeometry {
        &self.grid
    }

    pub fn center(&self) -> [f64; 2] {
        self.center
    }

    pub fn n_fourier(&self) -> usize {
        self.n_fourier
    }

    pub fn n_params(&self) -> usize {
        1 + 2 * self.n_fourier
    }

    fn coefficients(&self, radius: &RadiusFunction) -> Vec<f64> {
        radius.with_order(self.n_fourier).coefficients()
    }

    /// `F_{γ,h}(R)` per voxel.
    pub fn forward(&self, radius: &RadiusFunction) -> VoxelGrid {
        let c = self.coefficients(radius);
        VoxelGrid {
            geometry: self.grid,
            values: self.forward_coeffs(&c),
        }
    }

    fn forward_coeffs(&self, c: &[f64]) -> Vec<f64> {
        let nb = c.len();
        let q = self.nodes_per_voxel;
        par::map_indexed(self.grid.len(), |i| {
            let mut acc = 0.0;
            for k in 0..q {
                let node = i * q + k;
                let r = dot(&self.basis[node * nb..(node + 1) * nb], c);
                acc += self.weights[k] * smooth_heaviside(r - self.rho[node], self.gamma);
            }
            acc
        })
    }

    /// Forward values and the Jacobian (voxels × coefficients) in one pass.
    pub fn forward_and_jacobian(&self, radius: &RadiusFunction) -> (VoxelGrid, DenseMatrix) {
        let c = self.coefficients(radius);
        let (f, j) = self.forward_and_jacobian_coeffs(&c);
        (
            VoxelGrid {
                geometry: self.grid,
                values: f,
            },
            j,
        )
    }

    pub fn jacobian(&self, radius: &RadiusFunction) -> DenseMatrix {
        self.forward_and_jacobian(radius).1
    }

    fn forward_and_jacobian_coeffs(&self, c: &[f64]) -> (Vec<f64>, DenseMatrix) {
        let nb = c.len();
        let q = self.nodes_per_voxel;
        let rows = par::map_indexed(self.grid.len(), |i| {
            let mut acc = 0.0;
            let mut row = vec![0.0; nb];
            for k in 0..q {
                let node = i * q + k;
                let b = &self.basis[node * nb..(node + 1) * nb];
                let x = dot(b, c) - self.rho[node];
                acc += self.weights[k] * smooth_heaviside(x, self.gamma);
                let d = self.weights[k] * smooth_heaviside_derivative(x, self.gamma);
                for (r, bv) in row.iter_mut().zip(b) {
                    *r += d * bv;
                }
            }
            (acc, row)
        });
        let mut f = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * nb);
        for (v, row) in rows {
            f.push(v);
            data.extend(row);
        }
        let j = DenseMatrix::from_row_major(f.len(), nb, data).expect("row lengths are consistent");
        (f, j)
    }

    /// `‖F(R) − m‖_{L²(D)}`.
    pub fn residual_norm(&self, radius: &RadiusFunction, data: &VoxelGrid) -> Result<f64> {
        self.forward(radius).l2_distance(data)
    }

    /// `‖F(R) − m‖²_{L²(D)} + α ‖R‖²_{H²}`; `R` must be admissible.
    pub fn objective(&self, radius: &RadiusFunction, alpha: f64, data: &VoxelGrid, bounds: &GeometryBounds) -> Result<f64> {
        self.grid.check_same(&data.geometry)?;
        radius.check_admissible(bounds)?;
        let r = self.residual_norm(radius, data)?;
        Ok(r * r + alpha * radius.with_order(self.n_fourier).sobolev_norm_sq(PENALTY_ORDER))
    }
}

fn push_fourier_row(out: &mut Vec<f64>, phi: f64, n: usize) {
    out.push(1.0);
    let (s1, c1) = math::sin_cos(phi);
    let (mut s, mut c) = (s1, c1);
    for _ in 0..n {
        out.push(s);
        out.push(c);
        let ns = s * c1 + c * s1;
        let nc = c * c1 - s * s1;
        s = ns;
        c = nc;
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeoIdentResult {
    pub radius: RadiusFunction,
    pub alpha: f64,
    /// `‖F(R) − m‖_{L²(D)}` at the returned radius.
    pub residual_norm: f64,
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    /// Norm of the objective gradient at the returned radius.
    pub stationarity: f64,
}

struct Evaluation {
    objective: f64,
    residual_sq: f64,
}

fn evaluate(model: &ForwardModel, c: &[f64], w: &[f64], alpha: f64, data: &[f64]) -> Evaluation {
    let f = model.forward_coeffs(c);
    let h2 = model.grid.cell_area();
    let residual_sq = h2 * f.iter().zip(data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let penalty: f64 = w.iter().zip(c).map(|(w, c)| w * c * c).sum();
    Evaluation {
        objective: residual_sq + alpha * penalty,
        residual_sq,
    }
}

fn admissible(c: &[f64], bounds: &GeometryBounds) -> bool {
    RadiusFunction::from_coefficients(c)
        .map(|r| r.is_admissible(bounds))
        .unwrap_or(false)
}

/// Normal equations `(h² JᵀJ + α W) s = h² Jᵀ(m − F) − α W c` of one
/// Gauss–Newton step.
fn normal_system(model: &ForwardModel, data: &[f64], alpha: f64, w: &[f64], c: &[f64]) -> (DenseMatrix, Vec<f64>) {
    let h2 = model.grid.cell_area();
    let (f, j) = model.forward_and_jacobian_coeffs(c);
    let resid: Vec<f64> = data.iter().zip(&f).map(|(m, f)| m - f).collect();
    let mut a = j.weighted_gram(&vec![h2; f.len()]);
    let wa: Vec<f64> = w.iter().map(|w| alpha * w).collect();
    a.add_diagonal(&wa);
    let b = j
        .tr_mul_vec(&resid)
        .iter()
        .zip(&wa)
        .zip(c)
        .map(|((g, wa), c)| h2 * g - wa * c)
        .collect();
    (a, b)
}

/// One undamped Gauss–Newton step from `radius`.
#[derive(Debug, Clone)]
pub struct GaussNewtonStep {
    pub matrix: DenseMatrix,
    pub rhs: Vec<f64>,
    pub step: Vec<f64>,
}

pub fn gauss_newton_step(
    model: &ForwardModel,
    data: &VoxelGrid,
    alpha: f64,
    radius: &RadiusFunction,
) -> Result<GaussNewtonStep> {
    model.grid.check_same(&data.geometry)?;
    let c = radius.with_order(model.n_fourier).coefficients();
    let w = sobolev_weights(model.n_fourier, PENALTY_ORDER);
    let (matrix, rhs) = normal_system(model, &data.values, alpha, &w, &c);
    let step = Cholesky::factor(&matrix)?.solve(&rhs);
    Ok(GaussNewtonStep { matrix, rhs, step })
}

/// Projected Gauss–Newton for `‖F(R) − m‖² + α ‖R‖²_{H²}` from `init`.
///
/// Each step solves `(h² JᵀJ + α W) s = h² Jᵀ(m − F) − α W c` and is halved
/// until the objective decreases and the iterate stays admissible.
pub fn gauss_newton_minimize(
    model: &ForwardModel,
    data: &VoxelGrid,
    alpha: f64,
    cfg: &GeoIdentConfig,
    init: &RadiusFunction,
) -> Result<GeoIdentResult> {
    model.grid.check_same(&data.geometry)?;
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("alpha must be non-negative, got {alpha}")));
    }
    let init = init.with_order(model.n_fourier);
    init.check_admissible(&cfg.bounds)?;
    let w = sobolev_weights(model.n_fourier, PENALTY_ORDER);
    let mut c = init.coefficients();
    let mut current = evaluate(model, &c, &w, alpha, &data.values);
    let mut history = vec![current.objective];
    let mut iterations = 0;
    let mut stationarity;
    loop {
        let (a, b) = normal_system(model, &data.values, alpha, &w, &c);
        stationarity = 2.0 * norm2(&b);
        if iterations >= cfg.gn_max_iter {
            break;
        }
        let s = Cholesky::factor(&a)?.solve(&b);
        if norm2(&s) < cfg.gn_tol {
            break;
        }
        let mut lambda = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = c.iter().zip(&s).map(|(c, s)| c + lambda * s).collect();
            if admissible(&trial, &cfg.bounds) {
                let e = evaluate(model, &trial, &w, alpha, &data.values);
                if e.objective < current.objective {
                    break Some((trial, e));
                }
            }
            lambda *= 0.5;
            if lambda < MIN_STEP {
                break None;
            }
        };
        match accepted {
            Some((trial, e)) => {
                c = trial;
                current = e;
                history.push(current.objective);
                iterations += 1;
                if lambda * norm2(&s) < cfg.gn_tol {
                    let (_, b) = normal_system(model, &data.values, alpha, &w, &c);
                    stationarity = 2.0 * norm2(&b);
                    break;
                }
            }
            None => {
                // a descent direction that cannot reduce the objective at all
                // means the iterate is a minimizer up to round-off
                let predicted = dot(&b, &s);
                if predicted <= 1e-12 * current.objective.max(f64::MIN_POSITIVE) {
                    break;
                }
                return Err(Error::NoAdmissibleStep { iterations });
            }
        }
    }
    Ok(GeoIdentResult {
        radius: RadiusFunction::from_coefficients(&c)?,
        alpha,
        residual_norm: math::sqrt(current.residual_sq),
        objective_history: history,
        iterations,
        stationarity,
    })
}

/// Outcome of the `α` discrepancy sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AlphaChoice {
    pub result: GeoIdentResult,
    /// Set when no `α` in the sweep met the bound; `result` is then the
    /// largest-`α` run whose residual is within `δ` of the smallest one.
    pub unreachable: bool,
    /// `(α, residual)` of every run, in sweep order.
    pub trials: Vec<(f64, f64)>,
}

/// Largest `α = α0 2^{−n}`, `n ≤ 40`, whose minimizer has residual `≤ 4δ`,
/// warm-starting each run from the previous minimizer.
pub fn choose_alpha_discrepancy(
    model: &ForwardModel,
    data: &VoxelGrid,
    delta: f64,
    cfg: &GeoIdentConfig,
    init: &RadiusFunction,
) -> Result<AlphaChoice> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("delta must be positive, got {delta}")));
    }
    let bound = DISCREPANCY_FACTOR * delta;
    let mut start = init.clone();
    let mut trials = Vec::new();
    let mut runs: Vec<GeoIdentResult> = Vec::new();
    for n in 0..=MAX_HALVINGS {
        let alpha = cfg.alpha0 * math::powi(0.5, n);
        let result = gauss_newton_minimize(model, data, alpha, cfg, &start)?;
        trials.push((alpha, result.residual_norm));
        if result.residual_norm <= bound {
            return Ok(AlphaChoice {
                result,
                unreachable: false,
                trials,
            });
        }
        // stagnation: further halvings cannot reach the bound
        let stagnated = runs
            .last()
            .is_some_and(|prev| math::abs(prev.residual_norm - result.residual_norm) <= 1e-12);
        start = result.radius.clone();
        runs.push(result);
        if stagnated {
            break;
        }
    }
    let residuals: Vec<f64> = runs.iter().map(|r| r.residual_norm).collect();
    let pick = plateau_index(&residuals, delta);
    Ok(AlphaChoice {
        result: runs.swap_remove(pick),
        unreachable: true,
        trials,
    })
}

/// First index, in sweep order, whose residual is within `slack` of the
/// smallest one.
pub(crate) fn plateau_index(residuals: &[f64], slack: f64) -> usize {
    let min = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    residuals
        .iter()
        .position(|r| *r <= min + slack)
        .expect("non-empty sweep")
}

/// Intensity-weighted mean of voxel centers.
pub fn barycenter(m: &VoxelGrid) -> Result<[f64; 2]> {
    let mut total = 0.0;
    let mut acc = [0.0, 0.0];
    for (i, v) in m.values.iter().enumerate() {
        let c = m.geometry.voxel_center(i);
        total += v;
        acc[0] += v * c[0];
        acc[1] += v * c[1];
    }
    if !(total > 0.0) {
        return Err(Error::EmptyDomain);
    }
    Ok([acc[0] / total, acc[1] / total])
}

/// The circle with the data's area, `b0 = (h² Σ m / π)^{1/2}`, clamped to
/// `[r0 + 0.05, r1 − 0.05]`.
pub fn initial_radius(m: &VoxelGrid, bounds: &GeometryBounds, n_fourier: usize) -> RadiusFunction {
    let area = m.integral().max(0.0);
    let lo = bounds.r0 + 0.05;
    let hi = bounds.r1 - 0.05;
    let b0 = math::sqrt(area / PI);
    let b0 = if lo <= hi { b0.clamp(lo, hi) } else { 0.5 * (bounds.r0 + bounds.r1) };
    RadiusFunction::constant(b0, n_fourier)
}

/// `L²(0, 2π)` and `H²(0, 2π)` distances between two radius functions.
pub fn radius_errors(a: &RadiusFunction, b: &RadiusFunction) -> (f64, f64) {
    let d = a.sub(b);
    (d.sobolev_norm(0), d.sobolev_norm(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::rasterize_characteristic;

    fn truth() -> RadiusFunction {
        RadiusFunction::new(0.5, vec![0.0, 0.0, 0.03, 0.0], vec![0.0, 0.05, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn heaviside_values() {
        assert_eq!(smooth_heaviside(0.0, 0.1), 0.5);
        for x in [-3.0, -0.2, 0.01, 5.0] {
            assert!((smooth_heaviside(x, 0.3) + smooth_heaviside(-x, 0.3) - 1.0).abs() < 1e-15);
        }
        assert!((smooth_heaviside(1.0, 0.01) - 0.996817).abs() < 5e-7);
        let h = 1e-6;
        let fd = (smooth_heaviside(0.3 + h, 0.2) - smooth_heaviside(0.3 - h, 0.2)) / (2.0 * h);
        assert!((fd - smooth_heaviside_derivative(0.3, 0.2)).abs() < 1e-9);
    }

    #[test]
    fn saturates_far_from_boundary() {
        let g = GridGeometry::full_fov(32).unwrap();
        let mut cfg = GeoIdentConfig::for_spacing(g.h);
        cfg.gamma = 1e-6;
        let model = ForwardModel::new(&g, &cfg, [0.0, 0.0]).unwrap();
        let f = model.forward(&RadiusFunction::constant(0.5, 4));
        assert!((f.values[g.index(16, 16)] - 1.0).abs() < 1e-6);
        assert!(f.values[0].abs() < 1e-6);
    }

    #[test]
    fn sharp_limit_matches_rasterizer() {
        let g = GridGeometry::full_fov(64).unwrap();
        let mut cfg = GeoIdentConfig::for_spacing(g.h);
        cfg.gamma = 1e-4;
        let r = RadiusFunction::constant(0.5, 4);
        let f = ForwardModel::new(&g, &cfg, [0.0, 0.0]).unwrap().forward(&r);
        let m = rasterize_characteristic(&r, &g, 16).unwrap();
        // a 4×4 rule cannot resolve a sharp interface better than a quarter voxel
        assert!(f.max_abs_diff(&m).unwrap() <= 0.26);
        assert!(f.l2_distance(&m).unwrap() <= 0.02);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = GridGeometry::full_fov(16).unwrap();
        let cfg = GeoIdentConfig::for_spacing(g.h);
        let model = ForwardModel::new(&g, &cfg, [0.0, 0.0]).unwrap();
        let r = truth();
        let j = model.jacobian(&r);
        let c = r.coefficients();
        let eps = 1e-6;
        let mut diff = 0.0;
        for col in 0..c.len() {
            let mut p = c.clone();
            let mut m = c.clone();
            p[col] += eps;
            m[col] -= eps;
            let fp = model.forward_coeffs(&p);
            let fm = model.forward_coeffs(&m);
            for row in 0..j.rows() {
                let fd = (fp[row] - fm[row]) / (2.0 * eps);
                diff += (fd - j[(row, col)]).powi(2);
            }
        }
        assert!(diff.sqrt() <= 1e-5 * j.frobenius());
        assert!((0..j.rows()).all(|i| j[(i, 0)] >= 0.0));
        let mut sharp = cfg;
        sharp.gamma = 1e-3;
        let jd = ForwardModel::new(&g, &sharp, [0.0, 0.0]).unwrap().jacobian(&r);
        assert!(jd[(g.index(8, 8), 0)] < 1e-2);
    }

    #[test]
    fn objective_is_additive_and_checks_admissibility() {
        let g = GridGeometry::full_fov(16).unwrap();
        let cfg = GeoIdentConfig::for_spacing(g.h);
        let model = ForwardModel::new(&g, &cfg, [0.0, 0.0]).unwrap();
        let r = truth();
        let data = model.forward(&r);
        let j0 = model.objective(&r, 0.0, &data, &cfg.bounds).unwrap();
        let j1 = model.objective(&r, 0.3, &data, &cfg.bounds).unwrap();
        assert_eq!(j0, 0.0);
        assert!((j1 - j0 - 0.3 * r.sobolev_norm_sq(2)).abs() < 1e-14);
        let zero = RadiusFunction::constant(0.0, 4);
        assert!(matches!(model.objective(&zero, 0.1, &data, &cfg.bounds), Err(Error::Inadmissible { .. })));
    }

    #[test]
    fn stationary_start_converges_immediately() {
        let g = GridGeometry::full_fov(32).unwrap();
        let cfg = GeoIdentConfig::for_spacing(g.h);
        let model = ForwardModel::new(&g, &cfg, [0.0, 0.0]).unwrap();
        let r = truth();
        let data = model.forward(&r);
        let alpha = 1e-8;
        let res = gauss_newton_minimize(&model, &data, alpha, &cfg, &r).unwrap();
        assert!(res.iterations <= 2);
        let last = *res.objective_history.last().unwrap();
        assert!(last <= alpha * r.sobolev_norm_sq(2) * (1.0 + 1e-6));
    }

    #[test]
    fn recovers_circle_to_subpixel_accuracy() {
        let g = GridGeometry::full_fov(64).unwrap();
        let truth = RadiusFunction::constant(0.5, 4);
        let data = rasterize_characteristic(&truth, &g, 16).unwrap();
        let cfg = GeoIdentConfig::for_spacing(g.h);
        let model = ForwardModel::new(&g, &cfg, [0.0, 0.0]).unwrap();
        let init = initial_radius(&data, &cfg.bounds, 4);
        let res = gauss_newton_minimize(&model, &data, 1e-6, &cfg, &init).unwrap();
        for w in res.objective_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let err = (0..720)
            .map(|i| {
                let phi = core::f64::consts::TAU * i as f64 / 720.0;
                (res.radius.eval(phi) - 0.5).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < g.h / 4.0, "max radius error {err}");
    }

    #[test]
    fn discrepancy_returns_alpha0_for_huge_delta() {
        let g = GridGeometry::full_fov(16).unwrap();
        let cfg = GeoIdentConfig::for_spacing(g.h);
        let model = ForwardModel::new(&g, &cfg, [0.0, 0.0]).unwrap();
        let data = rasterize_characteristic(&truth(), &g, 8).unwrap();
        let init = initial_radius(&data, &cfg.bounds, 4);
        let choice = choose_alpha_discrepancy(&model, &data, 10.0, &cfg, &init).unwrap();
        assert_eq!(choice.result.alpha, cfg.alpha0);
        assert!(!choice.unreachable);
        let choice = choose_alpha_discrepancy(&model, &data, 1e-3, &cfg, &init).unwrap();
        assert!(choice.unreachable || choice.result.residual_norm <= 4e-3);
        assert!(choose_alpha_discrepancy(&model, &data, 0.0, &cfg, &init).is_err());
    }

    #[test]
    fn barycenter_of_shifted_disk() {
        let g = GridGeometry::full_fov(64).unwrap();
        let m = rasterize_characteristic(&RadiusFunction::constant(0.3, 0), &g, 8).unwrap();
        let c = barycenter(&m).unwrap();
        assert!(c[0].abs() < 1e-12 && c[1].abs() < 1e-12);
        assert!(barycenter(&VoxelGrid::zeros(g)).is_err());
        let init = initial_radius(&m, &GeometryBounds::default(), 2);
        assert!((init.b0 - 0.3).abs() < 1e-3);
    }

    #[test]
    fn centered_model_sees_translated_domain() {
        let g = GridGeometry::full_fov(32).unwrap();
        let mut cfg = GeoIdentConfig::for_spacing(g.h);
        cfg.gamma = 1e-4;
        let shifted = ForwardModel::new(&g, &cfg, [0.125, -0.0625]).unwrap();
        let f = shifted.forward(&RadiusFunction::constant(0.3, 4));
        let c = barycenter(&f).unwrap();
        assert!((c[0] - 0.125).abs() < 1e-3 && (c[1] + 0.0625).abs() < 1e-3);
    }
}
