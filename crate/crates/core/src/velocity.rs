//! Velocity reconstruction on the reference disk.
//!
//! The unknown is `v = Σ c_j ψ_j` in the Dirichlet eigenbasis of the unit disk.
//! Voxel data are compared with the voxel means of `v ∘ φ_R⁻¹` over
//! `V_i ∩ Ω_R`, and
//!
//! ```text
//! Σ_i w_i h² ((A c)_i − u_i)² + β ‖Δv‖²,   ‖Δv‖² = Σ λ_j² c_j²,
//! ```
//!
//! is minimized through its normal equations `(AᵀWA + βΛ²) c = AᵀW u`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::eigenbasis::{DiskEigenBasis, RadialTables, VelocityCoefficients};
use crate::error::{Error, Result};
use crate::geometry::DiskTransform;
use crate::grid::{GridGeometry, VoxelGrid};
use crate::linalg::{conjugate_gradient, dot, relative_residual, Cholesky, DenseMatrix};
use crate::math;
use crate::par;
use crate::phantom::{classify_voxel, VoxelClass};

/// Largest number of halvings of `β` in the discrepancy sweep.
pub const MAX_HALVINGS: u32 = 40;
/// The discrepancy sweep stops once the data residual is `≤ τ δ_U`.
pub const DISCREPANCY_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Solver {
    Cholesky,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VelocityReconConfig {
    /// Eigenvalue cutoff `M`; `None` picks about one mode per four retained voxels.
    pub cutoff: Option<f64>,
    pub beta0: f64,
    pub subsamples: usize,
    pub solver: Solver,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Intervals of the radial interpolation tables.
    pub table_intervals: usize,
}

impl Default for VelocityReconConfig {
    fn default() -> Self {
        VelocityReconConfig {
            cutoff: None,
            beta0: 1.0,
            subsamples: 16,
            solver: Solver::Cholesky,
            cg_tol: 1e-10,
            cg_max_iter: 5000,
            table_intervals: 2048,
        }
    }
}

impl VelocityReconConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta0 > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("beta0 must be positive, got {}", self.beta0)));
        }
        if self.subsamples == 0 {
            return Err(Error::InvalidParameter("subsamples must be at least 1".into()));
        }
        if let Some(m) = self.cutoff {
            if !(m > 0.0) {
                return Err(Error::InvalidParameter(alloc::format!("invalid eigenvalue cutoff {m}")));
            }
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iter == 0 {
            return Err(Error::InvalidParameter("invalid CG settings".into()));
        }
        Ok(())
    }
}

/// Voxels meeting `center + Ω_R` with the fraction of their sub-samples inside.
pub fn retained_voxels(
    transform: &DiskTransform,
    grid: &GridGeometry,
    center: [f64; 2],
    subsamples: usize,
) -> Vec<(usize, f64)> {
    let radius = transform.radius();
    let lip = radius.lipschitz_bound();
    let total = (subsamples * subsamples) as f64;
    let fractions = par::map_indexed(grid.len(), |i| match classify_voxel(radius, lip, grid, center, i) {
        VoxelClass::Inside => 1.0,
        VoxelClass::Outside => 0.0,
        VoxelClass::Boundary => {
            grid.subsample_points(i, subsamples)
                .into_iter()
                .filter(|p| radius.contains([p[0] - center[0], p[1] - center[1]]))
                .count() as f64
                / total
        }
    });
    fractions
        .into_iter()
        .enumerate()
        .filter(|(_, f)| *f > 0.0)
        .collect()
}

/// Rows of the observation operator for the retained voxels.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub matrix: DenseMatrix,
    /// Flat grid index of each row.
    pub voxels: Vec<usize>,
    /// Estimated `|V_i ∩ Ω| / |V_i|` of each row.
    pub fractions: Vec<f64>,
    pub grid: GridGeometry,
}

/// Entry `(i, j)` is the mean of `ψ_j(φ_R⁻¹(ξ − center))` over the sub-samples
/// `ξ` of voxel `i` inside `center + Ω_R`. Voxels without inside samples are
/// dropped.
pub fn assemble_design_matrix(
    basis: &DiskEigenBasis,
    transform: &DiskTransform,
    grid: &GridGeometry,
    center: [f64; 2],
    subsamples: usize,
    table_intervals: usize,
) -> Result<DesignMatrix> {
    let retained = retained_voxels(transform, grid, center, subsamples);
    assemble_rows(basis, transform, grid, center, subsamples, table_intervals, &retained)
}

fn assemble_rows(
    basis: &DiskEigenBasis,
    transform: &DiskTransform,
    grid: &GridGeometry,
    center: [f64; 2],
    subsamples: usize,
    table_intervals: usize,
    retained: &[(usize, f64)],
) -> Result<DesignMatrix> {
    if retained.is_empty() {
        return Err(Error::EmptyDomain);
    }
    let tables = RadialTables::new(basis, table_intervals);
    let radius = transform.radius();
    let k = basis.len();
    let rows = par::map_indexed(retained.len(), |r| {
        let (i, _) = retained[r];
        let mut row = vec![0.0; k];
        let mut trig = Vec::new();
        let mut count = 0usize;
        for p in grid.subsample_points(i, subsamples) {
            let y = [p[0] - center[0], p[1] - center[1]];
            if !radius.contains(y) {
                continue;
            }
            if let Ok(x) = transform.map_inverse(y) {
                tables.accumulate(x, 1.0, &mut row, &mut trig);
                count += 1;
            }
        }
        let inv = 1.0 / count.max(1) as f64;
        row.iter_mut().for_each(|v| *v *= inv);
        row
    });
    let mut data = Vec::with_capacity(retained.len() * k);
    for row in rows {
        data.extend(row);
    }
    Ok(DesignMatrix {
        matrix: DenseMatrix::from_row_major(retained.len(), k, data)?,
        voxels: retained.iter().map(|r| r.0).collect(),
        fractions: retained.iter().map(|r| r.1).collect(),
        grid: *grid,
    })
}

/// One Tikhonov solve.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySolve {
    pub coefficients: VelocityCoefficients,
    pub beta: f64,
    /// Weighted data residual `(Σ w_i h² ((A c)_i − u_i)²)^{1/2}`.
    pub residual: f64,
    /// Relative residual of the normal equations.
    pub normal_residual: f64,
}

/// The assembled least-squares problem for a fixed geometry, reusable across
/// data sets and regularization parameters.
#[derive(Debug, Clone)]
pub struct VelocityProblem {
    basis: Arc<DiskEigenBasis>,
    design: DesignMatrix,
    /// `w_i h²`.
    weights: Vec<f64>,
    gram: DenseMatrix,
    lambda_sq: Vec<f64>,
}

impl VelocityProblem {
    /// Assembles the problem; with no cutoff in `cfg` the basis gets about a
    /// quarter as many modes as there are retained voxels.
    pub fn new(transform: &DiskTransform, grid: &GridGeometry, center: [f64; 2], cfg: &VelocityReconConfig) -> Result<Self> {
        cfg.validate()?;
        grid.validate()?;
        let retained = retained_voxels(transform, grid, center, cfg.subsamples);
        if retained.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let basis = match cfg.cutoff {
            Some(m) => DiskEigenBasis::new(m)?,
            None => DiskEigenBasis::with_mode_count((retained.len() / 4).max(1))?,
        };
        let basis = Arc::new(basis);
        let design = assemble_rows(&basis, transform, grid, center, cfg.subsamples, cfg.table_intervals, &retained)?;
        Ok(VelocityProblem::from_design(basis, design))
    }

    pub fn from_design(basis: Arc<DiskEigenBasis>, design: DesignMatrix) -> Self {
        let h2 = design.grid.cell_area();
        let weights: Vec<f64> = design.fractions.iter().map(|f| f * h2).collect();
        let gram = design.matrix.weighted_gram(&weights);
        let lambda_sq = basis.modes().iter().map(|m| m.lambda * m.lambda).collect();
        VelocityProblem {
            basis,
            design,
            weights,
            gram,
            lambda_sq,
        }
    }

    pub fn basis(&self) -> &Arc<DiskEigenBasis> {
        &self.basis
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    /// `w_i h²` per retained voxel.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Values of `grid` at the retained voxels.
    pub fn data_vector(&self, grid: &VoxelGrid) -> Result<Vec<f64>> {
        self.design.grid.check_same(&grid.geometry)?;
        Ok(self.design.voxels.iter().map(|i| grid.values[*i]).collect())
    }

    /// `(Σ w_i h² (a_i − b_i)²)^{1/2}` over the retained voxels.
    pub fn weighted_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        math::sqrt(
            self.weights
                .iter()
                .zip(a.iter().zip(b))
                .map(|(w, (x, y))| w * (x - y) * (x - y))
                .sum(),
        )
    }

    /// Weighted distance of two voxel grids over the retained voxels.
    pub fn grid_distance(&self, a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
        Ok(self.weighted_distance(&self.data_vector(a)?, &self.data_vector(b)?))
    }

    /// Predicted voxel means `A c`.
    pub fn predict(&self, c: &[f64]) -> Vec<f64> {
        self.design.matrix.mul_vec(c)
    }

    /// `AᵀW u`.
    pub fn rhs(&self, data: &[f64]) -> Vec<f64> {
        let wu: Vec<f64> = data.iter().zip(&self.weights).map(|(u, w)| u * w).collect();
        self.design.matrix.tr_mul_vec(&wu)
    }

    /// Solves `(AᵀWA + βΛ²) c = rhs` with the configured solver.
    pub fn solve(&self, data: &[f64], rhs: &[f64], beta: f64, cfg: &VelocityReconConfig) -> Result<VelocitySolve> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("beta must be positive, got {beta}")));
        }
        if data.len() != self.design.voxels.len() {
            return Err(Error::GridMismatch(alloc::format!(
                "{} data values for {} retained voxels",
                data.len(),
                self.design.voxels.len()
            )));
        }
        let mut a = self.gram.clone();
        let reg: Vec<f64> = self.lambda_sq.iter().map(|l| beta * l).collect();
        a.add_diagonal(&reg);
        let c = match cfg.solver {
            Solver::Cholesky => Cholesky::factor(&a)?.solve(rhs),
            Solver::Cg => conjugate_gradient(&a, rhs, cfg.cg_tol, cfg.cg_max_iter).solution,
        };
        let normal_residual = relative_residual(&a, &c, rhs);
        let residual = self.weighted_distance(&self.predict(&c), data);
        Ok(VelocitySolve {
            coefficients: VelocityCoefficients::new(self.basis.clone(), c)?,
            beta,
            residual,
            normal_residual,
        })
    }

    /// Tikhonov solution for the voxel data `u`.
    pub fn reconstruct(&self, u: &VoxelGrid, beta: f64, cfg: &VelocityReconConfig) -> Result<VelocitySolve> {
        let data = self.data_vector(u)?;
        let rhs = self.rhs(&data);
        self.solve(&data, &rhs, beta, cfg)
    }

    /// Solutions for every `β` in `betas`.
    pub fn sweep(&self, u: &VoxelGrid, betas: &[f64], cfg: &VelocityReconConfig) -> Result<Vec<VelocitySolve>> {
        let data = self.data_vector(u)?;
        let rhs = self.rhs(&data);
        betas.iter().map(|b| self.solve(&data, &rhs, *b, cfg)).collect()
    }
}

/// Tikhonov solution for data `u` on the geometry `transform`, assembling a
/// fresh problem.
pub fn reconstruct_velocity(
    u: &VoxelGrid,
    transform: &DiskTransform,
    center: [f64; 2],
    beta: f64,
    cfg: &VelocityReconConfig,
) -> Result<VelocitySolve> {
    VelocityProblem::new(transform, &u.geometry, center, cfg)?.reconstruct(u, beta, cfg)
}

/// Outcome of the `β` discrepancy sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaChoice {
    pub solve: VelocitySolve,
    /// Set when no `β` in the sweep met the bound; `solve` is then the
    /// largest-`β` solve whose residual is within `δ_U` of the smallest one.
    pub unreachable: bool,
    /// Residuals never decreased and `‖Λc‖` never increased with `β` along
    /// the sweep.
    pub monotone: bool,
    /// `(β, residual)` of every solve, in sweep order.
    pub trials: Vec<(f64, f64)>,
}

/// Largest `β = β0 2^{−n}`, `n ≤ 40`, with weighted data residual `≤ 2 δ_U`.
pub fn choose_beta_discrepancy(
    problem: &VelocityProblem,
    u: &VoxelGrid,
    delta_u: f64,
    cfg: &VelocityReconConfig,
) -> Result<BetaChoice> {
    if !(delta_u > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("delta_U must be positive, got {delta_u}")));
    }
    let data = problem.data_vector(u)?;
    let rhs = problem.rhs(&data);
    let bound = DISCREPANCY_FACTOR * delta_u;
    let mut trials = Vec::new();
    let mut monotone = true;
    let mut previous: Option<(VelocitySolve, f64)> = None;
    let mut runs: Vec<VelocitySolve> = Vec::new();
    for n in 0..=MAX_HALVINGS {
        let beta = cfg.beta0 * math::powi(0.5, n);
        let solve = problem.solve(&data, &rhs, beta, cfg)?;
        let penalty = math::sqrt(solve.coefficients.laplacian_norm_sq());
        trials.push((beta, solve.residual));
        if let Some((prev, prev_penalty)) = &previous {
            let tol = 1e-9 * prev.residual.max(1e-300);
            if solve.residual > prev.residual + tol || penalty < prev_penalty * (1.0 - 1e-9) {
                monotone = false;
            }
        }
        if solve.residual <= bound {
            return Ok(BetaChoice {
                solve,
                unreachable: false,
                monotone,
                trials,
            });
        }
        let stagnated = previous
            .as_ref()
            .is_some_and(|(prev, _)| math::abs(prev.residual - solve.residual) <= 1e-12);
        runs.push(solve.clone());
        previous = Some((solve, penalty));
        if stagnated {
            break;
        }
    }
    let residuals: Vec<f64> = runs.iter().map(|s| s.residual).collect();
    let pick = crate::geo_ident::plateau_index(&residuals, delta_u);
    Ok(BetaChoice {
        solve: runs.swap_remove(pick),
        unreachable: true,
        monotone,
        trials,
    })
}

/// A-priori constants for the reference-domain data error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormBounds {
    pub c: f64,
    /// Bound on `‖u†‖_{H³}`.
    pub u3: f64,
}

impl Default for NormBounds {
    fn default() -> Self {
        NormBounds { c: 1.0, u3: 1.0 }
    }
}

/// `δ_U = C (δ_R^{1/2} U3 + ε)`.
pub fn compute_delta_u(delta_r: f64, eps: f64, bounds: &NormBounds) -> f64 {
    bounds.c * (math::sqrt(delta_r.max(0.0)) * bounds.u3 + eps)
}

/// Coefficients of `u ∘ φ_R` on the unit disk, by polar quadrature.
pub fn reference_coefficients<F>(basis: &Arc<DiskEigenBasis>, transform: &DiskTransform, u: F, radial: usize, angular: usize) -> Result<VelocityCoefficients>
where
    F: Fn([f64; 2]) -> f64,
{
    let c = basis.project(
        |x| match transform.map_forward(x) {
            Ok(y) => u(y),
            Err(_) => 0.0,
        },
        radial,
        angular,
    );
    VelocityCoefficients::new(basis.clone(), c)
}

/// `(Σ (1 + λ + λ²)(a − b)²)^{1/2}` for coefficient vectors on one basis.
pub fn proxy_h2_distance(a: &VelocityCoefficients, b: &VelocityCoefficients) -> Result<f64> {
    if a.c.len() != b.c.len() {
        return Err(Error::InvalidParameter("coefficient vectors differ in length".into()));
    }
    let d: Vec<f64> = a.c.iter().zip(&b.c).map(|(x, y)| x - y).collect();
    Ok(math::sqrt(crate::eigenbasis::proxy_h2_norm_sq(&a.basis, &d)))
}

/// Gradient norm of the discrete Tikhonov objective at `c`, relative to the
/// right-hand side.
pub fn optimality_residual(problem: &VelocityProblem, u: &VoxelGrid, solve: &VelocitySolve) -> Result<f64> {
    let data = problem.data_vector(u)?;
    let rhs = problem.rhs(&data);
    let c = &solve.coefficients.c;
    let ac = problem.gram.mul_vec(c);
    let g: Vec<f64> = ac
        .iter()
        .zip(&problem.lambda_sq)
        .zip(c)
        .zip(&rhs)
        .map(|(((a, l), c), b)| a + solve.beta * l * c - b)
        .collect();
    Ok(math::sqrt(dot(&g, &g)) / math::sqrt(dot(&rhs, &rhs)).max(f64::MIN_POSITIVE))
}
