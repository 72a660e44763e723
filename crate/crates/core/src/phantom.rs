//! Synthetic magnitude and phase-contrast data, magnitude normalization and
//! noise estimation.
//!
//! Random numbers come from one ChaCha8 stream per `(channel, voxel)`, so the
//! output for a given seed does not depend on how voxels are scheduled.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::geometry::{DiskTransform, RadiusFunction};
use crate::grid::{GridGeometry, PhaseContrastData, VoxelGrid};
use crate::math;
use crate::par;

pub const DEFAULT_SUBSAMPLES: usize = 16;
pub const DEFAULT_BINS: usize = 64;
/// Synthesis refuses velocities at or above this fraction of `venc`.
pub const WRAP_GUARD: f64 = 0.95;

const CHANNEL_MAGNITUDE: u64 = 0;
const CHANNEL_COMPLEX: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseSpec {
    pub sigma_mag: f64,
    pub sigma_complex: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma_mag: f64, sigma_complex: f64, seed: u64) -> Result<Self> {
        if !(sigma_mag >= 0.0 && sigma_complex >= 0.0) {
            return Err(Error::InvalidParameter("noise levels must be non-negative".into()));
        }
        Ok(NoiseSpec {
            sigma_mag,
            sigma_complex,
            seed,
        })
    }

    pub fn noiseless() -> Self {
        NoiseSpec {
            sigma_mag: 0.0,
            sigma_complex: 0.0,
            seed: 0,
        }
    }
}

/// Standard normal pairs from a per-voxel stream.
struct Gaussian {
    rng: ChaCha8Rng,
}

impl Gaussian {
    fn new(seed: u64, channel: u64, voxel: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((channel << 40) | voxel as u64);
        Gaussian { rng }
    }

    fn uniform(&mut self) -> f64 {
        // (0, 1]
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Box–Muller.
    fn pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let rad = math::sqrt(-2.0 * math::ln(u1));
        let (s, c) = math::sin_cos(TAU * u2);
        (rad * c, rad * s)
    }
}

/// How a whole voxel sits relative to `Ω_R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VoxelClass {
    Inside,
    Outside,
    Boundary,
}

/// Conservative classification of the closed voxel `index` against
/// `center + Ω_R`: `Inside` and `Outside` are only returned when every point
/// of the voxel is strictly inside or outside, so they agree with any
/// sub-sampling.
pub(crate) fn classify_voxel(
    radius: &RadiusFunction,
    lipschitz: f64,
    grid: &GridGeometry,
    center: [f64; 2],
    index: usize,
) -> VoxelClass {
    let v = grid.voxel_center(index);
    let c = [v[0] - center[0], v[1] - center[1]];
    let rho = math::hypot(c[0], c[1]);
    let d = grid.h * core::f64::consts::FRAC_1_SQRT_2;
    if rho <= 2.0 * d {
        return VoxelClass::Boundary;
    }
    let dphi = math::asin((d / rho).min(1.0));
    let r = radius.eval(math::angle(c[0], c[1]));
    let slack = lipschitz * dphi + 1e-12;
    if rho + d < r - slack {
        VoxelClass::Inside
    } else if rho - d > r + slack {
        VoxelClass::Outside
    } else {
        VoxelClass::Boundary
    }
}

/// Fraction of the `s × s` midpoint samples of each voxel lying in `Ω_R`.
pub fn rasterize_characteristic(
    radius: &RadiusFunction,
    grid: &GridGeometry,
    subsamples: usize,
) -> Result<VoxelGrid> {
    if subsamples == 0 {
        return Err(Error::InvalidParameter("subsamples must be at least 1".into()));
    }
    grid.validate()?;
    let lip = radius.lipschitz_bound();
    let total = (subsamples * subsamples) as f64;
    let values = par::map_indexed(grid.len(), |i| match classify_voxel(radius, lip, grid, [0.0, 0.0], i) {
        VoxelClass::Inside => 1.0,
        VoxelClass::Outside => 0.0,
        VoxelClass::Boundary => {
            let inside = grid
                .subsample_points(i, subsamples)
                .into_iter()
                .filter(|p| radius.contains(*p))
                .count();
            inside as f64 / total
        }
    });
    VoxelGrid::new(*grid, values)
}

/// Adds i.i.d. `N(0, σ²)` noise per voxel. Returns the noisy grid and the
/// realized discrete `L²(D)` noise norm `δ = (Σ e² h²)^{1/2}`.
pub fn add_magnitude_noise(m: &VoxelGrid, noise: &NoiseSpec) -> (VoxelGrid, f64) {
    if noise.sigma_mag == 0.0 {
        return (m.clone(), 0.0);
    }
    let errors = par::map_indexed(m.values.len(), |i| {
        noise.sigma_mag * Gaussian::new(noise.seed, CHANNEL_MAGNITUDE, i).pair().0
    });
    let values = m.values.iter().zip(&errors).map(|(v, e)| v + e).collect();
    let delta = math::sqrt(errors.iter().map(|e| e * e).sum::<f64>() * m.geometry.cell_area());
    (
        VoxelGrid {
            geometry: m.geometry,
            values,
        },
        delta,
    )
}

/// Voxel means of `χ_Ω e^{i 2π u / venc}` over `s × s` midpoint samples plus
/// complex Gaussian noise of standard deviation `sigma_complex` per component.
pub fn synth_phase_contrast<F>(
    u: F,
    radius: &RadiusFunction,
    grid: &GridGeometry,
    venc: f64,
    noise: &NoiseSpec,
    subsamples: usize,
) -> Result<PhaseContrastData>
where
    F: Fn([f64; 2]) -> f64 + Sync + Send,
{
    if subsamples == 0 {
        return Err(Error::InvalidParameter("subsamples must be at least 1".into()));
    }
    if !(venc > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("venc must be positive, got {venc}")));
    }
    grid.validate()?;
    let lip = radius.lipschitz_bound();
    let total = (subsamples * subsamples) as f64;
    let k = TAU / venc;
    let cells = par::map_indexed(grid.len(), |i| {
        let mut re = 0.0;
        let mut im = 0.0;
        let mut umax = 0.0_f64;
        if classify_voxel(radius, lip, grid, [0.0, 0.0], i) != VoxelClass::Outside {
            for p in grid.subsample_points(i, subsamples) {
                if radius.contains(p) {
                    let v = u(p);
                    umax = umax.max(math::abs(v));
                    let (s, c) = math::sin_cos(k * v);
                    re += c;
                    im += s;
                }
            }
        }
        let mut d = [re / total, im / total];
        if noise.sigma_complex > 0.0 {
            let (a, b) = Gaussian::new(noise.seed, CHANNEL_COMPLEX, i).pair();
            d[0] += noise.sigma_complex * a;
            d[1] += noise.sigma_complex * b;
        }
        (d, umax)
    });
    let max_speed = cells.iter().map(|c| c.1).fold(0.0, f64::max);
    if max_speed >= WRAP_GUARD * venc {
        return Err(Error::WrapRisk {
            max_speed,
            limit: WRAP_GUARD * venc,
        });
    }
    PhaseContrastData::new(*grid, cells.into_iter().map(|c| c.0).collect(), venc)
}

/// `venc · arg(d) / 2π` per voxel, with `arg ∈ (−π, π]`.
pub fn retrieve_velocity(d: &PhaseContrastData) -> VoxelGrid {
    let scale = d.venc / TAU;
    VoxelGrid {
        geometry: d.geometry,
        values: d
            .values
            .iter()
            .map(|z| {
                let a = math::atan2(z[1], z[0]);
                // atan2(−0, x<0) = −π
                let a = if a == -PI { PI } else { a };
                scale * a
            })
            .collect(),
    }
}

/// Peak positions found by [`normalize_magnitude`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudePeaks {
    pub m0: f64,
    pub m1: f64,
}

/// Locates the two highest histogram peaks of `raw`.
pub fn magnitude_peaks(raw: &VoxelGrid, bins: usize) -> Result<MagnitudePeaks> {
    if bins < 2 {
        return Err(Error::InvalidParameter("histogram needs at least two bins".into()));
    }
    let (lo, hi) = raw
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::DegenerateHistogram);
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in &raw.values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let mut peaks: Vec<usize> = (0..bins)
        .filter(|&b| {
            let left = if b > 0 { counts[b - 1] } else { 0 };
            let right = if b + 1 < bins { counts[b + 1] } else { 0 };
            counts[b] > left && counts[b] > right
        })
        .collect();
    if peaks.len() < 2 {
        return Err(Error::DegenerateHistogram);
    }
    peaks.sort_by(|a, b| counts[*b].cmp(&counts[*a]).then(a.cmp(b)));
    let (p, q) = (peaks[0].min(peaks[1]), peaks[0].max(peaks[1]));
    let center = |b: usize| lo + (b as f64 + 0.5) * width;
    Ok(MagnitudePeaks {
        m0: center(p),
        m1: center(q),
    })
}

/// `T((raw − m0)/(m1 − m0))` with `T(x) = clamp(x, 0, 1)`, where `m0 < m1`
/// are the centers of the two highest histogram peaks.
pub fn normalize_magnitude(raw: &VoxelGrid, bins: usize) -> Result<VoxelGrid> {
    let MagnitudePeaks { m0, m1 } = magnitude_peaks(raw, bins)?;
    let scale = 1.0 / (m1 - m0);
    Ok(raw.map(|v| ((v - m0) * scale).clamp(0.0, 1.0)))
}

/// Robust standard deviation over `mask`, `1.4826 · MAD`, scaled to an
/// `L²(D)` norm, `σ̂ (nx ny h²)^{1/2}`.
pub fn estimate_noise_level(m: &VoxelGrid, mask: &[bool]) -> Result<f64> {
    if mask.len() != m.values.len() {
        return Err(Error::GridMismatch(alloc::format!(
            "mask of {} entries for {} voxels",
            mask.len(),
            m.values.len()
        )));
    }
    let mut vals: Vec<f64> = m
        .values
        .iter()
        .zip(mask)
        .filter(|(_, k)| **k)
        .map(|(v, _)| *v)
        .collect();
    if vals.len() < 2 {
        return Err(Error::EmptyMask(vals.len()));
    }
    let center = median(&mut vals);
    let mut dev: Vec<f64> = vals.iter().map(|v| (v - center).abs()).collect();
    let sigma = 1.482_602_218_505_602 * median(&mut dev);
    Ok(sigma * math::sqrt(m.geometry.area()))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Realized discrete `L²(D)` norm of a velocity-data error.
pub fn l2_error_norm(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    a.l2_distance(b)
}

/// Poiseuille-type flow on a star-shaped domain,
/// `u(y) = u_max (1 − |y|² / R(φ(y))²)` inside and zero outside.
pub fn poiseuille_velocity(radius: &RadiusFunction, u_max: f64, y: [f64; 2]) -> f64 {
    let rho2 = y[0] * y[0] + y[1] * y[1];
    let r = radius.eval(math::angle(y[0], y[1]));
    if rho2 < r * r {
        u_max * (1.0 - rho2 / (r * r))
    } else {
        0.0
    }
}

/// Exact voxel means of a velocity field over the samples inside `Ω_R`,
/// normalized by the voxel area, as in the noiseless phase-contrast model's
/// small-phase limit.
pub fn voxel_means<F>(u: F, radius: &RadiusFunction, grid: &GridGeometry, subsamples: usize) -> VoxelGrid
where
    F: Fn([f64; 2]) -> f64 + Sync + Send,
{
    let total = (subsamples * subsamples) as f64;
    let lip = radius.lipschitz_bound();
    let values = par::map_indexed(grid.len(), |i| {
        if classify_voxel(radius, lip, grid, [0.0, 0.0], i) == VoxelClass::Outside {
            return 0.0;
        }
        grid.subsample_points(i, subsamples)
            .into_iter()
            .filter(|p| radius.contains(*p))
            .map(&u)
            .sum::<f64>()
            / total
    });
    VoxelGrid {
        geometry: *grid,
        values,
    }
}

/// A velocity given on the unit disk, pushed to `Ω_R` through the transform.
pub fn pushed_forward<F>(transform: &DiskTransform, v: F) -> impl Fn([f64; 2]) -> f64 + Sync + Send + '_
where
    F: Fn([f64; 2]) -> f64 + Sync + Send + 'static,
{
    move |y| match transform.map_inverse(y) {
        Ok(x) => v(x),
        Err(_) => 0.0,
    }
}
