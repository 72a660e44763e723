//! Uniform voxel grids over the field of view `D = (−1, 1)²`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

const FOV_TOL: f64 = 1e-12;

/// Placement of an `nx × ny` array of `h × h` voxels. Voxel `(ix, iy)` is
/// `[ox + ix h, ox + (ix+1) h] × [oy + iy h, oy + (iy+1) h]` and has flat
/// index `iy * nx + ix`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridGeometry {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
}

impl GridGeometry {
    pub fn new(nx: usize, ny: usize, h: f64, origin: [f64; 2]) -> Result<Self> {
        let g = GridGeometry { nx, ny, h, origin };
        g.validate()?;
        Ok(g)
    }

    /// `n × n` voxels covering the whole field of view, `h = 2/n`.
    pub fn full_fov(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("grid needs at least one voxel".into()));
        }
        GridGeometry::new(n, n, 2.0 / n as f64, [-1.0, -1.0])
    }

    /// The full-FOV grid whose spacing is closest to `h`.
    pub fn full_fov_with_spacing(h: f64) -> Result<Self> {
        if !(h > 0.0 && h <= 2.0) {
            return Err(Error::InvalidParameter(alloc::format!("invalid voxel size {h}")));
        }
        GridGeometry::full_fov(math::floor(2.0 / h + 0.5) as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidParameter("grid needs at least one voxel".into()));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("invalid voxel size {}", self.h)));
        }
        let corners = [
            self.origin[0],
            self.origin[1],
            self.origin[0] + self.nx as f64 * self.h,
            self.origin[1] + self.ny as f64 * self.h,
        ];
        if corners.iter().any(|c| !(math::abs(*c) <= 1.0 + FOV_TOL)) {
            return Err(Error::InvalidParameter(
                "grid extends outside the field of view (-1, 1)^2".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Area of one voxel.
    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    /// Area covered by the grid.
    pub fn area(&self) -> f64 {
        self.len() as f64 * self.cell_area()
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.nx, index / self.nx)
    }

    /// Lower-left corner of voxel `index`.
    #[inline]
    pub fn voxel_corner(&self, index: usize) -> [f64; 2] {
        let (ix, iy) = self.coords(index);
        [
            self.origin[0] + ix as f64 * self.h,
            self.origin[1] + iy as f64 * self.h,
        ]
    }

    #[inline]
    pub fn voxel_center(&self, index: usize) -> [f64; 2] {
        let c = self.voxel_corner(index);
        [c[0] + 0.5 * self.h, c[1] + 0.5 * self.h]
    }

    /// Midpoints of an `s × s` subdivision of voxel `index`, row by row.
    pub fn subsample_points(&self, index: usize, s: usize) -> Vec<[f64; 2]> {
        let c = self.voxel_corner(index);
        let step = self.h / s as f64;
        let mut pts = Vec::with_capacity(s * s);
        for j in 0..s {
            for i in 0..s {
                pts.push([c[0] + (i as f64 + 0.5) * step, c[1] + (j as f64 + 0.5) * step]);
            }
        }
        pts
    }

    pub fn same_as(&self, other: &GridGeometry) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && math::abs(self.h - other.h) <= 1e-12 * self.h
            && math::abs(self.origin[0] - other.origin[0]) <= FOV_TOL
            && math::abs(self.origin[1] - other.origin[1]) <= FOV_TOL
    }

    pub fn check_same(&self, other: &GridGeometry) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(alloc::format!(
                "{}x{} (h = {}) vs {}x{} (h = {})",
                self.nx,
                self.ny,
                self.h,
                other.nx,
                other.ny,
                other.h
            )))
        }
    }
}

/// Real voxel means on a [`GridGeometry`], flat in row-major order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VoxelGrid {
    pub geometry: GridGeometry,
    pub values: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.len() {
            return Err(Error::GridMismatch(alloc::format!(
                "{} values for {} voxels",
                values.len(),
                geometry.len()
            )));
        }
        Ok(VoxelGrid { geometry, values })
    }

    pub fn zeros(geometry: GridGeometry) -> Self {
        VoxelGrid {
            values: vec![0.0; geometry.len()],
            geometry,
        }
    }

    pub fn h(&self) -> f64 {
        self.geometry.h
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.geometry.index(ix, iy)]
    }

    /// `Σ values · h²`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.geometry.cell_area()
    }

    /// Discrete `L²(D)` norm `(Σ v² h²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        math::sqrt(self.values.iter().map(|v| v * v).sum::<f64>() * self.geometry.cell_area())
    }

    /// Discrete `L²(D)` distance to a grid on the same geometry.
    pub fn l2_distance(&self, other: &VoxelGrid) -> Result<f64> {
        self.geometry.check_same(&other.geometry)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(math::sqrt(s * self.geometry.cell_area()))
    }

    pub fn max_abs_diff(&self, other: &VoxelGrid) -> Result<f64> {
        self.geometry.check_same(&other.geometry)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| math::abs(a - b))
            .fold(0.0, f64::max))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> VoxelGrid {
        VoxelGrid {
            geometry: self.geometry,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }
}

/// Complex phase-contrast signal per voxel together with its velocity encoding.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhaseContrastData {
    pub geometry: GridGeometry,
    /// `(re, im)` per voxel.
    pub values: Vec<[f64; 2]>,
    pub venc: f64,
}

impl PhaseContrastData {
    pub fn new(geometry: GridGeometry, values: Vec<[f64; 2]>, venc: f64) -> Result<Self> {
        geometry.validate()?;
        if !(venc > 0.0) || !venc.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!("venc must be positive, got {venc}")));
        }
        if values.len() != geometry.len() {
            return Err(Error::GridMismatch(alloc::format!(
                "{} values for {} voxels",
                values.len(),
                geometry.len()
            )));
        }
        Ok(PhaseContrastData {
            geometry,
            values,
            venc,
        })
    }

    pub fn magnitudes(&self) -> VoxelGrid {
        VoxelGrid {
            geometry: self.geometry,
            values: self.values.iter().map(|d| math::hypot(d[0], d[1])).collect(),
        }
    }
}
