//! Voxel grid files and stage result files.
//!
//! A grid file is one JSON header line followed by one comma-separated row
//! per `iy`, lowest `iy` first:
//!
//! ```text
//! {"nx":64,"ny":64,"h":0.03125,"origin":[-1.0,-1.0],"kind":"magnitude"}
//! 0,0,0.25,...
//! ```
//!
//! Complex grids hold `re,im` pairs and carry `venc` in the header.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use flowrecon_core::eigenbasis::{DiskEigenBasis, Parity, VelocityCoefficients};
use flowrecon_core::grid::PhaseContrastData;
use flowrecon_core::wss::WssProfile;
use flowrecon_core::{GeometryBounds, GridGeometry, RadiusFunction, VoxelGrid};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{AppError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Magnitude,
    Velocity,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
    pub kind: GridKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venc: Option<f64>,
}

impl GridHeader {
    fn geometry(&self, path: &Path) -> Result<GridGeometry> {
        GridGeometry::new(self.nx, self.ny, self.h, self.origin)
            .map_err(|e| AppError::format(path, format!("invalid grid header: {e}")))
    }

    fn of(g: &GridGeometry, kind: GridKind, venc: Option<f64>) -> Self {
        GridHeader {
            nx: g.nx,
            ny: g.ny,
            h: g.h,
            origin: g.origin,
            kind,
            venc,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| AppError::format(path, e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::format(path, e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn render_grid(header: &GridHeader, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = serde_json::to_string(header).expect("grid headers always serialize");
    out.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}

fn parse_grid(path: &Path) -> Result<(GridHeader, Vec<Vec<f64>>)> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| AppError::format(path, "empty grid file"))?;
    let header: GridHeader =
        serde_json::from_str(first).map_err(|e| AppError::format(path, format!("grid header: {e}")))?;
    let width = match header.kind {
        GridKind::Complex => 2 * header.nx,
        _ => header.nx,
    };
    let mut rows = Vec::with_capacity(header.ny);
    for (k, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| AppError::format(path, format!("row {k}: {e}")))?;
        if row.len() != width {
            return Err(AppError::format(
                path,
                format!("row {k} has {} values, expected {width}", row.len()),
            ));
        }
        rows.push(row);
    }
    if rows.len() != header.ny {
        return Err(AppError::format(path, format!("{} rows, expected {}", rows.len(), header.ny)));
    }
    Ok((header, rows))
}

pub fn write_grid(path: &Path, grid: &VoxelGrid, kind: GridKind) -> Result<()> {
    if kind == GridKind::Complex {
        return Err(AppError::Config("real grids cannot be written as complex".into()));
    }
    let g = grid.geometry;
    let header = GridHeader::of(&g, kind, None);
    let text = render_grid(&header, grid.values.chunks(g.nx).map(|r| r.to_vec()));
    write_text(path, &text)
}

/// Reads a real grid, checking its kind when `expected` is given.
pub fn read_grid(path: &Path, expected: Option<GridKind>) -> Result<(VoxelGrid, GridKind)> {
    let (header, rows) = parse_grid(path)?;
    if header.kind == GridKind::Complex {
        return Err(AppError::format(path, "expected a real grid, found kind \"complex\""));
    }
    if let Some(k) = expected {
        if k != header.kind {
            return Err(AppError::format(
                path,
                format!("expected kind {k:?}, found {:?}", header.kind).to_lowercase(),
            ));
        }
    }
    let g = header.geometry(path)?;
    let grid = VoxelGrid::new(g, rows.concat()).map_err(|e| AppError::format(path, e.to_string()))?;
    Ok((grid, header.kind))
}

pub fn write_complex(path: &Path, data: &PhaseContrastData) -> Result<()> {
    let g = data.geometry;
    let header = GridHeader::of(&g, GridKind::Complex, Some(data.venc));
    let rows = data.values.chunks(g.nx).map(|r| r.iter().flat_map(|z| [z[0], z[1]]).collect());
    write_text(path, &render_grid(&header, rows))
}

pub fn read_complex(path: &Path) -> Result<PhaseContrastData> {
    let (header, rows) = parse_grid(path)?;
    if header.kind != GridKind::Complex {
        return Err(AppError::format(path, "expected kind \"complex\""));
    }
    let venc = header
        .venc
        .ok_or_else(|| AppError::format(path, "complex grid header lacks \"venc\""))?;
    let g = header.geometry(path)?;
    let values = rows.concat().chunks(2).map(|p| [p[0], p[1]]).collect();
    PhaseContrastData::new(g, values, venc).map_err(|e| AppError::format(path, e.to_string()))
}

/// Output of the geometry stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryResult {
    pub radius: RadiusFunction,
    pub alpha: f64,
    pub residual: f64,
    pub iterations: usize,
    pub center: [f64; 2],
    pub bounds: GeometryBounds,
    pub delta: f64,
    pub unreachable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeEntry {
    pub m: u32,
    pub n: u32,
    pub parity: Parity,
    pub lambda: f64,
}

/// Output of the velocity stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityResult {
    pub modes: Vec<ModeEntry>,
    pub coefficients: Vec<f64>,
    pub beta: f64,
    pub residual: f64,
    pub cutoff: f64,
    pub delta_u: Option<f64>,
    pub unreachable: bool,
}

impl VelocityResult {
    pub fn new(v: &VelocityCoefficients, beta: f64, residual: f64, delta_u: Option<f64>, unreachable: bool) -> Self {
        VelocityResult {
            modes: v
                .basis
                .modes()
                .iter()
                .map(|m| ModeEntry {
                    m: m.m,
                    n: m.n,
                    parity: m.parity,
                    lambda: m.lambda,
                })
                .collect(),
            coefficients: v.c.clone(),
            beta,
            residual,
            cutoff: v.basis.cutoff(),
            delta_u,
            unreachable,
        }
    }

    /// Rebuilds the basis from the cutoff and checks it against the stored modes.
    pub fn coefficients(&self, path: &Path) -> Result<VelocityCoefficients> {
        let basis = DiskEigenBasis::new(self.cutoff).map_err(|e| AppError::format(path, e.to_string()))?;
        let same = basis.len() == self.modes.len()
            && basis
                .modes()
                .iter()
                .zip(&self.modes)
                .all(|(a, b)| a.m == b.m && a.n == b.n && a.parity == b.parity);
        if !same {
            return Err(AppError::format(path, "mode list does not match the eigenvalue cutoff"));
        }
        VelocityCoefficients::new(Arc::new(basis), self.coefficients.clone())
            .map_err(|e| AppError::format(path, e.to_string()))
    }
}

pub fn write_wss_csv(path: &Path, raw: &WssProfile, filtered: &WssProfile) -> Result<()> {
    let mut out = String::from("phi,tau_raw,tau_filtered\n");
    for i in 0..raw.len() {
        writeln!(out, "{},{},{}", raw.angles[i], raw.values[i], filtered.values[i]).expect("String write");
    }
    write_text(path, &out)
}

/// Reads `phi,tau_raw,tau_filtered` columns.
pub fn read_wss_csv(path: &Path) -> Result<(WssProfile, WssProfile)> {
    let text = read_text(path)?;
    let mut raw = Vec::new();
    let mut filtered = Vec::new();
    for (k, line) in text.lines().skip(1).filter(|l| !l.trim().is_empty()).enumerate() {
        let cols = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| AppError::format(path, format!("row {k}: {e}")))?;
        if cols.len() != 3 {
            return Err(AppError::format(path, format!("row {k} has {} columns", cols.len())));
        }
        raw.push(cols[1]);
        filtered.push(cols[2]);
    }
    let to_profile = |v| WssProfile::from_values(v).map_err(|e| AppError::format(path, e.to_string()));
    Ok((to_profile(raw)?, to_profile(filtered)?))
}
