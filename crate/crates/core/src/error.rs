use alloc::string::String;

/// Errors reported by the reconstruction routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point ({x}, {y}) lies outside the unit disk")]
    OutsideUnitDisk { x: f64, y: f64 },
    #[error("point ({x}, {y}) lies outside the flow domain")]
    OutsideDomain { x: f64, y: f64 },
    #[error("radius function violates bounds [{r0}, {r1}]: range [{min}, {max}]")]
    Inadmissible { r0: f64, r1: f64, min: f64, max: f64 },
    #[error("grid dimensions do not match: {0}")]
    GridMismatch(String),
    #[error("velocity {max_speed} exceeds 0.95 * venc = {limit}; phase would wrap")]
    WrapRisk { max_speed: f64, limit: f64 },
    #[error("histogram has fewer than two peaks")]
    DegenerateHistogram,
    #[error("noise mask selects {0} voxel(s); at least two are required")]
    EmptyMask(usize),
    #[error("no voxel intersects the flow domain")]
    EmptyDomain,
    #[error("line search found no admissible descent step after {iterations} iteration(s)")]
    NoAdmissibleStep { iterations: usize },
    #[error("linear system is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("Bessel function argument {0} is negative")]
    BesselDomain(f64),
}

pub type Result<T> = core::result::Result<T, Error>;
