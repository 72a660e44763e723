//! Star-shaped domains parametrized by a truncated Fourier radius function,
//! and the scaling transform that carries the unit disk onto them.
//!
//! A domain is `Ω_R = {ρ (cos φ, sin φ) : 0 ≤ ρ < R(φ)}`. The transform
//!
//! ```text
//! (r cos φ, r sin φ) ↦ (r0 r + (R(φ) − r0) r^η) (cos φ, sin φ)
//! ```
//!
//! preserves angles, is the identity scaling by `r0` near the origin and
//! reaches the boundary curve at `r = 1`. Its Jacobian in the polar frame
//! `(e_r, e_φ)` is upper triangular with determinant at least `r0²`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::math;

/// Number of equispaced angles used for admissibility checks.
pub const ADMISSIBILITY_SAMPLES: usize = 720;

/// `R(φ) = b0 + Σ_{k=1..N} a_k sin(kφ) + b_k cos(kφ)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RadiusFunction {
    pub b0: f64,
    /// Sine coefficients `a_1..a_N`.
    pub a: Vec<f64>,
    /// Cosine coefficients `b_1..b_N`.
    pub b: Vec<f64>,
}

impl RadiusFunction {
    pub fn new(b0: f64, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::InvalidParameter(alloc::format!(
                "sine and cosine coefficient counts differ ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        if !b0.is_finite() || a.iter().chain(&b).any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite Fourier coefficient".into()));
        }
        Ok(RadiusFunction { b0, a, b })
    }

    /// The circle of radius `b0`, with `order` zero harmonics.
    pub fn constant(b0: f64, order: usize) -> Self {
        RadiusFunction {
            b0,
            a: vec![0.0; order],
            b: vec![0.0; order],
        }
    }

    /// Truncation order `N`.
    pub fn order(&self) -> usize {
        self.a.len()
    }

    /// Coefficients packed as `[b0, a1, b1, a2, b2, …]`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(1 + 2 * self.order());
        c.push(self.b0);
        for (a, b) in self.a.iter().zip(&self.b) {
            c.push(*a);
            c.push(*b);
        }
        c
    }

    /// Inverse of [`coefficients`](Self::coefficients). The slice length must be odd.
    pub fn from_coefficients(c: &[f64]) -> Result<Self> {
        if c.len() % 2 != 1 {
            return Err(Error::InvalidParameter(alloc::format!(
                "packed coefficient vector has even length {}",
                c.len()
            )));
        }
        let n = c.len() / 2;
        let a = (0..n).map(|k| c[1 + 2 * k]).collect();
        let b = (0..n).map(|k| c[2 + 2 * k]).collect();
        RadiusFunction::new(c[0], a, b)
    }

    /// Returns a copy truncated or zero-padded to order `n`.
    pub fn with_order(&self, n: usize) -> Self {
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        a.resize(n, 0.0);
        b.resize(n, 0.0);
        RadiusFunction { b0: self.b0, a, b }
    }

    pub fn eval(&self, phi: f64) -> f64 {
        self.eval_with_derivatives(phi).0
    }

    pub fn derivative(&self, phi: f64) -> f64 {
        self.eval_with_derivatives(phi).1
    }

    pub fn second_derivative(&self, phi: f64) -> f64 {
        self.eval_with_derivatives(phi).2
    }

    /// `(R, R′, R″)` at `phi`; harmonics by angle-addition recurrence.
    pub fn eval_with_derivatives(&self, phi: f64) -> (f64, f64, f64) {
        let (s1, c1) = math::sin_cos(phi);
        let (mut sk, mut ck) = (s1, c1);
        let mut r = self.b0;
        let mut dr = 0.0;
        let mut ddr = 0.0;
        for (i, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            let k = (i + 1) as f64;
            r += a * sk + b * ck;
            dr += k * (a * ck - b * sk);
            ddr -= k * k * (a * sk + b * ck);
            let next_s = sk * c1 + ck * s1;
            let next_c = ck * c1 - sk * s1;
            sk = next_s;
            ck = next_c;
        }
        (r, dr, ddr)
    }

    /// `2π b0² + π Σ (1 + k²)^s (a_k² + b_k²)`, an `H^s(0, 2π)` norm squared.
    pub fn sobolev_norm_sq(&self, s: u32) -> f64 {
        sobolev_weights(self.order(), s)
            .iter()
            .zip(self.coefficients())
            .map(|(w, c)| w * c * c)
            .sum()
    }

    pub fn sobolev_norm(&self, s: u32) -> f64 {
        math::sqrt(self.sobolev_norm_sq(s))
    }

    /// Coefficient-wise difference, padded to the larger order.
    pub fn sub(&self, other: &RadiusFunction) -> RadiusFunction {
        let n = self.order().max(other.order());
        let x = self.with_order(n);
        let y = other.with_order(n);
        RadiusFunction {
            b0: x.b0 - y.b0,
            a: x.a.iter().zip(&y.a).map(|(p, q)| p - q).collect(),
            b: x.b.iter().zip(&y.b).map(|(p, q)| p - q).collect(),
        }
    }

    /// `R(φ − θ)`: the boundary rotated counter-clockwise by `θ`.
    pub fn rotated(&self, theta: f64) -> RadiusFunction {
        let mut a = Vec::with_capacity(self.order());
        let mut b = Vec::with_capacity(self.order());
        for (i, (ak, bk)) in self.a.iter().zip(&self.b).enumerate() {
            let (s, c) = math::sin_cos((i + 1) as f64 * theta);
            a.push(ak * c + bk * s);
            b.push(bk * c - ak * s);
        }
        RadiusFunction { b0: self.b0, a, b }
    }

    /// Minimum and maximum over the admissibility grid.
    pub fn range_on_grid(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..ADMISSIBILITY_SAMPLES {
            let r = self.eval(TAU * i as f64 / ADMISSIBILITY_SAMPLES as f64);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    }

    /// `r0 ≤ R ≤ r1` on the admissibility grid.
    pub fn is_admissible(&self, bounds: &GeometryBounds) -> bool {
        let (lo, hi) = self.range_on_grid();
        lo >= bounds.r0 && hi <= bounds.r1
    }

    pub fn check_admissible(&self, bounds: &GeometryBounds) -> Result<()> {
        let (min, max) = self.range_on_grid();
        if min >= bounds.r0 && max <= bounds.r1 {
            Ok(())
        } else {
            Err(Error::Inadmissible {
                r0: bounds.r0,
                r1: bounds.r1,
                min,
                max,
            })
        }
    }

    /// Upper bound on `|R′|`, used for rigorous voxel classification.
    pub fn lipschitz_bound(&self) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(i, (a, b))| (i + 1) as f64 * (math::abs(*a) + math::abs(*b)))
            .sum()
    }

    /// `|Ω_R| = ½ ∫ R² dφ`.
    pub fn enclosed_area(&self) -> f64 {
        let sq: f64 = self.a.iter().chain(&self.b).map(|c| c * c).sum();
        PI * self.b0 * self.b0 + 0.5 * PI * sq
    }

    /// Whether `y` lies in the open domain `Ω_R`.
    #[inline]
    pub fn contains(&self, y: [f64; 2]) -> bool {
        let rho = math::hypot(y[0], y[1]);
        if rho == 0.0 {
            return self.eval_direction(1.0, 0.0) > 0.0;
        }
        rho < self.eval_direction(y[0] / rho, y[1] / rho)
    }

    /// `R` in the direction `(cos φ, sin φ)`.
    fn eval_direction(&self, c1: f64, s1: f64) -> f64 {
        let (mut sk, mut ck) = (s1, c1);
        let mut r = self.b0;
        for (a, b) in self.a.iter().zip(&self.b) {
            r += a * sk + b * ck;
            (sk, ck) = (sk * c1 + ck * s1, ck * c1 - sk * s1);
        }
        r
    }
}

/// Diagonal of the `H^s` Gram matrix in the packed coefficient layout.
pub fn sobolev_weights(order: usize, s: u32) -> Vec<f64> {
    let mut w = Vec::with_capacity(1 + 2 * order);
    w.push(TAU);
    for k in 1..=order {
        let wk = PI * math::powi(1.0 + (k * k) as f64, s);
        w.push(wk);
        w.push(wk);
    }
    w
}

/// Admissible radius bounds and the transform exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeometryBounds {
    pub r0: f64,
    pub r1: f64,
    pub eta: u32,
}

impl GeometryBounds {
    pub fn new(r0: f64, r1: f64, eta: u32) -> Result<Self> {
        if !(r0 > 0.0 && r0 < r1 && r1 < 1.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "bounds must satisfy 0 < r0 < r1 < 1, got r0 = {r0}, r1 = {r1}"
            )));
        }
        if eta < 2 {
            return Err(Error::InvalidParameter(alloc::format!(
                "transform exponent must be at least 2, got {eta}"
            )));
        }
        Ok(GeometryBounds { r0, r1, eta })
    }
}

impl Default for GeometryBounds {
    fn default() -> Self {
        GeometryBounds {
            r0: 0.25,
            r1: 0.85,
            eta: 4,
        }
    }
}

const DISK_TOL: f64 = 1e-12;

/// The scaling transform from the unit disk onto `Ω_R`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskTransform {
    radius: RadiusFunction,
    bounds: GeometryBounds,
}

impl DiskTransform {
    /// Fails if `radius` is not admissible for `bounds`.
    pub fn new(radius: RadiusFunction, bounds: GeometryBounds) -> Result<Self> {
        radius.check_admissible(&bounds)?;
        Ok(DiskTransform { radius, bounds })
    }

    pub fn radius(&self) -> &RadiusFunction {
        &self.radius
    }

    pub fn bounds(&self) -> &GeometryBounds {
        &self.bounds
    }

    /// Radial profile `s(r) = r0 r + (R − r0) r^η` for boundary value `big_r`.
    #[inline]
    fn radial(&self, big_r: f64, r: f64) -> f64 {
        let r0 = self.bounds.r0;
        r0 * r + (big_r - r0) * math::powi(r, self.bounds.eta)
    }

    fn check_disk(x: [f64; 2]) -> Result<f64> {
        let r = math::hypot(x[0], x[1]);
        if r > 1.0 + DISK_TOL {
            Err(Error::OutsideUnitDisk { x: x[0], y: x[1] })
        } else {
            Ok(r)
        }
    }

    pub fn map_forward(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        let r = Self::check_disk(x)?;
        if r == 0.0 {
            return Ok([0.0, 0.0]);
        }
        let phi = math::angle(x[0], x[1]);
        let s = self.radial(self.radius.eval(phi), r);
        Ok([s * x[0] / r, s * x[1] / r])
    }

    /// Inverse transform, solving the monotone radial equation by safeguarded
    /// Newton iteration.
    pub fn map_inverse(&self, y: [f64; 2]) -> Result<[f64; 2]> {
        let rho = math::hypot(y[0], y[1]);
        if rho == 0.0 {
            return Ok([0.0, 0.0]);
        }
        let phi = math::angle(y[0], y[1]);
        let big_r = self.radius.eval(phi);
        if rho > big_r + DISK_TOL {
            return Err(Error::OutsideDomain { x: y[0], y: y[1] });
        }
        let r = self.radial_inverse(big_r, rho.min(big_r));
        Ok([r * y[0] / rho, r * y[1] / rho])
    }

    fn radial_inverse(&self, big_r: f64, rho: f64) -> f64 {
        let r0 = self.bounds.r0;
        let eta = self.bounds.eta;
        let amp = big_r - r0;
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut r = (rho / big_r).clamp(0.0, 1.0);
        for _ in 0..60 {
            let rp = math::powi(r, eta - 1);
            let g = r0 * r + amp * rp * r - rho;
            if g == 0.0 {
                return r;
            }
            if g > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let dg = r0 + eta as f64 * amp * rp;
            let mut next = r - g / dg;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if math::abs(next - r) < 1e-14 {
                return next;
            }
            r = next;
        }
        r
    }

    /// Jacobian in the polar frame `(e_r, e_φ)`:
    /// `[[r0 + η(R−r0) r^{η−1}, R′ r^{η−1}], [0, r0 + (R−r0) r^{η−1}]]`.
    pub fn polar_jacobian(&self, x: [f64; 2]) -> Result<Mat2> {
        let r = Self::check_disk(x)?;
        let phi = if r == 0.0 { 0.0 } else { math::angle(x[0], x[1]) };
        Ok(self.polar_jacobian_at(r, phi))
    }

    fn polar_jacobian_at(&self, r: f64, phi: f64) -> Mat2 {
        let r0 = self.bounds.r0;
        let eta = self.bounds.eta;
        let (big_r, dr, _) = self.radius.eval_with_derivatives(phi);
        let rp = math::powi(r, eta - 1);
        Mat2::new(
            r0 + eta as f64 * (big_r - r0) * rp,
            dr * rp,
            0.0,
            r0 + (big_r - r0) * rp,
        )
    }

    /// Cartesian Jacobian `Q(φ) P Q(φ)ᵀ`, with `P` the polar-frame matrix and
    /// `Q(φ)` the rotation onto `(e_r, e_φ)`. At the origin it equals `r0 I`.
    pub fn jacobian(&self, x: [f64; 2]) -> Result<Mat2> {
        let r = Self::check_disk(x)?;
        if r == 0.0 {
            return Ok(Mat2::diag(self.bounds.r0, self.bounds.r0));
        }
        let phi = math::angle(x[0], x[1]);
        let p = self.polar_jacobian_at(r, phi);
        let q = Mat2::rotation(phi);
        Ok(q.mul(&p).mul(&q.transpose()))
    }

    pub fn inverse_jacobian(&self, x: [f64; 2]) -> Result<Mat2> {
        let j = self.jacobian(x)?;
        // det ≥ r0² > 0 for admissible R
        j.inverse()
            .ok_or_else(|| Error::InvalidParameter("singular transform Jacobian".into()))
    }
}

/// Outward unit normal of `∂Ω_R` at the boundary point of angle `phi`.
pub fn boundary_normal(radius: &RadiusFunction, phi: f64) -> [f64; 2] {
    let (r, dr, _) = radius.eval_with_derivatives(phi);
    let (s, c) = math::sin_cos(phi);
    let len = math::hypot(r, dr);
    [(r * c + dr * s) / len, (r * s - dr * c) / len]
}

/// `|Ω_{R1} \ Ω_{R2}|` by 2048-point trapezoid quadrature of
/// `½ (max(R1, R2)² − R2²)`.
pub fn domain_area_difference(r1: &RadiusFunction, r2: &RadiusFunction) -> f64 {
    const SAMPLES: usize = 2048;
    let mut acc = 0.0;
    for i in 0..SAMPLES {
        let phi = TAU * i as f64 / SAMPLES as f64;
        let a = r1.eval(phi);
        let b = r2.eval(phi);
        if a > b {
            acc += 0.5 * (a * a - b * b);
        }
    }
    acc * TAU / SAMPLES as f64
}
