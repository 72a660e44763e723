//! Dirichlet eigenfunctions of the Laplacian on the unit disk.
//!
//! `ψ_{m,n}(r, φ) = c_{m,n} J_m(j_{m,n} r) {cos, sin}(m φ)` with eigenvalue
//! `λ = j_{m,n}²`, normalized in `L²(B)`. Since `−Δψ = λψ`, the penalty
//! `‖Δv‖²` of `v = Σ c_j ψ_j` is `Σ λ_j² c_j²`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use crate::bessel;
use crate::error::{Error, Result};
use crate::math;
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Parity {
    Cos,
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EigenMode {
    pub m: u32,
    pub n: u32,
    pub parity: Parity,
    /// Zero `j_{m,n}` of `J_m`.
    pub zero: f64,
    pub lambda: f64,
    pub norm_factor: f64,
}

impl EigenMode {
    fn new(m: u32, n: u32, parity: Parity, zero: f64) -> Self {
        // ∫_0^1 J_m(j r)² r dr = J_{m+1}(j)² / 2; the angular factor is 2π or π
        let jm1 = math::abs(bessel::j_unchecked(m + 1, zero));
        let norm_factor = if m == 0 {
            1.0 / (math::sqrt(PI) * jm1)
        } else {
            math::sqrt(2.0) / (math::sqrt(PI) * jm1)
        };
        EigenMode {
            m,
            n,
            parity,
            zero,
            lambda: zero * zero,
            norm_factor,
        }
    }

    /// Radial factor `c J_m(j r)` and its derivative.
    #[inline]
    pub fn radial(&self, r: f64) -> (f64, f64) {
        let x = self.zero * r;
        (
            self.norm_factor * bessel::j_unchecked(self.m, x),
            self.norm_factor * self.zero * bessel::dj_unchecked(self.m, x),
        )
    }

    /// Angular factor and its derivative at `φ`.
    #[inline]
    pub fn angular(&self, phi: f64) -> (f64, f64) {
        let m = self.m as f64;
        let (s, c) = math::sin_cos(m * phi);
        match self.parity {
            Parity::Cos => (c, -m * s),
            Parity::Sin => (s, m * c),
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let r = math::hypot(x[0], x[1]);
        if r == 0.0 {
            return if self.m == 0 { self.norm_factor } else { 0.0 };
        }
        let phi = math::angle(x[0], x[1]);
        self.radial(r).0 * self.angular(phi).0
    }

    /// Cartesian gradient; the origin is handled by the analytic limit, where
    /// only `m = 1` modes have a non-zero gradient.
    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let r = math::hypot(x[0], x[1]);
        if r < 1e-12 {
            if self.m != 1 {
                return [0.0, 0.0];
            }
            // J_1(j r) ≈ j r / 2
            let g = 0.5 * self.norm_factor * self.zero;
            return match self.parity {
                Parity::Cos => [g, 0.0],
                Parity::Sin => [0.0, g],
            };
        }
        let phi = math::angle(x[0], x[1]);
        let (f, df) = self.radial(r);
        let (t, dt) = self.angular(phi);
        let gr = df * t;
        let gphi = f * dt / r;
        let (s, c) = (x[1] / r, x[0] / r);
        [gr * c - gphi * s, gr * s + gphi * c]
    }
}

/// Every mode with `λ ≤ cutoff`, sorted by `λ`; on equal `λ` lower `m` first,
/// then cosine before sine.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiskEigenBasis {
    modes: Vec<EigenMode>,
    cutoff: f64,
}

impl DiskEigenBasis {
    pub fn new(cutoff: f64) -> Result<Self> {
        let first = bessel::bessel_zero(0, 1)?;
        if !(cutoff >= first * first) || !cutoff.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "eigenvalue cutoff {cutoff} is below the first eigenvalue {}",
                first * first
            )));
        }
        let limit = math::sqrt(cutoff);
        let mut modes = Vec::new();
        let mut m = 0u32;
        loop {
            let zeros = bessel::bessel_zeros_below(m, limit);
            if zeros.is_empty() {
                // j_{m,1} increases with m
                break;
            }
            for (i, z) in zeros.into_iter().enumerate() {
                let n = i as u32 + 1;
                modes.push(EigenMode::new(m, n, Parity::Cos, z));
                if m > 0 {
                    modes.push(EigenMode::new(m, n, Parity::Sin, z));
                }
            }
            m += 1;
        }
        modes.sort_by(|a, b| {
            a.lambda
                .total_cmp(&b.lambda)
                .then(a.m.cmp(&b.m))
                .then(a.parity.cmp(&b.parity))
        });
        Ok(DiskEigenBasis { modes, cutoff })
    }

    /// The smallest cutoff of the form `j_{m,n}²` giving at least `count`
    /// modes (one more when the last eigenvalue is a cos/sin pair).
    pub fn with_mode_count(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParameter("mode count must be positive".into()));
        }
        // Weyl: N(λ) ≈ λ/4 on the unit disk
        let mut cutoff = (4.0 * count as f64 + 8.0 * math::sqrt(count as f64) + 16.0).max(6.0);
        loop {
            let basis = DiskEigenBasis::new(cutoff)?;
            if basis.len() >= count {
                let lambda = basis.modes[count - 1].lambda;
                return DiskEigenBasis::new(lambda * (1.0 + 1e-12));
            }
            cutoff *= 1.5;
        }
    }

    pub fn modes(&self) -> &[EigenMode] {
        &self.modes
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn max_m(&self) -> u32 {
        self.modes.iter().map(|m| m.m).max().unwrap_or(0)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    /// Values of every mode at `x`, written to `out`.
    pub fn eval_all(&self, x: [f64; 2], out: &mut [f64]) {
        for (o, mode) in out.iter_mut().zip(&self.modes) {
            *o = mode.eval(x);
        }
    }

    /// `L²(B)` projection coefficients of `f`, by Gauss–Legendre in `r` and
    /// the trapezoid rule in `φ`.
    pub fn project(&self, f: impl Fn([f64; 2]) -> f64, radial: usize, angular: usize) -> Vec<f64> {
        let gl = GaussLegendre::new(radial);
        let (rs, ws) = gl.on_interval(0.0, 1.0);
        let dphi = TAU / angular as f64;
        let mut c = vec![0.0; self.len()];
        for (r, w) in rs.iter().zip(&ws) {
            let radials: Vec<f64> = self.modes.iter().map(|m| m.radial(*r).0).collect();
            for k in 0..angular {
                let phi = dphi * k as f64;
                let (s, co) = math::sin_cos(phi);
                let fv = f([r * co, r * s]) * w * r * dphi;
                if fv == 0.0 {
                    continue;
                }
                for (j, mode) in self.modes.iter().enumerate() {
                    c[j] += fv * radials[j] * mode.angular(phi).0;
                }
            }
        }
        c
    }
}

/// A field `v = Σ c_j ψ_j` on the unit disk.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityCoefficients {
    pub basis: Arc<DiskEigenBasis>,
    pub c: Vec<f64>,
}

impl VelocityCoefficients {
    pub fn new(basis: Arc<DiskEigenBasis>, c: Vec<f64>) -> Result<Self> {
        if c.len() != basis.len() {
            return Err(Error::InvalidParameter(alloc::format!(
                "{} coefficients for {} modes",
                c.len(),
                basis.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite velocity coefficient".into()));
        }
        Ok(VelocityCoefficients { basis, c })
    }

    pub fn zeros(basis: Arc<DiskEigenBasis>) -> Self {
        let c = vec![0.0; basis.len()];
        VelocityCoefficients { basis, c }
    }

    pub fn eval(&self, x: [f64; 2]) -> Result<f64> {
        check_disk(x)?;
        Ok(self
            .basis
            .modes
            .iter()
            .zip(&self.c)
            .filter(|(_, c)| **c != 0.0)
            .map(|(m, c)| c * m.eval(x))
            .sum())
    }

    pub fn gradient(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        check_disk(x)?;
        let mut g = [0.0, 0.0];
        for (m, c) in self.basis.modes.iter().zip(&self.c) {
            if *c != 0.0 {
                let gm = m.gradient(x);
                g[0] += c * gm[0];
                g[1] += c * gm[1];
            }
        }
        Ok(g)
    }

    /// `‖Δv‖²_{L²(B)} = Σ λ² c²`.
    pub fn laplacian_norm_sq(&self) -> f64 {
        self.basis
            .modes
            .iter()
            .zip(&self.c)
            .map(|(m, c)| m.lambda * m.lambda * c * c)
            .sum()
    }

    /// `Σ (1 + λ + λ²) c²`, an `H²(B)`-equivalent norm squared on the span.
    pub fn proxy_h2_norm_sq(&self) -> f64 {
        proxy_h2_norm_sq(&self.basis, &self.c)
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.c.iter().map(|c| c * c).sum()
    }
}

/// `Σ (1 + λ_j + λ_j²) c_j²`.
pub fn proxy_h2_norm_sq(basis: &DiskEigenBasis, c: &[f64]) -> f64 {
    basis
        .modes
        .iter()
        .zip(c)
        .map(|(m, c)| (1.0 + m.lambda + m.lambda * m.lambda) * c * c)
        .sum()
}

fn check_disk(x: [f64; 2]) -> Result<()> {
    if math::hypot(x[0], x[1]) > 1.0 + 1e-12 {
        Err(Error::OutsideUnitDisk { x: x[0], y: x[1] })
    } else {
        Ok(())
    }
}

/// Cubic Hermite tables of every radial factor on a uniform grid in `[0, 1]`,
/// for fast evaluation of all modes at many points. Node-major layout, so one
/// evaluation reads two contiguous rows.
#[derive(Debug, Clone)]
pub struct RadialTables {
    intervals: usize,
    modes: usize,
    /// `(value, slope)` of mode `j` at node `k` is `data[k * modes + j]`.
    data: Vec<[f64; 2]>,
    m: Vec<u32>,
    parity: Vec<Parity>,
    max_m: u32,
}

impl RadialTables {
    pub fn new(basis: &DiskEigenBasis, intervals: usize) -> Self {
        let intervals = intervals.max(1);
        let modes = basis.len();
        let mut data = Vec::with_capacity((intervals + 1) * modes);
        for k in 0..=intervals {
            let r = k as f64 / intervals as f64;
            data.extend(basis.modes.iter().map(|mode| {
                let (f, df) = mode.radial(r);
                [f, df]
            }));
        }
        RadialTables {
            intervals,
            modes,
            data,
            m: basis.modes.iter().map(|m| m.m).collect(),
            parity: basis.modes.iter().map(|m| m.parity).collect(),
            max_m: basis.max_m(),
        }
    }

    pub fn len(&self) -> usize {
        self.modes
    }

    pub fn is_empty(&self) -> bool {
        self.modes == 0
    }

    /// Adds `weight · ψ_j(x)` to `out[j]` for every mode; `x` in the closed disk.
    /// `trig` is scratch space, resized as needed.
    pub fn accumulate(&self, x: [f64; 2], weight: f64, out: &mut [f64], trig: &mut Vec<[f64; 2]>) {
        let r = math::hypot(x[0], x[1]).min(1.0);
        let (c1, s1) = if r > 0.0 { (x[0] / r, x[1] / r) } else { (1.0, 0.0) };
        trig.clear();
        let (mut c, mut s) = (1.0, 0.0);
        for _ in 0..=self.max_m {
            trig.push([c, s]);
            let nc = c * c1 - s * s1;
            let ns = s * c1 + c * s1;
            c = nc;
            s = ns;
        }
        let t = r * self.intervals as f64;
        let k = (t as usize).min(self.intervals - 1);
        let u = t - k as f64;
        let dx = 1.0 / self.intervals as f64;
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = weight * (2.0 * u3 - 3.0 * u2 + 1.0);
        let h10 = weight * (u3 - 2.0 * u2 + u) * dx;
        let h01 = weight * (-2.0 * u3 + 3.0 * u2);
        let h11 = weight * (u3 - u2) * dx;
        let lo = &self.data[k * self.modes..(k + 1) * self.modes];
        let hi = &self.data[(k + 1) * self.modes..(k + 2) * self.modes];
        for j in 0..self.modes {
            let (a, b) = (lo[j], hi[j]);
            let f = h00 * a[0] + h10 * a[1] + h01 * b[0] + h11 * b[1];
            let tr = trig[self.m[j] as usize];
            let ang = match self.parity[j] {
                Parity::Cos => tr[0],
                Parity::Sin => tr[1],
            };
            out[j] += f * ang;
        }
    }
}
