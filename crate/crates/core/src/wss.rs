//! Wall shear stress of a reconstructed flow, with viscosity normalized to one.
//!
//! For `u = v ∘ φ_R⁻¹` the physical gradient at the wall is `J_R⁻ᵀ ∇v`, where
//! `J_R` is the transform Jacobian at the unit-circle point, and
//! `τ(φ) = −n_R(φ) · J_R⁻ᵀ ∇v(cos φ, sin φ)`.

use alloc::vec::Vec;
use core::f64::consts::TAU;

use crate::eigenbasis::VelocityCoefficients;
use crate::error::{Error, Result};
use crate::geometry::{boundary_normal, DiskTransform, GeometryBounds, RadiusFunction};
use crate::math;

pub const DEFAULT_SAMPLES: usize = 256;
pub const DEFAULT_LOWPASS: usize = 8;

/// `τ` sampled at `φ_i = 2π i / P`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WssProfile {
    pub angles: Vec<f64>,
    pub values: Vec<f64>,
}

impl WssProfile {
    /// `P` must be a power of two, at least 8.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        check_samples(values.len())?;
        let p = values.len();
        Ok(WssProfile {
            angles: (0..p).map(|i| TAU * i as f64 / p as f64).collect(),
            values,
        })
    }

    /// Samples `f(φ_i)`.
    pub fn from_fn(p: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        check_samples(p)?;
        WssProfile::from_values((0..p).map(|i| f(TAU * i as f64 / p as f64)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, s: f64) -> WssProfile {
        WssProfile {
            angles: self.angles.clone(),
            values: self.values.iter().map(|v| s * v).collect(),
        }
    }
}

fn check_samples(p: usize) -> Result<()> {
    if p < 8 || !p.is_power_of_two() {
        return Err(Error::InvalidParameter(alloc::format!(
            "sample count must be a power of two and at least 8, got {p}"
        )));
    }
    Ok(())
}

/// `τ_R(v)` at `P` equispaced wall angles.
pub fn wall_shear_stress(
    radius: &RadiusFunction,
    v: &VelocityCoefficients,
    bounds: &GeometryBounds,
    p: usize,
) -> Result<WssProfile> {
    check_samples(p)?;
    let transform = DiskTransform::new(radius.clone(), *bounds)?;
    let mut values = Vec::with_capacity(p);
    for i in 0..p {
        let phi = TAU * i as f64 / p as f64;
        let (s, c) = math::sin_cos(phi);
        let x = [c, s];
        let n = boundary_normal(radius, phi);
        let jinv_t = transform.inverse_jacobian(x)?.transpose();
        let g = jinv_t.mul_vec(v.gradient(x)?);
        values.push(-(n[0] * g[0] + n[1] * g[1]));
    }
    WssProfile::from_values(values)
}

/// Exact wall shear stress of `u = u_max (1 − |y|²/R(φ)²)`:
/// `τ = 2 u_max (R² + R′²)^{1/2} / R²`.
pub fn poiseuille_wss(radius: &RadiusFunction, u_max: f64, p: usize) -> Result<WssProfile> {
    WssProfile::from_fn(p, |phi| {
        let (r, dr, _) = radius.eval_with_derivatives(phi);
        2.0 * u_max * math::hypot(r, dr) / (r * r)
    })
}

/// Projection onto Fourier modes `|k| ≤ K` by direct DFT; `K = P/2` keeps
/// every mode and `K = 0` leaves the mean.
pub fn lowpass_filter(tau: &WssProfile, k_max: usize) -> Result<WssProfile> {
    let p = tau.len();
    check_samples(p)?;
    if k_max > p / 2 {
        return Err(Error::InvalidParameter(alloc::format!("cutoff {k_max} exceeds P/2 = {}", p / 2)));
    }
    let pf = p as f64;
    let mut coeffs = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let (mut a, mut b) = (0.0, 0.0);
        for (i, v) in tau.values.iter().enumerate() {
            // exact angle reduction keeps k i / P integral
            let phase = TAU * ((k * i) % p) as f64 / pf;
            let (s, c) = math::sin_cos(phase);
            a += v * c;
            b += v * s;
        }
        let scale = if k == 0 || 2 * k == p { 1.0 / pf } else { 2.0 / pf };
        coeffs.push((a * scale, b * scale));
    }
    let values = (0..p)
        .map(|i| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let phase = TAU * ((k * i) % p) as f64 / pf;
                    let (s, c) = math::sin_cos(phase);
                    a * c + b * s
                })
                .sum()
        })
        .collect();
    Ok(WssProfile {
        angles: tau.angles.clone(),
        values,
    })
}

pub fn mean_wss(tau: &WssProfile) -> f64 {
    tau.values.iter().sum::<f64>() / tau.len() as f64
}

/// Relative discrete `L²(0, 2π)` error `‖τ − τ_ref‖ / ‖τ_ref‖`.
pub fn wss_error(tau: &WssProfile, reference: &WssProfile) -> Result<f64> {
    if tau.len() != reference.len() {
        return Err(Error::GridMismatch(alloc::format!(
            "profiles with {} and {} samples",
            tau.len(),
            reference.len()
        )));
    }
    let num: f64 = tau
        .values
        .iter()
        .zip(&reference.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let den: f64 = reference.values.iter().map(|b| b * b).sum();
    Ok(math::sqrt(num / den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigenbasis::DiskEigenBasis;
    use alloc::sync::Arc;

    #[test]
    fn zero_velocity_gives_zero_stress() {
        let basis = Arc::new(DiskEigenBasis::new(50.0).unwrap());
        let v = VelocityCoefficients::zeros(basis);
        let r = RadiusFunction::new(0.5, alloc::vec![0.03], alloc::vec![0.02]).unwrap();
        let t = wall_shear_stress(&r, &v, &GeometryBounds::default(), 64).unwrap();
        assert!(t.values.iter().all(|x| *x == 0.0));
        assert!(wall_shear_stress(&r, &v, &GeometryBounds::default(), 100).is_err());
    }

    #[test]
    fn radial_mode_on_circle_is_constant() {
        let basis = Arc::new(DiskEigenBasis::new(200.0).unwrap());
        let c = basis.modes().iter().map(|m| if m.m == 0 { 1.0 / m.lambda } else { 0.0 }).collect();
        let v = VelocityCoefficients::new(basis, c).unwrap();
        let r = RadiusFunction::constant(0.5, 3);
        let t = wall_shear_stress(&r, &v, &GeometryBounds::default(), 128).unwrap();
        let m = mean_wss(&t);
        assert!(t.values.iter().all(|x| (x - m).abs() < 1e-10));
    }

    #[test]
    fn filter_properties() {
        let t = WssProfile::from_fn(64, |phi| 1.0 + 0.5 * phi.cos() + 0.2 * (7.0 * phi).sin() + 0.1 * (32.0 * phi).cos())
            .unwrap();
        let id = lowpass_filter(&t, 32).unwrap();
        assert!(id.values.iter().zip(&t.values).all(|(a, b)| (a - b).abs() < 1e-12));
        let mean = lowpass_filter(&t, 0).unwrap();
        assert!(mean.values.iter().all(|v| (v - mean_wss(&t)).abs() < 1e-12));
        let low = lowpass_filter(&t, 3).unwrap();
        for (i, v) in low.values.iter().enumerate() {
            let phi = t.angles[i];
            assert!((v - (1.0 + 0.5 * phi.cos())).abs() < 1e-12);
        }
        let energy = |p: &WssProfile| p.values.iter().map(|v| v * v).sum::<f64>();
        assert!(energy(&low) <= energy(&t));
        assert!(lowpass_filter(&t, 33).is_err());
    }

    #[test]
    fn error_examples() {
        let t = WssProfile::from_fn(16, |phi| 2.0 + phi.sin()).unwrap();
        assert_eq!(wss_error(&t, &t).unwrap(), 0.0);
        assert!((wss_error(&t.scaled(2.0), &t).unwrap() - 1.0).abs() < 1e-15);
        let u = WssProfile::from_fn(16, |phi| 2.0 + phi.cos()).unwrap();
        let e = wss_error(&u, &t).unwrap();
        assert!((wss_error(&u.scaled(3.0), &t.scaled(3.0)).unwrap() - e).abs() < 1e-15);
        let short = WssProfile::from_fn(8, |_| 1.0).unwrap();
        assert!(matches!(wss_error(&short, &t), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn analytic_poiseuille_on_circle() {
        let t = poiseuille_wss(&RadiusFunction::constant(0.5, 0), 1.0, 32).unwrap();
        assert!(t.values.iter().all(|v| (v - 4.0).abs() < 1e-14));
    }
}
