//! Bessel functions of the first kind of integer order and their zeros.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// `J_m(x)` for `x ≥ 0`.
///
/// Uses the ascending series where it converges without cancellation
/// (`x ≤ 8` or `x² < 4(m+1)`) and Miller's downward recurrence normalized by
/// `J_0 + 2 Σ J_{2k} = 1` otherwise.
pub fn bessel_j(m: u32, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::BesselDomain(x));
    }
    Ok(j_unchecked(m, x))
}

pub(crate) fn j_unchecked(m: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    if x <= 8.0 || x * x < 4.0 * (m as f64 + 1.0) {
        series(m, x)
    } else {
        miller(m, x)
    }
}

fn series(m: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    // (x/2)^m / m!
    let mut lead = 1.0;
    for k in 1..=m {
        lead *= half / k as f64;
    }
    if lead == 0.0 {
        return 0.0;
    }
    let q = -half * half;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + m as f64));
        sum += term;
        if math::abs(term) <= 1e-17 * math::abs(sum) {
            break;
        }
        k += 1.0;
    }
    lead * sum
}

fn miller(m: u32, x: f64) -> f64 {
    let top = (m as f64).max(x);
    let mut start = (top + 30.0 + 4.0 * math::sqrt(top)) as usize;
    start += start % 2;
    let two_over_x = 2.0 / x;
    let (mut jp, mut j) = (0.0_f64, 1e-300_f64);
    let mut result = 0.0;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        // J_{k-1} = (2k/x) J_k − J_{k+1}
        let jm = k as f64 * two_over_x * j - jp;
        jp = j;
        j = jm;
        let idx = k - 1;
        if math::abs(j) > 1e250 {
            j *= 1e-250;
            jp *= 1e-250;
            result *= 1e-250;
            norm *= 1e-250;
        }
        if idx == m as usize {
            result = j;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * j;
        }
    }
    norm += j;
    result / norm
}

/// `J_m′(x)`: `(J_{m−1} − J_{m+1}) / 2`, with `J_0′ = −J_1`.
pub fn bessel_j_derivative(m: u32, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::BesselDomain(x));
    }
    Ok(dj_unchecked(m, x))
}

pub(crate) fn dj_unchecked(m: u32, x: f64) -> f64 {
    if m == 0 {
        -j_unchecked(1, x)
    } else {
        0.5 * (j_unchecked(m - 1, x) - j_unchecked(m + 1, x))
    }
}

/// `n`-th positive zero `j_{m,n}` of `J_m` (`n ≥ 1`).
pub fn bessel_zero(m: u32, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("zeros are numbered from 1".into()));
    }
    let mut found = 0;
    let mut out = 0.0;
    scan_zeros(m, |z| {
        found += 1;
        out = z;
        found < n
    });
    Ok(out)
}

/// All positive zeros of `J_m` not exceeding `limit`, ascending.
pub fn bessel_zeros_below(m: u32, limit: f64) -> Vec<f64> {
    let mut zs = Vec::new();
    scan_zeros(m, |z| {
        if z <= limit {
            zs.push(z);
            true
        } else {
            false
        }
    });
    zs
}

/// Visits zeros in increasing order while `visit` returns `true`. Zeros are
/// bracketed by sign changes on a 0.25 grid starting at `x = m` (there are no
/// zeros below it) and polished by safeguarded Newton iteration.
fn scan_zeros(m: u32, mut visit: impl FnMut(f64) -> bool) {
    const STEP: f64 = 0.25;
    let mut a = (m as f64).max(STEP);
    let mut fa = j_unchecked(m, a);
    loop {
        let b = a + STEP;
        let fb = j_unchecked(m, b);
        if fa == 0.0 {
            if !visit(a) {
                return;
            }
        } else if fa * fb < 0.0 {
            let z = polish(m, a, b, fa);
            if !visit(z) {
                return;
            }
        }
        a = b;
        fa = fb;
    }
}

fn polish(m: u32, mut lo: f64, mut hi: f64, flo: f64) -> f64 {
    let lo_sign = flo > 0.0;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..100 {
        let f = j_unchecked(m, x);
        if f == 0.0 {
            return x;
        }
        if (f > 0.0) == lo_sign {
            lo = x;
        } else {
            hi = x;
        }
        let df = dj_unchecked(m, x);
        let mut next = x - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if math::abs(next - x) <= 4.0 * f64::EPSILON * x.max(1.0) || hi - lo <= 4.0 * f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    // 30-digit reference values
    const REFERENCE: [(u32, f64, f64); 11] = [
        (0, 1.0, 0.76519768655796655145),
        (1, 2.5, 0.49709410246427403801),
        (5, 7.3, 0.31370617089730907746),
        (0, 30.0, -0.086367983581040211336),
        (3, 50.0, 0.092734804061634432021),
        (40, 30.0, 0.00036120236088965853089),
        (40, 60.0, -0.077646197404715064971),
        (10, 100.0, -0.054732176935472014742),
        (0, 100.0, 0.019985850304223122424),
        (2, 0.1, 0.001248958658799918984),
        (25, 12.0, 4.4184178792297717459e-7),
    ];

    #[test]
    fn matches_reference_values() {
        for (m, x, want) in REFERENCE {
            let got = bessel_j(m, x).unwrap();
            assert!((got - want).abs() <= 1e-12, "J_{m}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(1, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_j_derivative(1, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn rejects_negative_argument() {
        assert!(matches!(bessel_j(0, -1.0), Err(Error::BesselDomain(_))));
        assert!(bessel_j_derivative(2, f64::NAN).is_err());
    }

    #[test]
    fn series_and_recurrence_agree_near_switch() {
        for m in 0..=40u32 {
            for x in [7.5, 8.0, 8.5] {
                let a = series(m, x);
                let b = miller(m, x);
                assert!((a - b).abs() < 1e-13, "m = {m}, x = {x}: {a} vs {b}");
            }
        }
        for (m, x) in [(20u32, 9.0), (30, 10.5), (40, 12.5)] {
            assert!((series(m, x) - miller(m, x)).abs() < 1e-13);
        }
    }

    #[test]
    fn first_zero_of_j0() {
        assert!(bessel_j(0, 2.404825557695773).unwrap().abs() < 1e-10);
        assert!((bessel_zero(0, 1).unwrap() - 2.4048255576957727686).abs() < 1e-13);
    }

    #[test]
    fn zeros_match_reference() {
        let cases = [
            (0, 2, 5.5200781102863106496),
            (1, 1, 3.8317059702075123156),
            (2, 3, 11.619841172149059427),
            (10, 5, 28.887375063530457027),
            (30, 2, 41.09277866315342772),
        ];
        for (m, n, want) in cases {
            let got = bessel_zero(m, n).unwrap();
            assert!((got - want).abs() < 1e-12, "j_({m},{n}) = {got}");
        }
    }

    #[test]
    fn zeros_interlace_and_vanish() {
        assert!(bessel_zero(0, 1).unwrap() < bessel_zero(1, 1).unwrap());
        assert!(bessel_zero(1, 1).unwrap() < bessel_zero(0, 2).unwrap());
        for m in 0..=10 {
            let zs = bessel_zeros_below(m, 1e9_f64.min(bessel_zero(m, 10).unwrap()));
            assert_eq!(zs.len(), 10);
            for w in zs.windows(2) {
                assert!(w[0] < w[1]);
            }
            for z in &zs {
                assert!(bessel_j(m, *z).unwrap().abs() <= 1e-12);
            }
            if m > 0 {
                let prev = bessel_zeros_below(m - 1, 1e3);
                for (n, z) in zs.iter().enumerate() {
                    assert!(prev[n] < *z && *z < prev[n + 1]);
                }
            }
        }
    }

    #[test]
    fn bessel_equation_residual() {
        let h = 1e-3;
        for m in 0..8u32 {
            for i in 1..20 {
                let x = 0.7 * i as f64;
                let j = j_unchecked(m, x);
                let d1 = dj_unchecked(m, x);
                let d2 = (8.0 * (dj_unchecked(m, x + h) - dj_unchecked(m, x - h))
                    - (dj_unchecked(m, x + 2.0 * h) - dj_unchecked(m, x - 2.0 * h)))
                    / (12.0 * h);
                let res = x * x * d2 + x * d1 + (x * x - (m * m) as f64) * j;
                assert!(res.abs() < 1e-8, "m = {m}, x = {x}: {res}");
            }
        }
    }
}
