//! Special functions: complex log-Gamma, Beta, the table integral, the
//! scaled Macdonald function of imaginary order and conical Legendre
//! functions.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::{gauss_kronrod, integrate_periodic_with, AdaptiveOptions};

/// Largest order accepted by [`bessel_k_imag`].
pub const MAX_BESSEL_ORDER: f64 = 40.0;

// B_{2k} / (2k (2k - 1)) for k = 1..10.
const STIRLING: [f64; 10] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
    43867.0 / 244_188.0,
    -174_611.0 / 125_400.0,
];

fn is_pole(z: Complex64) -> bool {
    z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round()
}

/// Principal branch of `ln Gamma(z)`.
///
/// The argument is shifted to `Re z >= 15` with the recurrence and the
/// Stirling series is summed there. The imaginary part is the continuous
/// branch (a sum of principal logarithms), not reduced mod `2 pi`.
pub fn log_gamma(z: Complex64) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Domain(format!("log_gamma of non-finite {z}")));
    }
    if is_pole(z) {
        return Err(Error::Pole { location: z });
    }
    let mut w = z;
    let mut shift = Complex64::new(0.0, 0.0);
    while w.re < 15.0 {
        shift += w.ln();
        w += 1.0;
    }
    let lw = w.ln();
    let mut acc = (w - 0.5) * lw - w + 0.5 * (2.0 * PI).ln();
    let inv = 1.0 / w;
    let inv2 = inv * inv;
    let mut pow = inv;
    for c in STIRLING {
        acc += pow * c;
        pow *= inv2;
    }
    Ok(acc - shift)
}

pub fn gamma(z: Complex64) -> Result<Complex64> {
    Ok(log_gamma(z)?.exp())
}

pub fn log_beta(a: Complex64, b: Complex64) -> Result<Complex64> {
    Ok(log_gamma(a)? + log_gamma(b)? - log_gamma(a + b)?)
}

pub fn beta(a: Complex64, b: Complex64) -> Result<Complex64> {
    Ok(log_beta(a, b)?.exp())
}

fn check_table_domain(s: Complex64, t: Complex64) -> Result<()> {
    if !(s.re > -1.0) {
        return Err(Error::Domain(format!("table integral needs Re s > -1, got s = {s}")));
    }
    if !(t.re + 0.5 * (s.re + 1.0) < 0.0) {
        return Err(Error::Domain(format!(
            "table integral diverges at infinity for s = {s}, t = {t}"
        )));
    }
    Ok(())
}

/// Logarithm of [`table_integral`]; usable where the value under- or overflows.
pub fn log_table_integral(s: Complex64, t: Complex64) -> Result<Complex64> {
    check_table_domain(s, t)?;
    let a = (s + 1.0) * 0.5;
    Ok(log_gamma(a)? + log_gamma(-t - a)? - log_gamma(-t)?)
}

/// `int_R |x|^s (1 + x^2)^t dx = B((s+1)/2, -t-(s+1)/2)`.
pub fn table_integral(s: Complex64, t: Complex64) -> Result<Complex64> {
    Ok(log_table_integral(s, t)?.exp())
}

/// The scaled Macdonald function `e^{pi R/2} K_{iR}(u)`.
///
/// Uses `K_{iR}(u) = Re int_0^inf exp(-u cosh w + i R w) dw` along the
/// shifted line `w = s + i eta`. Choosing `eta` at (or next to) the saddle
/// point keeps the integrand free of exponential cancellation in both the
/// oscillatory (`u < R`) and the decaying (`u > R`) regime.
pub fn bessel_k_imag(r: f64, u: f64) -> Result<f64> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::Domain(format!("K_iR(u) needs u > 0, got {u}")));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("order R must be nonnegative, got {r}")));
    }
    if r > MAX_BESSEL_ORDER {
        return Err(Error::UnsupportedRange(format!(
            "K_iR supports R <= {MAX_BESSEL_ORDER}, got {r}"
        )));
    }
    let eta = (r / u).min(1.0).asin().min(0.5 * PI - 1.0 / (1.0 + r));
    let (sin_eta, cos_eta) = eta.sin_cos();
    let base = 0.5 * PI * r - r * eta;
    if base - u * cos_eta < -740.0 {
        return Ok(0.0);
    }
    let peak = (base - u * cos_eta).exp();
    let integrand = |s: f64| {
        let (sh, ch) = (s.sinh(), s.cosh());
        // -u cosh(s + i eta) + i R (s + i eta) + pi R/2
        let re = base - u * ch * cos_eta;
        let im = r * s - u * sh * sin_eta;
        Complex64::from_polar(re.exp(), im)
    };
    let s_max = (1.0 + 45.0 / (u * cos_eta)).acosh();
    let opts = AdaptiveOptions {
        rel_tol: 1e-14,
        abs_tol: 1e-17 * peak,
        max_evaluations: 2_000_000,
    };
    let v = gauss_kronrod(&integrand, 0.0, s_max, &opts)?;
    Ok(v.value.re)
}

/// Conical function `P^{-n}_{-1/2 + i t}(x)` for `x >= 1`.
///
/// Laplace-type representation
/// `P^{-n}_nu(x) = Gamma(nu-n+1) / (pi Gamma(nu+1)) int_0^pi (x + sqrt(x^2-1) cos phi)^nu cos(n phi) dphi`,
/// evaluated with the periodic trapezoid rule. Normalized so that the value
/// at `x = 1` is `1` for `n = 0` and `0` otherwise.
pub fn conical_legendre(t: f64, n: i64, x: f64) -> Result<f64> {
    if !(x >= 1.0) || !x.is_finite() {
        return Err(Error::Domain(format!("conical function needs x >= 1, got {x}")));
    }
    if x == 1.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let nu = Complex64::new(-0.5, t);
    // Gamma(nu - n + 1) / Gamma(nu + 1) as a finite product.
    let mut ratio = Complex64::new(1.0, 0.0);
    if n > 0 {
        for k in 0..n {
            ratio /= nu - k as f64;
        }
    } else {
        for k in 1..=(-n) {
            ratio *= nu + k as f64;
        }
    }
    let sq = (x * x - 1.0).sqrt();
    let nf = n as f64;
    let integral = integrate_periodic_with(
        |th: f64| {
            let phi = 2.0 * PI * th;
            let base = x + sq * phi.cos();
            (nu * base.ln()).exp() * (nf * phi).cos()
        },
        1e-15,
        1 << 22,
    )?;
    // int_0^pi = pi * mean over the full period.
    Ok((ratio * integral.value).re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate_adaptive, Singularity};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn log_gamma_examples() {
        assert!(log_gamma(c(1.0, 0.0)).unwrap().norm() < 1e-15);
        let half = log_gamma(c(0.5, 0.0)).unwrap();
        assert!((half.re - 0.5 * PI.ln()).abs() < 1e-14 && half.im.abs() < 1e-14);
        // Frozen 40-digit reference value.
        let z = log_gamma(c(0.25, -7.5)).unwrap();
        let r = c(-11.365_620_394_646_528_258_7, -7.220_462_821_847_432_420_9);
        assert!((z - r).norm() / r.norm() < 1e-13, "{z}");
        assert!(matches!(log_gamma(c(-3.0, 0.0)), Err(Error::Pole { .. })));
        assert!(matches!(log_gamma(c(0.0, 0.0)), Err(Error::Pole { .. })));
    }

    #[test]
    fn bessel_k_underflows_to_zero() {
        assert_eq!(bessel_k_imag(13.78, 1200.0).unwrap(), 0.0);
        assert!(bessel_k_imag(13.78, 700.0).unwrap() > 0.0);
    }

    #[test]
    fn factorials() {
        let mut f = 1.0f64;
        for n in 1..30 {
            f *= n as f64;
            let g = gamma(c(n as f64 + 1.0, 0.0)).unwrap();
            assert!((g.re - f).abs() / f < 1e-13);
        }
    }

    #[test]
    fn table_integral_examples() {
        let v = table_integral(c(0.0, 0.0), c(-1.0, 0.0)).unwrap();
        assert!((v - c(PI, 0.0)).norm() < 1e-13);
        assert!(matches!(
            table_integral(c(0.0, 0.0), c(-0.5, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(table_integral(c(-1.0, 0.0), c(-2.0, 0.0)).is_err());
        // pi / cosh(3 pi/2) for s = 3i, t = -1.
        let v = table_integral(c(0.0, 3.0), c(-1.0, 0.0)).unwrap();
        assert!((v.re - 0.056_439_127_543_713_858_85).abs() < 1e-15 && v.im.abs() < 1e-15);
        let q = integrate_adaptive(
            |x: f64| {
                if x == 0.0 {
                    c(0.0, 0.0)
                } else {
                    c(0.0, 3.0 * x.abs().ln()).exp() / (1.0 + x * x)
                }
            },
            f64::NEG_INFINITY,
            f64::INFINITY,
            Some(Singularity {
                point: 0.0,
                exponent: 0.0,
            }),
        )
        .unwrap();
        assert!((q.value - v).norm() / v.norm() < 1e-8);
    }

    #[test]
    fn bessel_reference_values() {
        let k0 = bessel_k_imag(0.0, 1.0).unwrap();
        assert!((k0 - 0.421_024_438_240_708_333_3).abs() < 1e-14, "{k0}");
        let refs = [
            (9.533695, 1.0, 0.407_663_690_816_683_492_057),
            (9.533695, 5.0, -0.877_442_416_160_791_410_515),
            (20.0, 3.0, 0.540_533_333_640_015_868_678),
            (40.0, 0.5, 0.164_869_595_731_335_555_311),
            (40.0, 45.0, 0.054_881_111_841_600_450_095),
            (13.7797, 20.0, 0.011_626_331_712_755_297_381),
            (0.0, 0.1, 2.427_069_024_702_016_557_819),
        ];
        for (r, u, want) in refs {
            let got = bessel_k_imag(r, u).unwrap();
            assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "R={r} u={u}: {got} vs {want}");
        }
    }

    #[test]
    fn bessel_errors_and_decay() {
        assert!(matches!(bessel_k_imag(1.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_k_imag(1.0, -2.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_k_imag(41.0, 2.0), Err(Error::UnsupportedRange(_))));
        assert!(bessel_k_imag(9.533695, 60.0).unwrap().abs() < 1e-15);
        let r = 12.0;
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let v = bessel_k_imag(r, r + 0.5 + 0.5 * k as f64).unwrap();
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
    }

    fn bessel_residual(r: f64, u: f64) -> f64 {
        let h = 1e-3 * (u / r.max(1.0)).min(1.0);
        let y = |x: f64| bessel_k_imag(r, x).unwrap();
        let (ym, y0, yp) = (y(u - h), y(u), y(u + h));
        let d1 = (yp - ym) / (2.0 * h);
        let d2 = (yp - 2.0 * y0 + ym) / (h * h);
        let terms = [u * u * d2, u * d1, (u * u - r * r) * y0];
        let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        (terms[0] + terms[1] - terms[2]).abs() / scale
    }

    #[test]
    fn bessel_satisfies_its_ode() {
        for &r in &[0.0, 3.3, 9.533695, 17.0, 39.0] {
            for &u in &[0.1, 0.7, 2.5, 9.0, 21.0, 50.0] {
                let res = bessel_residual(r, u);
                assert!(res < 1e-6, "R={r} u={u}: residual {res}");
            }
        }
    }

    #[test]
    fn bessel_continuity_in_order() {
        for &u in &[1.0, 4.0, 8.0] {
            let a = bessel_k_imag(10.0, u).unwrap();
            let b = bessel_k_imag(10.0 + 1e-4, u).unwrap();
            assert!((a - b).abs() < 1e-2 * a.abs().max(1e-3));
        }
    }

    #[test]
    fn conical_reference_values() {
        assert_eq!(conical_legendre(3.0, 0, 1.0).unwrap(), 1.0);
        assert_eq!(conical_legendre(3.0, 1, 1.0).unwrap(), 0.0);
        assert!(conical_legendre(3.0, 0, 0.5).is_err());
        let refs = [
            (0.0, 0, 1f64.cosh(), 0.940_862_159_249_349_818_62),
            (5.0, 0, 2.0, 0.236_104_983_562_698_272_93),
            (5.0, 1, 2.0, -0.020_966_608_505_610_403_727),
            (5.0, 2, 2.0, -0.010_441_295_112_716_657_908),
            (5.0, 3, 2.0, -0.000_872_309_371_088_380_381_85),
            (10.5, 4, 3.5, 2.302_910_474_317_551_219e-6),
        ];
        for (t, n, x, want) in refs {
            let got = conical_legendre(t, n, x).unwrap();
            assert!((got - want).abs() < 1e-11 * want.abs().max(1e-3), "{t} {n} {x}: {got}");
        }
    }

    #[test]
    fn conical_limit_at_centre() {
        let v = conical_legendre(7.0, 0, 1.0 + 1e-10).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
        let v = conical_legendre(7.0, 2, 1.0 + 1e-10).unwrap();
        assert!(v.abs() < 1e-8);
    }

    #[test]
    fn conical_satisfies_legendre_equation() {
        for &(t, n, x) in &[(2.0, 0i64, 1.7), (5.0, 1, 2.0), (8.0, 3, 1.3), (4.0, 2, 4.0)] {
            let h = 2e-4;
            let p = |x: f64| conical_legendre(t, n, x).unwrap();
            let (pm, p0, pp) = (p(x - h), p(x), p(x + h));
            let d1 = (pp - pm) / (2.0 * h);
            let d2 = (pp - 2.0 * p0 + pm) / (h * h);
            // nu (nu + 1) = -(1/4 + t^2)
            let nn = -(0.25 + t * t);
            let m2 = (n * n) as f64;
            let terms = [(1.0 - x * x) * d2, -2.0 * x * d1, (nn - m2 / (1.0 - x * x)) * p0];
            let scale = terms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let res = terms.iter().sum::<f64>().abs() / scale;
            assert!(res < 1e-6, "{t} {n} {x}: {res}");
        }
    }

    #[test]
    fn conical_recurrence_in_order() {
        // P^{-n} - 2(n+1) x/sqrt(x^2-1) P^{-n-1} - (nu+n+2)(nu-n-1) P^{-n-2} = 0,
        // with nu = -1/2 + it, so (nu+n+2)(nu-n-1) = -((n+3/2)^2 + t^2).
        for &(t, x) in &[(5.0, 2.0), (1.5, 1.2), (9.0, 3.0)] {
            for n in 0..6i64 {
                let p0 = conical_legendre(t, n, x).unwrap();
                let p1 = conical_legendre(t, n + 1, x).unwrap();
                let p2 = conical_legendre(t, n + 2, x).unwrap();
                if p0.abs().min(p1.abs()).min(p2.abs()) < 1e-12 {
                    continue;
                }
                let k = (n as f64 + 1.5).powi(2) + t * t;
                let terms = [p0, -2.0 * (n as f64 + 1.0) * x / (x * x - 1.0).sqrt() * p1, k * p2];
                let scale = terms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let res = terms.iter().sum::<f64>().abs() / scale;
                assert!(res < 1e-8, "t={t} x={x} n={n}: {res}");
            }
        }
    }

    proptest! {
        #[test]
        fn gamma_recursion(re in -20.0..50.0f64, im in -60.0..60.0f64) {
            let z = c(re, im);
            prop_assume!(z.norm() <= 100.0 && (z.im.abs() > 1e-3 || z.re > 0.0));
            let lhs = log_gamma(z + 1.0).unwrap();
            let rhs = log_gamma(z).unwrap() + z.ln();
            let ratio = (lhs - rhs).exp();
            prop_assert!((ratio - 1.0).norm() < 1e-12, "z={} ratio={}", z, ratio);
        }

        #[test]
        fn gamma_reflection(re in -5.0..5.0f64, im in -8.0..8.0f64) {
            let z = c(re, im);
            prop_assume!((z.re - z.re.round()).abs() > 1e-2 || z.im.abs() > 1e-2);
            let prod = (log_gamma(z).unwrap() + log_gamma(1.0 - z).unwrap()).exp();
            let want = PI / (z * PI).sin();
            prop_assert!((prod - want).norm() / want.norm() < 1e-10);
        }

        #[test]
        fn right_half_plane_branch_is_continuous(re in 0.1..30.0f64, im in -80.0..80.0f64) {
            let z = c(re, im);
            let d = log_gamma(z + c(0.0, 1e-6)).unwrap() - log_gamma(z).unwrap();
            prop_assert!(d.norm() < 1e-3);
        }
    }
}
