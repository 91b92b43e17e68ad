//! Line and circle models of the principal series `V_lambda`, the K-fixed
//! vector, the model equivariant functionals and the spectral densities
//! `b_{n,lambda}` (closed geodesics) and `c_{n,lambda}` (geodesic circles).
//!
//! Conventions. A vector is a function `F` on the plane, even and homogeneous
//! of degree `lambda - 1`. The line model is `v(x) = F(x, 1)` and the circle
//! model is `F(cos 2 pi theta, sin 2 pi theta)`. The norm is
//! `int_0^1 |F(u_theta)|^2 dtheta = (1/pi) int_R |v(x)|^2 dx`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypgeom::GroupElement;
use crate::quad::{
    analyze_phase, fourier_coefficients, fourier_index, gauss_kronrod, integrate_adaptive_with,
    AdaptiveOptions, PhaseOptions, PhaseReport, Singularity,
};
use crate::specfun::log_gamma;

/// Default half-width `sigma` of the transition window (`1 -+ sigma`).
pub const DEFAULT_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParam {
    pub lambda: Complex64,
    pub mu: Complex64,
}

impl SpectralParam {
    pub fn new(lambda: Complex64) -> Self {
        Self {
            lambda,
            mu: (1.0 - lambda * lambda) / 4.0,
        }
    }

    /// `lambda = i t`.
    pub fn principal(t: f64) -> Self {
        Self::new(Complex64::new(0.0, t))
    }

    /// From `mu = 1/4 + R^2`: `lambda = 2 i R`.
    pub fn from_r(r: f64) -> Self {
        Self::principal(2.0 * r)
    }

    pub fn is_principal(&self) -> bool {
        self.lambda.re == 0.0
    }

    /// `|lambda|`.
    pub fn abs(&self) -> f64 {
        self.lambda.norm()
    }

    fn require_principal(&self) -> Result<()> {
        if self.is_principal() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "lambda = {} is not in the principal series",
                self.lambda
            )))
        }
    }
}

pub type SampleFn = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VectorKind {
    /// `c (1 + x^2)^{(lambda - 1)/2}`.
    KFixed { c: f64 },
    /// `x -> T bump(T(|x| - 1))`.
    TestVector { t: f64 },
    Generic,
}

#[derive(Clone)]
pub enum Realization {
    Line(SampleFn),
    Circle(SampleFn),
}

#[derive(Clone)]
pub struct ModelVector {
    pub param: SpectralParam,
    pub realization: Realization,
    pub kind: VectorKind,
    /// Interval of `|x|` outside which the line function vanishes.
    pub support: Option<(f64, f64)>,
}

impl fmt::Debug for ModelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let model = match self.realization {
            Realization::Line(_) => "line",
            Realization::Circle(_) => "circle",
        };
        f.debug_struct("ModelVector")
            .field("param", &self.param)
            .field("model", &model)
            .field("kind", &self.kind)
            .field("support", &self.support)
            .finish()
    }
}

impl ModelVector {
    pub fn line(param: SpectralParam, f: SampleFn) -> Self {
        Self {
            param,
            realization: Realization::Line(f),
            kind: VectorKind::Generic,
            support: None,
        }
    }

    pub fn circle(param: SpectralParam, f: SampleFn) -> Self {
        Self {
            param,
            realization: Realization::Circle(f),
            kind: VectorKind::Generic,
            support: None,
        }
    }

    /// Line-model value `F(x, 1)`.
    pub fn eval_line(&self, x: f64) -> Complex64 {
        match &self.realization {
            Realization::Line(f) => f(x),
            Realization::Circle(f) => {
                // (x, 1) = sqrt(1 + x^2) u_theta with theta = atan2(1, x)/2pi.
                let theta = 1f64.atan2(x) / (2.0 * PI);
                let scale = homogeneous_factor(self.param.lambda, (1.0 + x * x).sqrt());
                f(theta) * scale
            }
        }
    }

    /// Circle-model value `F(u_theta)`.
    pub fn eval_circle(&self, theta: f64) -> Complex64 {
        match &self.realization {
            Realization::Circle(f) => f(theta),
            Realization::Line(_) if matches!(self.kind, VectorKind::KFixed { .. }) => {
                // |u_theta| = 1.
                let VectorKind::KFixed { c } = self.kind else { unreachable!() };
                Complex64::new(c, 0.0)
            }
            Realization::Line(f) => {
                let (s, c) = (2.0 * PI * theta).sin_cos();
                if s.abs() < 1e-300 {
                    return Complex64::new(0.0, 0.0);
                }
                // F(c, s) = |s|^{lambda-1} F(c/s, 1) by evenness and homogeneity.
                f(c / s) * homogeneous_factor(self.param.lambda, s.abs())
            }
        }
    }

    pub fn to_circle(&self) -> ModelVector {
        let me = self.clone();
        ModelVector {
            param: self.param,
            realization: Realization::Circle(Arc::new(move |t| me.eval_circle(t))),
            kind: self.kind,
            support: None,
        }
    }

    /// Circle-model squared norm `int_0^1 |F(u_theta)|^2 dtheta`.
    pub fn norm_sqr(&self) -> Result<f64> {
        let f = |x: f64| Complex64::new(self.eval_line(x).norm_sqr(), 0.0);
        let opts = AdaptiveOptions {
            rel_tol: 1e-13,
            ..Default::default()
        };
        let v = match self.support {
            Some((lo, hi)) => {
                gauss_kronrod(&f, lo, hi, &opts)?.value + gauss_kronrod(&f, -hi, -lo, &opts)?.value
            }
            None => integrate_adaptive_with(f, f64::NEG_INFINITY, f64::INFINITY, None, &opts)?.value,
        };
        Ok(v.re / PI)
    }
}

/// `r^{lambda - 1}` for `r > 0`.
fn homogeneous_factor(lambda: Complex64, r: f64) -> Complex64 {
    ((lambda - 1.0) * r.ln()).exp()
}

/// The unit K-fixed vector `e_0(x) = (1 + x^2)^{(lambda - 1)/2}`; `c = 1`
/// gives unit circle-model norm.
pub fn k_fixed_vector(param: SpectralParam) -> Result<ModelVector> {
    param.require_principal()?;
    let lambda = param.lambda;
    Ok(ModelVector {
        param,
        realization: Realization::Line(Arc::new(move |x| {
            (((lambda - 1.0) * 0.5) * (1.0 + x * x).ln()).exp()
        })),
        kind: VectorKind::KFixed { c: 1.0 },
        support: None,
    })
}

/// `(pi(g) v)(x) = |c'x + d'|^{lambda-1} v((a'x + b')/(c'x + d'))` with
/// `g^{-1} = [[a', b'], [c', d']]` (canonical `|det g| = 1`).
pub fn pi_action(param: SpectralParam, g: &GroupElement, v: &ModelVector) -> Result<ModelVector> {
    if (param.lambda - v.param.lambda).norm() > 1e-12 {
        return Err(Error::Consistency(format!(
            "vector lives in V_{}, not V_{}",
            v.param.lambda, param.lambda
        )));
    }
    let [a, b, c, d] = g.inverse().entries();
    let lambda = param.lambda;
    let inner = v.clone();
    let f = move |x: f64| {
        let den = c * x + d;
        if den == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        inner.eval_line((a * x + b) / den) * homogeneous_factor(lambda, den.abs())
    };
    // Diagonal elements map the support of |x| to a scaled interval.
    let support = match v.support {
        Some((lo, hi)) if b == 0.0 && c == 0.0 => {
            let s = (d / a).abs();
            Some((lo * s, hi * s))
        }
        _ => None,
    };
    Ok(ModelVector {
        param,
        realization: Realization::Line(Arc::new(f)),
        kind: VectorKind::Generic,
        support,
    })
}

/// Exponent `-1/2 - lambda/2 + s/2` of the model kernel.
pub fn kernel_exponent(param: SpectralParam, s: Complex64) -> Complex64 {
    -0.5 - param.lambda * 0.5 + s * 0.5
}

/// `d^mod_{s,lambda}(v) = int |x|^{-1/2 - lambda/2 + s/2} v(x) dx`.
pub fn model_functional(param: SpectralParam, s: Complex64, v: &ModelVector) -> Result<Complex64> {
    if let VectorKind::KFixed { .. } = v.kind {
        return Ok(model_functional_log(param, s, v)?.exp());
    }
    generic_functional(param, s, v)
}

/// Logarithm of [`model_functional`]. For the K-fixed vector this is
/// computed by quadrature along rotated contours and stays accurate where
/// the value itself underflows.
pub fn model_functional_log(param: SpectralParam, s: Complex64, v: &ModelVector) -> Result<Complex64> {
    check_unitary(s)?;
    match v.kind {
        VectorKind::KFixed { c } => {
            let kappa = kernel_exponent(param, s);
            let beta = (param.lambda - 1.0) * 0.5;
            Ok(log_power_integral(kappa, beta)? + c.ln())
        }
        _ => Ok(generic_functional(param, s, v)?.ln()),
    }
}

fn check_unitary(s: Complex64) -> Result<()> {
    if s.re.abs() > 1e-14 {
        return Err(Error::Input(format!(
            "model functionals are defined for unitary characters (Re s = 0), got s = {s}"
        )));
    }
    Ok(())
}

fn generic_functional(param: SpectralParam, s: Complex64, v: &ModelVector) -> Result<Complex64> {
    check_unitary(s)?;
    let kappa = kernel_exponent(param, s);
    let kernel = move |x: f64| {
        let ax = x.abs();
        if ax == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            (kappa * ax.ln()).exp()
        }
    };
    let opts = AdaptiveOptions {
        rel_tol: 1e-12,
        ..Default::default()
    };
    let f = |x: f64| kernel(x) * v.eval_line(x);
    match v.support {
        Some((lo, hi)) if lo > 0.0 => {
            let right = gauss_kronrod(&f, lo, hi, &opts)?;
            let left = gauss_kronrod(&f, -hi, -lo, &opts)?;
            Ok(right.value + left.value)
        }
        _ => {
            let sing = Singularity {
                point: 0.0,
                exponent: kappa.re,
            };
            Ok(integrate_adaptive_with(f, f64::NEG_INFINITY, f64::INFINITY, Some(sing), &opts)?.value)
        }
    }
}

/// `ln int_R |x|^kappa (1 + x^2)^beta dx`, by quadrature.
///
/// With `w = x^2` the integral is `int_0^inf w^{a-1} (1+w)^beta dw`,
/// `a = (kappa+1)/2`. When the kernel oscillates faster than the vector
/// (`Im a > 0` or `Im(a + beta) < 0`) the ray is rotated onto the negative
/// axis, which turns the exponentially small result into an explicit
/// prefactor times two Beta-type integrals of moderate size:
/// `I = e^{+-i pi a} [int_0^1 w^{a-1}(1-w)^beta dw
///      + e^{+-i pi beta} int_0^1 w^{-a-beta-1}(1-w)^beta dw]`.
/// Otherwise the real ray is split at `w = 1`.
pub fn log_power_integral(kappa: Complex64, beta: Complex64) -> Result<Complex64> {
    let a = (kappa + 1.0) * 0.5;
    let a2 = -a - beta;
    if !(a.re > 0.0 && a2.re > 0.0 && beta.re > -1.0) {
        return Err(Error::Domain(format!(
            "power integral diverges for kappa = {kappa}, beta = {beta}"
        )));
    }
    let i = Complex64::i();
    if a.im > 0.0 || (a + beta).im < 0.0 {
        let sign = if a.im > 0.0 { 1.0 } else { -1.0 };
        let b1 = beta_like(a, beta, -1.0)?;
        let b2 = beta_like(a2, beta, -1.0)?;
        let sum = b1 + (i * PI * sign * beta).exp() * b2;
        Ok(i * PI * sign * a + sum.ln())
    } else {
        let b1 = beta_like(a, beta, 1.0)?;
        let b2 = beta_like(a2, beta, 1.0)?;
        Ok((b1 + b2).ln())
    }
}

/// `sum_k binom(e, k) (-z)^k`-type series: returns
/// `int_0^eps w^{p-1} (1 + sign w)^e dw` for `eps * (|e| + 1) <= 1/4`.
fn endpoint_series(p: Complex64, e: Complex64, sign: f64, eps: f64) -> Complex64 {
    let mut binom = Complex64::new(1.0, 0.0);
    let mut pow = (p * eps.ln()).exp();
    let mut sum = pow / p;
    for k in 1..400 {
        let kf = k as f64;
        binom *= (e - (kf - 1.0)) / kf;
        pow *= sign * eps;
        let term = binom * pow / (p + kf);
        sum += term;
        if term.norm() <= 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}

/// `int_0^1 w^{p-1} (1 + sign w)^beta dw` with `Re p > 0`, `Re beta > -1`.
/// Binomial series near the algebraic endpoints, adaptive Gauss-Kronrod in
/// between.
fn beta_like(p: Complex64, beta: Complex64, sign: f64) -> Result<Complex64> {
    let eps0 = (0.25 / (beta.norm() + 1.0)).min(0.25);
    let mut total = endpoint_series(p, beta, sign, eps0);
    let mut hi = 1.0;
    if sign < 0.0 {
        // Near w = 1: w = 1 - u, int_0^eps u^beta (1 - u)^{p-1} du.
        let eps1 = (0.25 / ((p - 1.0).norm() + 1.0)).min(0.25);
        total += endpoint_series(beta + 1.0, p - 1.0, -1.0, eps1);
        hi = 1.0 - eps1;
    }
    let f = |w: f64| ((p - 1.0) * w.ln() + beta * (1.0 + sign * w).ln()).exp();
    let opts = AdaptiveOptions {
        rel_tol: 1e-13,
        abs_tol: 1e-15,
        max_evaluations: 20_000_000,
    };
    total += gauss_kronrod(&f, eps0, hi, &opts)?.value;
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    Bulk,
    Edge,
    Tail,
}

impl Regime {
    pub fn tag(&self) -> &'static str {
        match self {
            Regime::Bulk => "bulk",
            Regime::Edge => "edge",
            Regime::Tail => "tail",
        }
    }

    /// Regime of a frequency against the edge `scale`, with window `sigma`.
    pub fn classify(freq: f64, scale: f64, sigma: f64) -> Regime {
        let f = freq.abs();
        if f <= (1.0 - sigma) * scale {
            Regime::Bulk
        } else if f <= (1.0 + sigma) * scale {
            Regime::Edge
        } else {
            Regime::Tail
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DensityKind {
    /// `b_{n,lambda}` for characters `s_n = i n lattice_step`.
    GeodesicB { q: f64, lattice_step: f64 },
    /// `c_{n,lambda}` for the radius element `g`; `edge_constant` is
    /// `max_theta |d/dtheta ln |g^{-1} u_theta||`.
    CircleC { g: GroupElement, edge_constant: f64 },
    /// Equator values of normalized associated Legendre functions.
    SphereEquator { degree: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityEntry {
    pub value: Complex64,
    /// `ln |value|`, finite even where `value` underflows.
    pub log_abs: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub param: SpectralParam,
    pub kind: DensityKind,
    pub entries: BTreeMap<i64, DensityEntry>,
}

impl DensityTable {
    pub fn get(&self, n: i64) -> Option<&DensityEntry> {
        self.entries.get(&n)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.values().fold(0.0, |m, e| m.max(e.value.norm()))
    }

    /// Long-format CSV: `n,re,im,abs2,regime`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["n", "re", "im", "abs2", "regime"])?;
        for (n, e) in &self.entries {
            wr.write_record([
                n.to_string(),
                format!("{:e}", e.value.re),
                format!("{:e}", e.value.im),
                format!("{:e}", e.value.norm_sqr()),
                e.regime.tag().to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Lattice step `2 pi q` of the characters trivial on `a_gamma`.
pub fn lattice_step(q: f64) -> f64 {
    2.0 * PI * q
}

/// `ln b(s) = ln Gamma((1-lambda+s)/4) + ln Gamma((1-lambda-s)/4) - ln Gamma((1-lambda)/2)`.
pub fn log_b(param: SpectralParam, s: Complex64) -> Result<Complex64> {
    let l = param.lambda;
    Ok(log_gamma((1.0 - l + s) / 4.0)? + log_gamma((1.0 - l - s) / 4.0)? - log_gamma((1.0 - l) / 2.0)?)
}

/// `b_{n,lambda}` from the Gamma formula on the lattice `s_n = 2 pi i n q`.
pub fn density_b(param: SpectralParam, q: f64, n_range: (i64, i64)) -> Result<DensityTable> {
    density_b_with(param, q, lattice_step(q), DEFAULT_SIGMA, n_range)
}

pub fn density_b_with(
    param: SpectralParam,
    q: f64,
    step: f64,
    sigma: f64,
    n_range: (i64, i64),
) -> Result<DensityTable> {
    param.require_principal()?;
    if !(q > 0.0) || !(step > 0.0) {
        return Err(Error::Input(format!("need q > 0 and step > 0, got {q}, {step}")));
    }
    let t = param.abs();
    let mut entries = BTreeMap::new();
    for n in n_range.0..=n_range.1 {
        let nu = n as f64 * step;
        let lb = log_b(param, Complex64::new(0.0, nu))?;
        entries.insert(
            n,
            DensityEntry {
                value: lb.exp(),
                log_abs: lb.re,
                regime: Regime::classify(nu, t, sigma),
            },
        );
    }
    Ok(DensityTable {
        param,
        kind: DensityKind::GeodesicB { q, lattice_step: step },
        entries,
    })
}

/// `ln b_{n,lambda}` by contour quadrature of the model functional on `e_0`.
pub fn density_b_quadrature_log(param: SpectralParam, step: f64, n: i64) -> Result<Complex64> {
    let e0 = k_fixed_vector(param)?;
    model_functional_log(param, Complex64::new(0.0, n as f64 * step), &e0)
}

/// `|g^{-1} u_theta|` for `u_theta = (cos 2 pi theta, sin 2 pi theta)`.
fn inverse_stretch(ginv: &[f64; 4], theta: f64) -> f64 {
    let (s, c) = (2.0 * PI * theta).sin_cos();
    let [a, b, cc, d] = *ginv;
    (a * c + b * s).hypot(cc * c + d * s)
}

/// `max_theta |d/dtheta ln |g^{-1} u_theta||` on a fine grid.
pub fn circle_edge_constant(g: &GroupElement) -> f64 {
    let ginv = g.inverse().entries();
    let n = 1 << 16;
    let h = 1e-6;
    (0..n)
        .map(|j| {
            let t = j as f64 / n as f64;
            ((inverse_stretch(&ginv, t + h).ln() - inverse_stretch(&ginv, t - h).ln()) / (2.0 * h)).abs()
        })
        .fold(0.0, f64::max)
}

/// `c_{n,lambda} = int_0^1 |g^{-1} u_theta|^{lambda - 1} e^{-2 pi i n theta} dtheta`,
/// the Fourier coefficients of `pi(g) e_0` in the circle model, by the
/// trapezoid rule (FFT) with node doubling until the requested range is
/// stable.
pub fn density_c(param: SpectralParam, g: &GroupElement, n_range: (i64, i64)) -> Result<DensityTable> {
    density_c_with(param, g, DEFAULT_SIGMA, n_range)
}

pub fn density_c_with(
    param: SpectralParam,
    g: &GroupElement,
    sigma: f64,
    n_range: (i64, i64),
) -> Result<DensityTable> {
    param.require_principal()?;
    if g.in_k(1e-12) {
        return Err(Error::DegenerateCircle);
    }
    let t = param.abs();
    let cedge = circle_edge_constant(g);
    let ginv = g.inverse().entries();
    let lambda = param.lambda;
    let nmax = n_range.0.abs().max(n_range.1.abs()) as f64;
    let mut size = 1024usize;
    while (size as f64) < 4.0 * nmax.max(cedge * t / (2.0 * PI)) {
        size *= 2;
    }
    let sample = |size: usize| -> Vec<Complex64> {
        let f: Vec<Complex64> = (0..size)
            .into_par_iter()
            .map(|j| {
                let r = inverse_stretch(&ginv, j as f64 / size as f64);
                ((lambda - 1.0) * r.ln()).exp()
            })
            .collect();
        fourier_coefficients(&f)
    };
    let mut coeffs = sample(size);
    loop {
        if size > 1 << 24 {
            return Err(Error::Convergence {
                best: Complex64::new(0.0, 0.0),
                error_estimate: f64::NAN,
                evaluations: size,
            });
        }
        let finer = sample(2 * size);
        let diff = (n_range.0..=n_range.1)
            .map(|n| (finer[fourier_index(n, 2 * size)] - coeffs[fourier_index(n, size)]).norm())
            .fold(0.0, f64::max);
        size *= 2;
        coeffs = finer;
        if diff < 1e-15 {
            break;
        }
    }
    let entries = (n_range.0..=n_range.1)
        .map(|n| {
            let v = coeffs[fourier_index(n, size)];
            let log_abs = if v.norm() > 0.0 { v.norm().ln() } else { -745.0 };
            (
                n,
                DensityEntry {
                    value: v,
                    log_abs,
                    regime: Regime::classify(2.0 * PI * n as f64, cedge * t, sigma),
                },
            )
        })
        .collect();
    Ok(DensityTable {
        param,
        kind: DensityKind::CircleC {
            g: *g,
            edge_constant: cedge,
        },
        entries,
    })
}

/// Phase analysis of the integral defining `c_{n,lambda}`.
pub fn circle_phase_report(param: SpectralParam, g: &GroupElement, n: i64) -> Result<PhaseReport> {
    let ginv = g.inverse().entries();
    let t = param.abs();
    let nf = n as f64;
    analyze_phase(
        move |th: f64| t * inverse_stretch(&ginv, th).ln() - 2.0 * PI * nf * th,
        move |th: f64| 1.0 / inverse_stretch(&ginv, th),
        (0.0, 1.0),
        &PhaseOptions::default(),
    )
}

/// Mass of the unnormalized mollifier `exp(-1/(1-z^2))` on `[-1, 1]`.
pub const MOLLIFIER_MASS: f64 = 0.443_993_816_168_079_437_823;
/// `int exp(-2/(1-z^2)) dz` over `[-1, 1]`.
pub const MOLLIFIER_SQUARE_MASS: f64 = 0.133_086_120_844_994_271_557;
/// Centre and half-width of the bump support `[0, 0.1]`.
const BUMP_CENTRE: f64 = 0.05;
const BUMP_HALF_WIDTH: f64 = 0.05;

/// The fixed bump: a unit-mass mollifier supported in `[0, 0.1]`.
pub fn bump(y: f64) -> f64 {
    let z = (y - BUMP_CENTRE) / BUMP_HALF_WIDTH;
    if z.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - z * z)).exp() / (BUMP_HALF_WIDTH * MOLLIFIER_MASS)
    }
}

/// `int bump^2`.
pub fn bump_l2() -> f64 {
    MOLLIFIER_SQUARE_MASS / (BUMP_HALF_WIDTH * MOLLIFIER_MASS * MOLLIFIER_MASS)
}

/// `c_1` in `||v_T||^2 = c_1 T`: the even extension doubles the line mass
/// and the circle-model norm divides it by `pi`.
pub fn test_vector_c1() -> f64 {
    2.0 * bump_l2() / PI
}

/// `v_T(x) = T bump(T(|x| - 1))`.
pub fn test_vector(param: SpectralParam, t: f64) -> Result<ModelVector> {
    if !(t >= 1.0) {
        return Err(Error::Input(format!("test vector needs T >= 1, got {t}")));
    }
    Ok(ModelVector {
        param,
        realization: Realization::Line(Arc::new(move |x: f64| {
            Complex64::new(t * bump(t * (x.abs() - 1.0)), 0.0)
        })),
        kind: VectorKind::TestVector { t },
        support: Some((1.0, 1.0 + 2.0 * BUMP_HALF_WIDTH / t)),
    })
}

/// Largest variation of the kernel phase `Im(kappa) ln|x|` over the support
/// of `v_T`, for characters `s = i nu`.
pub fn kernel_phase_variation(param: SpectralParam, nu: f64, t: f64) -> f64 {
    let kappa = kernel_exponent(param, Complex64::new(0.0, nu));
    kappa.im.abs() * (1.0 + 2.0 * BUMP_HALF_WIDTH / t).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate_periodic;
    use crate::specfun::table_integral;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn spectral_param_relation() {
        let p = SpectralParam::from_r(9.5);
        assert!((p.mu - c(0.25 + 9.5 * 9.5, 0.0)).norm() < 1e-12);
        assert!(p.is_principal());
        assert!(!SpectralParam::new(c(0.3, 0.0)).is_principal());
    }

    #[test]
    fn k_fixed_vector_is_unit_and_k_invariant() {
        for &t in &[0.0, 10.0, 37.0] {
            let p = SpectralParam::principal(t);
            let e0 = k_fixed_vector(p).unwrap();
            // Independent circle-model normalization by periodic quadrature.
            let norm = integrate_periodic(|th| c(e0.eval_circle(th).norm_sqr(), 0.0)).unwrap();
            assert!((norm.value.re - 1.0).abs() < 1e-10, "{}", norm.value);
            assert!((e0.norm_sqr().unwrap() - 1.0).abs() < 1e-10);
            for &ang in &[0.3, 1.1, 2.9] {
                let k = GroupElement::rotation(ang);
                let moved = pi_action(p, &k, &e0).unwrap();
                for j in 0..32 {
                    let x = -4.0 + 8.0 * j as f64 / 31.0 + 0.01;
                    assert!((moved.eval_line(x) - e0.eval_line(x)).norm() < 1e-9);
                }
            }
            if t > 0.0 {
                let x = 2.5;
                assert!((e0.eval_line(x).norm() - (1.0 + x * x).powf(-0.5)).abs() < 1e-14);
            }
        }
        assert!(matches!(
            k_fixed_vector(SpectralParam::new(c(0.2, 1.0))),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn diagonal_action_is_explicit() {
        let p = SpectralParam::principal(6.0);
        let e0 = k_fixed_vector(p).unwrap();
        let a = GroupElement::diagonal(2.0).unwrap();
        let moved = pi_action(p, &a, &e0).unwrap();
        for &x in &[-3.0f64, -0.2, 0.0, 1.7, 9.0] {
            let want = ((p.lambda - 1.0) * 2f64.ln()).exp()
                * (((p.lambda - 1.0) * 0.5) * (1.0 + x * x / 16.0).ln()).exp();
            assert!((moved.eval_line(x) - want).norm() < 1e-13);
        }
        let id = pi_action(p, &GroupElement::identity(), &e0).unwrap();
        assert!((id.eval_line(0.7) - e0.eval_line(0.7)).norm() < 1e-15);
    }

    #[test]
    fn circle_and_line_models_agree() {
        let p = SpectralParam::principal(4.0);
        let v = pi_action(p, &GroupElement::new(1.0, 0.5, 0.3, 1.2).unwrap(), &k_fixed_vector(p).unwrap())
            .unwrap();
        let circ = v.to_circle();
        for &x in &[-2.0, -0.3, 0.4, 3.0] {
            assert!((circ.eval_line(x) - v.eval_line(x)).norm() < 1e-12);
        }
    }

    #[test]
    fn functional_at_zero_matches_gamma_formula() {
        for &t in &[0.0, 5.0, 20.0] {
            let p = SpectralParam::principal(t);
            let e0 = k_fixed_vector(p).unwrap();
            let d = model_functional(p, c(0.0, 0.0), &e0).unwrap();
            let l = p.lambda;
            let want = (2.0 * log_gamma((1.0 - l) / 4.0).unwrap() - log_gamma((1.0 - l) / 2.0).unwrap()).exp();
            assert!((d - want).norm() / want.norm() < 1e-10, "{d} vs {want}");
        }
    }

    #[test]
    fn functional_matches_table_integral() {
        let p = SpectralParam::principal(5.0);
        let s = c(0.0, 2.0);
        let e0 = k_fixed_vector(p).unwrap();
        let d = model_functional(p, s, &e0).unwrap();
        let kappa = kernel_exponent(p, s);
        let want = table_integral(kappa, (p.lambda - 1.0) * 0.5).unwrap();
        assert!((d - want).norm() / want.norm() < 1e-10);
        // Same value through generic whole-line quadrature.
        let generic = ModelVector::line(p, match &e0.realization {
            Realization::Line(f) => f.clone(),
            _ => unreachable!(),
        });
        let g = model_functional(p, s, &generic).unwrap();
        assert!((g - want).norm() / want.norm() < 1e-8, "{g} vs {want}");
    }

    #[test]
    fn functional_rejects_non_unitary_characters() {
        let p = SpectralParam::principal(5.0);
        let e0 = k_fixed_vector(p).unwrap();
        assert!(matches!(model_functional(p, c(0.5, 1.0), &e0), Err(Error::Input(_))));
    }

    #[test]
    fn odd_vectors_pair_to_zero() {
        let p = SpectralParam::principal(3.0);
        let v = ModelVector {
            support: Some((0.0, 1.2)),
            ..ModelVector::line(
                p,
                Arc::new(|x: f64| c(x * bump(x.abs() - 1.0) * 10.0, 0.0)),
            )
        };
        let d = model_functional(p, c(0.0, 1.5), &v).unwrap();
        assert!(d.norm() < 1e-14);
    }

    #[test]
    fn equivariance_under_diagonal_elements() {
        let p = SpectralParam::principal(7.0);
        let v = test_vector(p, 2.0).unwrap();
        for &(a, s) in &[(1.7f64, 3.0), (0.6, -5.0), (2.5, 0.0)] {
            let s = c(0.0, s);
            let g = GroupElement::diagonal(a).unwrap();
            let moved = pi_action(p, &g, &v).unwrap();
            let lhs = model_functional(p, s, &moved).unwrap();
            let chi = (s * a.ln()).exp();
            let rhs = chi * model_functional(p, s, &v).unwrap();
            assert!((lhs - rhs).norm() / rhs.norm() < 1e-7, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn lattice_characters_are_trivial_on_the_generator() {
        // chi_s(a) = a^s; with s_n = 2 pi i n q and q = 1/ln a it is 1.
        let a: f64 = 2.618;
        let q = 1.0 / a.ln();
        for n in -5..=5 {
            let s = c(0.0, n as f64 * lattice_step(q));
            assert!(((s * a.ln()).exp() - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn density_b_matches_quadrature() {
        let p = SpectralParam::principal(20.0);
        let q = 0.5;
        let table = density_b(p, q, (-40, 40)).unwrap();
        for n in [-40, -13, -3, 0, 1, 6, 7, 25, 40] {
            let lq = density_b_quadrature_log(p, lattice_step(q), n).unwrap();
            let e = table.get(n).unwrap();
            let lg = log_b(p, c(0.0, n as f64 * lattice_step(q))).unwrap();
            assert!((lg.re - e.log_abs).abs() < 1e-14);
            let rel = ((lq - lg).exp() - 1.0).norm();
            assert!(rel < 1e-6, "n={n}: rel {rel}");
        }
    }

    #[test]
    fn density_b_is_symmetric_and_regimes_are_tagged() {
        let p = SpectralParam::principal(30.0);
        let table = density_b(p, 1.0, (-20, 20)).unwrap();
        for n in 1..=20 {
            let (a, b) = (table.get(n).unwrap(), table.get(-n).unwrap());
            assert!((a.value - b.value).norm() <= 1e-12 * a.value.norm());
        }
        assert_eq!(table.get(0).unwrap().regime, Regime::Bulk);
        assert_eq!(table.get(5).unwrap().regime, Regime::Edge);
        assert_eq!(table.get(20).unwrap().regime, Regime::Tail);
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,re,im,abs2,regime\n-20,"));
    }

    #[test]
    fn density_c_basic_properties() {
        let p = SpectralParam::principal(20.0);
        let g = GroupElement::diagonal(2.0).unwrap();
        let table = density_c(p, &g, (-120, 120)).unwrap();
        let mut total = 0.0;
        for (n, e) in &table.entries {
            if n % 2 != 0 {
                assert!(e.value.norm() < 1e-10);
            }
            total += e.value.norm_sqr();
        }
        // Unitarity: the entries carry the full norm of pi(g) e_0.
        assert!((total - 1.0).abs() < 1e-10, "{total}");
        match table.kind {
            DensityKind::CircleC { edge_constant, .. } => {
                assert!((edge_constant - 3.75 * PI).abs() < 1e-6, "{edge_constant}");
            }
            _ => unreachable!(),
        }
        assert!(matches!(
            density_c(p, &GroupElement::rotation(0.3), (0, 4)),
            Err(Error::DegenerateCircle)
        ));
    }

    #[test]
    fn density_c_small_radius_and_conical_cross_check() {
        let p = SpectralParam::principal(12.0);
        let g = GroupElement::diagonal((1e-4f64).exp()).unwrap();
        let c0 = density_c(p, &g, (0, 0)).unwrap().get(0).unwrap().value;
        assert!((c0 - 1.0).norm() < 1e-6);
        // c_0 is the spherical function P_{-1/2 + i t/2}(cosh r).
        let r = 2f64.ln();
        let g = GroupElement::diagonal((0.5 * r).exp()).unwrap();
        let c0 = density_c(p, &g, (0, 0)).unwrap().get(0).unwrap().value;
        let want = crate::specfun::conical_legendre(6.0, 0, r.cosh()).unwrap();
        assert!((c0.re - want).abs() < 1e-10 && c0.im.abs() < 1e-10, "{c0} vs {want}");
    }

    #[test]
    fn circle_phase_regimes() {
        let p = SpectralParam::principal(40.0);
        let g = GroupElement::diagonal(2.0).unwrap();
        let cedge = circle_edge_constant(&g);
        let edge = cedge * 40.0 / (2.0 * PI);
        let bulk = circle_phase_report(p, &g, (0.5 * edge) as i64).unwrap();
        assert_eq!(bulk.regime, crate::quad::PhaseRegime::Nondegenerate);
        let tail = circle_phase_report(p, &g, (1.15 * edge) as i64).unwrap();
        assert_eq!(tail.regime, crate::quad::PhaseRegime::NoCriticalPoint);
    }

    #[test]
    fn bump_constants() {
        let mass = gauss_kronrod(&|y: f64| c(bump(y), 0.0), 0.0, 0.1, &AdaptiveOptions::default())
            .unwrap()
            .value
            .re;
        assert!((mass - 1.0).abs() < 1e-13);
        let l2 = gauss_kronrod(&|y: f64| c(bump(y).powi(2), 0.0), 0.0, 0.1, &AdaptiveOptions::default())
            .unwrap()
            .value
            .re;
        assert!((l2 - bump_l2()).abs() < 1e-11 * l2);
        assert_eq!(bump(-0.01), 0.0);
        assert_eq!(bump(0.11), 0.0);
    }

    #[test]
    fn test_vector_norm_scales_linearly() {
        let p = SpectralParam::principal(3.0);
        for &t in &[1.0, 7.0, 100.0] {
            let v = test_vector(p, t).unwrap();
            let n2 = v.norm_sqr().unwrap();
            assert!((n2 - test_vector_c1() * t).abs() < 1e-10 * n2, "{t}: {n2}");
            assert_eq!(v.eval_line(0.99), c(0.0, 0.0));
        }
        assert!(test_vector(p, 0.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn composition_law(
            e1 in proptest::array::uniform4(-2.0..2.0f64),
            e2 in proptest::array::uniform4(-2.0..2.0f64),
            t in 0.0..20.0f64,
        ) {
            prop_assume!((e1[0] * e1[3] - e1[1] * e1[2]).abs() > 0.2);
            prop_assume!((e2[0] * e2[3] - e2[1] * e2[2]).abs() > 0.2);
            let g1 = GroupElement::new(e1[0], e1[1], e1[2], e1[3]).unwrap();
            let g2 = GroupElement::new(e2[0], e2[1], e2[2], e2[3]).unwrap();
            let p = SpectralParam::principal(t);
            let v = pi_action(p, &GroupElement::new(1.0, 0.3, -0.2, 0.9).unwrap(), &k_fixed_vector(p).unwrap()).unwrap();
            let lhs = pi_action(p, &g1, &pi_action(p, &g2, &v).unwrap()).unwrap();
            let rhs = pi_action(p, &(g1 * g2), &v).unwrap();
            for j in 0..64 {
                let x = -5.0 + 10.0 * (j as f64 + 0.37) / 64.0;
                let (a, b) = (lhs.eval_line(x), rhs.eval_line(x));
                prop_assert!((a - b).norm() <= 1e-9 * (1.0 + a.norm()), "x={} {} {}", x, a, b);
            }
        }
    }
}
