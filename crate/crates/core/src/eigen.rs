//! Laplace eigenfunctions on the round sphere, the flat torus and the
//! modular surface. Maass cusp forms for `PSL(2, Z)` are located by Hejhal
//! collocation on truncated Fourier-Bessel expansions.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{gauss_kronrod, gauss_legendre, AdaptiveOptions};
use crate::specfun::bessel_k_imag;

/// Height below which the raw Fourier-Bessel expansion is not trusted.
pub const ACCURACY_FLOOR: f64 = 0.05;
const SQRT3_2: f64 = 0.866_025_403_784_438_6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surface {
    Sphere,
    Torus,
    Modular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn cs(self, arg: f64) -> f64 {
        match self {
            Parity::Even => arg.cos(),
            Parity::Odd => arg.sin(),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

/// A point in the coordinate chart of a surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfacePoint {
    /// Polar angle `theta` in `[0, pi]` and azimuth `phi`.
    Sphere { theta: f64, phi: f64 },
    /// Coordinates on `R^2 / Z^2`.
    Torus { x1: f64, x2: f64 },
    Upper(Complex64),
}

#[derive(Debug, Clone)]
pub enum Provider {
    SphereHarmonic { n: u32, m: i32 },
    TorusMode { k: (i64, i64) },
    Maass(Arc<MaassForm>),
}

/// A real Laplace eigenfunction, unit `L^2` on its surface.
#[derive(Debug, Clone)]
pub struct Eigenfunction {
    pub surface: Surface,
    pub mu: f64,
    /// `mu = 1/4 + R^2` on the modular surface; `NaN` elsewhere.
    pub r: f64,
    pub provider: Provider,
}

/// Normalized associated Legendre values `Pbar_l^m(x)` for `l = m..=n`,
/// scaled so that `2 pi int_{-1}^{1} Pbar^2 dx = 1`.
pub fn normalized_legendre(n: u32, m: u32, x: f64) -> Result<Vec<f64>> {
    if m > n {
        return Err(Error::Domain(format!("|m| = {m} exceeds n = {n}")));
    }
    if !(x.abs() <= 1.0) {
        return Err(Error::Domain(format!("cos(theta) = {x} outside [-1, 1]")));
    }
    let sin = (1.0 - x * x).max(0.0).sqrt();
    let mut ymm = 1.0 / (4.0 * PI).sqrt();
    for k in 1..=m {
        let k = k as f64;
        ymm *= ((2.0 * k + 1.0) / (2.0 * k)).sqrt() * sin;
    }
    let mut out = vec![ymm];
    if n == m {
        return Ok(out);
    }
    let mf = m as f64;
    out.push(x * (2.0 * mf + 3.0).sqrt() * ymm);
    let a = |l: f64| ((4.0 * l * l - 1.0) / (l * l - mf * mf)).sqrt();
    for l in (m + 2)..=n {
        let lf = l as f64;
        let k = out.len();
        let next = a(lf) * (x * out[k - 1] - out[k - 2] / a(lf - 1.0));
        out.push(next);
    }
    Ok(out)
}

/// Real spherical harmonic `Pbar_n^{|m|}(cos theta) T_m(phi)` with
/// `T_0 = 1`, `T_m = sqrt2 cos(m phi)`, `T_{-m} = sqrt2 sin(m phi)`.
pub fn sphere_harmonic(n: u32, m: i32) -> Result<Eigenfunction> {
    if m.unsigned_abs() > n {
        return Err(Error::Domain(format!("|m| = {} exceeds n = {n}", m.abs())));
    }
    Ok(Eigenfunction {
        surface: Surface::Sphere,
        mu: n as f64 * (n as f64 + 1.0),
        r: f64::NAN,
        provider: Provider::SphereHarmonic { n, m },
    })
}

/// `sqrt2 cos(2 pi <k, x>)` on the unit square torus.
pub fn torus_mode(k: (i64, i64)) -> Eigenfunction {
    let (a, b) = (k.0 as f64, k.1 as f64);
    Eigenfunction {
        surface: Surface::Torus,
        mu: 4.0 * PI * PI * (a * a + b * b),
        r: f64::NAN,
        provider: Provider::TorusMode { k },
    }
}

impl Eigenfunction {
    pub fn maass(form: Arc<MaassForm>) -> Self {
        Eigenfunction {
            surface: Surface::Modular,
            mu: 0.25 + form.r * form.r,
            r: form.r,
            provider: Provider::Maass(form),
        }
    }

    pub fn label(&self) -> String {
        match &self.provider {
            Provider::SphereHarmonic { n, m } => format!("sphere_Y{n}_{m}"),
            Provider::TorusMode { k } => format!("torus_k{}_{}", k.0, k.1),
            Provider::Maass(f) => format!("maass_{}_R{:.8}", f.parity.tag(), f.r),
        }
    }

    pub fn evaluate(&self, p: SurfacePoint) -> Result<f64> {
        match (&self.provider, p) {
            (Provider::SphereHarmonic { n, m }, SurfacePoint::Sphere { theta, phi }) => {
                let pbar = *normalized_legendre(*n, m.unsigned_abs(), theta.cos())?.last().unwrap();
                let mf = m.unsigned_abs() as f64;
                let t = match m.signum() {
                    0 => 1.0,
                    1 => 2f64.sqrt() * (mf * phi).cos(),
                    _ => 2f64.sqrt() * (mf * phi).sin(),
                };
                Ok(pbar * t)
            }
            (Provider::TorusMode { k }, SurfacePoint::Torus { x1, x2 }) => {
                Ok(2f64.sqrt() * (2.0 * PI * (k.0 as f64 * x1 + k.1 as f64 * x2)).cos())
            }
            (Provider::Maass(f), SurfacePoint::Upper(z)) => f.evaluate(z),
            _ => Err(Error::Input(format!(
                "point {p:?} is not in the chart of the {:?} surface",
                self.surface
            ))),
        }
    }

    /// `|(-Delta) phi - mu phi|` at `p` by a five-point stencil with step `h`
    /// in the chart coordinates.
    pub fn laplace_residual(&self, p: SurfacePoint, h: f64) -> Result<f64> {
        let f0 = self.evaluate(p)?;
        let lap = match p {
            SurfacePoint::Sphere { theta, phi } => {
                let at = |t: f64, f: f64| self.evaluate(SurfacePoint::Sphere { theta: t, phi: f });
                let (tp, tm) = (at(theta + h, phi)?, at(theta - h, phi)?);
                let (pp, pm) = (at(theta, phi + h)?, at(theta, phi - h)?);
                let s = theta.sin();
                (tp - 2.0 * f0 + tm) / (h * h)
                    + theta.cos() / s * (tp - tm) / (2.0 * h)
                    + (pp - 2.0 * f0 + pm) / (h * h * s * s)
            }
            SurfacePoint::Torus { x1, x2 } => {
                let at = |a: f64, b: f64| self.evaluate(SurfacePoint::Torus { x1: a, x2: b });
                (at(x1 + h, x2)? + at(x1 - h, x2)? + at(x1, x2 + h)? + at(x1, x2 - h)? - 4.0 * f0) / (h * h)
            }
            SurfacePoint::Upper(z) => {
                let at = |dx: f64, dy: f64| self.evaluate(SurfacePoint::Upper(z + Complex64::new(dx, dy)));
                z.im * z.im * (at(h, 0.0)? + at(-h, 0.0)? + at(0.0, h)? + at(0.0, -h)? - 4.0 * f0) / (h * h)
            }
        };
        Ok((-lap - self.mu * f0).abs())
    }
}

/// Reduce `z` into the standard fundamental domain of `PSL(2, Z)`.
pub fn pullback(z: Complex64) -> Result<Complex64> {
    if !(z.im > 0.0) || !z.re.is_finite() {
        return Err(Error::Domain(format!("{z} is not in the upper half-plane")));
    }
    let mut w = z;
    for _ in 0..10_000 {
        w.re -= w.re.round();
        let n2 = w.norm_sqr();
        if n2 >= 1.0 - 1e-15 {
            return Ok(w);
        }
        w = -w.conj() / n2;
    }
    Err(Error::Domain(format!("pullback of {z} did not terminate")))
}

/// Chebyshev interpolant on `[lo, hi]`.
#[derive(Debug, Clone)]
struct Chebyshev {
    lo: f64,
    hi: f64,
    coeffs: Vec<f64>,
}

impl Chebyshev {
    fn fit(lo: f64, hi: f64, values: &[f64]) -> Self {
        // values at nodes cos(pi (j + 1/2) / N)
        let n = values.len();
        let coeffs = (0..n)
            .map(|k| {
                let s: f64 = values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos())
                    .sum();
                s * if k == 0 { 1.0 } else { 2.0 } / n as f64
            })
            .collect();
        Chebyshev { lo, hi, coeffs }
    }

    fn nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|j| {
                let t = (PI * (j as f64 + 0.5) / n as f64).cos();
                0.5 * (lo + hi) + 0.5 * (hi - lo) * t
            })
            .collect()
    }

    fn eval(&self, y: f64) -> f64 {
        let t = (2.0 * y - self.lo - self.hi) / (self.hi - self.lo);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        t * b1 - b2 + self.coeffs[0]
    }
}

const TABLE_LO: f64 = 0.85;
const TABLE_HI: f64 = 5.0;
const TABLE_PIECE: f64 = 0.25;
const TABLE_DEGREE: usize = 32;
// Beyond this argument `K e^{u}` loses its scaled range; terms are evaluated directly.
const TABLE_MAX_ARG: f64 = 650.0;

/// `sqrt(y) Ktilde_{iR}(2 pi n y)` with `Ktilde = e^{pi R/2} K`.
fn radial(r: f64, n: usize, y: f64) -> Result<f64> {
    Ok(y.sqrt() * bessel_k_imag(r, 2.0 * PI * n as f64 * y)?)
}

/// A Maass cusp form on `PSL(2, Z)`:
/// `phi(z) = scale * sum_n a_n sqrt(y) Ktilde_{iR}(2 pi n y) cs(2 pi n x)`
/// with `a_1 = 1` and `Ktilde = e^{pi R/2} K`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaassForm {
    pub r: f64,
    pub parity: Parity,
    pub m0: usize,
    pub y0: f64,
    pub coefficients: Vec<f64>,
    /// Factor making the form unit `L^2` on the fundamental domain.
    pub scale: f64,
    /// Residual of the dropped collocation equation.
    pub residual: f64,
    pub condition: f64,
    /// `R` from the rerun with `M0 + 8` terms.
    pub r_check: f64,
    #[serde(skip)]
    table: OnceLock<Vec<Vec<Chebyshev>>>,
}

impl MaassForm {
    pub fn mu(&self) -> f64 {
        0.25 + self.r * self.r
    }

    /// Per-piece interpolants of `sqrt(y) Ktilde(2 pi n y) e^{2 pi n y}`.
    fn table(&self) -> Result<&Vec<Vec<Chebyshev>>> {
        if let Some(t) = self.table.get() {
            return Ok(t);
        }
        let pieces = ((TABLE_HI - TABLE_LO) / TABLE_PIECE).round() as usize;
        let built: Result<Vec<Vec<Chebyshev>>> = (1..=self.coefficients.len())
            .into_par_iter()
            .map(|n| {
                (0..pieces)
                    .map(|p| {
                        let lo = TABLE_LO + p as f64 * TABLE_PIECE;
                        let hi = lo + TABLE_PIECE;
                        if 2.0 * PI * n as f64 * hi > TABLE_MAX_ARG {
                            return Ok(Chebyshev::fit(lo, hi, &[0.0; TABLE_DEGREE]));
                        }
                        let vals: Result<Vec<f64>> = Chebyshev::nodes(lo, hi, TABLE_DEGREE)
                            .into_iter()
                            .map(|y| Ok(radial(self.r, n, y)? * (2.0 * PI * n as f64 * y).exp()))
                            .collect();
                        Ok(Chebyshev::fit(lo, hi, &vals?))
                    })
                    .collect()
            })
            .collect();
        let _ = self.table.set(built?);
        Ok(self.table.get().unwrap())
    }

    fn radial_cached(&self, n: usize, y: f64) -> Result<f64> {
        let piece = ((y - TABLE_LO) / TABLE_PIECE) as usize;
        let piece_hi = TABLE_LO + (piece + 1) as f64 * TABLE_PIECE;
        if (TABLE_LO..TABLE_HI).contains(&y) && 2.0 * PI * n as f64 * piece_hi <= TABLE_MAX_ARG {
            let cheb = &self.table()?[n - 1][piece];
            Ok(cheb.eval(y) * (-2.0 * PI * n as f64 * y).exp())
        } else {
            radial(self.r, n, y)
        }
    }

    /// The truncated expansion at `z` without reduction (unit-normalized).
    pub fn evaluate_raw(&self, z: Complex64) -> Result<f64> {
        if z.im < ACCURACY_FLOOR {
            return Err(Error::AccuracyLoss {
                y: z.im,
                floor: ACCURACY_FLOOR,
            });
        }
        let mut sum = 0.0;
        for (k, a) in self.coefficients.iter().enumerate() {
            let n = k + 1;
            sum += a * self.radial_cached(n, z.im)? * self.parity.cs(2.0 * PI * n as f64 * z.re);
        }
        Ok(self.scale * sum)
    }

    /// Value at any point of the upper half-plane, via the fundamental domain.
    pub fn evaluate(&self, z: Complex64) -> Result<f64> {
        self.evaluate_raw(pullback(z)?)
    }

    /// `int_F phi^2 dx dy / y^2` of the unscaled expansion.
    fn unscaled_norm_sqr(&self) -> Result<f64> {
        // Part above y = 1 by Parseval.
        let mut upper = 0.0;
        for (k, a) in self.coefficients.iter().enumerate() {
            let n = (k + 1) as f64;
            let f = |y: f64| Complex64::new((bessel_k_imag(self.r, 2.0 * PI * n * y).unwrap_or(0.0)).powi(2) / y, 0.0);
            let top = 1.0 + 40.0 / (2.0 * PI * n);
            let opts = AdaptiveOptions {
                rel_tol: 1e-10,
                ..Default::default()
            };
            upper += 0.5 * a * a * gauss_kronrod(&f, 1.0, top, &opts)?.value.re;
        }
        // Part between the arc |z| = 1 and y = 1, symmetric in x.
        let (nodes, weights) = gauss_legendre(48);
        let mut lower = 0.0;
        for (xi, wi) in nodes.iter().zip(&weights) {
            let x = 0.25 * (1.0 + xi);
            let ylo = (1.0 - x * x).sqrt();
            let mut inner = 0.0;
            for (yj, wj) in nodes.iter().zip(&weights) {
                let y = ylo + 0.5 * (1.0 - ylo) * (1.0 + yj);
                let v = self.evaluate_raw(Complex64::new(x, y))? / self.scale;
                inner += wj * v * v / (y * y);
            }
            lower += wi * 0.25 * inner * 0.5 * (1.0 - ylo);
        }
        Ok(upper + 2.0 * lower)
    }

    pub fn from_cache_record(mut rec: MaassForm) -> Result<Self> {
        rec.table = OnceLock::new();
        if rec.coefficients.is_empty() || !(rec.r > 0.0) || !(rec.scale > 0.0) {
            return Err(Error::Cache(format!("invalid Maass record at R = {}", rec.r)));
        }
        Ok(rec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HejhalOptions {
    pub m0: usize,
    pub y0: f64,
    /// Second height, as a fraction of `y0`, for the secant indicator.
    pub y_ratio: f64,
    pub scan_step: f64,
    pub extra_terms: usize,
    pub stability_tol: f64,
    pub max_condition: f64,
}

impl Default for HejhalOptions {
    fn default() -> Self {
        Self {
            m0: 30,
            y0: 0.4,
            y_ratio: 0.9,
            scan_step: 0.02,
            extra_terms: 8,
            stability_tol: 1e-6,
            max_condition: 1e12,
        }
    }
}

/// Solution of the collocation system at fixed `R` with `a_1 = 1`.
#[derive(Debug, Clone)]
pub struct CollocationSolution {
    pub coefficients: Vec<f64>,
    pub residual: f64,
    pub matrix: DMatrix<f64>,
}

/// Collocation matrix for the unknowns `b_n = a_n sqrt(y0) Ktilde_n(y0)`:
/// row `l` states `b_l = (2/Q) sum_m phi(z*_m) cs(2 pi l x_m)` where
/// `z*_m` is the reduction of `x_m + i y0`.
fn collocation(r: f64, parity: Parity, m0: usize, y0: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let q = m0 + 10;
    let xs: Vec<f64> = (1..=q).map(|m| (m as f64 - 0.5) / (2.0 * q as f64)).collect();
    let stars: Vec<Complex64> = xs
        .iter()
        .map(|&x| pullback(Complex64::new(x, y0)))
        .collect::<Result<_>>()?;
    let kdiag: Vec<f64> = (1..=m0).map(|n| radial(r, n, y0)).collect::<Result<_>>()?;
    // w[m][n] = sqrt(y*) Ktilde_n(y*) cs(2 pi n x*) / (sqrt(y0) Ktilde_n(y0))
    let mut w = vec![vec![0.0; m0]; q];
    for (m, zs) in stars.iter().enumerate() {
        for n in 1..=m0 {
            w[m][n - 1] = radial(r, n, zs.im)? * parity.cs(2.0 * PI * n as f64 * zs.re) / kdiag[n - 1];
        }
    }
    let mut v = DMatrix::<f64>::zeros(m0, m0);
    for l in 1..=m0 {
        for n in 1..=m0 {
            let s: f64 = (0..q).map(|m| w[m][n - 1] * parity.cs(2.0 * PI * l as f64 * xs[m])).sum();
            v[(l - 1, n - 1)] = 2.0 * s / q as f64 - if l == n { 1.0 } else { 0.0 };
        }
    }
    Ok((v, kdiag))
}

/// Solves the collocation system at `R` with row 1 dropped and `a_1 = 1`.
pub fn collocation_solve(r: f64, parity: Parity, m0: usize, y0: f64) -> Result<CollocationSolution> {
    if m0 < 4 {
        return Err(Error::Input(format!("truncation M0 = {m0} is too small")));
    }
    let (v, kdiag) = collocation(r, parity, m0, y0)?;
    let reduced = v.view((1, 1), (m0 - 1, m0 - 1)).into_owned();
    let rhs = -v.view((1, 0), (m0 - 1, 1)).into_owned();
    let x = reduced
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::Conditioning { condition: f64::INFINITY })?;
    let mut b = DVector::<f64>::zeros(m0);
    b[0] = 1.0;
    for i in 1..m0 {
        b[i] = x[(i - 1, 0)];
    }
    let residual = (v.row(0) * &b)[(0, 0)].abs() / b.amax();
    let a1 = b[0] / kdiag[0];
    let coefficients = (0..m0).map(|i| b[i] / kdiag[i] / a1).collect();
    Ok(CollocationSolution {
        coefficients,
        residual,
        matrix: reduced,
    })
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let (mx, mn) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    mx / mn
}

/// Secant indicator: `a_2` at two heights (zero at eigenvalues) and the
/// same difference for `a_3` (used to reject poles).
fn indicator(r: f64, parity: Parity, m0: usize, opts: &HejhalOptions) -> Result<(f64, f64)> {
    let s1 = collocation_solve(r, parity, m0, opts.y0)?;
    let s2 = collocation_solve(r, parity, m0, opts.y0 * opts.y_ratio)?;
    Ok((
        s1.coefficients[1] - s2.coefficients[1],
        s1.coefficients[2] - s2.coefficients[2],
    ))
}

/// Brent's method on a bracketing interval.
fn brent<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa * fb > 0.0 {
        return Err(Error::NoEigenvalue { lo: a, hi: b });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b)?;
    }
    Ok(b)
}

/// Locates the first cusp form of the given parity with `R` in the bracket.
pub fn hejhal_solve(bracket: (f64, f64), parity: Parity, m0: usize, y0: f64) -> Result<MaassForm> {
    hejhal_solve_with(
        bracket,
        parity,
        &HejhalOptions {
            m0,
            y0,
            ..Default::default()
        },
    )
}

pub fn hejhal_solve_with(bracket: (f64, f64), parity: Parity, opts: &HejhalOptions) -> Result<MaassForm> {
    hejhal_scan(bracket, parity, opts)?
        .into_iter()
        .next()
        .ok_or(Error::NoEigenvalue {
            lo: bracket.0,
            hi: bracket.1,
        })
}

/// All cusp forms of the given parity found in the bracket, in order.
pub fn hejhal_scan(bracket: (f64, f64), parity: Parity, opts: &HejhalOptions) -> Result<Vec<MaassForm>> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo && hi <= 25.0) {
        return Err(Error::Input(format!("invalid R bracket [{lo}, {hi}]")));
    }
    if !(opts.y0 > 0.2 && opts.y0 < SQRT3_2) {
        return Err(Error::Input(format!("y0 = {} must lie in (0.2, sqrt3/2)", opts.y0)));
    }
    let steps = ((hi - lo) / opts.scan_step).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| lo + (hi - lo) * k as f64 / steps as f64).collect();
    let values: Vec<(f64, f64)> = grid
        .iter()
        .map(|&r| indicator(r, parity, opts.m0, opts))
        .collect::<Result<_>>()?;
    let mut forms = Vec::new();
    for k in 0..steps {
        let (f0, f1) = (values[k].0, values[k + 1].0);
        if f0 * f1 > 0.0 {
            continue;
        }
        let root = brent(
            |r| Ok(indicator(r, parity, opts.m0, opts)?.0),
            grid[k],
            grid[k + 1],
            1e-13,
        )?;
        let (f2, f3) = indicator(root, parity, opts.m0, opts)?;
        // A pole of the indicator also changes sign; genuine roots make both
        // coefficient differences small.
        let scale = 1.0 + values[k].0.abs().min(values[k + 1].0.abs());
        if f2.abs() > 1e-6 * scale || f3.abs() > 1e-5 * (1.0 + values[k].1.abs()) {
            continue;
        }
        forms.push(finish_form(root, parity, opts)?);
    }
    Ok(forms)
}

fn finish_form(r: f64, parity: Parity, opts: &HejhalOptions) -> Result<MaassForm> {
    let sol = collocation_solve(r, parity, opts.m0, opts.y0)?;
    let condition = condition_number(&sol.matrix);
    if condition > opts.max_condition {
        return Err(Error::Conditioning { condition });
    }
    // Confirmation with a longer expansion.
    let m1 = opts.m0 + opts.extra_terms;
    let width = 1e-3;
    let r_check = brent(
        |x| Ok(indicator(x, parity, m1, opts)?.0),
        r - width,
        r + width,
        1e-13,
    )
    .map_err(|_| Error::Unstable { r, r_check: f64::NAN })?;
    if (r_check - r).abs() > opts.stability_tol {
        return Err(Error::Unstable { r, r_check });
    }
    let mut form = MaassForm {
        r,
        parity,
        m0: opts.m0,
        y0: opts.y0,
        coefficients: sol.coefficients,
        scale: 1.0,
        residual: sol.residual,
        condition,
        r_check,
        table: OnceLock::new(),
    };
    form.scale = 1.0 / form.unscaled_norm_sqr()?.sqrt();
    Ok(form)
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    form: MaassForm,
}

pub const CACHE_VERSION: u32 = 1;

pub fn cache_file_name(parity: Parity, r: f64) -> String {
    format!("maass_{}_R{:.8}.json", parity.tag(), r)
}

/// Writes one human-readable JSON record per form; returns its path.
pub fn save_form(dir: &Path, form: &MaassForm) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(cache_file_name(form.parity, form.r));
    let text = serde_json::to_string_pretty(&CacheFile {
        version: CACHE_VERSION,
        form: form.clone(),
    })?;
    crate::io::write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

pub fn load_form(path: &Path) -> Result<MaassForm> {
    let text = std::fs::read_to_string(path)?;
    let file: CacheFile =
        serde_json::from_str(&text).map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?;
    if file.version != CACHE_VERSION {
        return Err(Error::Cache(format!(
            "{}: cache version {} (expected {CACHE_VERSION})",
            path.display(),
            file.version
        )));
    }
    MaassForm::from_cache_record(file.form)
}

/// All cached forms in `dir`, sorted by `R`.
pub fn load_cache(dir: &Path) -> Result<Vec<MaassForm>> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let is_form = path
            .file_name()
            .and_then(|s| s.to_str())
            .is_some_and(|s| s.starts_with("maass_") && s.ends_with(".json"));
        if is_form {
            out.push(load_form(&path)?);
        }
    }
    out.sort_by(|a, b| a.r.total_cmp(&b.r));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn legendre_normalization_by_quadrature() {
        let (x, w) = gauss_legendre(120);
        for &(n, m) in &[(0u32, 0u32), (1, 1), (5, 2), (30, 30), (40, 7)] {
            let s: f64 = x
                .iter()
                .zip(&w)
                .map(|(xi, wi)| wi * normalized_legendre(n, m, *xi).unwrap().last().unwrap().powi(2))
                .sum();
            assert!((2.0 * PI * s - 1.0).abs() < 1e-12, "{n},{m}: {s}");
        }
        assert!(normalized_legendre(2, 3, 0.1).is_err());
    }

    #[test]
    fn sphere_examples() {
        let y00 = sphere_harmonic(0, 0).unwrap();
        for &(t, p) in &[(0.1, 0.2), (1.5, 3.0), (3.0, -1.0)] {
            let v = y00.evaluate(SurfacePoint::Sphere { theta: t, phi: p }).unwrap();
            assert!((v - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
        }
        assert!(matches!(sphere_harmonic(2, 3), Err(Error::Domain(_))));
        let y11 = sphere_harmonic(1, 1).unwrap();
        let v = y11.evaluate(SurfacePoint::Sphere { theta: 0.7, phi: 0.3 }).unwrap();
        let want = (3.0 / (4.0 * PI)).sqrt() * 0.7f64.sin() * 0.3f64.cos();
        assert!((v - want).abs() < 1e-14);
    }

    #[test]
    fn sphere_and_torus_are_unit_and_satisfy_laplace() {
        let (x, w) = gauss_legendre(64);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(n, m) in &[(3u32, -2i32), (6, 6), (10, 0)] {
            let y = sphere_harmonic(n, m).unwrap();
            let nphi = 64;
            let mut s = 0.0;
            for (xi, wi) in x.iter().zip(&w) {
                for j in 0..nphi {
                    let phi = 2.0 * PI * j as f64 / nphi as f64;
                    let v = y.evaluate(SurfacePoint::Sphere { theta: xi.acos(), phi }).unwrap();
                    s += wi * v * v * 2.0 * PI / nphi as f64;
                }
            }
            assert!((s - 1.0).abs() < 1e-3, "{n},{m}: {s}");
            let vmax = (0..200)
                .map(|j| {
                    let th = PI * (j as f64 + 0.5) / 200.0;
                    y.evaluate(SurfacePoint::Sphere { theta: th, phi: 0.1 }).unwrap().abs()
                })
                .fold(0.0, f64::max);
            for _ in 0..20 {
                let p = SurfacePoint::Sphere {
                    theta: rng.gen_range(0.2..2.9),
                    phi: rng.gen_range(0.0..6.2),
                };
                let res = y.laplace_residual(p, 1e-3).unwrap();
                assert!(res < 1e-4 * y.mu.max(1.0) * vmax, "{res}");
            }
        }
        let t = torus_mode((3, 4));
        let mut s = 0.0;
        let k = 64;
        for i in 0..k {
            for j in 0..k {
                let v = t
                    .evaluate(SurfacePoint::Torus { x1: i as f64 / k as f64, x2: j as f64 / k as f64 })
                    .unwrap();
                s += v * v / (k * k) as f64;
            }
        }
        assert!((s - 1.0).abs() < 1e-12);
        for _ in 0..20 {
            let p = SurfacePoint::Torus { x1: rng.gen(), x2: rng.gen() };
            assert!(t.laplace_residual(p, 1e-3).unwrap() < 1e-4 * t.mu * 2f64.sqrt());
        }
        let z = torus_mode((1, 0)).evaluate(SurfacePoint::Torus { x1: 0.25, x2: 0.77 }).unwrap();
        assert!(z.abs() < 1e-15);
        assert!(t.evaluate(SurfacePoint::Upper(Complex64::new(0.0, 1.0))).is_err());
    }

    #[test]
    fn pullback_lands_in_fundamental_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let z = Complex64::new(rng.gen_range(-5.0..5.0), rng.gen_range(0.01..2.0));
            let w = pullback(z).unwrap();
            assert!(w.re.abs() <= 0.5 + 1e-12 && w.norm() >= 1.0 - 1e-12, "{z} -> {w}");
            // Invariant: the hyperbolic distance-like quantity y stays positive.
            assert!(w.im >= SQRT3_2 - 1e-12);
        }
        assert!(pullback(Complex64::new(0.0, -1.0)).is_err());
    }

    #[test]
    fn chebyshev_reproduces_smooth_functions() {
        let nodes = Chebyshev::nodes(1.0, 2.0, 32);
        let vals: Vec<f64> = nodes.iter().map(|y| (3.0 * y).sin()).collect();
        let c = Chebyshev::fit(1.0, 2.0, &vals);
        for k in 0..50 {
            let y = 1.0 + k as f64 / 49.0;
            assert!((c.eval(y) - (3.0 * y).sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn brent_finds_simple_roots() {
        let r = brent(|x| Ok(x.cos() - x), 0.0, 1.0, 1e-14).unwrap();
        assert!((r - 0.739_085_133_215_160_6).abs() < 1e-13);
        assert!(brent(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12).is_err());
    }

    fn fake_form() -> MaassForm {
        MaassForm {
            r: 9.53369526135,
            parity: Parity::Odd,
            m0: 6,
            y0: 0.78,
            coefficients: vec![1.0, -1.068, -0.456, 0.141, -0.25, 0.487],
            scale: 1.0,
            residual: 0.0,
            condition: 1.0,
            r_check: 9.53369526135,
            table: OnceLock::new(),
        }
    }

    #[test]
    fn cached_radial_table_matches_direct() {
        let f = fake_form();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let y = rng.gen_range(0.86..4.9);
            for n in [1usize, 3, 6] {
                let direct = radial(f.r, n, y).unwrap();
                let cached = f.radial_cached(n, y).unwrap();
                let scale = radial(f.r, n, y).unwrap().abs().max(radial(f.r, n, TABLE_LO).unwrap().abs() * (-2.0 * PI * n as f64 * (y - TABLE_LO)).exp());
                assert!((direct - cached).abs() <= 1e-11 * scale, "n={n} y={y}: {direct} {cached}");
            }
        }
    }

    #[test]
    fn accuracy_floor_and_periodicity() {
        let f = fake_form();
        assert!(matches!(
            f.evaluate_raw(Complex64::new(0.1, 0.01)),
            Err(Error::AccuracyLoss { .. })
        ));
        let z = Complex64::new(0.31, 1.3);
        let a = f.evaluate_raw(z).unwrap();
        let b = f.evaluate_raw(z + 1.0).unwrap();
        assert!((a - b).abs() < 1e-10);
        // Reduction makes low points evaluable.
        assert!(f.evaluate(Complex64::new(0.1, 0.01)).is_ok());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = fake_form();
        f.scale = 2.5;
        let path = save_form(dir.path(), &f).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"version\": 1"));
        let g = load_form(&path).unwrap();
        assert_eq!(g.coefficients, f.coefficients);
        assert_eq!(g.parity, Parity::Odd);
        let all = load_cache(dir.path()).unwrap();
        assert_eq!(all.len(), 1);
        std::fs::write(&path, text.replace("\"version\": 1", "\"version\": 99")).unwrap();
        assert!(matches!(load_form(&path), Err(Error::Cache(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn pullback_is_idempotent(x in -3.0..3.0f64, y in 0.05..3.0f64) {
            let w = pullback(Complex64::new(x, y)).unwrap();
            let w2 = pullback(w).unwrap();
            prop_assert!((w - w2).norm() < 1e-12 || (w.re.abs() - 0.5).abs() < 1e-9);
        }
    }
}
