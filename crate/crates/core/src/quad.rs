//! Quadrature engines.
//!
//! * [`integrate_adaptive`]: globally adaptive Gauss-Kronrod (21 points) on
//!   finite or infinite intervals, with an optional algebraic singularity
//!   removed by a power substitution.
//! * [`integrate_periodic`]: trapezoid rule with node doubling, spectrally
//!   accurate for smooth periodic integrands.
//! * [`analyze_phase`]: locates and classifies critical points of an
//!   oscillatory phase. It is only used to predict regimes; values always come
//!   from the integrators.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: Complex64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_evaluations: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-300,
            max_evaluations: 4_000_000,
        }
    }
}

/// An integrable algebraic singularity `|x - point|^exponent`, `exponent > -1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singularity {
    pub point: f64,
    pub exponent: f64,
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    /// Error in excess of the panel's roundoff floor; drives refinement.
    excess: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.excess == other.excess
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.excess.total_cmp(&other.excess)
    }
}

/// One 21-point Kronrod panel with the QUADPACK error heuristic.
/// Returns the value, the error estimate and its roundoff floor.
pub fn gk21<F: Fn(f64) -> Complex64 + ?Sized>(f: &F, a: f64, b: f64) -> (Complex64, f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kron = fc * WGK[10];
    let mut gauss = Complex64::new(0.0, 0.0);
    let mut abs_sum = fc.norm() * WGK[10];
    let mut fv1 = [Complex64::new(0.0, 0.0); 10];
    let mut fv2 = [Complex64::new(0.0, 0.0); 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kron += (f1 + f2) * WGK[j];
        abs_sum += (f1.norm() + f2.norm()) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = kron * 0.5;
    let mut asc = (fc - mean).norm() * WGK[10];
    for j in 0..10 {
        asc += ((fv1[j] - mean).norm() + (fv2[j] - mean).norm()) * WGK[j];
    }
    let hh = half.abs();
    let resasc = asc * hh;
    let resabs = abs_sum * hh;
    let mut err = ((kron - gauss) * half).norm();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * resabs;
    err = err.max(floor);
    (kron * half, err, floor)
}

/// Globally adaptive Gauss-Kronrod on a finite interval.
pub fn gauss_kronrod<F: Fn(f64) -> Complex64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    opts: &AdaptiveOptions,
) -> Result<QuadratureResult> {
    if a == b {
        return Ok(QuadratureResult {
            value: Complex64::new(0.0, 0.0),
            error_estimate: 0.0,
            evaluations: 0,
        });
    }
    let mut heap = BinaryHeap::new();
    let (v, e, fl) = gk21(f, a, b);
    let mut evaluations = 21;
    let mut total = v;
    let mut total_err = e;
    let mut total_excess = e - fl;
    // Panels too narrow to split are retired with their error.
    let mut retired_err = 0.0;
    heap.push(Panel {
        a,
        b,
        value: v,
        error: e,
        excess: e - fl,
    });
    let resum = |heap: &BinaryHeap<Panel>, retired: f64| {
        let v: Complex64 = heap.iter().map(|p| p.value).sum();
        let e = heap.iter().map(|p| p.error).sum::<f64>() + retired;
        let x = heap.iter().map(|p| p.excess).sum::<f64>();
        (v, e, x)
    };
    loop {
        let target = opts.abs_tol.max(opts.rel_tol * total.norm());
        // Stop when the estimate is met, or when only roundoff remains.
        if total_err <= target || total_excess <= 0.01 * target {
            (total, total_err, total_excess) = resum(&heap, retired_err);
            let target = opts.abs_tol.max(opts.rel_tol * total.norm());
            if total_err <= target || total_excess <= 0.01 * target {
                break;
            }
        }
        if evaluations + 42 > opts.max_evaluations {
            return Err(Error::Convergence {
                best: total,
                error_estimate: total_err,
                evaluations,
            });
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        let tiny = 4.0 * f64::EPSILON * worst.a.abs().max(worst.b.abs()).max(f64::MIN_POSITIVE);
        if (worst.b - worst.a).abs() <= tiny {
            retired_err += worst.error;
            (total, total_err, total_excess) = resum(&heap, retired_err);
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let (v1, e1, f1) = gk21(f, worst.a, mid);
        let (v2, e2, f2) = gk21(f, mid, worst.b);
        evaluations += 42;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        total_excess += (e1 - f1) + (e2 - f2) - worst.excess;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
            excess: e1 - f1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
            excess: e2 - f2,
        });
        // Re-sum occasionally to stop drift from incremental updates.
        if evaluations % (42 * 256) == 21 {
            (total, total_err, total_excess) = resum(&heap, retired_err);
        }
    }
    let total: Complex64 = heap.iter().map(|p| p.value).sum();
    Ok(QuadratureResult {
        value: total,
        error_estimate: total_err,
        evaluations,
    })
}

fn add(x: QuadratureResult, y: QuadratureResult) -> QuadratureResult {
    QuadratureResult {
        value: x.value + y.value,
        error_estimate: x.error_estimate + y.error_estimate,
        evaluations: x.evaluations + y.evaluations,
    }
}

/// Integral over a half-line `[c, inf)` (`dir = 1`) or `(-inf, c]` (`dir = -1`).
fn half_line<F: Fn(f64) -> Complex64 + ?Sized>(
    f: &F,
    c: f64,
    dir: f64,
    opts: &AdaptiveOptions,
) -> Result<QuadratureResult> {
    // x = c + dir (1/u - 1): algebraic tails become endpoint singularities at
    // u = 0, where floating point is dense enough to bisect them.
    let g = |u: f64| {
        if u <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        f(c + dir * (1.0 / u - 1.0)) / (u * u)
    };
    gauss_kronrod(&g, 0.0, 1.0, opts)
}

/// Integral over `[p, p + len]` (`len` may be negative) of a function with an
/// algebraic singularity of the given exponent at `p`.
fn singular_panel<F: Fn(f64) -> Complex64 + ?Sized>(
    f: &F,
    p: f64,
    len: f64,
    exponent: f64,
    opts: &AdaptiveOptions,
) -> Result<QuadratureResult> {
    let k = 1.0 / (1.0 + exponent);
    let jac = len.abs() / (1.0 + exponent);
    let g = |u: f64| {
        if u <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let s = u.powf(k);
        // u^(k - 1) combines with |x - p|^exponent into a smooth factor.
        f(p + len * s) * (jac * u.powf(k - 1.0))
    };
    gauss_kronrod(&g, 0.0, 1.0, opts)
}

/// Adaptive integral of `f` over `[a, b]` with default tolerances.
pub fn integrate_adaptive<F>(
    f: F,
    a: f64,
    b: f64,
    singularity: Option<Singularity>,
) -> Result<QuadratureResult>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    integrate_adaptive_with(f, a, b, singularity, &AdaptiveOptions::default())
}

/// Adaptive integral of `f` over `[a, b]`; either bound may be infinite.
///
/// A declared singularity is split out and handled by the substitution
/// `x = p + L u^(1/(1+alpha))`, which turns `|x - p|^alpha dx` into a bounded
/// multiple of `du`.
pub fn integrate_adaptive_with<F>(
    f: F,
    a: f64,
    b: f64,
    singularity: Option<Singularity>,
    opts: &AdaptiveOptions,
) -> Result<QuadratureResult>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    adaptive_dyn(&f, a, b, singularity, opts)
}

fn adaptive_dyn(
    f: &(dyn Fn(f64) -> Complex64 + Sync),
    a: f64,
    b: f64,
    singularity: Option<Singularity>,
    opts: &AdaptiveOptions,
) -> Result<QuadratureResult> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::Domain("NaN integration bound".into()));
    }
    if a > b {
        let r = adaptive_dyn(f, b, a, singularity, opts)?;
        return Ok(QuadratureResult {
            value: -r.value,
            ..r
        });
    }
    if let Some(s) = singularity {
        if !(s.exponent > -1.0) {
            return Err(Error::Domain(format!(
                "singular exponent {} is not integrable",
                s.exponent
            )));
        }
        if s.point >= a && s.point <= b {
            let p = s.point;
            let mut acc = QuadratureResult {
                value: Complex64::new(0.0, 0.0),
                error_estimate: 0.0,
                evaluations: 0,
            };
            // Left of p.
            if p > a {
                let len = if a.is_finite() { (p - a).min(1.0) } else { 1.0 };
                acc = add(acc, singular_panel(f, p, -len, s.exponent, opts)?);
                let rest = p - len;
                if rest > a {
                    acc = add(acc, adaptive_dyn(f, a, rest, None, opts)?);
                }
            }
            if p < b {
                let len = if b.is_finite() { (b - p).min(1.0) } else { 1.0 };
                acc = add(acc, singular_panel(f, p, len, s.exponent, opts)?);
                let rest = p + len;
                if rest < b {
                    acc = add(acc, adaptive_dyn(f, rest, b, None, opts)?);
                }
            }
            return Ok(acc);
        }
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => gauss_kronrod(f, a, b, opts),
        (true, false) => half_line(f, a, 1.0, opts),
        (false, true) => half_line(f, b, -1.0, opts),
        (false, false) => Ok(add(
            half_line(f, 0.0, -1.0, opts)?,
            half_line(f, 0.0, 1.0, opts)?,
        )),
    }
}

/// Trapezoid rule on `[0, 1)` with node doubling from 16 up to `2^22` nodes.
pub fn integrate_periodic<F>(f: F) -> Result<QuadratureResult>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    integrate_periodic_with(f, 1e-14, 1 << 22)
}

pub fn integrate_periodic_with<F>(f: F, rel_tol: f64, max_nodes: usize) -> Result<QuadratureResult>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    let mut n = 16usize;
    let first: Vec<Complex64> = (0..n).map(|j| f(j as f64 / n as f64)).collect();
    let mut sum: Complex64 = first.iter().sum();
    let mut abs_sum: f64 = first.iter().map(|z| z.norm()).sum::<f64>() / n as f64;
    let mut evaluations = n;
    let mut prev = sum / n as f64;
    while 2 * n <= max_nodes {
        // The new nodes sit at the midpoints of the old ones.
        let mids: Vec<Complex64> = (0..n).map(|j| f((j as f64 + 0.5) / n as f64)).collect();
        evaluations += n;
        abs_sum = 0.5 * (abs_sum + mids.iter().map(|z| z.norm()).sum::<f64>() / n as f64);
        sum += mids.iter().sum::<Complex64>();
        n *= 2;
        let cur = sum / n as f64;
        let change = (cur - prev).norm();
        let floor = 8.0 * f64::EPSILON * abs_sum;
        if change <= rel_tol * cur.norm().max(abs_sum * 1e-3) || change <= floor {
            return Ok(QuadratureResult {
                value: cur,
                error_estimate: change.max(floor),
                evaluations,
            });
        }
        prev = cur;
    }
    Err(Error::Convergence {
        best: prev,
        error_estimate: f64::NAN,
        evaluations,
    })
}

/// Discrete Fourier coefficients `(1/N) sum_j f_j e^{-2 pi i n j/N}`, indexed
/// by `n` in `[-N/2, N/2)` through [`fourier_index`].
pub fn fourier_coefficients(samples: &[Complex64]) -> Vec<Complex64> {
    let n = samples.len();
    let mut buf = samples.to_vec();
    if n == 0 {
        return buf;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    fft.process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|z| *z *= scale);
    buf
}

/// Position of frequency `k` in an FFT output of length `n`.
pub fn fourier_index(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseRegime {
    Nondegenerate,
    CubicDegenerate,
    NoCriticalPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: f64,
    pub second_derivative: f64,
    /// 2 for a nondegenerate point, 3 for a cubic degeneration.
    pub order: u8,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub critical_points: Vec<CriticalPoint>,
    pub regime: PhaseRegime,
}

pub const MAX_CRITICAL_POINTS: usize = 64;

/// Settings for [`analyze_phase`].
#[derive(Clone)]
pub struct PhaseOptions {
    /// Grid used for the sign scan of the derivative.
    pub grid: usize,
    /// Bisection resolution.
    pub resolution: f64,
    /// `|phase''|` below this counts as degenerate.
    pub degeneracy_threshold: f64,
    /// Central-difference step for the first derivative.
    pub step: f64,
    /// Closed-form derivative, used instead of differencing when present.
    pub derivative: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        Self {
            grid: 4096,
            resolution: 1e-8,
            degeneracy_threshold: 1e-6,
            step: 1e-5,
            derivative: None,
        }
    }
}

/// Finds the zeros of `phase'` on `[a, b)` and classifies them.
///
/// Sign changes of the derivative are bisected. Zeros where the derivative
/// touches zero without changing sign (odd-order degenerations such as
/// `t^3`) are caught as small local minima of `|phase'|`.
pub fn analyze_phase<P, A>(
    phase: P,
    amplitude: A,
    domain: (f64, f64),
    opts: &PhaseOptions,
) -> Result<PhaseReport>
where
    P: Fn(f64) -> f64,
    A: Fn(f64) -> f64,
{
    let (a, b) = domain;
    let h = opts.step;
    let d1 = |x: f64| match &opts.derivative {
        Some(d) => d(x),
        None => (phase(x + h) - phase(x - h)) / (2.0 * h),
    };
    // Higher derivatives use wider steps so roundoff stays below the
    // degeneracy threshold.
    let h2 = 1e-4;
    let d2 = |x: f64| {
        (-phase(x + 2.0 * h2) + 16.0 * phase(x + h2) - 30.0 * phase(x) + 16.0 * phase(x - h2)
            - phase(x - 2.0 * h2))
            / (12.0 * h2 * h2)
    };
    let h3 = 1e-3;
    let d3 = |x: f64| {
        (phase(x + 2.0 * h3) - 2.0 * phase(x + h3) + 2.0 * phase(x - h3) - phase(x - 2.0 * h3))
            / (2.0 * h3 * h3 * h3)
    };

    let n = opts.grid.max(8);
    let xs: Vec<f64> = (0..=n).map(|j| a + (b - a) * j as f64 / n as f64).collect();
    let ds: Vec<f64> = xs.iter().map(|&x| d1(x)).collect();
    let scale = ds.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut roots: Vec<f64> = Vec::new();
    let push = |roots: &mut Vec<f64>, x: f64| {
        if x >= a && x < b && roots.iter().all(|r| (r - x).abs() > 10.0 * opts.resolution) {
            roots.push(x);
        }
    };
    for j in 0..n {
        let (x0, x1) = (xs[j], xs[j + 1]);
        let (f0, f1) = (ds[j], ds[j + 1]);
        if f0 == 0.0 {
            push(&mut roots, x0);
            continue;
        }
        if f0 * f1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (x0, x1, f0);
            while hi - lo > opts.resolution {
                let mid = 0.5 * (lo + hi);
                let fm = d1(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            push(&mut roots, 0.5 * (lo + hi));
        }
        if roots.len() > MAX_CRITICAL_POINTS {
            return Err(Error::Resolution { count: roots.len() });
        }
    }
    // Touching zeros: local minima of |phase'| that nearly vanish.
    let gap = (b - a) / n as f64;
    for j in 1..n {
        let (l, m, r) = (ds[j - 1].abs(), ds[j].abs(), ds[j + 1].abs());
        if m <= l && m <= r && ds[j - 1] * ds[j + 1] > 0.0 && m < 1e-3 * scale {
            // Golden-section search for the minimum of |phase'|.
            let (mut lo, mut hi) = (xs[j - 1], xs[j + 1]);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            while hi - lo > opts.resolution {
                let c = hi - g * (hi - lo);
                let d = lo + g * (hi - lo);
                if d1(c).abs() < d1(d).abs() {
                    hi = d;
                } else {
                    lo = c;
                }
            }
            let x = 0.5 * (lo + hi);
            // Accept when |phase'| is at the level the local curvature allows.
            let tol = opts.degeneracy_threshold.max(1e-8 * scale) + d2(x).abs() * gap;
            if d1(x).abs() <= tol {
                push(&mut roots, x);
            }
        }
    }
    // A sign change that straddles the right end of a periodic domain was
    // already caught by the scan; sort for a stable report.
    roots.sort_by(|x, y| x.total_cmp(y));
    if roots.len() > MAX_CRITICAL_POINTS {
        return Err(Error::Resolution { count: roots.len() });
    }
    let critical_points: Vec<CriticalPoint> = roots
        .iter()
        .map(|&x| {
            let s = d2(x);
            let order = if s.abs() < opts.degeneracy_threshold && d3(x).abs() > opts.degeneracy_threshold {
                3
            } else {
                2
            };
            CriticalPoint {
                location: x,
                second_derivative: s,
                order,
                amplitude: amplitude(x),
            }
        })
        .collect();
    let regime = if critical_points.is_empty() {
        PhaseRegime::NoCriticalPoint
    } else if critical_points.iter().any(|c| c.order == 3) {
        PhaseRegime::CubicDegenerate
    } else {
        PhaseRegime::Nondegenerate
    };
    Ok(PhaseReport {
        critical_points,
        regime,
    })
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
