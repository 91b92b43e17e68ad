//! Restrictions of eigenfunctions to closed curves, generalized periods
//! `p_n`, the coefficients `a_n = p_n / (length * density_n)` and the
//! average-bound and restriction-exponent checks built on them.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{normalized_legendre, Eigenfunction, Provider, Surface, SurfacePoint};
use crate::error::{Error, Result};
use crate::hypgeom::{circle_orbit, geodesic_orbit_from_matrix, CircleOrbit, GeodesicOrbit, GroupElement};
use crate::modelrep::{density_b, density_c, DensityEntry, DensityKind, DensityTable, Regime, SpectralParam};
use crate::quad::{fourier_coefficients, fourier_index, linear_fit};

pub const MIN_RADIUS: f64 = 1e-3;
pub const MIN_GEODESIC_LENGTH: f64 = 1e-2;
/// Default threshold, relative to `max |density|`, below which `a_n` is not formed.
pub const DEFAULT_DENSITY_THRESHOLD: f64 = 1e-12;
const MIN_GRID: usize = 256;
const MAX_GRID: usize = 1 << 18;
const RESAMPLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Curve {
    Geodesic(GeodesicOrbit),
    Circle(CircleOrbit),
    SphereEquator,
    /// The closed geodesic `offset + theta * direction` on `R^2 / Z^2`.
    TorusGeodesic { direction: (i64, i64), offset: (f64, f64) },
}

impl Curve {
    /// Closed geodesic of a hyperbolic element, basepoint at the top of its axis.
    pub fn closed_geodesic(gamma: &GroupElement) -> Result<Self> {
        let orbit = geodesic_orbit_from_matrix(gamma)?.centered();
        if orbit.length < MIN_GEODESIC_LENGTH {
            return Err(Error::Input(format!(
                "geodesic length {} is below {MIN_GEODESIC_LENGTH}",
                orbit.length
            )));
        }
        Ok(Curve::Geodesic(orbit))
    }

    pub fn circle(center: Complex64, radius: f64) -> Result<Self> {
        if radius < MIN_RADIUS {
            return Err(Error::Input(format!("circle radius {radius} is below {MIN_RADIUS}")));
        }
        Ok(Curve::Circle(circle_orbit(center, radius)?))
    }

    pub fn torus_geodesic(direction: (i64, i64), offset: (f64, f64)) -> Result<Self> {
        if direction == (0, 0) {
            return Err(Error::Input("torus geodesic needs a nonzero direction".into()));
        }
        Ok(Curve::TorusGeodesic { direction, offset })
    }

    pub fn surface(&self) -> Surface {
        match self {
            Curve::Geodesic(_) | Curve::Circle(_) => Surface::Modular,
            Curve::SphereEquator => Surface::Sphere,
            Curve::TorusGeodesic { .. } => Surface::Torus,
        }
    }

    pub fn length(&self) -> f64 {
        match self {
            Curve::Geodesic(o) => o.length,
            Curve::Circle(c) => c.length(),
            Curve::SphereEquator => 2.0 * PI,
            Curve::TorusGeodesic { direction, .. } => (direction.0 as f64).hypot(direction.1 as f64),
        }
    }

    /// Point `t(theta)` of the fixed parametrization, `theta in [0, 1)`.
    pub fn point(&self, theta: f64) -> SurfacePoint {
        match self {
            Curve::Geodesic(o) => SurfacePoint::Upper(o.reduced_point(theta).unwrap_or_else(|| o.point(theta))),
            Curve::Circle(c) => SurfacePoint::Upper(c.orbit_point(theta)),
            Curve::SphereEquator => SurfacePoint::Sphere {
                theta: 0.5 * PI,
                phi: 2.0 * PI * theta,
            },
            Curve::TorusGeodesic { direction, offset } => SurfacePoint::Torus {
                x1: offset.0 + theta * direction.0 as f64,
                x2: offset.1 + theta * direction.1 as f64,
            },
        }
    }

    /// Same curve with the basepoint moved by `shift` periods.
    pub fn shifted(&self, shift: f64) -> Self {
        match *self {
            Curve::Geodesic(o) => Curve::Geodesic(o.shifted(shift)),
            Curve::Circle(c) => {
                let h = c.h * GroupElement::rotation(2.0 * PI * shift);
                Curve::Circle(CircleOrbit { h, ..c })
            }
            Curve::SphereEquator => Curve::SphereEquator,
            Curve::TorusGeodesic { direction, offset } => Curve::TorusGeodesic {
                direction,
                offset: (
                    offset.0 + shift * direction.0 as f64,
                    offset.1 + shift * direction.1 as f64,
                ),
            },
        }
    }

    pub fn id(&self) -> String {
        match self {
            Curve::Geodesic(o) => match o.integral {
                Some([a, b, c, d]) => format!("geodesic[{a},{b},{c},{d}]"),
                None => {
                    let [a, b, c, d] = (o.conjugator * o.generator * o.conjugator.inverse()).entries();
                    format!("geodesic[{a:.6},{b:.6},{c:.6},{d:.6}]")
                }
            },
            Curve::Circle(c) => format!("circle[{:.6}{:+.6}i,r={:.6}]", c.center.re, c.center.im, c.radius),
            Curve::SphereEquator => "equator".into(),
            Curve::TorusGeodesic { direction, offset } => format!(
                "torus[{},{};{},{}]",
                direction.0, direction.1, offset.0, offset.1
            ),
        }
    }
}

/// Samples of `phi o t` on the uniform grid `theta_j = j / N`.
#[derive(Debug, Clone)]
pub struct RestrictionProfile {
    pub curve: Curve,
    pub label: String,
    pub mu: f64,
    pub r: f64,
    pub samples: Vec<Complex64>,
    pub length: f64,
}

impl RestrictionProfile {
    /// A profile from given samples (used for planted-coefficient checks).
    pub fn synthetic(curve: Curve, mu: f64, r: f64, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() < MIN_GRID || !samples.len().is_power_of_two() {
            return Err(Error::Input(format!(
                "grid size {} is not a power of two >= {MIN_GRID}",
                samples.len()
            )));
        }
        Ok(Self {
            curve,
            label: "synthetic".into(),
            mu,
            r,
            samples,
            length: curve.length(),
        })
    }

    /// `int |phi o t|^2 dgamma` from the samples.
    pub fn norm_sqr(&self) -> f64 {
        self.length * self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

fn sample(phi: &Eigenfunction, curve: &Curve, n: usize) -> Result<Vec<Complex64>> {
    (0..n)
        .into_par_iter()
        .map(|j| Ok(Complex64::new(phi.evaluate(curve.point(j as f64 / n as f64))?, 0.0)))
        .collect()
}

/// Samples `phi` along the curve, doubling the grid until the periods are
/// stable to `1e-6` relative.
pub fn restrict(phi: &Eigenfunction, curve: &Curve) -> Result<RestrictionProfile> {
    if phi.surface != curve.surface() {
        return Err(Error::Input(format!(
            "{} lives on the {:?} surface, the curve on the {:?} surface",
            phi.label(),
            phi.surface,
            curve.surface()
        )));
    }
    let mut n = MIN_GRID;
    let mut samples = sample(phi, curve, n)?;
    loop {
        let finer = sample(phi, curve, 2 * n)?;
        let (c0, c1) = (fourier_coefficients(&samples), fourier_coefficients(&finer));
        let scale = c1.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let change = (-(n as i64) / 2..n as i64 / 2)
            .map(|k| (c0[fourier_index(k, n)] - c1[fourier_index(k, 2 * n)]).norm())
            .fold(0.0, f64::max);
        let tail = (n as i64 / 2..n as i64)
            .map(|k| c1[fourier_index(k, 2 * n)].norm().max(c1[fourier_index(-k, 2 * n)].norm()))
            .fold(0.0, f64::max);
        if change.max(tail) <= RESAMPLE_TOL * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        n *= 2;
        samples = finer;
        if n > MAX_GRID {
            return Err(Error::Resolution { count: n });
        }
    }
    Ok(RestrictionProfile {
        curve: *curve,
        label: phi.label(),
        mu: phi.mu,
        r: phi.r,
        samples,
        length: curve.length(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Coefficient {
    Value(Complex64),
    /// The model density is below the threshold; `a_n` is not formed.
    NearZeroDensity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodTable {
    pub label: String,
    pub curve: Curve,
    pub mu: f64,
    pub r: f64,
    pub length: f64,
    /// `p_n = int phi(t(theta)) e^{-2 pi i n theta} dgamma`.
    pub p: BTreeMap<i64, Complex64>,
    /// `int |phi o t|^2 dgamma`.
    pub restriction_norm_sqr: f64,
    /// Mean of `|phi o t|^2` from an independent grid of twice the size.
    pub plancherel_reference: Option<f64>,
    pub density: Option<DensityTable>,
    pub a: BTreeMap<i64, Coefficient>,
    pub partial_sums: BTreeMap<u32, f64>,
}

impl PeriodTable {
    /// `p_0`, the plain period.
    pub fn p0(&self) -> Complex64 {
        self.p.get(&0).copied().unwrap_or_default()
    }

    /// Relative defect of `sum |p_n|^2 = length * int |phi o t|^2`, taken
    /// against the independent reference when available.
    pub fn plancherel_defect(&self) -> f64 {
        let lhs: f64 = self.p.values().map(|v| v.norm_sqr()).sum::<f64>() / (self.length * self.length);
        let rhs = self
            .plancherel_reference
            .unwrap_or(self.restriction_norm_sqr / self.length);
        (lhs - rhs).abs() / rhs.max(f64::MIN_POSITIVE)
    }

    /// `sum_{|n| <= T} |a_n|^2` over the formed coefficients.
    pub fn partial_sum(&self, t: u32) -> f64 {
        self.a
            .range(-(t as i64)..=t as i64)
            .filter_map(|(_, c)| match c {
                Coefficient::Value(v) => Some(v.norm_sqr()),
                Coefficient::NearZeroDensity => None,
            })
            .sum()
    }

    pub fn fill_partial_sums(&mut self, t_grid: &[u32]) {
        self.partial_sums = t_grid.iter().map(|&t| (t, self.partial_sum(t))).collect();
    }

    /// Long-format CSV: `n,p_re,p_im,density_re,density_im,a_re,a_im,flag`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["n", "p_re", "p_im", "density_re", "density_im", "a_re", "a_im", "flag"])?;
        for (n, p) in &self.p {
            let dens = self
                .density
                .as_ref()
                .and_then(|d| d.get(*n))
                .map(|e| e.value);
            let (ar, ai, flag) = match self.a.get(n) {
                Some(Coefficient::Value(v)) => (format!("{:e}", v.re), format!("{:e}", v.im), ""),
                Some(Coefficient::NearZeroDensity) => (String::new(), String::new(), "near-zero model density"),
                None => (String::new(), String::new(), ""),
            };
            wr.write_record([
                n.to_string(),
                format!("{:e}", p.re),
                format!("{:e}", p.im),
                dens.map(|d| format!("{:e}", d.re)).unwrap_or_default(),
                dens.map(|d| format!("{:e}", d.im)).unwrap_or_default(),
                ar,
                ai,
                flag.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Generalized periods `p_n` for `n` in the range by the trapezoid rule.
pub fn periods(profile: &RestrictionProfile, n_range: (i64, i64)) -> Result<PeriodTable> {
    let n = profile.samples.len();
    if n_range.0 > n_range.1 || n_range.0.abs().max(n_range.1.abs()) >= (n / 2) as i64 {
        return Err(Error::Input(format!(
            "n range {n_range:?} exceeds the resolution of {n} samples"
        )));
    }
    let coeffs = fourier_coefficients(&profile.samples);
    let p = (n_range.0..=n_range.1)
        .map(|k| (k, coeffs[fourier_index(k, n)] * profile.length))
        .collect();
    Ok(PeriodTable {
        label: profile.label.clone(),
        curve: profile.curve,
        mu: profile.mu,
        r: profile.r,
        length: profile.length,
        p,
        restriction_norm_sqr: profile.norm_sqr(),
        plancherel_reference: None,
        density: None,
        a: BTreeMap::new(),
        partial_sums: BTreeMap::new(),
    })
}

/// [`periods`] on the full resolved range, with the Plancherel reference
/// computed from an independent grid of twice the size.
pub fn periods_with_reference(phi: &Eigenfunction, profile: &RestrictionProfile) -> Result<PeriodTable> {
    let n = profile.samples.len() as i64;
    let mut table = periods(profile, (-(n / 2) + 1, n / 2 - 1))?;
    let fine = sample(phi, &profile.curve, 2 * profile.samples.len())?;
    table.plancherel_reference = Some(fine.iter().map(|v| v.norm_sqr()).sum::<f64>() / fine.len() as f64);
    Ok(table)
}

/// Equator values `Pbar_degree^{|k|}(0)` as the density of the sphere.
pub fn density_sphere_equator(degree: u32, n_range: (i64, i64)) -> Result<DensityTable> {
    let mut entries = BTreeMap::new();
    for k in n_range.0..=n_range.1 {
        let m = k.unsigned_abs() as u32;
        let v = if m <= degree {
            *normalized_legendre(degree, m, 0.0)?.last().unwrap()
        } else {
            0.0
        };
        entries.insert(
            k,
            DensityEntry {
                value: Complex64::new(v, 0.0),
                log_abs: if v != 0.0 { v.abs().ln() } else { -745.0 },
                regime: Regime::classify(k as f64, degree as f64 + 0.5, 0.1),
            },
        );
    }
    let lambda = Complex64::new(0.0, 2.0 * degree as f64 + 1.0);
    Ok(DensityTable {
        param: SpectralParam::new(lambda),
        kind: DensityKind::SphereEquator { degree },
        entries,
    })
}

fn check_matching(table: &PeriodTable, density: &DensityTable) -> Result<()> {
    let mismatch = |what: String| Err(Error::Consistency(what));
    match (&density.kind, &table.curve) {
        (DensityKind::GeodesicB { q, .. }, Curve::Geodesic(o)) => {
            if (q - o.q).abs() > 1e-9 * o.q {
                return mismatch(format!("density lattice q = {q}, geodesic q = {}", o.q));
            }
        }
        (DensityKind::CircleC { g, .. }, Curve::Circle(c)) => {
            if !g.approx_eq(&c.g, 1e-9) {
                return mismatch("density radius element differs from the circle's".into());
            }
        }
        (DensityKind::SphereEquator { degree }, Curve::SphereEquator) => {
            let mu = *degree as f64 * (*degree as f64 + 1.0);
            if (mu - table.mu).abs() > 1e-9 * mu.max(1.0) {
                return mismatch(format!("density of degree {degree} for eigenvalue {}", table.mu));
            }
            return Ok(());
        }
        (DensityKind::SphereEquator { .. }, _) | (_, Curve::SphereEquator) | (_, Curve::TorusGeodesic { .. }) => {
            return mismatch(format!("density kind does not fit the curve {}", table.curve.id()));
        }
        _ => return mismatch(format!("density kind does not fit the curve {}", table.curve.id())),
    }
    let want = SpectralParam::from_r(table.r).lambda;
    if (density.param.lambda - want).norm() > 1e-9 * (1.0 + want.norm()) {
        return mismatch(format!(
            "density at lambda = {}, eigenfunction at lambda = {want}",
            density.param.lambda
        ));
    }
    Ok(())
}

/// `a_n = p_n / (length * density_n)` wherever `|density_n|` is at least
/// `threshold * max |density|`; other entries are flagged.
pub fn extract_coefficients(table: &PeriodTable, density: &DensityTable, threshold: f64) -> Result<PeriodTable> {
    check_matching(table, density)?;
    if let Curve::Circle(_) = table.curve {
        // The K-orbit parametrization covers the circle twice.
        let pmax = table.p.values().fold(0.0f64, |m, v| m.max(v.norm()));
        for (n, v) in &table.p {
            if n % 2 != 0 && v.norm() > 1e-8 * pmax.max(f64::MIN_POSITIVE) {
                return Err(Error::StructuralInconsistency {
                    n: *n,
                    magnitude: v.norm(),
                });
            }
        }
    }
    let floor = threshold * density.max_abs();
    let mut out = table.clone();
    out.a = table
        .p
        .iter()
        .filter_map(|(n, p)| {
            let d = density.get(*n)?;
            let c = if d.value.norm() >= floor && d.value.norm() > 0.0 {
                Coefficient::Value(p / (table.length * d.value))
            } else {
                Coefficient::NearZeroDensity
            };
            Some((*n, c))
        })
        .collect();
    out.density = Some(density.clone());
    Ok(out)
}

/// Model density matching `phi` along `curve`, if the pair has one.
pub fn density_for(phi: &Eigenfunction, curve: &Curve, n_range: (i64, i64)) -> Result<Option<DensityTable>> {
    Ok(match (curve, &phi.provider) {
        (Curve::Geodesic(o), _) => Some(density_b(SpectralParam::from_r(phi.r), o.q, n_range)?),
        (Curve::Circle(c), _) => Some(density_c(SpectralParam::from_r(phi.r), &c.g, n_range)?),
        (Curve::SphereEquator, Provider::SphereHarmonic { n, .. }) => Some(density_sphere_equator(*n, n_range)?),
        _ => None,
    })
}

/// Restriction, periods with Plancherel reference, coefficients where a
/// model density exists, and partial sums on `t_grid`.
pub fn period_pipeline(phi: &Eigenfunction, curve: &Curve, threshold: f64, t_grid: &[u32]) -> Result<PeriodTable> {
    let prof = restrict(phi, curve)?;
    let mut table = periods_with_reference(phi, &prof)?;
    let nmax = *table.p.keys().last().expect("nonempty period table");
    if let Some(density) = density_for(phi, curve, (-nmax, nmax))? {
        table = extract_coefficients(&table, &density, threshold)?;
        table.fill_partial_sums(t_grid);
    }
    Ok(table)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AverageBoundReport {
    pub labels: Vec<String>,
    pub mu: Vec<f64>,
    pub t_grid: Vec<u32>,
    /// `ratios[i][j] = sum_{|n| <= T_j} |a_n|^2 / max(T_j, sqrt(mu_i))`.
    pub ratios: Vec<Vec<f64>>,
    pub max_ratio: f64,
    /// Largest max/min of the ratio along `T` for a fixed eigenfunction.
    pub spread_t: f64,
    /// Largest max/min of the ratio across eigenfunctions for a fixed `T`.
    pub spread_forms: f64,
    pub pass: bool,
}

pub const AVERAGE_BOUND_SPREAD: f64 = 3.0;

pub fn check_average_bound(tables: &[PeriodTable], t_grid: &[u32]) -> Result<AverageBoundReport> {
    if tables.len() < 2 || t_grid.len() < 3 {
        return Err(Error::Input(format!(
            "need at least 2 eigenfunctions and 3 values of T, got {} and {}",
            tables.len(),
            t_grid.len()
        )));
    }
    if tables.iter().any(|t| t.a.is_empty()) {
        return Err(Error::Input("period table without coefficients".into()));
    }
    let ratios: Vec<Vec<f64>> = tables
        .iter()
        .map(|tab| {
            t_grid
                .iter()
                .map(|&t| tab.partial_sum(t) / (t as f64).max(tab.mu.sqrt()))
                .collect()
        })
        .collect();
    let spread = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
        hi / lo
    };
    let spread_t = ratios
        .iter()
        .map(|row| spread(&mut row.iter().copied()))
        .fold(0.0, f64::max);
    let spread_forms = (0..t_grid.len())
        .map(|j| spread(&mut ratios.iter().map(|row| row[j])))
        .fold(0.0, f64::max);
    let max_ratio = ratios.iter().flatten().copied().fold(0.0, f64::max);
    Ok(AverageBoundReport {
        labels: tables.iter().map(|t| t.label.clone()).collect(),
        mu: tables.iter().map(|t| t.mu).collect(),
        t_grid: t_grid.to_vec(),
        ratios,
        max_ratio,
        spread_t,
        spread_forms,
        pass: spread_t < AVERAGE_BOUND_SPREAD && spread_forms < AVERAGE_BOUND_SPREAD,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub constant: f64,
    /// Largest absolute residual of the log-log fit.
    pub residual: f64,
}

/// Least-squares slope of `ln p` against `ln mu`.
pub fn fit_restriction_exponent(pairs: &[(f64, f64)]) -> Result<ExponentFit> {
    if pairs.len() < 5 {
        return Err(Error::Fit(format!("need at least 5 pairs, got {}", pairs.len())));
    }
    if pairs.iter().any(|&(m, p)| !(m > 0.0) || !(p > 0.0)) {
        return Err(Error::Fit("eigenvalues and restriction norms must be positive".into()));
    }
    let (lo, hi) = pairs
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(m, _)| (lo.min(m), hi.max(m)));
    if hi < 10.0 * lo {
        return Err(Error::Fit(format!("eigenvalues span only a factor {:.3}", hi / lo)));
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept) = linear_fit(&x, &y);
    let residual = x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - slope * a - intercept).abs())
        .fold(0.0, f64::max);
    Ok(ExponentFit {
        exponent: slope,
        constant: intercept.exp(),
        residual,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorollaryReport {
    pub exponent: f64,
    /// Constant fitted on the reference eigenfunction.
    pub constant: f64,
    pub slack: f64,
    /// `p / (constant * mu^exponent)` per eigenfunction.
    pub ratios: Vec<f64>,
    pub pass: bool,
}

/// Checks `p <= slack * C * mu^exponent` with `C` fitted on the pair of
/// smallest `mu`.
pub fn check_corollary(pairs: &[(f64, f64)], exponent: f64, slack: f64) -> Result<CorollaryReport> {
    let reference = pairs
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::Input("no eigenfunctions".into()))?;
    let constant = reference.1 / reference.0.powf(exponent);
    let ratios: Vec<f64> = pairs.iter().map(|&(m, p)| p / (constant * m.powf(exponent))).collect();
    Ok(CorollaryReport {
        exponent,
        constant,
        slack,
        pass: ratios.iter().all(|&r| r <= slack),
        ratios,
    })
}

/// Per-(eigenfunction, curve) record of the JSON summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub surface: Surface,
    pub label: String,
    pub spectral: f64,
    pub curve: String,
    pub length: f64,
    pub restriction_norm_sqr: f64,
    pub p0: Complex64,
    pub plancherel_defect: f64,
    pub t_grid: Vec<u32>,
    pub partial_sums: Vec<f64>,
    pub ratios: Vec<f64>,
    pub max_abs_a: f64,
}

pub fn summarize(table: &PeriodTable, t_grid: &[u32]) -> PeriodSummary {
    let spectral = match table.curve.surface() {
        Surface::Modular => table.r,
        _ => table.mu,
    };
    PeriodSummary {
        surface: table.curve.surface(),
        label: table.label.clone(),
        spectral,
        curve: table.curve.id(),
        length: table.length,
        restriction_norm_sqr: table.restriction_norm_sqr,
        p0: table.p0(),
        plancherel_defect: table.plancherel_defect(),
        t_grid: t_grid.to_vec(),
        partial_sums: t_grid.iter().map(|&t| table.partial_sum(t)).collect(),
        ratios: t_grid
            .iter()
            .map(|&t| table.partial_sum(t) / (t as f64).max(table.mu.sqrt()))
            .collect(),
        max_abs_a: table
            .a
            .values()
            .filter_map(|c| match c {
                Coefficient::Value(v) => Some(v.norm()),
                _ => None,
            })
            .fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{sphere_harmonic, torus_mode};
    use crate::modelrep::{density_b, density_c};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn torus_examples() {
        let curve = Curve::torus_geodesic((1, 0), (0.0, 0.0)).unwrap();
        let phi = torus_mode((0, 5));
        let prof = restrict(&phi, &curve).unwrap();
        assert!(prof.samples.iter().all(|v| (v.re - 2f64.sqrt()).abs() < 1e-12));
        let tab = periods(&prof, (-4, 4)).unwrap();
        assert!((tab.p0().re - 2f64.sqrt()).abs() < 1e-12);
        assert!((tab.restriction_norm_sqr - 2.0).abs() < 1e-12);
        for n in [-4, -1, 1, 3] {
            assert!(tab.p[&n].norm() < 1e-13);
        }
        let tab = periods(&restrict(&torus_mode((1, 0)), &curve).unwrap(), (-4, 4)).unwrap();
        for (n, v) in &tab.p {
            assert_eq!(n.abs() == 1, v.norm() > 1e-6, "n = {n}");
        }
        assert!((tab.restriction_norm_sqr - 1.0).abs() < 1e-12);
        // Closed form vs sampled restriction norm for k = (3, 4).
        let tab = periods(&restrict(&torus_mode((3, 4)), &curve).unwrap(), (-8, 8)).unwrap();
        assert!((tab.restriction_norm_sqr - 1.0).abs() < 1e-12);
        assert!(Curve::torus_geodesic((0, 0), (0.0, 0.0)).is_err());
    }

    #[test]
    fn sphere_equator_examples() {
        let eq = Curve::SphereEquator;
        let p10 = restrict(&sphere_harmonic(1, 0).unwrap(), &eq).unwrap();
        assert!(p10.samples.iter().all(|v| v.norm() < 1e-15));
        let tab = periods(&restrict(&sphere_harmonic(1, 1).unwrap(), &eq).unwrap(), (-3, 3)).unwrap();
        assert!((tab.restriction_norm_sqr - 0.75).abs() < 1e-12);
        // Plain periods of Y_n^0 stay bounded in n.
        let p0: Vec<f64> = (0..40)
            .step_by(2)
            .map(|n| {
                let prof = restrict(&sphere_harmonic(n, 0).unwrap(), &eq).unwrap();
                periods(&prof, (0, 0)).unwrap().p0().norm()
            })
            .collect();
        assert!(p0.iter().all(|&v| v < 2.0 * PI), "{p0:?}");
    }

    #[test]
    fn sphere_family_average_bound() {
        let eq = Curve::SphereEquator;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let tables: Vec<PeriodTable> = [12u32, 20, 30, 44]
            .iter()
            .map(|&n| {
                let m = rng.gen_range(0..=n as i32);
                let phi = sphere_harmonic(n, m).unwrap();
                let prof = restrict(&phi, &eq).unwrap();
                let tab = periods(&prof, (-60, 60)).unwrap();
                let dens = density_sphere_equator(n, (-60, 60)).unwrap();
                extract_coefficients(&tab, &dens, 1e-6).unwrap()
            })
            .collect();
        let rep = check_average_bound(&tables, &[8, 16, 32, 64]).unwrap();
        assert!(rep.max_ratio.is_finite() && rep.max_ratio <= 2.0);
        let wrong = density_sphere_equator(5, (-60, 60)).unwrap();
        assert!(matches!(
            extract_coefficients(&tables[0], &wrong, 1e-6),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn sphere_exponents() {
        let eq = Curve::SphereEquator;
        let extremal: Vec<(f64, f64)> = (10..=200)
            .step_by(10)
            .map(|n| {
                let p = restrict(&sphere_harmonic(n, n as i32).unwrap(), &eq).unwrap().norm_sqr();
                (n as f64 * (n as f64 + 1.0), p)
            })
            .collect();
        let fit = fit_restriction_exponent(&extremal).unwrap();
        assert!((fit.exponent - 0.25).abs() < 0.02, "{fit:?}");
        let zonal: Vec<(f64, f64)> = (10..=200)
            .step_by(10)
            .map(|n| {
                let p = restrict(&sphere_harmonic(n, 0).unwrap(), &eq).unwrap().norm_sqr();
                (n as f64 * (n as f64 + 1.0), p)
            })
            .collect();
        assert!(fit_restriction_exponent(&zonal).unwrap().exponent < 0.2);
        assert!(matches!(fit_restriction_exponent(&extremal[..3]), Err(Error::Fit(_))));
        assert!(matches!(
            fit_restriction_exponent(&[(10.0, 1.0), (11.0, 1.0), (12.0, 1.0), (13.0, 1.0), (14.0, 1.0)]),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn torus_modes_have_flat_exponent() {
        let curve = Curve::torus_geodesic((1, 0), (0.0, 0.2)).unwrap();
        let pairs: Vec<(f64, f64)> = (1..=12)
            .map(|k| {
                let phi = torus_mode((k, 0));
                (phi.mu, restrict(&phi, &curve).unwrap().norm_sqr())
            })
            .collect();
        assert!(fit_restriction_exponent(&pairs).unwrap().exponent.abs() < 1e-10);
    }

    fn planted(curve: Curve, density: &DensityTable, rng: &mut ChaCha8Rng) -> (BTreeMap<i64, Complex64>, RestrictionProfile) {
        let n = 1024usize;
        let floor = 1e-6 * density.max_abs();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        let mut plants = BTreeMap::new();
        for (&k, e) in &density.entries {
            if e.value.norm() >= floor {
                let a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                plants.insert(k, a);
                coeffs[fourier_index(k, n)] = a * e.value;
            }
        }
        let samples: Vec<Complex64> = (0..n)
            .map(|j| {
                let th = j as f64 / n as f64;
                coeffs
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.norm() > 0.0)
                    .map(|(i, c)| {
                        let k = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
                        c * Complex64::from_polar(1.0, 2.0 * PI * k * th)
                    })
                    .sum()
            })
            .collect();
        (plants, RestrictionProfile::synthetic(curve, 0.25 + 64.0, 8.0, samples).unwrap())
    }

    #[test]
    fn planted_coefficients_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let geo = Curve::closed_geodesic(&GroupElement::new(2.0, 1.0, 1.0, 1.0).unwrap()).unwrap();
        let Curve::Geodesic(o) = geo else { unreachable!() };
        let param = SpectralParam::from_r(8.0);
        let db = density_b(param, o.q, (-60, 60)).unwrap();
        let circ = Curve::circle(Complex64::new(0.1, 1.2), 1.0).unwrap();
        let Curve::Circle(c) = circ else { unreachable!() };
        let dc = density_c(param, &c.g, (-60, 60)).unwrap();
        for (curve, dens) in [(geo, &db), (circ, &dc)] {
            for _ in 0..5 {
                let (plants, prof) = planted(curve, dens, &mut rng);
                let tab = periods(&prof, (-60, 60)).unwrap();
                let tab = extract_coefficients(&tab, dens, 1e-6).unwrap();
                for (k, want) in &plants {
                    let Coefficient::Value(got) = tab.a[k] else { panic!("{k} flagged") };
                    assert!((got - want).norm() < 1e-8 * want.norm().max(1e-3), "{k}: {got} {want}");
                }
                assert!(tab.a.values().any(|c| *c == Coefficient::NearZeroDensity));
            }
        }
    }

    #[test]
    fn circle_odd_periods_are_structural() {
        let circ = Curve::circle(Complex64::new(0.0, 1.0), 0.8).unwrap();
        let Curve::Circle(c) = circ else { unreachable!() };
        let dens = density_c(SpectralParam::from_r(8.0), &c.g, (-8, 8)).unwrap();
        let samples: Vec<Complex64> = (0..256)
            .map(|j| Complex64::new((2.0 * PI * j as f64 / 256.0).cos(), 0.0))
            .collect();
        let prof = RestrictionProfile::synthetic(circ, 64.25, 8.0, samples).unwrap();
        let tab = periods(&prof, (-8, 8)).unwrap();
        assert!(matches!(
            extract_coefficients(&tab, &dens, 1e-6),
            Err(Error::StructuralInconsistency { n: -1, .. })
        ));
        let other = density_c(SpectralParam::from_r(9.0), &c.g, (-8, 8)).unwrap();
        let even: Vec<Complex64> = (0..256)
            .map(|j| Complex64::new((4.0 * PI * j as f64 / 256.0).cos(), 0.0))
            .collect();
        let tab = periods(&RestrictionProfile::synthetic(circ, 64.25, 8.0, even).unwrap(), (-8, 8)).unwrap();
        assert!(matches!(extract_coefficients(&tab, &other, 1e-6), Err(Error::Consistency(_))));
    }

    #[test]
    fn average_bound_with_unit_plants() {
        let mut tables = Vec::new();
        for &mu in &[100.0, 400.0, 2500.0] {
            let mut t = PeriodTable {
                label: format!("mu{mu}"),
                curve: Curve::SphereEquator,
                mu,
                r: f64::NAN,
                length: 1.0,
                p: BTreeMap::new(),
                restriction_norm_sqr: 0.0,
                plancherel_reference: None,
                density: None,
                a: (-100..=100).map(|n| (n, Coefficient::Value(Complex64::new(1.0, 0.0)))).collect(),
                partial_sums: BTreeMap::new(),
            };
            t.fill_partial_sums(&[8, 16, 32, 64]);
            let sums: Vec<f64> = t.partial_sums.values().copied().collect();
            assert!(sums.windows(2).all(|w| w[0] <= w[1]));
            tables.push(t);
        }
        let rep = check_average_bound(&tables, &[8, 16, 32, 64]).unwrap();
        assert!(rep.max_ratio <= 2.0 + 1.0 / 8.0 + 1e-12, "{}", rep.max_ratio);
        assert!(check_average_bound(&tables[..1], &[8, 16, 32]).is_err());
    }

    #[test]
    fn corollary_check_uses_reference_constant() {
        let pairs: Vec<(f64, f64)> = (1..8).map(|k| (10.0 * k as f64, 2.0 * (10.0 * k as f64).powf(0.25))).collect();
        let rep = check_corollary(&pairs, 0.25, 3.0).unwrap();
        assert!((rep.constant - 2.0).abs() < 1e-12 && rep.pass);
        let rep = check_corollary(&pairs, 0.0, 1.5).unwrap();
        assert!(!rep.pass);
    }

    #[test]
    fn degenerate_curves_are_rejected() {
        assert!(matches!(Curve::circle(Complex64::new(0.0, 1.0), 1e-4), Err(Error::Input(_))));
        assert!(Curve::closed_geodesic(&GroupElement::new(1.0, 1.0, 0.0, 1.0).unwrap()).is_err());
        let g = Curve::closed_geodesic(&GroupElement::new(2.0, 1.0, 1.0, 1.0).unwrap()).unwrap();
        assert!((g.length() - 2.0 * ((3.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-12);
    }
}
