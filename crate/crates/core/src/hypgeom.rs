//! Upper half-plane geometry and the action of PGL(2,R).
//!
//! Group elements are real 2x2 matrices modulo nonzero scalars. Points of the
//! upper half-plane are plain `Complex64` values with positive imaginary part.
//! Orientation-reversing elements (negative determinant) act through the
//! conjugate variable, so the whole of PGL(2,R) acts by isometries.

use std::f64::consts::PI;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};

/// Margin by which `|tr|/sqrt|det|` must exceed 2 before an element is
/// accepted as hyperbolic.
pub const HYPERBOLIC_MARGIN: f64 = 1e-9;

/// An element of PGL(2,R), stored as the canonical representative with
/// `|det| = 1` and first nonzero entry positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl GroupElement {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let det = a * d - b * c;
        let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
        if !det.is_finite() || scale == 0.0 || det.abs() <= 1e-14 * scale * scale {
            return Err(Error::InvalidElement { det });
        }
        let s = det.abs().sqrt().recip();
        let mut m = [a * s, b * s, c * s, d * s];
        let tiny = 1e-14 * m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if let Some(first) = m.iter().find(|x| x.abs() > tiny) {
            if *first < 0.0 {
                m.iter_mut().for_each(|x| *x = -*x);
            }
        }
        Ok(Self {
            a: m[0],
            b: m[1],
            c: m[2],
            d: m[3],
        })
    }

    pub fn identity() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 1.0,
        }
    }

    /// The diagonal element `diag(t, 1/t)`, acting by `z -> t^2 z`.
    pub fn diagonal(t: f64) -> Result<Self> {
        Self::new(t, 0.0, 0.0, 1.0 / t)
    }

    /// Rotation `[[cos a, sin a], [-sin a, cos a]]`, which fixes `i`.
    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, s, -s, c).expect("rotations are invertible")
    }

    /// The element `[[sqrt y, x/sqrt y], [0, 1/sqrt y]]` sending `i` to `z`.
    pub fn translation_to(z: Complex64) -> Result<Self> {
        check_point(z)?;
        let r = z.im.sqrt();
        Self::new(r, z.re / r, 0.0, 1.0 / r)
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    /// Determinant of the canonical representative: `+1` or `-1`.
    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn preserves_orientation(&self) -> bool {
        self.det() > 0.0
    }

    pub fn inverse(&self) -> Self {
        let det = self.det();
        Self::new(self.d / det, -self.b / det, -self.c / det, self.a / det)
            .expect("canonical elements are invertible")
    }

    /// Entry-wise comparison up to the sign ambiguity of PGL(2,R).
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let p = self.entries();
        let q = other.entries();
        let same = p.iter().zip(&q).all(|(x, y)| (x - y).abs() <= tol);
        let flipped = p.iter().zip(&q).all(|(x, y)| (x + y).abs() <= tol);
        same || flipped
    }

    /// True when the element fixes `i`, i.e. lies in the maximal compact `K`.
    pub fn in_k(&self, tol: f64) -> bool {
        let w = mobius_act(self, Complex64::i()).expect("i is in the upper half-plane");
        (w - Complex64::i()).norm() <= tol
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;

    fn mul(self, rhs: GroupElement) -> GroupElement {
        GroupElement::new(
            self.a * rhs.a + self.b * rhs.c,
            self.a * rhs.b + self.b * rhs.d,
            self.c * rhs.a + self.d * rhs.c,
            self.c * rhs.b + self.d * rhs.d,
        )
        .expect("product of invertible elements is invertible")
    }
}

fn check_point(z: Complex64) -> Result<()> {
    if z.im > 0.0 && z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{z} is not in the upper half-plane")))
    }
}

/// Fractional linear action; orientation-reversing elements act on `conj(z)`.
pub fn mobius_act(g: &GroupElement, z: Complex64) -> Result<Complex64> {
    check_point(z)?;
    let w = if g.preserves_orientation() { z } else { z.conj() };
    let [a, b, c, d] = g.entries();
    let num = w * a + b;
    let den = w * c + d;
    Ok(num / den)
}

/// Hyperbolic distance for the metric `|dz|/Im z`.
pub fn hyperbolic_distance(z: Complex64, w: Complex64) -> Result<f64> {
    check_point(z)?;
    check_point(w)?;
    let chord = (z - w).norm() / (2.0 * (z.im * w.im).sqrt());
    Ok(2.0 * chord.asinh())
}

/// A closed orbit of the diagonal group: the data of a closed geodesic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicOrbit {
    /// `diag(a, 1/a)` with `a > 1`.
    pub generator: GroupElement,
    /// `g` with `g^{-1} gamma g = generator`.
    pub conjugator: GroupElement,
    /// The canonical diagonal entry `a > 1`.
    pub scale: f64,
    /// `2 ln a`.
    pub length: f64,
    /// `1 / ln a`.
    pub q: f64,
    /// Parameter value of the basepoint of `t(theta)`.
    pub basepoint: f64,
    /// Entries of `gamma` when it is an integral matrix; enables
    /// [`GeodesicOrbit::reduced_point`].
    pub integral: Option<[i64; 4]>,
}

impl GeodesicOrbit {
    /// Point `g a(theta + basepoint) i`, `theta in [0, 1)`, traversing the
    /// geodesic once at constant speed.
    pub fn point(&self, theta: f64) -> Complex64 {
        let y = self.scale.powf(2.0 * (theta + self.basepoint));
        mobius_act(&self.conjugator, Complex64::new(0.0, y)).expect("point on the imaginary axis")
    }

    /// Same orbit with the basepoint moved by `shift` (in units of the period).
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            basepoint: self.basepoint + shift,
            ..*self
        }
    }

    /// Moves the basepoint to the Euclidean top of the axis, which keeps the
    /// fundamental segment as far from the real line as possible.
    pub fn centered(&self) -> Self {
        let [_, _, c, d] = self.conjugator.entries();
        if c.abs() < 1e-300 {
            return Self {
                basepoint: 0.0,
                ..*self
            };
        }
        // Im(g . iy) = y / (c^2 y^2 + d^2) peaks at y = |d / c|.
        let y_top = (d / c).abs();
        let theta = y_top.ln() / (2.0 * self.scale.ln()) - 0.5;
        Self {
            basepoint: theta,
            ..*self
        }
    }

    /// Axis endpoints on the real line (`None` stands for infinity).
    pub fn endpoints(&self) -> (Option<f64>, Option<f64>) {
        let [a, b, c, d] = self.conjugator.entries();
        let at_zero = if d.abs() < 1e-300 { None } else { Some(b / d) };
        let at_inf = if c.abs() < 1e-300 { None } else { Some(a / c) };
        (at_zero, at_inf)
    }

    /// `t(theta)` reduced into the standard fundamental domain of
    /// `PSL(2, Z)`, for integral `gamma`.
    ///
    /// Far along the axis the point sits at height about `e^{-length/2}`,
    /// where double precision coordinates no longer determine it; the orbit
    /// point and its reduction are therefore carried out in double-double
    /// arithmetic from the exact entries.
    pub fn reduced_point(&self, theta: f64) -> Option<Complex64> {
        let [mut p, mut q, mut r, mut s] = self.integral?;
        if p + s < 0 {
            (p, q, r, s) = (-p, -q, -r, -s);
        }
        let (p, q, r, s) = (TwoFloat::from(p), TwoFloat::from(q), TwoFloat::from(r), TwoFloat::from(s));
        let t = p + s;
        let big = (t + (t * t - 4.0).sqrt()) / 2.0;
        let small = big.recip();
        // Same eigenvector choice and normalization as the double precision
        // conjugator, so both describe one parametrization.
        let eigvec = |e: TwoFloat| {
            let (u1, v1) = (p - e, q);
            let (u2, v2) = (r, s - e);
            let n1 = f64::from(u1).hypot(f64::from(v1));
            let n2 = f64::from(u2).hypot(f64::from(v2));
            let (u, v) = if n1 >= n2 { (u1, v1) } else { (u2, v2) };
            (-v, u)
        };
        let (x1, y1) = eigvec(big);
        let (mut x2, mut y2) = eigvec(small);
        if f64::from(x1 * y2 - x2 * y1) < 0.0 {
            x2 = -x2;
            y2 = -y2;
        }
        let det = x1 * y2 - x2 * y1;
        let norm = det.sqrt().recip();
        let mut m = [x1 * norm, x2 * norm, y1 * norm, y2 * norm];
        let first = m.iter().map(|v| f64::from(*v)).find(|v| *v != 0.0).unwrap_or(1.0);
        if first < 0.0 {
            m = m.map(|v| -v);
        }
        let [a, b, c, d] = m;
        let y = TwoFloat::from(self.scale.powf(2.0 * (theta + self.basepoint)));
        let den = d * d + c * c * y * y;
        let mut x = (b * d + a * c * y * y) / den;
        let mut h = y / den;
        for _ in 0..100_000 {
            x -= x.round();
            let n2 = x * x + h * h;
            if f64::from(n2) >= 1.0 - 1e-15 {
                return Some(Complex64::new(f64::from(x), f64::from(h)));
            }
            x = -x / n2;
            h /= n2;
        }
        None
    }
}

/// Entries of `g` as integers when they all are (and fit a double mantissa).
fn integral_entries(g: &GroupElement) -> Option<[i64; 4]> {
    let e = g.entries();
    let ok = e.iter().all(|v| v.fract() == 0.0 && v.abs() < 2f64.powi(52));
    ok.then(|| e.map(|v| v as i64))
}

/// Diagonalizes a hyperbolic element: `gamma = g diag(a, 1/a) g^{-1}`.
pub fn geodesic_orbit_from_matrix(gamma: &GroupElement) -> Result<GeodesicOrbit> {
    let ratio = gamma.trace().abs();
    if !gamma.preserves_orientation() || ratio - 2.0 <= HYPERBOLIC_MARGIN {
        return Err(Error::NotHyperbolic { trace_ratio: ratio });
    }
    // Work with the trace-positive representative.
    let [mut p, mut q, mut r, mut s] = gamma.entries();
    if p + s < 0.0 {
        p = -p;
        q = -q;
        r = -r;
        s = -s;
    }
    let t = p + s;
    let disc = (t * t - 4.0).sqrt();
    let big = 0.5 * (t + disc);
    let small = 1.0 / big;

    let eigvec = |e: f64| -> (f64, f64) {
        // Rows of (gamma - e) are each orthogonal to the eigenvector; take the
        // better-conditioned one.
        let row1 = (p - e, q);
        let row2 = (r, s - e);
        let n1 = row1.0.hypot(row1.1);
        let n2 = row2.0.hypot(row2.1);
        let (u, v) = if n1 >= n2 { row1 } else { row2 };
        if u == 0.0 && v == 0.0 {
            (1.0, 0.0)
        } else {
            (-v, u)
        }
    };
    let (x1, y1) = eigvec(big);
    let (mut x2, mut y2) = eigvec(small);
    if x1 * y2 - x2 * y1 < 0.0 {
        x2 = -x2;
        y2 = -y2;
    }
    let conjugator = GroupElement::new(x1, x2, y1, y2)?;
    let generator = GroupElement::diagonal(big)?;
    let length = 2.0 * big.ln();
    Ok(GeodesicOrbit {
        generator,
        conjugator,
        scale: big,
        length,
        q: 1.0 / big.ln(),
        basepoint: 0.0,
        integral: integral_entries(gamma),
    })
}

/// A geodesic circle `h K g . i`: centre `h . i`, radius `d(i, g . i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleOrbit {
    pub h: GroupElement,
    pub g: GroupElement,
    pub radius: f64,
    pub center: Complex64,
}

impl CircleOrbit {
    pub fn from_elements(h: GroupElement, g: GroupElement) -> Result<Self> {
        if g.in_k(1e-12) {
            return Err(Error::DegenerateCircle);
        }
        let center = mobius_act(&h, Complex64::i())?;
        let radius = hyperbolic_distance(Complex64::i(), mobius_act(&g, Complex64::i())?)?;
        Ok(Self {
            h,
            g,
            radius,
            center,
        })
    }

    /// `h k(alpha) g . i`; one turn of the circle takes `alpha` over `[0, pi)`.
    pub fn point_at_angle(&self, alpha: f64) -> Complex64 {
        let m = self.h * GroupElement::rotation(alpha) * self.g;
        mobius_act(&m, Complex64::i()).expect("i is in the upper half-plane")
    }

    /// K-orbit parametrization `theta -> h k(2 pi theta) g . i` on `[0, 1)`.
    /// It runs around the circle twice, so only even characters see it.
    pub fn orbit_point(&self, theta: f64) -> Complex64 {
        self.point_at_angle(2.0 * PI * theta)
    }

    /// Hyperbolic circumference `2 pi sinh r`.
    pub fn length(&self) -> f64 {
        2.0 * PI * self.radius.sinh()
    }

    /// Euclidean centre and radius of the image circle.
    pub fn euclidean(&self) -> (Complex64, f64) {
        let c = self.center;
        (
            Complex64::new(c.re, c.im * self.radius.cosh()),
            c.im * self.radius.sinh(),
        )
    }
}

pub fn circle_orbit(center: Complex64, radius: f64) -> Result<CircleOrbit> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Domain(format!("circle radius must be positive, got {radius}")));
    }
    let h = GroupElement::translation_to(center)?;
    let g = GroupElement::diagonal((0.5 * radius).exp())?;
    CircleOrbit::from_elements(h, g)
}
