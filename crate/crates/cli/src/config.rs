use std::path::PathBuf;

use hyperperiods::eigen::{HejhalOptions, Parity, Surface};
use hyperperiods::hypgeom::GroupElement;
use hyperperiods::periods::Curve;
use hyperperiods::verify::{Tolerances, REFERENCE_BRACKETS, REFERENCE_GEODESIC, T_GRID};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub parity: Parity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CurveSpec {
    /// Closed geodesic of a hyperbolic element of `PSL(2, Z)`.
    Geodesic { matrix: [f64; 4] },
    /// Geodesic circle; `center` is `[x, y]` in the upper half-plane.
    Circle { center: [f64; 2], radius: f64 },
    Torus { direction: [i64; 2], offset: [f64; 2] },
    Equator,
}

impl CurveSpec {
    pub fn build(&self) -> hyperperiods::Result<Curve> {
        match *self {
            CurveSpec::Geodesic { matrix: [a, b, c, d] } => Curve::closed_geodesic(&GroupElement::new(a, b, c, d)?),
            CurveSpec::Circle { center, radius } => Curve::circle(Complex64::new(center[0], center[1]), radius),
            CurveSpec::Torus { direction, offset } => {
                Curve::torus_geodesic((direction[0], direction[1]), (offset[0], offset[1]))
            }
            CurveSpec::Equator => Ok(Curve::SphereEquator),
        }
    }

    pub fn surface(&self) -> Surface {
        match self {
            CurveSpec::Geodesic { .. } | CurveSpec::Circle { .. } => Surface::Modular,
            CurveSpec::Torus { .. } => Surface::Torus,
            CurveSpec::Equator => Surface::Sphere,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    /// Period tables, ratios and fits for the selected surface.
    Periods,
    /// `Y_n^n` on the equator and the fitted exponent.
    SphereSharpness,
    /// Model densities with their regime tags.
    DensityRegimes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub m0: usize,
    pub y0: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = HejhalOptions::default();
        Self { m0: d.m0, y0: d.y0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityRecipe {
    /// Values of `t` with `lambda = i t`.
    pub t: Vec<f64>,
    pub q: Vec<f64>,
    pub n_max: i64,
    /// Circle densities use `g = diag(a, 1/a)`.
    pub circle_dilation: f64,
}

impl Default for DensityRecipe {
    fn default() -> Self {
        Self {
            t: vec![40.0, 80.0, 160.0],
            q: vec![0.5, std::f64::consts::LOG2_E, 2.0],
            n_max: 200,
            circle_dilation: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub surface: Surface,
    pub recipes: Vec<Recipe>,
    pub t_grid: Vec<u32>,
    /// Largest `|n|` written to period CSVs.
    pub n_max: i64,
    /// Relative floor below which a density entry counts as zero.
    pub density_threshold: f64,
    pub out: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub sphere_degrees: Vec<u32>,
    pub torus_modes: Vec<[i64; 2]>,
    pub brackets: Vec<Bracket>,
    pub solver: SolverConfig,
    pub curves: Vec<CurveSpec>,
    pub density: DensityRecipe,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            surface: Surface::Modular,
            recipes: vec![Recipe::Periods, Recipe::SphereSharpness, Recipe::DensityRegimes],
            t_grid: T_GRID.to_vec(),
            n_max: 64,
            density_threshold: 1e-12,
            out: None,
            cache: None,
            sphere_degrees: (10..=200).step_by(10).collect(),
            torus_modes: vec![[1, 0], [0, 5], [3, 4]],
            brackets: REFERENCE_BRACKETS
                .iter()
                .map(|&(lo, hi, parity)| Bracket { lo, hi, parity })
                .collect(),
            solver: SolverConfig::default(),
            curves: vec![
                CurveSpec::Geodesic {
                    matrix: REFERENCE_GEODESIC,
                },
                CurveSpec::Circle {
                    center: [0.1, 1.2],
                    radius: 1.4f64.asinh(),
                },
            ],
            density: DensityRecipe::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("RunConfig serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.tolerances.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.density_threshold > 0.0) {
            return bad("density_threshold must be positive".into());
        }
        if self.t_grid.is_empty() || self.t_grid.contains(&0) {
            return bad("t_grid must be nonempty and positive".into());
        }
        if self.n_max < 1 {
            return bad("n_max must be at least 1".into());
        }
        for b in &self.brackets {
            if !(b.lo > 0.0 && b.hi > b.lo) {
                return bad(format!("bracket [{}, {}] is not an interval in R > 0", b.lo, b.hi));
            }
        }
        if !(self.solver.y0 > 0.0 && self.solver.y0 < 3f64.sqrt() / 2.0) || self.solver.m0 < 2 {
            return bad("solver needs m0 >= 2 and 0 < y0 < sqrt(3)/2".into());
        }
        if self.density.t.iter().chain(&self.density.q).any(|v| !(*v > 0.0)) || !(self.density.circle_dilation > 0.0) {
            return bad("density recipe values must be positive".into());
        }
        for c in &self.curves {
            c.build().map_err(|e| CliError::Config(format!("curve {c:?}: {e}")))?;
        }
        Ok(())
    }

    /// Curves of the configured surface.
    pub fn surface_curves(&self) -> Vec<&CurveSpec> {
        self.curves.iter().filter(|c| c.surface() == self.surface).collect()
    }

    pub fn hejhal_options(&self) -> HejhalOptions {
        HejhalOptions {
            m0: self.solver.m0,
            y0: self.solver.y0,
            ..HejhalOptions::default()
        }
    }
}
