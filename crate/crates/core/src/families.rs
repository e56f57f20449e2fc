//! Named symbol families with a global evaluator (for matrices) and germs
//! at each well (for the WKB engine).
//!
//! CP¹ symbols are written in the sphere coordinates (X, Y, Z) of the chart
//! point z, with the north pole Z = 1 at z = 0. The south pole is reached by
//! the rotation (X, Y, Z) ↦ (X, −Y, −Z), which is z ↦ 1/z.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::quantization::Evaluable;
use crate::series::PowerSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SymbolSpec {
    /// |z|² on Bargmann.
    IsotropicQuadratic,
    /// a q² + b p² with z = q + ip.
    AnisotropicQuadratic { a: f64, b: f64 },
    /// |z|² + ε(z² + z̄²)².
    QuarticWell { epsilon: f64 },
    /// Σ_j χ_j (1 − Z)^{j+1}.
    Cp1HeightWell { chi: Vec<f64> },
    /// Σ_j χ_j s^{j+1} with s = 1 − Z²; wells at both poles.
    Cp1DoubleWell { chi: Vec<f64> },
    /// The double well plus H·β((Z − c)/w), β(u) = exp(1 − 1/(1 − u²)) on |u| < 1.
    Cp1DoubleWellPerturbed { chi: Vec<f64>, center: f64, width: f64, height: f64 },
    /// (1 − Z) + αX².
    Cp1AnisotropicWell { alpha: f64 },
    /// X² + Y²(a + bZ): wells at both poles with different Hessians.
    Cp1TwoWell { a: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Well {
    North,
    South,
}

/// Chart point → (X, Y, Z) on the unit sphere.
pub fn sphere_point(z: Complex64) -> (f64, f64, f64) {
    let t = z.norm_sqr();
    let d = 1.0 + t;
    (2.0 * z.re / d, 2.0 * z.im / d, (1.0 - t) / d)
}

/// (X, Y, Z) as series in (x, x̄) at the north pole.
pub fn sphere_series(degree: usize) -> (PowerSeries, PowerSeries, PowerSeries) {
    let one = Complex64::new(1.0, 0.0);
    let t = PowerSeries::monomial(2, degree, &[1, 1], one);
    let inv = t.add_constant(one).recip().expect("unit constant term");
    let x = PowerSeries::variable(2, degree, 0);
    let xb = PowerSeries::variable(2, degree, 1);
    let big_x = &(&x + &xb) * &inv;
    let big_y = &(&x - &xb).scale(Complex64::new(0.0, -1.0)) * &inv;
    let big_z = &t.scale_real(-1.0).add_constant(one) * &inv;
    (big_x, big_y, big_z)
}

fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

fn poly_in(chi: &[f64], s: f64) -> f64 {
    chi.iter().rev().fold(0.0, |acc, &c| (acc + c) * s)
}

fn poly_series(chi: &[f64], s: &PowerSeries) -> PowerSeries {
    let mut acc = PowerSeries::zeros(2, s.max_degree());
    for &c in chi.iter().rev() {
        acc = &acc.add_constant(Complex64::new(c, 0.0)) * s;
    }
    acc
}

impl SymbolSpec {
    pub fn model_kind(&self) -> ModelKind {
        match self {
            SymbolSpec::IsotropicQuadratic | SymbolSpec::AnisotropicQuadratic { .. } | SymbolSpec::QuarticWell { .. } => {
                ModelKind::Bargmann
            }
            _ => ModelKind::Cp1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SymbolSpec::IsotropicQuadratic => "isotropic-quadratic",
            SymbolSpec::AnisotropicQuadratic { .. } => "anisotropic-quadratic",
            SymbolSpec::QuarticWell { .. } => "quartic-well",
            SymbolSpec::Cp1HeightWell { .. } => "cp1-height-well",
            SymbolSpec::Cp1DoubleWell { .. } => "cp1-double-well",
            SymbolSpec::Cp1DoubleWellPerturbed { .. } => "cp1-double-well-perturbed",
            SymbolSpec::Cp1AnisotropicWell { .. } => "cp1-anisotropic-well",
            SymbolSpec::Cp1TwoWell { .. } => "cp1-two-well",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        match self {
            SymbolSpec::AnisotropicQuadratic { a, b } if !(*a > 0.0 && *b > 0.0) => {
                bad(format!("anisotropic-quadratic needs a, b > 0 (got {a}, {b})"))
            }
            SymbolSpec::QuarticWell { epsilon } if !(*epsilon >= 0.0) => bad(format!("quartic-well needs ε ≥ 0 (got {epsilon})")),
            SymbolSpec::Cp1HeightWell { chi } | SymbolSpec::Cp1DoubleWell { chi } if chi.first().is_none_or(|&c| c <= 0.0) => {
                bad("χ must start with a positive coefficient".into())
            }
            SymbolSpec::Cp1DoubleWellPerturbed { chi, center, width, height } => {
                if chi.first().is_none_or(|&c| c <= 0.0) {
                    return bad("χ must start with a positive coefficient".into());
                }
                if !(*width > 0.0) || !(*height >= 0.0) || center - width <= 0.0 || center + width >= 1.0 {
                    return bad(format!(
                        "bump support ({}, {}) must lie strictly inside the northern hemisphere, off the pole",
                        center - width,
                        center + width
                    ));
                }
                Ok(())
            }
            SymbolSpec::Cp1AnisotropicWell { alpha } if !(*alpha > -0.5) => {
                bad(format!("cp1-anisotropic-well needs α > −1/2 (got {alpha})"))
            }
            SymbolSpec::Cp1TwoWell { a, b } if !(*a > b.abs()) => bad(format!("cp1-two-well needs a > |b| (got {a}, {b})")),
            _ => Ok(()),
        }
    }

    pub fn wells(&self) -> Vec<Well> {
        match self {
            SymbolSpec::Cp1DoubleWell { .. } | SymbolSpec::Cp1DoubleWellPerturbed { .. } | SymbolSpec::Cp1TwoWell { .. } => {
                vec![Well::North, Well::South]
            }
            _ => vec![Well::North],
        }
    }

    /// Σ c z^p z̄^q for the Bargmann families.
    pub fn bargmann_terms(&self) -> Option<Vec<(u32, u32, Complex64)>> {
        let c = |x: f64| Complex64::new(x, 0.0);
        match self {
            SymbolSpec::IsotropicQuadratic => Some(vec![(1, 1, c(1.0))]),
            SymbolSpec::AnisotropicQuadratic { a, b } => {
                Some(vec![(2, 0, c((a - b) / 4.0)), (0, 2, c((a - b) / 4.0)), (1, 1, c((a + b) / 2.0))])
            }
            SymbolSpec::QuarticWell { epsilon } => Some(vec![
                (1, 1, c(1.0)),
                (4, 0, c(*epsilon)),
                (2, 2, c(2.0 * epsilon)),
                (0, 4, c(*epsilon)),
            ]),
            _ => None,
        }
    }

    fn sphere_value(&self, x: f64, y: f64, z: f64) -> f64 {
        match self {
            SymbolSpec::Cp1HeightWell { chi } => poly_in(chi, 1.0 - z),
            SymbolSpec::Cp1DoubleWell { chi } => poly_in(chi, 1.0 - z * z),
            SymbolSpec::Cp1DoubleWellPerturbed { chi, center, width, height } => {
                poly_in(chi, 1.0 - z * z) + height * bump((z - center) / width)
            }
            SymbolSpec::Cp1AnisotropicWell { alpha } => 1.0 - z + alpha * x * x,
            SymbolSpec::Cp1TwoWell { a, b } => x * x + y * y * (a + b * z),
            _ => unreachable!("not a sphere family"),
        }
    }

    /// The analytic part in sphere coordinates; the bump vanishes near both poles.
    fn sphere_germ(&self, x: &PowerSeries, y: &PowerSeries, z: &PowerSeries) -> PowerSeries {
        let d = x.max_degree();
        let one = Complex64::new(1.0, 0.0);
        match self {
            SymbolSpec::Cp1HeightWell { chi } => poly_series(chi, &z.scale_real(-1.0).add_constant(one)),
            SymbolSpec::Cp1DoubleWell { chi } | SymbolSpec::Cp1DoubleWellPerturbed { chi, .. } => {
                poly_series(chi, &(z * z).scale_real(-1.0).add_constant(one))
            }
            SymbolSpec::Cp1AnisotropicWell { alpha } => &z.scale_real(-1.0).add_constant(one) + &(x * x).scale_real(*alpha),
            SymbolSpec::Cp1TwoWell { a, b } => &(x * x) + &(&(y * y) * &z.scale_real(*b).add_constant(Complex64::new(*a, 0.0))),
            _ => PowerSeries::zeros(2, d),
        }
    }

    /// Germ of f in (x, x̄) at the given well, in a chart centred there.
    pub fn germ(&self, well: Well, degree: usize) -> Result<PowerSeries> {
        self.validate()?;
        if !self.wells().contains(&well) {
            return Err(Error::Parameter(format!("{} has no well at the {well:?} pole", self.name())));
        }
        if let Some(terms) = self.bargmann_terms() {
            return PowerSeries::from_terms(2, degree, terms.into_iter().map(|(p, q, c)| (vec![p, q], c)));
        }
        let (x, y, z) = sphere_series(degree);
        Ok(match well {
            Well::North => self.sphere_germ(&x, &y, &z),
            Well::South => self.sphere_germ(&x, &-&y, &-&z),
        })
    }

    /// Value of f at a point of the given well's chart.
    pub fn eval_at(&self, well: Well, z: Complex64) -> f64 {
        if let Some(terms) = self.bargmann_terms() {
            return terms.iter().map(|&(p, q, c)| c * z.powu(p) * z.conj().powu(q)).sum::<Complex64>().re;
        }
        let (x, y, h) = sphere_point(z);
        match well {
            Well::North => self.sphere_value(x, y, h),
            Well::South => self.sphere_value(x, -y, -h),
        }
    }
}

impl Evaluable for SymbolSpec {
    fn eval(&self, z: Complex64) -> f64 {
        self.eval_at(Well::North, z)
    }

    fn polynomial_terms(&self) -> Option<Vec<(u32, u32, Complex64)>> {
        self.bargmann_terms()
    }
}
