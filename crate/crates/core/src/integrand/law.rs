use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expr::{Expr, Point};

/// Energy law of one material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialLaw {
    /// `a(x, y) |z|^p` with `p` taken from the integrand's growth bounds.
    PowerIso { coef: Expr },
    /// `z · A(x, y) z`; `matrix` is `[a11]` in 1D and `[a11, a12, a22]` in 2D.
    QuadAniso { matrix: Vec<Expr> },
    /// `a(x, y) min(|z|^p, cap)`. Not convex; exists so the audits have a
    /// failing fixture and is rejected by every minimization.
    Saturated { coef: Expr, cap: f64 },
}

impl MaterialLaw {
    pub fn power(coef: impl Into<Expr>) -> Self {
        MaterialLaw::PowerIso { coef: coef.into() }
    }

    pub fn validate(&self, d: usize, n: usize, p: f64) -> Result<()> {
        match self {
            MaterialLaw::PowerIso { coef } => coef.validate(d, n),
            MaterialLaw::QuadAniso { matrix } => {
                if p != 2.0 {
                    return invalid("quadratic anisotropic law requires p = 2");
                }
                let want = if d == 1 { 1 } else { 3 };
                if matrix.len() != want {
                    return invalid(format!("quadratic law needs {want} matrix entries in {d}D"));
                }
                matrix.iter().try_for_each(|e| e.validate(d, n))
            }
            MaterialLaw::Saturated { coef, cap } => {
                if !(*cap > 0.0 && cap.is_finite()) {
                    return invalid("saturated law needs a positive cap");
                }
                coef.validate(d, n)
            }
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, MaterialLaw::Saturated { .. })
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            MaterialLaw::PowerIso { coef } | MaterialLaw::Saturated { coef, .. } => coef.depends_on_x(),
            MaterialLaw::QuadAniso { matrix } => matrix.iter().any(Expr::depends_on_x),
        }
    }

    pub fn depends_on_y(&self) -> bool {
        match self {
            MaterialLaw::PowerIso { coef } | MaterialLaw::Saturated { coef, .. } => coef.depends_on_y(),
            MaterialLaw::QuadAniso { matrix } => matrix.iter().any(Expr::depends_on_y),
        }
    }

    /// Freezes the coefficient fields at a point.
    pub fn at(&self, pt: Point<'_>, p: f64) -> Result<LocalDensity> {
        let local = match self {
            MaterialLaw::PowerIso { coef } => LocalDensity::Power { a: coef.eval(pt), p },
            MaterialLaw::QuadAniso { matrix } => {
                let m = if matrix.len() == 1 {
                    [matrix[0].eval(pt), 0.0, 0.0]
                } else {
                    [matrix[0].eval(pt), matrix[1].eval(pt), matrix[2].eval(pt)]
                };
                LocalDensity::Quadratic { m, dim: if matrix.len() == 1 { 1 } else { 2 } }
            }
            MaterialLaw::Saturated { coef, cap } => LocalDensity::Saturated { a: coef.eval(pt), p, cap: *cap },
        };
        local.check_coefficients()?;
        Ok(local)
    }
}

/// A material law with its coefficients frozen at one `(x, y)`: a density of
/// `z` alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalDensity {
    Power { a: f64, p: f64 },
    Quadratic { m: [f64; 3], dim: usize },
    Saturated { a: f64, p: f64, cap: f64 },
}

fn norm_sq(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum()
}

impl LocalDensity {
    fn check_coefficients(&self) -> Result<()> {
        match *self {
            LocalDensity::Power { a, .. } | LocalDensity::Saturated { a, .. } => {
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::Invalid(format!("coefficient {a} is not positive")));
                }
            }
            LocalDensity::Quadratic { m, dim } => {
                let (lo, _) = self.eigen_range();
                if !(lo > 0.0) || m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Invalid(format!(
                        "matrix {m:?} (dim {dim}) is not positive definite"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Extreme eigenvalues of the quadratic form (coefficient for scalar laws).
    pub fn eigen_range(&self) -> (f64, f64) {
        match *self {
            LocalDensity::Power { a, .. } | LocalDensity::Saturated { a, .. } => (a, a),
            LocalDensity::Quadratic { m, dim } => {
                if dim == 1 {
                    (m[0], m[0])
                } else {
                    let tr = m[0] + m[2];
                    let det = m[0] * m[2] - m[1] * m[1];
                    let disc = ((tr * tr / 4.0) - det).max(0.0).sqrt();
                    (tr / 2.0 - disc, tr / 2.0 + disc)
                }
            }
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.value_reg(z, 0.0)
    }

    /// Density with `|z|` replaced by `sqrt(|z|² + eta²)` and shifted so the
    /// value at `z = 0` stays 0.
    pub fn value_reg(&self, z: &[f64], eta: f64) -> f64 {
        match *self {
            LocalDensity::Power { a, p } => {
                let r2 = norm_sq(z);
                if eta > 0.0 {
                    a * ((r2 + eta * eta).powf(p / 2.0) - eta.powf(p))
                } else if p == 2.0 {
                    a * r2
                } else {
                    a * r2.sqrt().powf(p)
                }
            }
            LocalDensity::Quadratic { m, dim } => {
                if dim == 1 {
                    m[0] * z[0] * z[0]
                } else {
                    m[0] * z[0] * z[0] + 2.0 * m[1] * z[0] * z[1] + m[2] * z[1] * z[1]
                }
            }
            LocalDensity::Saturated { a, p, cap } => a * norm_sq(z).sqrt().powf(p).min(cap),
        }
    }

    /// Analytic gradient of [`value_reg`](Self::value_reg), written into `out`.
    pub fn gradient_reg(&self, z: &[f64], eta: f64, out: &mut [f64]) {
        match *self {
            LocalDensity::Power { a, p } => {
                let r2 = norm_sq(z) + eta * eta;
                let scale = if p == 2.0 {
                    2.0 * a
                } else if r2 == 0.0 {
                    0.0
                } else {
                    a * p * r2.powf(p / 2.0 - 1.0)
                };
                for (o, v) in out.iter_mut().zip(z) {
                    *o = scale * v;
                }
            }
            LocalDensity::Quadratic { m, dim } => {
                if dim == 1 {
                    out[0] = 2.0 * m[0] * z[0];
                } else {
                    out[0] = 2.0 * (m[0] * z[0] + m[1] * z[1]);
                    out[1] = 2.0 * (m[1] * z[0] + m[2] * z[1]);
                }
            }
            LocalDensity::Saturated { a, p, cap } => {
                let r = norm_sq(z).sqrt();
                let scale = if r == 0.0 || r.powf(p) >= cap { 0.0 } else { a * p * r.powf(p - 2.0) };
                for (o, v) in out.iter_mut().zip(z) {
                    *o = scale * v;
                }
            }
        }
    }

    /// Multiplies the density by a non-negative factor.
    pub fn scaled(&self, s: f64) -> Self {
        match *self {
            LocalDensity::Power { a, p } => LocalDensity::Power { a: a * s, p },
            LocalDensity::Quadratic { m, dim } => LocalDensity::Quadratic { m: [m[0] * s, m[1] * s, m[2] * s], dim },
            LocalDensity::Saturated { a, p, cap } => LocalDensity::Saturated { a: a * s, p, cap },
        }
    }
}
