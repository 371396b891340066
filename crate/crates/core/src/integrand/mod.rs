//! Multiscale integrands `f(x, y¹, …, yⁿ, z)`: construction, evaluation,
//! gradients in `z`, and sample-based audits of convexity and growth.

mod audit;
mod file;
mod law;

pub use audit::{lipschitz_bound, check_convexity, check_growth, check_lipschitz, AuditReport, Halton, Sampling};
pub use file::IntegrandFile;
pub use law::{LocalDensity, MaterialLaw};

use serde::{Deserialize, Serialize};

use crate::cellset::CellSet;
use crate::error::{invalid, Error, Result};
use crate::exact::{on_diagonal, rational_from_f64, to_f64, Rational};
use crate::expr::Point;

/// Default `eta` for `p < 2`.
pub const DEFAULT_ETA: f64 = 1e-8;

pub fn default_eta(p: f64) -> f64 {
    if p < 2.0 {
        DEFAULT_ETA
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthBounds {
    pub c1: f64,
    pub c2: f64,
    pub p: f64,
}

impl GrowthBounds {
    pub fn new(c1: f64, c2: f64, p: f64) -> Result<Self> {
        let g = Self { c1, c2, p };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 >= self.c1 && self.c2.is_finite()) {
            return invalid(format!("growth constants need 0 < c1 <= c2, got c1={}, c2={}", self.c1, self.c2));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return invalid(format!("growth exponent must lie in (1, inf), got {}", self.p));
        }
        Ok(())
    }

    /// `c1 |z|^p`
    pub fn lower(&self, z: &[f64]) -> f64 {
        self.c1 * norm(z).powf(self.p)
    }

    /// `c2 (1 + |z|^p)`
    pub fn upper(&self, z: &[f64]) -> f64 {
        self.c2 * (1.0 + norm(z).powf(self.p))
    }
}

pub(crate) fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorelVariant {
    /// `[2 - χ_A(x, y)] |z|^p`, `A` the union of all diagonals `y = i x - j`.
    Brutto,
    /// `[2 - χ_B(x, y)] |z|^p`, `B` the union over even `i`.
    FinalUno,
    /// `[2 - χ_B(y¹, y²)] |z|^p`, two scales.
    FinalDue,
}

impl BorelVariant {
    pub fn scales(&self) -> usize {
        match self {
            BorelVariant::Brutto | BorelVariant::FinalUno => 1,
            BorelVariant::FinalDue => 2,
        }
    }

    /// Whether diagonal index `i` belongs to the union defining the set.
    pub fn uses_index(&self, i: u32) -> bool {
        match self {
            BorelVariant::Brutto => i >= 1,
            BorelVariant::FinalUno | BorelVariant::FinalDue => i >= 2 && i % 2 == 0,
        }
    }

    /// Exact membership of `(a, b)` in the diagonal union, with indices
    /// capped at `i_max`.
    pub fn member(&self, a: &Rational, b: &Rational, i_max: u32) -> bool {
        use crate::exact::is_unit_interval;
        if !is_unit_interval(a) || !is_unit_interval(b) {
            return false;
        }
        (1..=i_max).any(|i| self.uses_index(i) && on_diagonal(i as i128, a, b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Form {
    Simple(MaterialLaw),
    /// `χ f_inside + (1 - χ) f_outside` with `χ = ∏ₖ χ_{P_k}(yᵏ)`.
    Composite { sets: Vec<CellSet>, inside: MaterialLaw, outside: MaterialLaw },
    BorelDiagonal { variant: BorelVariant, i_max: u32 },
}

/// An energy density `f(x, y¹, …, yⁿ, z)` on `Ω × □ⁿ × R^d`, scalar target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntegrandFile", into = "IntegrandFile")]
pub struct Integrand {
    dim: usize,
    scales: usize,
    form: Form,
    growth: GrowthBounds,
}

impl Integrand {
    pub fn simple(dim: usize, scales: usize, law: MaterialLaw, growth: GrowthBounds) -> Result<Self> {
        let f = Self { dim, scales, form: Form::Simple(law), growth };
        f.validate()?;
        Ok(f)
    }

    /// `|z|^p` in `dim` dimensions with `scales` (unused) fast variables.
    pub fn power(dim: usize, scales: usize, p: f64) -> Result<Self> {
        Self::simple(dim, scales, MaterialLaw::power(1.0), GrowthBounds::new(1.0, 1.0, p)?)
    }

    pub fn borel(variant: BorelVariant, p: f64, i_max: u32) -> Result<Self> {
        let f = Self {
            dim: 1,
            scales: variant.scales(),
            form: Form::BorelDiagonal { variant, i_max },
            growth: GrowthBounds::new(1.0, 2.0, p)?,
        };
        f.validate()?;
        Ok(f)
    }

    pub(crate) fn from_parts(dim: usize, scales: usize, form: Form, growth: GrowthBounds) -> Result<Self> {
        let f = Self { dim, scales, form, growth };
        f.validate()?;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn form(&self) -> &Form {
        &self.form
    }

    pub fn growth(&self) -> &GrowthBounds {
        &self.growth
    }

    pub fn p(&self) -> f64 {
        self.growth.p
    }

    fn validate(&self) -> Result<()> {
        self.growth.validate()?;
        if !(1..=2).contains(&self.dim) {
            return invalid(format!("dimension must be 1 or 2, got {}", self.dim));
        }
        if self.scales == 0 {
            return invalid("at least one scale is required");
        }
        let (d, n, p) = (self.dim, self.scales, self.growth.p);
        match &self.form {
            Form::Simple(law) => law.validate(d, n, p)?,
            Form::Composite { sets, inside, outside } => {
                if sets.len() != n {
                    return invalid(format!("composite needs {n} sets, got {}", sets.len()));
                }
                for s in sets {
                    if s.dim() != d {
                        return invalid(format!("set of dimension {} in a {d}D integrand", s.dim()));
                    }
                    s.validate()?;
                }
                inside.validate(d, n, p)?;
                outside.validate(d, n, p)?;
            }
            Form::BorelDiagonal { variant, i_max } => {
                if d != 1 || n != variant.scales() {
                    return invalid(format!("{variant:?} is defined for d = 1 with {} scale(s)", variant.scales()));
                }
                if *i_max == 0 {
                    return invalid("i_max must be positive");
                }
            }
        }
        self.check_coefficients()
    }

    /// Positivity of the coefficient fields on a deterministic sample.
    fn check_coefficients(&self) -> Result<()> {
        let laws: Vec<&MaterialLaw> = match &self.form {
            Form::Simple(l) => vec![l],
            Form::Composite { inside, outside, .. } => vec![inside, outside],
            Form::BorelDiagonal { .. } => return Ok(()),
        };
        let dims = self.dim * (1 + self.scales);
        let mut h = Halton::new(dims);
        let mut buf = vec![0.0; dims];
        for _ in 0..1024 {
            h.next_into(&mut buf);
            let pt = Point::new(&buf[..self.dim], &buf[self.dim..]);
            for l in &laws {
                l.at(pt, self.growth.p)?;
            }
        }
        Ok(())
    }

    /// Errors unless the integrand may be fed to homogenization and
    /// minimization routines.
    pub fn ensure_admissible(&self) -> Result<()> {
        match &self.form {
            Form::BorelDiagonal { variant, .. } => Err(Error::NotAdmissible(format!(
                "{variant:?} is a Borel diagonal integrand; use the counterexample routines"
            ))),
            Form::Simple(l) if !l.is_convex() => Err(Error::NotAdmissible("law is not convex".into())),
            Form::Composite { inside, outside, .. } if !inside.is_convex() || !outside.is_convex() => {
                Err(Error::NotAdmissible("law is not convex".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn is_admissible(&self) -> bool {
        self.ensure_admissible().is_ok()
    }

    pub fn depends_on_x(&self) -> bool {
        match &self.form {
            Form::Simple(l) => l.depends_on_x(),
            Form::Composite { inside, outside, .. } => inside.depends_on_x() || outside.depends_on_x(),
            Form::BorelDiagonal { variant, .. } => *variant != BorelVariant::FinalDue,
        }
    }

    pub fn depends_on_y(&self) -> bool {
        match &self.form {
            Form::Simple(l) => l.depends_on_y(),
            Form::Composite { sets, inside, outside } => {
                inside.depends_on_y()
                    || outside.depends_on_y()
                    || (inside != outside && sets.iter().any(|s| s.measure() > 0.0 && s.measure() < 1.0))
            }
            Form::BorelDiagonal { .. } => true,
        }
    }

    fn check_point(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.dim || y.len() != self.dim * self.scales {
            return Err(Error::Domain(format!(
                "expected x of length {} and y of length {}",
                self.dim,
                self.dim * self.scales
            )));
        }
        if let Some(v) = y.iter().find(|v| !(**v >= 0.0 && **v < 1.0)) {
            return Err(Error::Domain(format!("fast variable {v} not reduced to [0,1)")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite x".into()));
        }
        Ok(())
    }

    /// The density at `(x, y)` as a function of `z` alone.
    pub fn local(&self, x: &[f64], y: &[f64]) -> Result<LocalDensity> {
        self.check_point(x, y)?;
        let pt = Point::new(x, y);
        let p = self.growth.p;
        match &self.form {
            Form::Simple(law) => law.at(pt, p),
            Form::Composite { sets, inside, outside } => {
                let d = self.dim;
                let chi = sets.iter().enumerate().all(|(k, s)| s.contains(&y[k * d..(k + 1) * d]));
                if chi {
                    inside.at(pt, p)
                } else {
                    outside.at(pt, p)
                }
            }
            Form::BorelDiagonal { .. } => {
                let xr: Vec<Rational> = x.iter().map(|v| rational_from_f64(*v)).collect::<Option<_>>().ok_or_else(
                    || Error::Domain("x has no exact dyadic representation".into()),
                )?;
                let yr: Vec<Rational> = y.iter().map(|v| rational_from_f64(*v)).collect::<Option<_>>().ok_or_else(
                    || Error::Domain("y has no exact dyadic representation".into()),
                )?;
                self.local_exact(&xr, &yr)
            }
        }
    }

    /// Like [`local`](Self::local) but with exact rational coordinates; the
    /// diagonal sets of the Borel examples are decided without rounding.
    pub fn local_exact(&self, x: &[Rational], y: &[Rational]) -> Result<LocalDensity> {
        match &self.form {
            Form::BorelDiagonal { variant, i_max } => {
                if x.len() != 1 || y.len() != self.scales {
                    return Err(Error::Domain("Borel integrands take scalar x and y".into()));
                }
                let hit = match variant {
                    BorelVariant::Brutto | BorelVariant::FinalUno => variant.member(&x[0], &y[0], *i_max),
                    BorelVariant::FinalDue => variant.member(&y[0], &y[1], *i_max),
                };
                if y.iter().any(|v| !crate::exact::is_unit_interval(v)) {
                    return Err(Error::Domain("fast variable not reduced to [0,1)".into()));
                }
                let weight = if hit { 1.0 } else { 2.0 };
                Ok(LocalDensity::Power { a: weight, p: self.growth.p })
            }
            _ => {
                let xf: Vec<f64> = x.iter().map(to_f64).collect();
                let yf: Vec<f64> = y.iter().map(to_f64).collect();
                self.local(&xf, &yf)
            }
        }
    }

    /// `f(x, y¹, …, yⁿ, z)`; `y` is scale-major, each component in `[0,1)`.
    pub fn eval(&self, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64> {
        check_z(z, self.dim)?;
        Ok(self.local(x, y)?.value(z))
    }

    pub fn eval_exact(&self, x: &[Rational], y: &[Rational], z: &[f64]) -> Result<f64> {
        check_z(z, self.dim)?;
        Ok(self.local_exact(x, y)?.value(z))
    }

    /// Analytic `∂f/∂z`, with `|z|` regularized by `eta` (required `> 0`
    /// when `p < 2`).
    pub fn grad_z(&self, x: &[f64], y: &[f64], z: &[f64], eta: f64) -> Result<Vec<f64>> {
        if let Form::BorelDiagonal { .. } = self.form {
            return Err(Error::Unsupported("z-gradients of Borel diagonal integrands".into()));
        }
        check_z(z, self.dim)?;
        if self.growth.p < 2.0 && !(eta > 0.0) {
            return invalid("p < 2 requires a positive regularization eta");
        }
        let local = self.local(x, y)?;
        let mut g = vec![0.0; self.dim];
        local.gradient_reg(z, eta, &mut g);
        Ok(g)
    }
}

fn check_z(z: &[f64], d: usize) -> Result<()> {
    if z.len() != d {
        return Err(Error::Domain(format!("z has length {}, expected {d}", z.len())));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite z".into()));
    }
    Ok(())
}

/// Two-material composite `∏ χ_{P_k}(yᵏ) f_inside + (1 - ∏ χ_{P_k}(yᵏ)) f_outside`.
pub fn build_composite(
    sets: Vec<CellSet>,
    inside: MaterialLaw,
    outside: MaterialLaw,
    growth: GrowthBounds,
) -> Result<Integrand> {
    let Some(first) = sets.first() else {
        return invalid("composite needs at least one set");
    };
    let d = first.dim();
    if sets.iter().any(|s| s.dim() != d) {
        return invalid("all sets of a composite must share one dimension");
    }
    let n = sets.len();
    Integrand::from_parts(d, n, Form::Composite { sets, inside, outside }, growth)
}
