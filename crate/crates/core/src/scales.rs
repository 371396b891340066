//! Scale families `ρ_k(ε) = ε^{α_k}` and the fast variables `⟨x/ρ_k⟩`.

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exact::{checked_pow, frac_scaled, to_f64, Coef, Rational};

/// A small parameter. `Inverse(h)` is `ε = 1/h`, which keeps the fast
/// variables exactly periodic on the unit cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eps {
    Inverse(u64),
    Value(f64),
}

impl Eps {
    pub fn value(&self) -> f64 {
        match *self {
            Eps::Inverse(h) => 1.0 / h as f64,
            Eps::Value(e) => e,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Eps::Inverse(0) => Err(Error::Domain("eps = 1/h needs h > 0".into())),
            Eps::Value(e) if !(e > 0.0 && e.is_finite()) => Err(Error::Domain(format!("eps = {e} must be positive"))),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Eps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Eps::Inverse(h) => write!(f, "1/{h}"),
            Eps::Value(e) => write!(f, "{e}"),
        }
    }
}

/// Strictly increasing positive exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Coef>", into = "Vec<Coef>")]
pub struct ScaleFamily {
    exponents: Vec<Coef>,
}

impl TryFrom<Vec<Coef>> for ScaleFamily {
    type Error = Error;
    fn try_from(exponents: Vec<Coef>) -> Result<Self> {
        Self::new(exponents)
    }
}

impl From<ScaleFamily> for Vec<Coef> {
    fn from(s: ScaleFamily) -> Self {
        s.exponents
    }
}

impl ScaleFamily {
    pub fn new(exponents: Vec<Coef>) -> Result<Self> {
        if exponents.is_empty() {
            return invalid("a scale family needs at least one exponent");
        }
        let v: Vec<f64> = exponents.iter().map(Coef::value).collect();
        if v.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return invalid("scale exponents must be positive");
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("scale exponents must be strictly increasing");
        }
        Ok(Self { exponents })
    }

    /// `ρ_k = ε^k`, `k = 1..n`.
    pub fn powers(n: usize) -> Self {
        Self { exponents: (1..=n).map(|k| Coef::frac(k as i64, 1)).collect() }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Coef] {
        &self.exponents
    }

    pub fn rho(&self, k: usize, eps: Eps) -> f64 {
        eps.value().powf(self.exponents[k].value())
    }

    /// Integer multipliers `1/ρ_k = h^{α_k}` when `ε = 1/h` and every
    /// exponent is a whole number.
    pub fn multipliers(&self, eps: Eps) -> Option<Vec<i128>> {
        let Eps::Inverse(h) = eps else { return None };
        self.exponents
            .iter()
            .map(|a| {
                let a = a.rational()?;
                if !a.is_integer() {
                    return None;
                }
                let m = checked_pow(h as i128, a.to_integer().to_u32()?)?;
                // keep x * m comfortably inside i128 for dense samples
                (m < 1 << 62).then_some(m)
            })
            .collect()
    }

    /// Exact `⟨x/ρ_k⟩` per scale (scale-major), when available.
    pub fn fast_vars_exact(&self, eps: Eps, x: &[Rational]) -> Option<Vec<Rational>> {
        let mult = self.multipliers(eps)?;
        Some(mult.iter().flat_map(|&m| x.iter().map(move |xi| frac_scaled(xi, m))).collect())
    }

    /// Fast variables from an exact point when possible, otherwise by
    /// floating reduction `t - floor(t)` of `t = x / ρ_k`.
    pub fn fast_vars(&self, eps: Eps, x: &[Rational]) -> Vec<f64> {
        match self.fast_vars_exact(eps, x) {
            Some(y) => y.iter().map(to_f64).collect(),
            None => {
                let xf: Vec<f64> = x.iter().map(to_f64).collect();
                self.fast_vars_f64(eps, &xf)
            }
        }
    }

    pub fn fast_vars_f64(&self, eps: Eps, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len() * self.len());
        for k in 0..self.len() {
            let rho = self.rho(k, eps);
            for xi in x {
                let t = xi / rho;
                let y = t - t.floor();
                out.push(if y >= 1.0 { 0.0 } else { y });
            }
        }
        out
    }
}
