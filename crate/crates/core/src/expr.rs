//! Closed expression grammar for coefficient fields and test functions.
//!
//! Expressions are evaluated at a point `(x, y¹, …, yⁿ)`. `sin`/`cos` take
//! their argument in periods, so `{"sin": {"y": {"scale": 0, "axis": 0}}}`
//! is `sin(2π y¹₁)` and is 1-periodic in that variable.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::cellset::CellSet;
use crate::error::{invalid, Result};
use crate::exact::Coef;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Expr {
    Const(Coef),
    X(usize),
    Y { scale: usize, axis: usize },
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Clamp { expr: Box<Expr>, lo: Coef, hi: Coef },
    /// 1 on the set, 0 off it. `scale: None` tests `x`, otherwise `y^scale`.
    Indicator { scale: Option<usize>, set: CellSet },
}

/// Evaluation point. `y` holds the fast variables scale-major: `y[k*d + i]`.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
}

impl<'a> Point<'a> {
    pub fn new(x: &'a [f64], y: &'a [f64]) -> Self {
        Self { x, y }
    }

    fn dim(&self) -> usize {
        self.x.len()
    }

    fn scale(&self, k: usize) -> &'a [f64] {
        let d = self.dim();
        &self.y[k * d..(k + 1) * d]
    }
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(Coef::Float(v))
    }

    pub fn y(scale: usize, axis: usize) -> Self {
        Expr::Y { scale, axis }
    }

    pub fn indicator(scale: usize, set: CellSet) -> Self {
        Expr::Indicator { scale: Some(scale), set }
    }

    pub fn eval(&self, p: Point<'_>) -> f64 {
        match self {
            Expr::Const(c) => c.value(),
            Expr::X(i) => p.x[*i],
            Expr::Y { scale, axis } => p.y[scale * p.dim() + axis],
            Expr::Add(terms) => terms.iter().map(|t| t.eval(p)).sum(),
            Expr::Mul(terms) => terms.iter().map(|t| t.eval(p)).product(),
            Expr::Sin(a) => (TAU * a.eval(p)).sin(),
            Expr::Cos(a) => (TAU * a.eval(p)).cos(),
            Expr::Clamp { expr, lo, hi } => expr.eval(p).clamp(lo.value(), hi.value()),
            Expr::Indicator { scale, set } => {
                let arg = match scale {
                    None => p.x,
                    Some(k) => p.scale(*k),
                };
                if set.contains(arg) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Checks variable indices against dimension `d` and `n` scales.
    pub fn validate(&self, d: usize, n: usize) -> Result<()> {
        match self {
            Expr::Const(c) => {
                if !c.value().is_finite() {
                    return invalid("non-finite constant in expression");
                }
            }
            Expr::X(i) => {
                if *i >= d {
                    return invalid(format!("x axis {i} out of range for dimension {d}"));
                }
            }
            Expr::Y { scale, axis } => {
                if *scale >= n || *axis >= d {
                    return invalid(format!("y({scale},{axis}) out of range (n={n}, d={d})"));
                }
            }
            Expr::Add(ts) | Expr::Mul(ts) => {
                for t in ts {
                    t.validate(d, n)?;
                }
            }
            Expr::Sin(a) | Expr::Cos(a) => a.validate(d, n)?,
            Expr::Clamp { expr, lo, hi } => {
                if lo.value() > hi.value() {
                    return invalid("clamp with lo > hi");
                }
                expr.validate(d, n)?;
            }
            Expr::Indicator { scale, set } => {
                if let Some(k) = scale {
                    if *k >= n {
                        return invalid(format!("indicator scale {k} out of range (n={n})"));
                    }
                }
                if set.dim() != d {
                    return invalid("indicator set dimension mismatch");
                }
                set.validate()?;
            }
        }
        Ok(())
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Y { .. } => false,
            Expr::X(_) => true,
            Expr::Add(ts) | Expr::Mul(ts) => ts.iter().any(Expr::depends_on_x),
            Expr::Sin(a) | Expr::Cos(a) => a.depends_on_x(),
            Expr::Clamp { expr, .. } => expr.depends_on_x(),
            Expr::Indicator { scale, .. } => scale.is_none(),
        }
    }

    pub fn depends_on_y(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::X(_) => false,
            Expr::Y { .. } => true,
            Expr::Add(ts) | Expr::Mul(ts) => ts.iter().any(Expr::depends_on_y),
            Expr::Sin(a) | Expr::Cos(a) => a.depends_on_y(),
            Expr::Clamp { expr, .. } => expr.depends_on_y(),
            Expr::Indicator { scale, .. } => scale.is_some(),
        }
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::constant(v)
    }
}
