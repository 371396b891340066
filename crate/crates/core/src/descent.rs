//! Monotone preconditioned first-order descent shared by every solver in the
//! crate.
//!
//! Each iteration moves along `d = -P g`, where `P` is an objective-specific
//! preconditioner, and accepts a step only if it satisfies the Armijo
//! condition, so energies never increase. Trial step sizes come from the
//! selected [`StepRule`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// The initial step every iteration, halved until Armijo holds.
    Fixed,
    /// Previous accepted step doubled, halved until Armijo holds.
    Backtracking,
    /// Barzilai–Borwein step with the same backtracking safeguard.
    Bb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Sup-norm tolerance on the energy gradient.
    pub tol_grad: f64,
    /// Relative energy decrease over `stall_window` iterations below which
    /// the run counts as converged.
    pub tol_energy: f64,
    pub stall_window: usize,
    pub max_iter: usize,
    /// Regularization of `|z|` for `p < 2`; `None` picks the default.
    pub eta: Option<f64>,
    pub step_rule: StepRule,
    /// Use the spectral Laplacian preconditioner.
    pub precondition: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_grad: 1e-8,
            tol_energy: 1e-12,
            stall_window: 20,
            max_iter: 20_000,
            eta: None,
            step_rule: StepRule::Bb,
            precondition: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_grad > 0.0 && self.tol_energy > 0.0) || self.max_iter == 0 || self.stall_window == 0 {
            return Err(Error::Invalid("solver tolerances must be positive and max_iter >= 1".into()));
        }
        if let Some(eta) = self.eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return Err(Error::Invalid("eta must be a finite non-negative number".into()));
            }
        }
        Ok(())
    }

    pub fn eta_for(&self, p: f64) -> f64 {
        self.eta.unwrap_or_else(|| crate::integrand::default_eta(p))
    }
}

/// One row of a solver trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from("iteration,energy,grad_norm,step\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.iteration, r.energy, r.grad_norm, r.step));
    }
    s
}

/// Why a trial point could not be evaluated.
#[derive(Debug)]
pub enum Rejection {
    /// Leave the point alone and shrink the step.
    Reject,
    Fatal(Error),
}

impl From<Error> for Rejection {
    fn from(e: Error) -> Self {
        match e {
            Error::OutOfBox(_) => Rejection::Reject,
            other => Rejection::Fatal(other),
        }
    }
}

pub trait Objective {
    fn len(&self) -> usize;

    fn energy(&self, x: &[f64]) -> Result<f64>;

    /// Energy and gradient with respect to the entries of `x`.
    fn energy_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64>;

    /// Applies the preconditioner to `g`.
    fn precondition(&self, g: &[f64], out: &mut [f64]);

    /// Gauge fixing applied to every accepted iterate.
    fn project(&self, _x: &mut [f64]) {}

    /// Reference step length along the preconditioned direction.
    fn initial_step(&self) -> f64;
}

#[derive(Debug, Clone)]
pub struct DescentResult {
    pub x: Vec<f64>,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Option<Vec<TraceRow>>,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
/// Steps stay within these multiples of the objective's reference step.
const STEP_FLOOR: f64 = 1e-12;
const STEP_CEIL: f64 = 1e6;

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(e: f64, what: &str) -> Result<f64> {
    if e.is_finite() {
        Ok(e)
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Minimizes `obj` from `x0`. Non-convergence is reported through
/// `converged = false`, not as an error.
pub fn minimize<O: Objective + ?Sized>(
    obj: &O,
    x0: Vec<f64>,
    opts: &SolverOptions,
    record_trace: bool,
) -> Result<DescentResult> {
    opts.validate()?;
    let n = obj.len();
    let mut x = x0;
    obj.project(&mut x);
    let mut g = vec![0.0; n];
    let mut energy = check_finite(obj.energy_gradient(&x, &mut g)?, "initial energy")?;
    let alpha0 = obj.initial_step();
    let (amin, amax) = (alpha0 * STEP_FLOOR, alpha0 * STEP_CEIL);
    let mut alpha = alpha0;
    let mut dir = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut history: Vec<f64> = vec![energy];
    let mut trace = record_trace.then(Vec::new);
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm;

    loop {
        grad_norm = sup(&g);
        if grad_norm <= opts.tol_grad {
            converged = true;
            break;
        }
        let k = history.len() - 1;
        if k >= opts.stall_window {
            let old = history[k - opts.stall_window];
            if old - energy <= opts.tol_energy * energy.abs() {
                converged = true;
                break;
            }
        }
        if iterations >= opts.max_iter {
            break;
        }

        obj.precondition(&g, &mut dir);
        for v in dir.iter_mut() {
            *v = -*v;
        }
        let slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // no descent direction left at this resolution
            converged = true;
            break;
        }

        let mut step = match opts.step_rule {
            StepRule::Fixed => alpha0,
            StepRule::Backtracking => (2.0 * alpha).min(amax),
            StepRule::Bb => alpha,
        };
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            for i in 0..n {
                trial[i] = x[i] + step * dir[i];
            }
            obj.project(&mut trial);
            match obj.energy(&trial).map_err(Rejection::from) {
                Ok(e) if e.is_finite() && e <= energy + ARMIJO * step * slope => {
                    accepted = Some(e);
                    break;
                }
                Ok(e) if !e.is_finite() => return Err(Error::NonFinite(format!("trial energy at step {step}"))),
                Ok(_) | Err(Rejection::Reject) => step *= 0.5,
                Err(Rejection::Fatal(e)) => return Err(e),
            }
        }
        if accepted.is_none() {
            // Armijo cannot be met above round-off: the energy has stalled.
            converged = true;
            break;
        }
        let e_new = check_finite(obj.energy_gradient(&trial, &mut g_new)?, "accepted iterate")?;
        debug_assert!(e_new <= energy, "energy increased: {energy} -> {e_new}");

        if let StepRule::Bb = opts.step_rule {
            // s = step*dir, y = g_new - g; BB1 in the preconditioned metric:
            // step * (-gᵀd) / (dᵀy)
            let dy: f64 = dir.iter().zip(g_new.iter().zip(&g)).map(|(d, (a, b))| d * (a - b)).sum();
            alpha = if dy > 0.0 { (step * (-slope) / dy).clamp(amin, amax) } else { amax };
        } else {
            alpha = step;
        }

        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        energy = e_new;
        history.push(energy);
        iterations += 1;
        if let Some(t) = trace.as_mut() {
            t.push(TraceRow { iteration: iterations, energy, grad_norm: sup(&g), step });
        }
    }

    Ok(DescentResult { x, energy, grad_norm, iterations, converged, trace })
}
