use super::table::{product_coords, product_len};
use crate::cell_solver::reference_step;
use crate::descent::{minimize, Objective, SolverOptions};
use crate::error::{invalid, Error, Result};
use crate::integrand::{GrowthBounds, Integrand, LocalDensity};
use crate::periodic::{compensated_sum, project_mean_zero_in_place, Field, PeriodicGrid};
use crate::spectral::PeriodicLaplacian;

/// Correctors `φ_1..φ_n`; `φ_k` is stored over the product of the first `k`
/// grids (first grid slowest) and is differentiated in its last variable
/// only.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorStack {
    pub grids: Vec<PeriodicGrid>,
    pub fields: Vec<Field>,
}

impl CorrectorStack {
    fn zeros(grids: &[PeriodicGrid]) -> Self {
        let fields = (1..=grids.len()).map(|k| Field::new(vec![0.0; product_len(&grids[..k])])).collect();
        Self { grids: grids.to_vec(), fields }
    }

    /// Largest |mean over the fast variable| across all slow nodes and
    /// levels; zero up to round-off for a gauge-projected stack.
    pub fn max_fast_mean(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, f) in self.fields.iter().enumerate() {
            let c = self.grids[k].len();
            for slice in f.values.chunks(c) {
                worst = worst.max((slice.iter().sum::<f64>() / c as f64).abs());
            }
        }
        worst
    }

    pub fn sup_norm(&self) -> f64 {
        self.fields.iter().map(Field::sup_norm).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct JointSolution {
    pub value: f64,
    pub correctors: CorrectorStack,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct JointObjective<'a> {
    grids: &'a [PeriodicGrid],
    cells: Vec<LocalDensity>,
    growth: GrowthBounds,
    z: &'a [f64],
    eta: f64,
    /// offset of `φ_k` in the unknown vector
    offsets: Vec<usize>,
    /// product cells sharing one value of `φ_k`
    tails: Vec<usize>,
    laps: Option<Vec<PeriodicLaplacian>>,
}

impl JointObjective<'_> {
    fn dim(&self) -> usize {
        self.grids[0].dim()
    }

    fn level_len(&self, k: usize) -> usize {
        self.offsets[k + 1] - self.offsets[k]
    }

    fn level_gradients(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..self.grids.len())
            .map(|k| {
                let c = self.grids[k].len();
                let phi = &x[self.offsets[k]..self.offsets[k + 1]];
                let mut g = vec![0.0; phi.len() * d];
                for (src, dst) in phi.chunks(c).zip(g.chunks_mut(c * d)) {
                    self.grids[k].gradient_into(src, dst);
                }
                g
            })
            .collect()
    }

    fn energy_raw(&self, x: &[f64], eta: f64, grad: Option<&mut [f64]>) -> Result<f64> {
        let d = self.dim();
        let levels = self.level_gradients(x);
        let total = self.cells.len();
        let mut fluxes: Option<Vec<Vec<f64>>> =
            grad.is_some().then(|| (0..self.grids.len()).map(|k| vec![0.0; self.level_len(k) * d]).collect());
        let mut vals = vec![0.0; total];
        let mut zeta = [0.0; 2];
        let mut q = [0.0; 2];
        for (t, cell) in self.cells.iter().enumerate() {
            zeta[..d].copy_from_slice(self.z);
            for (k, g) in levels.iter().enumerate() {
                let s = t / self.tails[k];
                for a in 0..d {
                    zeta[a] += g[s * d + a];
                }
            }
            vals[t] = cell.value_reg(&zeta[..d], eta);
            if let Some(fl) = fluxes.as_mut() {
                cell.gradient_reg(&zeta[..d], eta, &mut q[..d]);
                for (k, f) in fl.iter_mut().enumerate() {
                    let s = t / self.tails[k];
                    for a in 0..d {
                        f[s * d + a] += q[a];
                    }
                }
            }
        }
        let e = compensated_sum(vals.iter().copied()) / total as f64;
        if !e.is_finite() {
            return Err(Error::NonFinite("joint cell energy".into()));
        }
        if let (Some(out), Some(fl)) = (grad, fluxes) {
            let inv = 1.0 / total as f64;
            for (k, mut f) in fl.into_iter().enumerate() {
                f.iter_mut().for_each(|v| *v *= inv);
                let c = self.grids[k].len();
                let dst = &mut out[self.offsets[k]..self.offsets[k + 1]];
                for (src, o) in f.chunks(c * d).zip(dst.chunks_mut(c)) {
                    self.grids[k].gradient_transpose_into(src, o);
                }
            }
        }
        Ok(e)
    }
}

impl Objective for JointObjective<'_> {
    fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn energy(&self, x: &[f64]) -> Result<f64> {
        self.energy_raw(x, self.eta, None)
    }

    fn energy_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.energy_raw(x, self.eta, Some(grad))
    }

    fn precondition(&self, g: &[f64], out: &mut [f64]) {
        for k in 0..self.grids.len() {
            let c = self.grids[k].len();
            let range = self.offsets[k]..self.offsets[k + 1];
            let scale = self.level_len(k) as f64;
            for (src, dst) in g[range.clone()].chunks(c).zip(out[range].chunks_mut(c)) {
                match &self.laps {
                    Some(laps) => {
                        laps[k].solve(src, dst);
                        dst.iter_mut().for_each(|v| *v *= scale);
                    }
                    None => {
                        let s = scale * self.grids[k].spacing().powi(2) / (4.0 * self.dim() as f64);
                        for (o, v) in dst.iter_mut().zip(src) {
                            *o = v * s;
                        }
                    }
                }
            }
        }
    }

    fn project(&self, x: &mut [f64]) {
        for k in 0..self.grids.len() {
            let c = self.grids[k].len();
            for slice in x[self.offsets[k]..self.offsets[k + 1]].chunks_mut(c) {
                project_mean_zero_in_place(slice);
            }
        }
    }

    fn initial_step(&self) -> f64 {
        let zn = self.z.iter().map(|v| v * v).sum::<f64>().sqrt();
        reference_step(&self.growth, self.dim(), zn)
    }
}

/// Minimizes the average of `f(x, y, z + Σ_k ∇_{y^k} φ_k)` over the product
/// grid jointly in all correctors. `grids[k]` discretizes the cell of the
/// `(k+1)`-th fast variable; densities are sampled at cell corners.
pub fn hom_joint(
    f: &Integrand,
    x: &[f64],
    z: &[f64],
    grids: &[PeriodicGrid],
    opts: &SolverOptions,
) -> Result<JointSolution> {
    f.ensure_admissible()?;
    opts.validate()?;
    let d = f.dim();
    let n = f.scales();
    if grids.len() != n {
        return invalid(format!("{n} scales need {n} grids, got {}", grids.len()));
    }
    if grids.iter().any(|g| g.dim() != d) {
        return invalid("grid and integrand dimensions differ");
    }
    if x.len() != d {
        return invalid(format!("x has length {}, expected {d}", x.len()));
    }
    if z.len() != d || z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("z must be a finite vector of length {d}")));
    }
    let total = product_len(grids);
    let cells = (0..total).map(|t| f.local(x, &product_coords(grids, t))).collect::<Result<Vec<_>>>()?;
    let mut offsets = vec![0];
    for k in 1..=n {
        offsets.push(offsets[k - 1] + product_len(&grids[..k]));
    }
    let tails = (0..n).map(|k| product_len(&grids[k + 1..])).collect();
    let obj = JointObjective {
        grids,
        cells,
        growth: *f.growth(),
        z,
        eta: opts.eta_for(f.p()),
        offsets,
        tails,
        laps: opts.precondition.then(|| grids.iter().map(PeriodicLaplacian::new).collect()),
    };
    let res = minimize(&obj, vec![0.0; obj.len()], opts, false)?;
    let value = obj.energy_raw(&res.x, 0.0, None)?;
    let mut correctors = CorrectorStack::zeros(grids);
    for (k, field) in correctors.fields.iter_mut().enumerate() {
        field.values.copy_from_slice(&res.x[obj.offsets[k]..obj.offsets[k + 1]]);
    }
    Ok(JointSolution { value, correctors, grad_norm: res.grad_norm, iterations: res.iterations, converged: res.converged })
}
