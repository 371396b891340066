//! Single periodic cell problems: minimize `φ ↦ avg_y f(y, z + ∇φ(y))` over
//! mean-zero periodic fields on a [`PeriodicGrid`].

use crate::descent::{minimize, Objective, SolverOptions, TraceRow};
use crate::error::{invalid, Error, Result};
use crate::hom::ZTable;
use crate::integrand::{lipschitz_bound, GrowthBounds, Integrand, LocalDensity};
use crate::periodic::{compensated_sum, project_mean_zero_in_place, Field, PeriodicGrid};
use crate::spectral::PeriodicLaplacian;

/// Density of one grid cell as a function of the local gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum CellDensity {
    Law(LocalDensity),
    Table(ZTable),
}

impl CellDensity {
    pub fn value(&self, zeta: &[f64], eta: f64) -> Result<f64> {
        match self {
            CellDensity::Law(l) => Ok(l.value_reg(zeta, eta)),
            CellDensity::Table(t) => t.value(zeta),
        }
    }

    pub fn gradient(&self, zeta: &[f64], eta: f64, out: &mut [f64]) -> Result<()> {
        match self {
            CellDensity::Law(l) => {
                l.gradient_reg(zeta, eta, out);
                Ok(())
            }
            CellDensity::Table(t) => t.gradient(zeta, out),
        }
    }

    fn is_convex(&self) -> bool {
        !matches!(self, CellDensity::Law(LocalDensity::Saturated { .. }))
    }
}

/// The fast variable of a cell problem sampled at the lower corner of every
/// cell: `cells[c]` is the density at `y = corner(c)`.
#[derive(Debug, Clone)]
pub struct CellSlice {
    grid: PeriodicGrid,
    cells: Vec<CellDensity>,
    growth: GrowthBounds,
}

impl CellSlice {
    pub fn new(grid: PeriodicGrid, cells: Vec<CellDensity>, growth: GrowthBounds) -> Result<Self> {
        if cells.len() != grid.len() {
            return invalid(format!("slice has {} cells, grid has {}", cells.len(), grid.len()));
        }
        if let Some(c) = cells.iter().find(|c| !c.is_convex()) {
            return Err(Error::NotAdmissible(format!("non-convex cell density {c:?}")));
        }
        Ok(Self { grid, cells, growth })
    }

    /// Slice of `f(x, slow, ·, z)` over its fastest variable. `slow` holds
    /// the `n - 1` slower fast-variables, scale-major.
    pub fn from_integrand(f: &Integrand, x: &[f64], slow: &[f64], grid: PeriodicGrid) -> Result<Self> {
        f.ensure_admissible()?;
        let d = f.dim();
        if grid.dim() != d {
            return invalid("grid and integrand dimensions differ");
        }
        if slow.len() != d * (f.scales() - 1) {
            return invalid(format!("expected {} slow coordinates, got {}", d * (f.scales() - 1), slow.len()));
        }
        let mut y = slow.to_vec();
        y.extend(std::iter::repeat_n(0.0, d));
        let cells = (0..grid.len())
            .map(|c| {
                let off = y.len() - d;
                grid.node_coords(c, &mut y[off..]);
                f.local(x, &y).map(CellDensity::Law)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, cells, *f.growth())
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn cells(&self) -> &[CellDensity] {
        &self.cells
    }

    pub fn growth(&self) -> &GrowthBounds {
        &self.growth
    }

    fn check_inputs(&self, z: &[f64], phi: &[f64]) -> Result<()> {
        if z.len() != self.grid.dim() {
            return Err(Error::Domain(format!("z has length {}, expected {}", z.len(), self.grid.dim())));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite z".into()));
        }
        if phi.len() != self.grid.len() {
            return invalid("corrector length does not match the grid");
        }
        Ok(())
    }

    fn energy_raw(&self, z: &[f64], phi: &[f64], eta: f64, flux: Option<&mut [f64]>) -> Result<f64> {
        let d = self.grid.dim();
        let nc = self.grid.len();
        let mut grads = vec![0.0; nc * d];
        self.grid.gradient_into(phi, &mut grads);
        let mut vals = vec![0.0; nc];
        let mut zeta = [0.0; 2];
        let mut flux = flux;
        for c in 0..nc {
            for a in 0..d {
                zeta[a] = z[a] + grads[c * d + a];
            }
            vals[c] = self.cells[c].value(&zeta[..d], eta)?;
            if let Some(q) = flux.as_deref_mut() {
                self.cells[c].gradient(&zeta[..d], eta, &mut q[c * d..(c + 1) * d])?;
            }
        }
        let e = compensated_sum(vals.iter().copied()) / nc as f64;
        if !e.is_finite() {
            return Err(Error::NonFinite("cell energy".into()));
        }
        Ok(e)
    }

    /// Local gradients `z + ∇φ` on every cell.
    pub fn local_gradients(&self, z: &[f64], phi: &Field) -> Vec<f64> {
        let d = self.grid.dim();
        let mut grads = vec![0.0; self.grid.len() * d];
        self.grid.gradient_into(&phi.values, &mut grads);
        for (i, g) in grads.iter_mut().enumerate() {
            *g += z[i % d];
        }
        grads
    }
}

/// `avg_cells density(y_c, z + (∇φ)_c)`.
pub fn cell_energy(slice: &CellSlice, z: &[f64], phi: &Field) -> Result<f64> {
    slice.check_inputs(z, &phi.values)?;
    slice.energy_raw(z, &phi.values, 0.0, None)
}

/// Gradient of the (eta-regularized) discrete cell energy with respect to
/// the nodal values of `φ`.
pub fn cell_energy_gradient(slice: &CellSlice, z: &[f64], phi: &Field, eta: f64) -> Result<Field> {
    slice.check_inputs(z, &phi.values)?;
    let obj = CellObjective::new(slice, z, eta, false);
    let mut g = vec![0.0; slice.grid.len()];
    obj.energy_gradient(&phi.values, &mut g)?;
    Ok(Field::new(g))
}

#[derive(Debug, Clone)]
pub struct CellSolution {
    /// Discrete homogenized density at `z` (unregularized energy at the
    /// returned corrector).
    pub value: f64,
    /// Mean-zero minimizing field.
    pub corrector: Field,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Option<Vec<TraceRow>>,
}

/// Reference step for descent on a density with growth constant `c2`,
/// from the local Lipschitz estimate of convex functions on the ball of
/// radius `|z|`.
pub(crate) fn reference_step(growth: &GrowthBounds, d: usize, znorm: f64) -> f64 {
    let lip = lipschitz_bound(growth.c2, d, growth.p, znorm, znorm);
    (1.0 + 2.0 * znorm) / lip
}

struct CellObjective<'a> {
    slice: &'a CellSlice,
    z: &'a [f64],
    eta: f64,
    lap: Option<PeriodicLaplacian>,
}

impl<'a> CellObjective<'a> {
    fn new(slice: &'a CellSlice, z: &'a [f64], eta: f64, precondition: bool) -> Self {
        let lap = precondition.then(|| PeriodicLaplacian::new(&slice.grid));
        Self { slice, z, eta, lap }
    }
}

impl Objective for CellObjective<'_> {
    fn len(&self) -> usize {
        self.slice.grid.len()
    }

    fn energy(&self, x: &[f64]) -> Result<f64> {
        self.slice.energy_raw(self.z, x, self.eta, None)
    }

    fn energy_gradient(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let nc = self.slice.grid.len();
        let mut flux = vec![0.0; nc * self.slice.grid.dim()];
        let e = self.slice.energy_raw(self.z, x, self.eta, Some(&mut flux))?;
        let inv = 1.0 / nc as f64;
        for q in flux.iter_mut() {
            *q *= inv;
        }
        self.slice.grid.gradient_transpose_into(&flux, grad);
        Ok(e)
    }

    fn precondition(&self, g: &[f64], out: &mut [f64]) {
        let nc = self.slice.grid.len() as f64;
        match &self.lap {
            Some(lap) => {
                lap.solve(g, out);
                for v in out.iter_mut() {
                    *v *= nc;
                }
            }
            None => {
                let h2 = self.slice.grid.spacing().powi(2);
                let s = nc * h2 / (4.0 * self.slice.grid.dim() as f64);
                for (o, v) in out.iter_mut().zip(g) {
                    *o = v * s;
                }
            }
        }
    }

    fn project(&self, x: &mut [f64]) {
        project_mean_zero_in_place(x);
    }

    fn initial_step(&self) -> f64 {
        let zn = self.z.iter().map(|v| v * v).sum::<f64>().sqrt();
        reference_step(&self.slice.growth, self.slice.grid.dim(), zn)
    }
}

/// Minimizes the cell energy starting from `φ = 0`.
pub fn solve_cell(slice: &CellSlice, z: &[f64], opts: &SolverOptions) -> Result<CellSolution> {
    solve_cell_from(slice, z, Field::zeros(&slice.grid), opts, false)
}

/// As [`solve_cell`] from an arbitrary start; optionally records a trace.
pub fn solve_cell_from(
    slice: &CellSlice,
    z: &[f64],
    start: Field,
    opts: &SolverOptions,
    record_trace: bool,
) -> Result<CellSolution> {
    slice.check_inputs(z, &start.values)?;
    let eta = opts.eta_for(slice.growth.p);
    let obj = CellObjective::new(slice, z, eta, opts.precondition);
    let res = minimize(&obj, start.values, opts, record_trace)?;
    let corrector = Field::new(res.x);
    let value = slice.energy_raw(z, &corrector.values, 0.0, None)?;
    check_table_margins(slice, z, &corrector)?;
    Ok(CellSolution {
        value,
        corrector,
        grad_norm: res.grad_norm,
        iterations: res.iterations,
        converged: res.converged,
        trace: res.trace,
    })
}

/// A tabulated source is only trusted away from its outermost interval.
fn check_table_margins(slice: &CellSlice, z: &[f64], phi: &Field) -> Result<()> {
    if !slice.cells.iter().any(|c| matches!(c, CellDensity::Table(_))) {
        return Ok(());
    }
    let d = slice.grid.dim();
    let grads = slice.local_gradients(z, phi);
    for (c, cell) in slice.cells.iter().enumerate() {
        if let CellDensity::Table(t) = cell {
            let zeta = &grads[c * d..(c + 1) * d];
            if t.grid.touches_edge(zeta) {
                return Err(Error::OutOfBox(format!(
                    "local gradient {zeta:?} reaches the edge of the source table [-{r}, {r}]",
                    r = t.grid.radius
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellset::CellSet;
    use crate::integrand::{build_composite, MaterialLaw};

    fn laminate(a1: f64, a2: f64, p: f64) -> Integrand {
        build_composite(
            vec![CellSet::interval(&[0.0], &[0.5])],
            MaterialLaw::power(a1),
            MaterialLaw::power(a2),
            GrowthBounds::new(a1.min(a2), a1.max(a2), p).unwrap(),
        )
        .unwrap()
    }

    fn slice(f: &Integrand, n: usize) -> CellSlice {
        CellSlice::from_integrand(f, &[0.0], &[], PeriodicGrid::new(1, n).unwrap()).unwrap()
    }

    #[test]
    fn energy_examples() {
        let s = slice(&Integrand::power(1, 1, 2.0).unwrap(), 16);
        assert_eq!(cell_energy(&s, &[1.0], &Field::zeros(s.grid())).unwrap(), 1.0);
        let s = slice(&laminate(1.0, 4.0, 2.0), 16);
        assert_eq!(cell_energy(&s, &[1.0], &Field::zeros(s.grid())).unwrap(), 2.5);
    }

    #[test]
    fn energy_at_closed_form_corrector() {
        // constant flux: φ' = 0.6 on material 1, -0.6 on material 2
        let n = 16;
        let s = slice(&laminate(1.0, 4.0, 2.0), n);
        let h = 1.0 / n as f64;
        let mut phi = vec![0.0; n];
        for i in 1..n {
            let slope = if i - 1 < n / 2 { 0.6 } else { -0.6 };
            phi[i] = phi[i - 1] + slope * h;
        }
        let e = cell_energy(&s, &[1.0], &Field::new(phi)).unwrap();
        assert!((e - 1.6).abs() < 1e-12, "{e}");
    }

    #[test]
    fn gradient_is_zero_for_uniform_density() {
        let s = slice(&Integrand::power(1, 1, 2.0).unwrap(), 8);
        let g = cell_energy_gradient(&s, &[1.0], &Field::zeros(s.grid()), 0.0).unwrap();
        assert!(g.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_linear_in_phi_for_quadratic() {
        let s = slice(&laminate(1.0, 4.0, 2.0), 8);
        let phi = Field::new((0..8).map(|i| ((i * 5 % 7) as f64).sin()).collect());
        let phi2 = Field::new(phi.values.iter().map(|v| 2.0 * v).collect());
        let g1 = cell_energy_gradient(&s, &[0.0], &phi, 0.0).unwrap();
        let g2 = cell_energy_gradient(&s, &[0.0], &phi2, 0.0).unwrap();
        for (a, b) in g1.values.iter().zip(&g2.values) {
            assert!((2.0 * a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn trivial_solve() {
        let s = slice(&Integrand::power(1, 1, 2.0).unwrap(), 64);
        let sol = solve_cell(&s, &[1.0], &SolverOptions::default()).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-10);
        assert!(sol.corrector.sup_norm() < 1e-8);
        assert!(sol.converged);
    }

    #[test]
    fn harmonic_mean_laminate() {
        let s = slice(&laminate(1.0, 4.0, 2.0), 256);
        let sol = solve_cell(&s, &[1.0], &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(((sol.value - 1.6) / 1.6).abs() < 1e-3, "{}", sol.value);
    }

    #[test]
    fn nonconvergence_is_flagged() {
        let s = slice(&laminate(1.0, 4.0, 2.0), 64);
        let opts = SolverOptions { max_iter: 1, precondition: false, ..Default::default() };
        let sol = solve_cell(&s, &[1.0], &opts).unwrap();
        assert!(!sol.converged);
        assert!(sol.value <= 2.5);
    }

    #[test]
    fn rejects_nonconvex_and_borel() {
        let sat = Integrand::simple(
            1,
            1,
            MaterialLaw::Saturated { coef: 1.0.into(), cap: 1.0 },
            GrowthBounds::new(1.0, 1.0, 2.0).unwrap(),
        )
        .unwrap();
        let g = PeriodicGrid::new(1, 8).unwrap();
        assert!(matches!(CellSlice::from_integrand(&sat, &[0.0], &[], g), Err(Error::NotAdmissible(_))));
        let b = Integrand::borel(crate::integrand::BorelVariant::FinalUno, 2.0, 8).unwrap();
        assert!(matches!(CellSlice::from_integrand(&b, &[0.0], &[], g), Err(Error::NotAdmissible(_))));
    }
}
