//! The oscillating functionals `F_ε(u) = ∫_Ω f(x, ⟨x/ρ_1⟩, …, ⟨x/ρ_n⟩, ∇u)`
//! on `Ω = (0,1)^d` with affine Dirichlet data, and the Borel diagonal
//! counterexamples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell_solver::reference_step;
use crate::descent::{minimize, Objective, SolverOptions};
use crate::error::{invalid, Error, Result};
use crate::exact::{midpoint, node, Rational};
use crate::hom::{hom_iterate, hom_query, ZGrid};
use crate::integrand::{BorelVariant, Form, GrowthBounds, Integrand, LocalDensity};
use crate::periodic::{compensated_sum, Field, PeriodicGrid};
use crate::scales::{Eps, ScaleFamily};
use crate::spectral::DirichletLaplacian;

/// Where in each Ω cell the oscillating coefficient is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sample {
    #[default]
    Midpoint,
    LowerCorner,
}

/// `Ω = (0,1)^d` split into `cells` intervals per axis; `u = z·x` on `∂Ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub dim: usize,
    pub cells: usize,
    pub z: Vec<f64>,
    #[serde(default)]
    pub sample: Sample,
}

impl DomainSpec {
    pub fn new(dim: usize, cells: usize, z: Vec<f64>) -> Result<Self> {
        let d = Self { dim, cells, z, sample: Sample::Midpoint };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return invalid("domain dimension must be 1 or 2");
        }
        if self.cells < 2 {
            return invalid("the domain grid needs at least 2 cells per axis");
        }
        if self.z.len() != self.dim || self.z.iter().any(|v| !v.is_finite()) {
            return invalid(format!("boundary slope must be a finite vector of length {}", self.dim));
        }
        Ok(())
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.cells + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.pow(self.dim as u32)
    }

    fn node_multi(&self, idx: usize) -> [usize; 2] {
        let n = self.nodes_per_axis();
        [idx % n, idx / n]
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let m = self.node_multi(idx);
        m[..self.dim].iter().any(|&i| i == 0 || i == self.cells)
    }

    /// `z·x` at a node.
    pub fn affine_value(&self, idx: usize) -> f64 {
        let m = self.node_multi(idx);
        (0..self.dim).map(|a| self.z[a] * (m[a] as f64 / self.cells as f64)).sum()
    }

    pub fn affine(&self) -> Field {
        Field::new((0..self.node_count()).map(|i| self.affine_value(i)).collect())
    }

    /// Exact sample point of cell `c` (axis 0 fastest).
    pub fn sample_point(&self, c: usize) -> Vec<Rational> {
        let (m, mut c) = (self.cells, c);
        (0..self.dim)
            .map(|_| {
                let j = (c % m) as u64;
                c /= m;
                match self.sample {
                    Sample::Midpoint => midpoint(j, m as u64),
                    Sample::LowerCorner => node(j, m as u64),
                }
            })
            .collect()
    }

    /// Per-cell forward-difference gradients of a node field.
    pub fn gradients(&self, u: &[f64]) -> Vec<f64> {
        let (d, m, n) = (self.dim, self.cells, self.nodes_per_axis());
        let scale = m as f64;
        let mut g = vec![0.0; self.cell_count() * d];
        for c in 0..self.cell_count() {
            let (i, j) = (c % m, c / m);
            let base = i + n * j;
            g[c * d] = (u[base + 1] - u[base]) * scale;
            if d == 2 {
                g[c * d + 1] = (u[base + n] - u[base]) * scale;
            }
        }
        g
    }

    /// Transpose of [`Self::gradients`], accumulated into node values.
    fn gradients_transpose(&self, q: &[f64], out: &mut [f64]) {
        let (d, m, n) = (self.dim, self.cells, self.nodes_per_axis());
        let scale = m as f64;
        out.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..self.cell_count() {
            let (i, j) = (c % m, c / m);
            let base = i + n * j;
            out[base + 1] += q[c * d] * scale;
            out[base] -= q[c * d] * scale;
            if d == 2 {
                out[base + n] += q[c * d + 1] * scale;
                out[base] -= q[c * d + 1] * scale;
            }
        }
    }

    fn interior(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| !self.is_boundary(i)).collect()
    }
}

/// Densities of every Ω cell as functions of the gradient.
fn cell_densities(f: &Integrand, scales: &ScaleFamily, eps: Eps, dom: &DomainSpec) -> Result<Vec<LocalDensity>> {
    eps.validate()?;
    dom.validate()?;
    if f.dim() != dom.dim {
        return invalid("integrand and domain dimensions differ");
    }
    if scales.len() != f.scales() {
        return invalid(format!("integrand has {} scales, family has {}", f.scales(), scales.len()));
    }
    let borel = matches!(f.form(), Form::BorelDiagonal { .. });
    if borel && scales.multipliers(eps).is_none() {
        return Err(Error::Unsupported("Borel integrands need eps = 1/h and integer exponents".into()));
    }
    (0..dom.cell_count())
        .into_par_iter()
        .map(|c| {
            let x = dom.sample_point(c);
            if borel {
                let y = scales.fast_vars_exact(eps, &x).expect("checked above");
                f.local_exact(&x, &y)
            } else {
                let y = scales.fast_vars(eps, &x);
                let xf: Vec<f64> = x.iter().map(crate::exact::to_f64).collect();
                f.local(&xf, &y)
            }
        })
        .collect()
}

fn energy_of(dom: &DomainSpec, cells: &[LocalDensity], u: &[f64], eta: f64, flux: Option<&mut [f64]>) -> Result<f64> {
    let d = dom.dim;
    let g = dom.gradients(u);
    let vals: Vec<f64> = cells.iter().enumerate().map(|(c, l)| l.value_reg(&g[c * d..(c + 1) * d], eta)).collect();
    if let Some(q) = flux {
        let inv = 1.0 / cells.len() as f64;
        for (c, l) in cells.iter().enumerate() {
            l.gradient_reg(&g[c * d..(c + 1) * d], eta, &mut q[c * d..(c + 1) * d]);
            q[c * d..(c + 1) * d].iter_mut().for_each(|v| *v *= inv);
        }
    }
    let e = compensated_sum(vals) / cells.len() as f64;
    if !e.is_finite() {
        return Err(Error::NonFinite("domain energy".into()));
    }
    Ok(e)
}

fn check_pinned(dom: &DomainSpec, u: &Field) -> Result<()> {
    if u.values.len() != dom.node_count() {
        return invalid(format!("field has {} nodes, domain has {}", u.values.len(), dom.node_count()));
    }
    if let Some(i) = (0..dom.node_count()).find(|&i| dom.is_boundary(i) && u.values[i] != dom.affine_value(i)) {
        return invalid(format!("boundary node {i} is not pinned to the affine data"));
    }
    Ok(())
}

/// `F_ε(u)` as a cell average over Ω. Fast variables are exact fractions
/// when `ε = 1/h` and the exponents are whole numbers, otherwise reduced in
/// floating point.
pub fn assemble_eps_energy(f: &Integrand, scales: &ScaleFamily, eps: Eps, dom: &DomainSpec, u: &Field) -> Result<f64> {
    let cells = cell_densities(f, scales, eps, dom)?;
    check_pinned(dom, u)?;
    energy_of(dom, &cells, &u.values, 0.0, None)
}

#[derive(Debug, Clone)]
pub struct EpsSolution {
    pub u: Field,
    pub energy: f64,
    /// energy of the affine start
    pub affine_energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct EpsObjective<'a> {
    dom: &'a DomainSpec,
    cells: Vec<LocalDensity>,
    growth: GrowthBounds,
    interior: Vec<usize>,
    affine: Vec<f64>,
    eta: f64,
    lap: Option<DirichletLaplacian>,
}

impl EpsObjective<'_> {
    fn full(&self, w: &[f64]) -> Vec<f64> {
        let mut u = self.affine.clone();
        for (k, &i) in self.interior.iter().enumerate() {
            u[i] += w[k];
        }
        u
    }
}

impl Objective for EpsObjective<'_> {
    fn len(&self) -> usize {
        self.interior.len()
    }

    fn energy(&self, w: &[f64]) -> Result<f64> {
        energy_of(self.dom, &self.cells, &self.full(w), self.eta, None)
    }

    fn energy_gradient(&self, w: &[f64], grad: &mut [f64]) -> Result<f64> {
        let mut q = vec![0.0; self.cells.len() * self.dom.dim];
        let e = energy_of(self.dom, &self.cells, &self.full(w), self.eta, Some(&mut q))?;
        let mut nodes = vec![0.0; self.dom.node_count()];
        self.dom.gradients_transpose(&q, &mut nodes);
        for (g, &i) in grad.iter_mut().zip(&self.interior) {
            *g = nodes[i];
        }
        Ok(e)
    }

    fn precondition(&self, g: &[f64], out: &mut [f64]) {
        let scale = self.cells.len() as f64;
        match &self.lap {
            Some(lap) => {
                lap.solve(g, out);
                out.iter_mut().for_each(|v| *v *= scale);
            }
            None => {
                let m = self.dom.cells as f64;
                let s = scale / (4.0 * self.dom.dim as f64 * m * m);
                for (o, v) in out.iter_mut().zip(g) {
                    *o = v * s;
                }
            }
        }
    }

    fn initial_step(&self) -> f64 {
        let zn = self.dom.z.iter().map(|v| v * v).sum::<f64>().sqrt();
        reference_step(&self.growth, self.dom.dim, zn)
    }
}

/// Minimizes `F_ε` over node fields pinned to `z·x` on `∂Ω`, starting from
/// the affine field.
pub fn solve_eps(f: &Integrand, scales: &ScaleFamily, eps: Eps, dom: &DomainSpec, opts: &SolverOptions) -> Result<EpsSolution> {
    f.ensure_admissible()?;
    opts.validate()?;
    let cells = cell_densities(f, scales, eps, dom)?;
    let affine = dom.affine();
    let affine_energy = energy_of(dom, &cells, &affine.values, 0.0, None)?;
    let obj = EpsObjective {
        dom,
        cells,
        growth: *f.growth(),
        interior: dom.interior(),
        affine: affine.values,
        eta: opts.eta_for(f.p()),
        lap: opts.precondition.then(|| DirichletLaplacian::new(dom.dim, dom.cells)),
    };
    let res = minimize(&obj, vec![0.0; obj.len()], opts, false)?;
    let u = obj.full(&res.x);
    let energy = energy_of(dom, &obj.cells, &u, 0.0, None)?;
    Ok(EpsSolution {
        u: Field::new(u),
        energy,
        affine_energy,
        grad_norm: res.grad_norm,
        iterations: res.iterations,
        converged: res.converged,
    })
}

/// Discretization of the homogenized reference `∫_Ω f_hom(x, z) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpec {
    pub zgrid: ZGrid,
    pub grids: Vec<PeriodicGrid>,
    pub kappa: f64,
    /// midpoint samples per axis for x-dependent integrands
    pub x_samples: usize,
}

/// `∫_Ω f_hom(x, z) dx` through the iterated tables: one solve when `f` does
/// not depend on `x`, midpoint quadrature in `x` otherwise.
pub fn homogenized_reference(f: &Integrand, z: &[f64], spec: &ReferenceSpec, opts: &SolverOptions) -> Result<f64> {
    let d = f.dim();
    let xs: Vec<Vec<f64>> = if f.depends_on_x() {
        let k = spec.x_samples.max(1);
        (0..k.pow(d as u32))
            .map(|c| (0..d).map(|a| (2 * ((c / k.pow(a as u32)) % k) + 1) as f64 / (2 * k) as f64).collect())
            .collect()
    } else {
        vec![vec![0.0; d]]
    };
    let vals = xs
        .iter()
        .map(|x| {
            let it = hom_iterate(f, x, spec.zgrid, &spec.grids, opts, spec.kappa)?;
            hom_query(it.f_hom(), &[], z)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(compensated_sum(vals.iter().copied()) / vals.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaRow {
    pub eps: f64,
    pub energy: f64,
    pub affine_energy: f64,
    pub reference: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaReport {
    pub rows: Vec<GammaRow>,
    /// gap increases beyond `slack` between consecutive terms, by index of
    /// the later term
    pub increases: Vec<usize>,
    pub slack: f64,
}

impl GammaReport {
    /// Non-increasing gaps from the second term on (the first pair may be
    /// pre-asymptotic).
    pub fn monotone_after_first(&self) -> bool {
        self.increases.iter().all(|&k| k == 1)
    }

    pub fn monotone(&self) -> bool {
        self.increases.is_empty()
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,energy,affine_energy,reference,gap,iterations,converged\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.eps, r.energy, r.affine_energy, r.reference, r.gap, r.iterations, r.converged
            ));
        }
        s
    }
}

/// Minimum energies along `eps_list` against a homogenized reference.
/// Gaps are relative: `|E_ε - ref| / ref`. An increase counts only when it
/// exceeds `slack` (solver tolerance plus round-off).
pub fn gamma_convergence_run(
    f: &Integrand,
    scales: &ScaleFamily,
    eps_list: &[Eps],
    dom: &DomainSpec,
    reference: f64,
    opts: &SolverOptions,
) -> Result<GammaReport> {
    if !(reference > 0.0 && reference.is_finite()) {
        return invalid("reference energy must be positive");
    }
    let rows = eps_list
        .par_iter()
        .map(|&eps| {
            let s = solve_eps(f, scales, eps, dom, opts)?;
            Ok(GammaRow {
                eps: eps.value(),
                energy: s.energy,
                affine_energy: s.affine_energy,
                reference,
                gap: (s.energy - reference).abs() / reference,
                iterations: s.iterations,
                converged: s.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let slack = 10.0 * opts.tol_energy.max(f64::EPSILON) + 1e-12;
    let increases = (1..rows.len()).filter(|&k| rows[k].gap > rows[k - 1].gap + slack).collect();
    Ok(GammaReport { rows, increases, slack })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleRow {
    pub h: u64,
    /// `F_h(u)` at `u(x) = x`
    pub energy: f64,
    /// `∫|∇u|^p`
    pub baseline: f64,
    pub ratio: f64,
    /// `∫ψ(x, ⟨hx⟩) dx`, brutto only
    pub trajectory_integral: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleReport {
    pub variant: BorelVariant,
    /// x samples `(2j+1)/(2m)`
    pub m: u64,
    pub i_max: u32,
    pub rows: Vec<CounterexampleRow>,
    /// `∫∫ψ dx dy` on an `m × q` midpoint grid, brutto only
    pub product_integral: Option<f64>,
    pub q: Option<u64>,
}

impl CounterexampleReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,h,energy,baseline,ratio,trajectory_integral,product_integral\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let name = serde_json::to_value(self.variant).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        for r in &self.rows {
            s.push_str(&format!(
                "{name},{},{},{},{},{},{}\n",
                r.h,
                r.energy,
                r.baseline,
                r.ratio,
                opt(r.trajectory_integral),
                opt(self.product_integral)
            ));
        }
        s
    }
}

/// Smallest `m ≥ min` sharing no factor with any of `2..=i_max`.
pub fn coprime_sample_count(min: u64, i_max: u32) -> u64 {
    let mut m = min.max(1);
    while (2..=i_max as u64).any(|i| num_integer::gcd(m, i) != 1) {
        m += 1;
    }
    m
}

/// Evaluates a Borel diagonal example along `u(x) = x` with exact
/// membership tests. Diagonal indices are capped at `2·max(h)`.
pub fn counterexample_run(variant: BorelVariant, h_list: &[i64], p: f64, m_min: u64) -> Result<CounterexampleReport> {
    if let Some(h) = h_list.iter().find(|h| **h <= 0) {
        return Err(Error::Domain(format!("h = {h} must be positive")));
    }
    if h_list.is_empty() {
        return invalid("empty h list");
    }
    let h_max = *h_list.iter().max().unwrap() as u64;
    let i_max = u32::try_from(2 * h_max).map_err(|_| Error::Domain("h too large".into()))?;
    let f = Integrand::borel(variant, p, i_max)?;
    let scales = ScaleFamily::powers(variant.scales());
    let m = coprime_sample_count(m_min, i_max);
    let xs: Vec<Rational> = (0..m).map(|j| midpoint(j, m)).collect();
    let rows = h_list
        .iter()
        .map(|&h| {
            let eps = Eps::Inverse(h as u64);
            let vals = xs
                .par_iter()
                .map(|x| {
                    let y = scales.fast_vars_exact(eps, std::slice::from_ref(x)).ok_or_else(|| Error::Domain(format!("h = {h} too large for exact sampling")))?;
                    let e = f.eval_exact(std::slice::from_ref(x), &y, &[1.0])?;
                    let hit = variant == BorelVariant::Brutto && variant.member(x, &y[0], i_max);
                    Ok((e, hit))
                })
                .collect::<Result<Vec<_>>>()?;
            let energy = compensated_sum(vals.iter().map(|v| v.0)) / m as f64;
            let hits = vals.iter().filter(|v| v.1).count();
            Ok(CounterexampleRow {
                h: h as u64,
                energy,
                baseline: 1.0,
                ratio: energy,
                trajectory_integral: (variant == BorelVariant::Brutto).then(|| hits as f64 / m as f64),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (product_integral, q) = if variant == BorelVariant::Brutto {
        let q = m_min.max(2).next_power_of_two();
        let hits: usize = xs
            .par_iter()
            .map(|x| (0..q).filter(|&l| variant.member(x, &midpoint(l, q), i_max)).count())
            .sum();
        (Some(hits as f64 / (m * q) as f64), Some(q))
    } else {
        (None, None)
    };
    Ok(CounterexampleReport { variant, m, i_max, rows, product_integral, q })
}
