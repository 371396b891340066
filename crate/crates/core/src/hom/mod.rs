//! Homogenized densities: the scale-by-scale iteration through tabulated
//! intermediate densities, and the joint problem over stacked correctors.

mod joint;
mod table;
mod zgrid;

use rayon::prelude::*;

pub use joint::{hom_joint, CorrectorStack, JointSolution};
pub(crate) use table::{product_coords, product_len};
pub use table::{hom_query, HomTable};
pub use zgrid::{ZGrid, ZTable};

use crate::cell_solver::{solve_cell, CellDensity, CellSlice};
use crate::descent::SolverOptions;
use crate::error::{invalid, Result};
use crate::integrand::Integrand;
use crate::periodic::PeriodicGrid;

/// Default widening of the z-box from one level to the next finer one.
pub const DEFAULT_KAPPA: f64 = 3.0;

/// What a step homogenizes over its fastest variable.
#[derive(Debug, Clone, Copy)]
pub enum HomSource<'a> {
    Integrand { f: &'a Integrand, x: &'a [f64] },
    Table(&'a HomTable),
}

impl HomSource<'_> {
    fn dim(&self) -> usize {
        match self {
            HomSource::Integrand { f, .. } => f.dim(),
            HomSource::Table(t) => t.dim,
        }
    }

    /// Number of fast variables the source depends on.
    fn fast_vars(&self) -> usize {
        match self {
            HomSource::Integrand { f, .. } => f.scales(),
            HomSource::Table(t) => t.slow.len(),
        }
    }

    fn slice(&self, slow: &[f64], grid: PeriodicGrid) -> Result<CellSlice> {
        match self {
            HomSource::Integrand { f, x } => CellSlice::from_integrand(f, x, slow, grid),
            HomSource::Table(t) => {
                let d = t.dim;
                let mut y = slow.to_vec();
                y.extend(std::iter::repeat_n(0.0, d));
                let off = slow.len();
                let cells = (0..grid.len())
                    .map(|c| {
                        grid.node_coords(c, &mut y[off..]);
                        t.z_table_at(&y).map(CellDensity::Table)
                    })
                    .collect::<Result<Vec<_>>>()?;
                CellSlice::new(grid, cells, t.growth)
            }
        }
    }
}

/// Solver bookkeeping of one tabulation step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub solves: usize,
    pub unconverged: usize,
    pub max_iterations: usize,
    pub max_grad_norm: f64,
}

/// Homogenizes `source` over its fastest variable on `grid`, for every node
/// of the slow grids and of `zgrid`.
pub fn hom_step(
    source: HomSource<'_>,
    slow: &[PeriodicGrid],
    zgrid: ZGrid,
    grid: PeriodicGrid,
    opts: &SolverOptions,
) -> Result<(HomTable, StepStats)> {
    let d = source.dim();
    zgrid.validate()?;
    opts.validate()?;
    if zgrid.dim != d || grid.dim() != d || slow.iter().any(|g| g.dim() != d) {
        return invalid("grid dimensions do not match the source");
    }
    if source.fast_vars() != slow.len() + 1 {
        return invalid(format!(
            "source depends on {} fast variables; a step over {} slow grids needs {}",
            source.fast_vars(),
            slow.len(),
            slow.len() + 1
        ));
    }
    let growth = match source {
        HomSource::Integrand { f, .. } => *f.growth(),
        HomSource::Table(t) => t.growth,
    };
    let slices = (0..product_len(slow))
        .into_par_iter()
        .map(|s| source.slice(&product_coords(slow, s), grid))
        .collect::<Result<Vec<_>>>()?;
    let m = zgrid.len();
    let solved = (0..slices.len() * m)
        .into_par_iter()
        .map(|i| {
            let mut z = [0.0; 2];
            zgrid.node(i % m, &mut z[..d]);
            solve_cell(&slices[i / m], &z[..d], opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stats = StepStats { solves: solved.len(), ..Default::default() };
    let values = solved
        .iter()
        .map(|s| {
            stats.unconverged += usize::from(!s.converged);
            stats.max_iterations = stats.max_iterations.max(s.iterations);
            stats.max_grad_norm = stats.max_grad_norm.max(s.grad_norm);
            s.value
        })
        .collect();
    let table = HomTable { level: slow.len() + 1, dim: d, slow: slow.to_vec(), zgrid, growth, values };
    Ok((table, stats))
}

/// All levels of an iterated homogenization, finest first.
#[derive(Debug, Clone)]
pub struct IteratedHom {
    pub tables: Vec<HomTable>,
    pub stats: Vec<StepStats>,
}

impl IteratedHom {
    /// The level-1 table, `f_hom(x, ·)`.
    pub fn f_hom(&self) -> &HomTable {
        self.tables.last().expect("at least one level")
    }

    pub fn unconverged(&self) -> usize {
        self.stats.iter().map(|s| s.unconverged).sum()
    }
}

/// Chains [`hom_step`] from the fastest scale down to level 1. `grids[k]`
/// discretizes the cell of the `(k+1)`-th fast variable; level `k` is
/// tabulated on `zgrid` widened by `kappa^(k-1)`.
pub fn hom_iterate(
    f: &Integrand,
    x: &[f64],
    zgrid: ZGrid,
    grids: &[PeriodicGrid],
    opts: &SolverOptions,
    kappa: f64,
) -> Result<IteratedHom> {
    f.ensure_admissible()?;
    let n = f.scales();
    if grids.len() != n {
        return invalid(format!("{n} scales need {n} grids, got {}", grids.len()));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return invalid("kappa must be at least 1");
    }
    if x.len() != f.dim() {
        return invalid(format!("x has length {}, expected {}", x.len(), f.dim()));
    }
    let mut tables: Vec<HomTable> = Vec::with_capacity(n);
    let mut stats = Vec::with_capacity(n);
    for k in (1..=n).rev() {
        let zg = zgrid.widened(kappa.powi(k as i32 - 1));
        let source = match tables.last() {
            None => HomSource::Integrand { f, x },
            Some(t) => HomSource::Table(t),
        };
        let (t, s) = hom_step(source, &grids[..k - 1], zg, grids[k - 1], opts)?;
        tables.push(t);
        stats.push(s);
    }
    Ok(IteratedHom { tables, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellset::CellSet;
    use crate::error::Error;
    use crate::expr::Expr;
    use crate::integrand::{build_composite, BorelVariant, GrowthBounds, MaterialLaw};

    fn opts() -> SolverOptions {
        SolverOptions { tol_grad: 1e-10, ..Default::default() }
    }

    fn laminate() -> Integrand {
        build_composite(
            vec![CellSet::interval(&[0.0], &[0.5])],
            MaterialLaw::power(1.0),
            MaterialLaw::power(4.0),
            GrowthBounds::new(1.0, 4.0, 2.0).unwrap(),
        )
        .unwrap()
    }

    /// `a(y¹, y²) = A(y¹)` on `y² < 1/2`, else 4, with `A = 1` then 2.
    pub(crate) fn two_scale() -> Integrand {
        let a = Expr::Add(vec![
            Expr::from(1.0),
            Expr::Indicator { scale: Some(0), set: CellSet::interval(&[0.5], &[1.0]) },
        ]);
        build_composite(
            vec![CellSet::full(1), CellSet::interval(&[0.0], &[0.5])],
            MaterialLaw::PowerIso { coef: a },
            MaterialLaw::power(4.0),
            GrowthBounds::new(1.0, 4.0, 2.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn laminate_level_one() {
        let g = PeriodicGrid::new(1, 16).unwrap();
        let zg = ZGrid::new(1, 1.0, 3).unwrap();
        let (t, s) = hom_step(HomSource::Integrand { f: &laminate(), x: &[0.0] }, &[], zg, g, &opts()).unwrap();
        assert_eq!(s.unconverged, 0);
        for (v, e) in t.values.iter().zip([1.6, 0.0, 1.6]) {
            assert!((v - e).abs() < 1e-3, "{v} vs {e}");
        }
    }

    #[test]
    fn y_independent_step_is_identity() {
        let f = Integrand::power(1, 2, 2.0).unwrap();
        let g = PeriodicGrid::new(1, 8).unwrap();
        let zg = ZGrid::new(1, 2.0, 9).unwrap();
        let it = hom_iterate(&f, &[0.0], zg, &[g, g], &opts(), DEFAULT_KAPPA).unwrap();
        let t = it.f_hom();
        for (i, z) in t.zgrid.nodes().iter().enumerate() {
            assert!((t.values[i] - z[0] * z[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn inner_harmonic_means() {
        let f = two_scale();
        let g = PeriodicGrid::new(1, 16).unwrap();
        let zg = ZGrid::new(1, 1.0, 3).unwrap();
        let (t, _) = hom_step(HomSource::Integrand { f: &f, x: &[0.0] }, &[g], zg, g, &opts()).unwrap();
        // slow node 0 has A = 1, node 8 (y¹ = 1/2) has A = 2
        assert!((t.z_slice(0)[2] - 1.6).abs() < 1e-3);
        assert!((t.z_slice(8)[2] - 8.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn iterated_two_scale() {
        let f = two_scale();
        let g = PeriodicGrid::new(1, 16).unwrap();
        let zg = ZGrid::new(1, 1.0, 41).unwrap();
        let it = hom_iterate(&f, &[0.0], zg, &[g, g], &opts(), DEFAULT_KAPPA).unwrap();
        assert_eq!(it.tables.len(), 2);
        assert_eq!(it.tables[0].level, 2);
        let v = hom_query(it.f_hom(), &[], &[1.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-2, "{v}");
    }

    #[test]
    fn small_source_box_is_an_error() {
        let f = two_scale();
        let g = PeriodicGrid::new(1, 16).unwrap();
        let zg = ZGrid::new(1, 1.0, 41).unwrap();
        let r = hom_iterate(&f, &[0.0], zg, &[g, g], &opts(), 1.0);
        let e = r.unwrap_err();
        assert!(matches!(e, Error::OutOfBox(_)));
        assert!(e.to_string().contains("enlarge the source z-grid"));
    }

    #[test]
    fn borel_rejected() {
        let f = Integrand::borel(BorelVariant::FinalDue, 2.0, 8).unwrap();
        let g = PeriodicGrid::new(1, 4).unwrap();
        let zg = ZGrid::new(1, 1.0, 3).unwrap();
        assert!(matches!(hom_iterate(&f, &[0.0], zg, &[g, g], &opts(), 3.0), Err(Error::NotAdmissible(_))));
    }
}
