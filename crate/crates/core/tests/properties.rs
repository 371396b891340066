//! Invariants checked on random inputs.

mod common;

use common::{harmonic_mean, power_mean};
use multihom::cell_solver::{cell_energy, solve_cell, solve_cell_from, CellSlice};
use multihom::cellset::CellSet;
use multihom::descent::SolverOptions;
use multihom::eps::{counterexample_run, solve_eps, DomainSpec};
use multihom::exact::{frac, rational_from_f64, to_f64, Rational};
use multihom::hom::{hom_query, HomTable, ZGrid};
use multihom::integrand::{build_composite, lipschitz_bound, BorelVariant, GrowthBounds, Integrand, MaterialLaw};
use multihom::measure::{center_of_mass, empirical_young, overall_mean, YoungBins};
use multihom::periodic::{adjoint_gradient, discrete_gradient, project_mean_zero, Field, GradField, PeriodicGrid};
use multihom::scales::{Eps, ScaleFamily};
use multihom::spectral::{DirichletLaplacian, PeriodicLaplacian};
use proptest::prelude::*;

fn laminate(a1: f64, a2: f64, theta: f64, p: f64) -> Integrand {
    build_composite(
        vec![CellSet::interval(&[0.0], &[theta])],
        MaterialLaw::power(a1),
        MaterialLaw::power(a2),
        GrowthBounds::new(a1.min(a2), a1.max(a2), p).unwrap(),
    )
    .unwrap()
}

fn checker(a1: f64, a2: f64) -> Integrand {
    build_composite(
        vec![CellSet::CheckerQuadrant],
        MaterialLaw::power(a1),
        MaterialLaw::power(a2),
        GrowthBounds::new(a1.min(a2), a1.max(a2), 2.0).unwrap(),
    )
    .unwrap()
}

fn tight() -> SolverOptions {
    SolverOptions { tol_grad: 1e-11, ..Default::default() }
}

fn slice(f: &Integrand, n: usize) -> CellSlice {
    let g = PeriodicGrid::new(f.dim(), n).unwrap();
    CellSlice::from_integrand(f, &vec![0.0; f.dim()], &[], g).unwrap()
}

proptest! {
    #[test]
    fn growth_sandwich(a1 in 0.2f64..6.0, a2 in 0.2f64..6.0, p in 1.2f64..4.0, y in 0.0f64..1.0, z in -8.0f64..8.0) {
        let f = laminate(a1, a2, 0.5, p);
        let v = f.eval(&[0.0], &[y], &[z]).unwrap();
        let g = f.growth();
        prop_assert!(g.lower(&[z]) <= v * (1.0 + 1e-14));
        prop_assert!(v <= g.upper(&[z]) * (1.0 + 1e-14));
    }

    #[test]
    fn midpoint_convexity_and_lipschitz(
        a1 in 0.2f64..6.0, a2 in 0.2f64..6.0, p in 1.2f64..4.0,
        y in prop::array::uniform2(0.0f64..1.0),
        z1 in prop::array::uniform2(-5.0f64..5.0), z2 in prop::array::uniform2(-5.0f64..5.0),
    ) {
        let f = build_composite(
            vec![CellSet::CheckerQuadrant],
            MaterialLaw::power(a1),
            MaterialLaw::power(a2),
            GrowthBounds::new(a1.min(a2), a1.max(a2), p).unwrap(),
        ).unwrap();
        let m = [(z1[0] + z2[0]) / 2.0, (z1[1] + z2[1]) / 2.0];
        let (v1, v2, vm) = (f.eval(&[0.0, 0.0], &y, &z1).unwrap(), f.eval(&[0.0, 0.0], &y, &z2).unwrap(), f.eval(&[0.0, 0.0], &y, &m).unwrap());
        prop_assert!(vm <= 0.5 * (v1 + v2) + 1e-12 * (1.0 + vm));
        let n = |z: &[f64; 2]| z[0].hypot(z[1]);
        let dist = (z1[0] - z2[0]).hypot(z1[1] - z2[1]);
        let bound = lipschitz_bound(f.growth().c2, 2, p, n(&z1), n(&z2)) * dist;
        prop_assert!((v1 - v2).abs() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn adjoint_identity(n in 2usize..12, d in 1usize..=2, seed in 0u64..1000) {
        let g = PeriodicGrid::new(d, n).unwrap();
        let phi = Field::new((0..g.len()).map(|i| (((i as u64 + 1) * (seed + 7) * 2654435761) % 1000) as f64 / 100.0 - 5.0).collect());
        let q = GradField { dim: d, vectors: (0..d * g.len()).map(|i| (((i as u64 + 3) * (seed + 11) * 40503) % 1000) as f64 / 250.0 - 2.0).collect() };
        let lhs: f64 = discrete_gradient(&phi, &g).vectors.iter().zip(&q.vectors).map(|(a, b)| a * b).sum();
        let rhs: f64 = phi.values.iter().zip(&adjoint_gradient(&q, &g).values).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-14 * g.len() as f64 * (1.0 + lhs.abs()));
    }

    #[test]
    fn gauge_projection(values in prop::collection::vec(-10.0f64..10.0, 4..64)) {
        let once = project_mean_zero(&Field::new(values));
        prop_assert!(once.mean().abs() < 1e-13);
        let twice = project_mean_zero(&once);
        for (a, b) in once.values.iter().zip(&twice.values) {
            prop_assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn spectral_solves_invert(n in 3usize..20, d in 1usize..=2, seed in 0u64..100) {
        let g = PeriodicGrid::new(d, n).unwrap();
        let r = project_mean_zero(&Field::new((0..g.len()).map(|i| ((i as u64 * 31 + seed * 17) % 23) as f64 - 11.0).collect()));
        let mut u = vec![0.0; g.len()];
        PeriodicLaplacian::new(&g).solve(&r.values, &mut u);
        let mut grad = vec![0.0; g.len() * d];
        g.gradient_into(&u, &mut grad);
        let mut back = vec![0.0; g.len()];
        g.gradient_transpose_into(&grad, &mut back);
        for (a, b) in back.iter().zip(&r.values) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
        let lap = DirichletLaplacian::new(d, n);
        let rhs: Vec<f64> = (0..lap.unknowns()).map(|i| ((i as u64 * 7 + seed) % 5) as f64 - 2.0).collect();
        let mut w = vec![0.0; rhs.len()];
        lap.solve(&rhs, &mut w);
        // apply the Dirichlet 2d+1 point operator scaled by n²
        let m = n - 1;
        let at = |i: isize, j: isize| if i < 0 || j < 0 || i >= m as isize || j >= m as isize { 0.0 } else { w[i as usize + m * j as usize] };
        for k in 0..rhs.len() {
            let (i, j) = ((k % m) as isize, (k / m) as isize);
            let mut lw = 2.0 * w[k] - at(i - 1, j) - at(i + 1, j);
            if d == 2 {
                lw += 2.0 * w[k] - at(i, j - 1) - at(i, j + 1);
            }
            prop_assert!((lw * (n * n) as f64 - rhs[k]).abs() < 1e-8 * (1.0 + rhs[k].abs()));
        }
    }

    #[test]
    fn exact_rationals(v in -1e6f64..1e6) {
        let q = rational_from_f64(v).unwrap();
        prop_assert_eq!(to_f64(&q), v);
        let f = frac(&q);
        prop_assert!(f >= Rational::from_integer(0) && f < Rational::from_integer(1));
        prop_assert!((q - f).is_integer());
    }

    #[test]
    fn table_csv_round_trip(values in prop::collection::vec(0.0f64..1e3, 5 * 3), n in 2usize..4) {
        let zgrid = ZGrid::new(1, 1.25, 5).unwrap();
        let slow = vec![PeriodicGrid::new(1, n).unwrap()];
        let mut v = values;
        v.resize(n * 5, 0.5);
        let t = HomTable { level: 2, dim: 1, slow, zgrid, growth: GrowthBounds::new(0.1, 10.0, 2.0).unwrap(), values: v };
        let back = HomTable::from_csv(&t.to_csv()).unwrap();
        prop_assert_eq!(&back, &t);
        for i in 0..5 {
            let mut z = [0.0];
            zgrid.node(i, &mut z);
            prop_assert_eq!(hom_query(&t, &[0.0], &z).unwrap(), t.values[i]);
        }
    }

    #[test]
    fn counterexample_parity(h in 1i64..40) {
        let r = counterexample_run(BorelVariant::FinalUno, &[h], 2.0, 16).unwrap();
        prop_assert_eq!(r.rows[0].ratio, if h % 2 == 0 { 1.0 } else { 2.0 });
        let d = counterexample_run(BorelVariant::FinalDue, &[h], 3.0, 16).unwrap();
        prop_assert_eq!(d.rows[0].ratio, if h % 2 == 0 { 1.0 } else { 2.0 });
        let b = counterexample_run(BorelVariant::Brutto, &[h], 2.0, 16).unwrap();
        prop_assert_eq!(b.rows[0].trajectory_integral, Some(1.0));
        prop_assert_eq!(b.product_integral, Some(0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn laminate_matches_harmonic_and_power_means(a1 in 0.3f64..5.0, a2 in 0.3f64..5.0, p in 1.5f64..4.0) {
        let s = solve_cell(&slice(&laminate(a1, a2, 0.5, 2.0), 32), &[1.0], &tight()).unwrap();
        prop_assert!((s.value - harmonic_mean(&[a1, a2])).abs() < 1e-8);
        let s = solve_cell(&slice(&laminate(a1, a2, 0.5, p), 32), &[1.0], &tight()).unwrap();
        prop_assert!((s.value - power_mean(&[a1, a2], p)).abs() / s.value < 1e-4, "{} vs {}", s.value, power_mean(&[a1, a2], p));
    }

    #[test]
    fn cell_solve_bounds_symmetry_monotonicity(
        a1 in 0.5f64..4.0, a2 in 0.5f64..4.0, bump in 0.0f64..2.0,
        z in prop::array::uniform2(-2.0f64..2.0),
    ) {
        let f = checker(a1, a2);
        let sl = slice(&f, 8);
        let g = *sl.grid();
        let sol = solve_cell_from(&sl, &z, Field::zeros(&g), &tight(), true).unwrap();
        let energies: Vec<f64> = sol.trace.unwrap().iter().map(|r| r.energy).collect();
        prop_assert!(energies.windows(2).all(|w| w[1] <= w[0]));
        let plain = cell_energy(&sl, &z, &Field::zeros(&g)).unwrap();
        prop_assert!(sol.value <= plain + 1e-12);
        let zz = z[0] * z[0] + z[1] * z[1];
        prop_assert!(sol.value >= a1.min(a2) * zz - 1e-12);
        prop_assert!(sol.corrector.mean().abs() < 1e-12);
        let neg = solve_cell(&sl, &[-z[0], -z[1]], &tight()).unwrap();
        prop_assert!((neg.value - sol.value).abs() < 1e-9 * (1.0 + sol.value));
        let stiffer = solve_cell(&slice(&checker(a1 + bump, a2 + bump), 8), &z, &tight()).unwrap();
        prop_assert!(sol.value <= stiffer.value + 1e-10);
    }

    #[test]
    fn eps_energy_bounds(a1 in 0.5f64..4.0, a2 in 0.5f64..4.0, h in 1u64..8, z in -2.0f64..2.0) {
        let f = laminate(a1, a2, 0.5, 2.0);
        let dom = DomainSpec::new(1, 64, vec![z]).unwrap();
        let s = solve_eps(&f, &ScaleFamily::powers(1), Eps::Inverse(h), &dom, &tight()).unwrap();
        prop_assert!(s.energy >= a1.min(a2) * z * z - 1e-12);
        prop_assert!(s.energy <= s.affine_energy + 1e-12);
        prop_assert_eq!(s.u.values[0], 0.0);
        prop_assert_eq!(s.u.values[64], z);
    }

    #[test]
    fn histogram_identities(h in 1u64..16, z in -2.0f64..2.0, y_bins in 1usize..6, z_bins in 1usize..40) {
        let f = laminate(1.0, 4.0, 0.5, 2.0);
        let dom = DomainSpec::new(1, 256, vec![z]).unwrap();
        let s = ScaleFamily::powers(1);
        let u = solve_eps(&f, &s, Eps::Inverse(h), &dom, &tight()).unwrap().u;
        let m = empirical_young(&u, &dom, &s, Eps::Inverse(h), YoungBins { y_bins, z_bins, z_range: 3.0 }).unwrap();
        prop_assert!((m.mass().iter().sum::<f64>() - 1.0).abs() < 1e-15 * (y_bins * z_bins) as f64);
        let g = dom.gradients(&u.values);
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        prop_assert!((overall_mean(&m)[0] - mean).abs() < 1e-12);
        prop_assert_eq!(center_of_mass(&m).len(), y_bins);
    }
}
