mod common;

use common::{fixture, harmonic_mean};
use multihom::cell_solver::{solve_cell, CellSlice};
use multihom::cellset::CellSet;
use multihom::descent::SolverOptions;
use multihom::eps::{gamma_convergence_run, homogenized_reference, solve_eps, DomainSpec, ReferenceSpec};
use multihom::expr::Expr;
use multihom::hom::{hom_iterate, hom_joint, hom_query, ZGrid, DEFAULT_KAPPA};
use multihom::integrand::{build_composite, GrowthBounds, Integrand, MaterialLaw};
use multihom::measure::{center_of_mass, empirical_young, YoungBins};
use multihom::periodic::PeriodicGrid;
use multihom::scales::{Eps, ScaleFamily};

fn opts() -> SolverOptions {
    SolverOptions { tol_grad: 1e-10, ..Default::default() }
}

#[test]
fn stripes_in_2d_mix_harmonic_and_arithmetic_means() {
    let f = build_composite(
        vec![CellSet::interval(&[0.0, 0.0], &[0.5, 1.0])],
        MaterialLaw::power(1.0),
        MaterialLaw::power(4.0),
        GrowthBounds::new(1.0, 4.0, 2.0).unwrap(),
    )
    .unwrap();
    let g = PeriodicGrid::new(2, 16).unwrap();
    let slice = CellSlice::from_integrand(&f, &[0.0, 0.0], &[], g).unwrap();
    let across = solve_cell(&slice, &[1.0, 0.0], &opts()).unwrap().value;
    let along = solve_cell(&slice, &[0.0, 1.0], &opts()).unwrap().value;
    let both = solve_cell(&slice, &[1.0, 1.0], &opts()).unwrap().value;
    assert!((across - harmonic_mean(&[1.0, 4.0])).abs() < 1e-8, "{across}");
    assert!((along - 2.5).abs() < 1e-8, "{along}");
    assert!((both - (1.6 + 2.5)).abs() < 1e-8, "{both}");
}

#[test]
fn anisotropic_constant_law_is_its_own_homogenization() {
    let law = MaterialLaw::QuadAniso { matrix: vec![Expr::from(2.0), Expr::from(0.5), Expr::from(1.0)] };
    let f = Integrand::simple(2, 1, law, GrowthBounds::new(0.4, 2.5, 2.0).unwrap()).unwrap();
    let g = PeriodicGrid::new(2, 8).unwrap();
    let zg = ZGrid::new(2, 1.0, 5).unwrap();
    let it = hom_iterate(&f, &[0.0, 0.0], zg, &[g], &opts(), DEFAULT_KAPPA).unwrap();
    for (i, z) in zg.nodes().iter().enumerate() {
        let exact = f.eval(&[0.0, 0.0], &[0.0, 0.0], z).unwrap();
        assert!((it.f_hom().values[i] - exact).abs() < 1e-10);
    }
}

#[test]
fn checkerboard_iterate_and_joint_agree() {
    let f = fixture("checkerboard.json");
    let g = PeriodicGrid::new(2, 16).unwrap();
    let zg = ZGrid::new(2, 1.0, 3).unwrap();
    let it = hom_iterate(&f, &[0.0, 0.0], zg, &[g], &opts(), DEFAULT_KAPPA).unwrap();
    for z in [[1.0, 0.0], [0.0, -1.0], [1.0, 1.0]] {
        let a = hom_query(it.f_hom(), &[], &z).unwrap();
        let j = hom_joint(&f, &[0.0, 0.0], &z, &[g], &opts()).unwrap();
        assert!((a - j.value).abs() < 1e-8, "{a} vs {}", j.value);
    }
    // the 2x2 symmetric checkerboard is isotropic
    let x = hom_query(it.f_hom(), &[], &[1.0, 0.0]).unwrap();
    let y = hom_query(it.f_hom(), &[], &[0.0, 1.0]).unwrap();
    assert!((x - y).abs() < 1e-8);
}

#[test]
fn laminate_minima_converge_along_dyadic_eps() {
    let f = fixture("laminate.json");
    let dom = DomainSpec::new(1, 2048, vec![1.0]).unwrap();
    let mut last = f64::INFINITY;
    for h in [4, 8, 16, 32] {
        let s = solve_eps(&f, &ScaleFamily::powers(1), Eps::Inverse(h), &dom, &opts()).unwrap();
        let err = (s.energy - 1.6).abs();
        assert!(err <= last + 1e-12);
        assert!(err / 1.6 < 0.05);
        last = err;
    }
}

#[test]
fn y_independent_gaps_vanish() {
    let f = Integrand::power(1, 2, 3.0).unwrap();
    let spec = ReferenceSpec {
        zgrid: ZGrid::new(1, 1.0, 41).unwrap(),
        grids: vec![PeriodicGrid::new(1, 8).unwrap(); 2],
        kappa: DEFAULT_KAPPA,
        x_samples: 4,
    };
    let reference = homogenized_reference(&f, &[1.0], &spec, &opts()).unwrap();
    let dom = DomainSpec::new(1, 128, vec![1.0]).unwrap();
    let eps: Vec<Eps> = [2, 4, 8].map(Eps::Inverse).to_vec();
    let r = gamma_convergence_run(&f, &ScaleFamily::powers(2), &eps, &dom, reference, &opts()).unwrap();
    assert!(r.rows.iter().all(|row| row.gap < 1e-8));
}

#[test]
fn x_dependent_reference_integrates_over_the_domain() {
    // f = (1 + x)|z|², so ∫ f_hom(x, 1) dx = 3/2
    let coef = Expr::Add(vec![Expr::from(1.0), Expr::X(0)]);
    let f = Integrand::simple(1, 1, MaterialLaw::PowerIso { coef }, GrowthBounds::new(1.0, 2.0, 2.0).unwrap()).unwrap();
    let spec = ReferenceSpec {
        zgrid: ZGrid::new(1, 1.0, 3).unwrap(),
        grids: vec![PeriodicGrid::new(1, 4).unwrap()],
        kappa: DEFAULT_KAPPA,
        x_samples: 8,
    };
    let r = homogenized_reference(&f, &[1.0], &spec, &opts()).unwrap();
    assert!((r - 1.5).abs() < 1e-12, "{r}");
}

#[test]
fn two_scale_eps_problem_approaches_iterated_value() {
    let f = fixture("two_scale.json");
    let dom = DomainSpec::new(1, 4096, vec![1.0]).unwrap();
    let s = solve_eps(&f, &ScaleFamily::powers(2), Eps::Inverse(8), &dom, &opts()).unwrap();
    assert!(s.converged);
    assert!((s.energy - 2.0).abs() / 2.0 < 0.05, "{}", s.energy);
}

#[test]
fn laminate_young_measure_concentrates_on_fluxes() {
    let f = fixture("laminate.json");
    let dom = DomainSpec::new(1, 2048, vec![1.0]).unwrap();
    let s = ScaleFamily::powers(1);
    let u = solve_eps(&f, &s, Eps::Inverse(32), &dom, &opts()).unwrap().u;
    let m = empirical_young(&u, &dom, &s, Eps::Inverse(32), YoungBins { y_bins: 2, z_bins: 64, z_range: 3.0 }).unwrap();
    assert_eq!(m.clipped, 0);
    let com = center_of_mass(&m);
    assert!((com[0].as_ref().unwrap()[0] - 1.6).abs() < 0.08);
    assert!((com[1].as_ref().unwrap()[0] - 0.4).abs() < 0.02);
    let marginal = m.y_marginal();
    assert!((marginal[0] - 0.5).abs() < 1.0 / 2048.0 + 1.0 / 32.0);
}
