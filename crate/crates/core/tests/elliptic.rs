use std::f64::consts::FRAC_PI_3;

use aniso_ap::discrete_ops::{b_grad_app, div_b_app, second_order_app};
use aniso_ap::elliptic_ap::{solve, EllipticProblem, EllipticSolver};
use aniso_ap::harness::{error_norms, oblique_manufactured, quadratic_inhomogeneous, radial_manufactured};
use aniso_ap::linsolve::{BcMode, SolverOptions};
use aniso_ap::{AnisotropyField, DualField, Mesh, PrimalField};
use proptest::prelude::*;

fn oblique(n: usize) -> (AnisotropyField, Mesh) {
    (AnisotropyField::oblique(FRAC_PI_3, 1.0).unwrap(), Mesh::unit_square(n).unwrap())
}

fn radial(n: usize) -> (AnisotropyField, Mesh) {
    (AnisotropyField::radial(1.0).unwrap(), Mesh::new(1.0, 2.0, 1.0, 2.0, n, n).unwrap())
}

fn interior_bump(mesh: &Mesh) -> DualField {
    let (x0, y0) = mesh.node_point(0, 0);
    DualField::from_fn(mesh, |x, y| {
        let (s, t) = (x - x0, y - y0);
        (s * (1.0 - s) * t * (1.0 - t)).powi(2) * (1.0 + 0.3 * (5.0 * s).sin())
    })
    .zero_boundary(mesh)
}

#[test]
fn accuracy_is_uniform_in_eps() {
    let mesh = Mesh::unit_square(40).unwrap();
    let errs: Vec<[f64; 3]> = [1e-3, 1e-6]
        .iter()
        .map(|&eps| {
            let case = oblique_manufactured(FRAC_PI_3, eps, &mesh).unwrap();
            let sol = solve(&case.problem).unwrap();
            error_norms(&sol.phi, &case.phi).unwrap().as_array()
        })
        .collect();
    for k in 0..3 {
        let r = errs[1][k] / errs[0][k];
        assert!((0.5..=2.0).contains(&r), "norm {k}: {:e} vs {:e}", errs[1][k], errs[0][k]);
    }
}

#[test]
fn g_problem_reproduces_range_source() {
    for (field, mesh) in [oblique(16), radial(16)] {
        let w = interior_bump(&mesh);
        let f0 = b_grad_app(&w, &field, &mesh).unwrap().scale(-1.0);
        let solver = EllipticSolver::new(&mesh, &field, 1e-6, BcMode::All, &SolverOptions::default()).unwrap();
        let (g, rep) = solver.solve_g(&f0).unwrap();
        assert!(rep.converged());
        let gg = b_grad_app(&g, &field, &mesh).unwrap();
        assert!(gg.add(&f0).max_abs() <= 1e-12 * f0.max_abs());
        let p = solver.compute_p(&f0, &g).unwrap();
        assert!(p.max_abs() * 1e-6 <= 1e-12 * f0.max_abs());
    }
}

#[test]
fn h_problem_recovers_potential() {
    for (field, mesh) in [oblique(16), radial(16)] {
        let hstar = interior_bump(&mesh);
        let u = second_order_app(&hstar, &field, &mesh).unwrap().scale(-1.0);
        let solver = EllipticSolver::new(&mesh, &field, 1e-3, BcMode::All, &SolverOptions::default()).unwrap();
        let (h, rep) = solver.solve_h(&u).unwrap();
        assert!(rep.converged());
        assert!(h.sub(&hstar).max_abs() <= 1e-12 * hstar.max_abs());
    }
}

#[test]
fn quadratic_case_is_exact_and_carries_boundary_data() {
    for field in [AnisotropyField::oblique(FRAC_PI_3, 1.0).unwrap(), AnisotropyField::radial(1.0).unwrap()] {
        let mesh = match field {
            AnisotropyField::Radial { .. } => radial(20).1,
            _ => oblique(20).1,
        };
        let case = quadratic_inhomogeneous(1e-9, &mesh, field).unwrap();
        let sol = solve(&case.problem).unwrap();
        assert!(sol.phi.sub(&case.phi).max_abs() <= 1e-9, "{:e}", sol.phi.sub(&case.phi).max_abs());
        let kappa = match &case.problem.rhs {
            aniso_ap::elliptic_ap::Rhs::Inhomogeneous { kappa, .. } => kappa,
            _ => unreachable!(),
        };
        for k in mesh.boundary_nodes() {
            assert_eq!(sol.u[k], kappa[k]);
        }
    }
}

#[test]
fn fluctuation_part_is_uniform_in_eps() {
    let mesh = Mesh::unit_square(40).unwrap();
    let e: Vec<f64> = [1e-3, 1e-6, 1e-9]
        .iter()
        .map(|&eps| {
            let case = oblique_manufactured(FRAC_PI_3, eps, &mesh).unwrap();
            let sol = solve(&case.problem).unwrap();
            error_norms(&sol.q, &case.q).unwrap().e2
        })
        .collect();
    let (lo, hi) = e.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi / lo < 2.0, "{e:?}");
}

#[test]
fn radial_solution_converges() {
    let mut prev = f64::INFINITY;
    for n in [10usize, 20, 40] {
        let mesh = Mesh::new(1.0, 2.0, 1.0, 2.0, n, n).unwrap();
        let case = radial_manufactured(1e-3, &mesh).unwrap();
        let sol = solve(&case.problem).unwrap();
        let e = error_norms(&sol.phi, &case.phi).unwrap().e2;
        assert!(e < prev / 3.0, "n={n}: {e:e} after {prev:e}");
        prev = e;
    }
}

fn random_source(mesh: &Mesh, seed: &[f64]) -> PrimalField {
    PrimalField::from_vec(
        mesh,
        (0..mesh.n_cells())
            .map(|k| seed[k % seed.len()] * (1.0 + 0.5 * ((k as f64) * 1.3).cos()))
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn decomposition_invariants(
        seed in prop::collection::vec(-1.0f64..1.0, 5..30),
        log_eps in -9.0f64..0.0,
        use_radial: bool,
        flux_only: bool,
    ) {
        let eps = 10f64.powf(log_eps);
        let (field, mesh) = if use_radial { radial(12) } else { oblique(12) };
        let f = random_source(&mesh, &seed);
        let mut prob = EllipticProblem::homogeneous(eps, field, mesh.clone(), f);
        if flux_only {
            prob.bc_mode = BcMode::FluxOnly;
        }
        let sol = solve(&prob).unwrap();
        prop_assert_eq!(sol.phi.clone(), sol.p.add(&sol.q));
        let d = sol.diagnostics;
        prop_assert!(d.orthogonality <= 1e-10, "orthogonality {:e}", d.orthogonality);
        prop_assert!(d.variational_residual <= 1e-8, "variational {:e}", d.variational_residual);
        let div = div_b_app(&sol.p, &field, &mesh).unwrap();
        let solver = EllipticSolver::for_problem(&prob).unwrap();
        let div_free = (0..mesh.n_nodes())
            .filter(|&k| solver.is_free(k))
            .fold(0.0f64, |m, k| m.max(div[k].abs()));
        prop_assert!((div_free - d.div_p_max).abs() <= 1e-12 * (1.0 + div_free));
    }
}
