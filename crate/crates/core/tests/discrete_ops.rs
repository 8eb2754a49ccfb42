use std::f64::consts::FRAC_PI_3;

use aniso_ap::discrete_ops::{b_grad_app, div_b_app, div_stencil, grad_stencil, second_order_app};
use aniso_ap::harness::fit_slope;
use aniso_ap::{AnisotropyField, DualField, Mesh, PrimalField};
use proptest::prelude::*;

fn field_and_mesh(radial: bool, n: usize) -> (AnisotropyField, Mesh) {
    if radial {
        (AnisotropyField::radial(1.0).unwrap(), Mesh::new(1.0, 2.0, 1.0, 2.0, n, n).unwrap())
    } else {
        (AnisotropyField::oblique(FRAC_PI_3, 1.0).unwrap(), Mesh::unit_square(n).unwrap())
    }
}

fn green_defect(field: &AnisotropyField, mesh: &Mesh, psi: &DualField, phi: &PrimalField) -> f64 {
    let area = mesh.dx * mesh.dy;
    let lhs = b_grad_app(psi, field, mesh).unwrap().dot(phi) * area;
    let rhs = -psi.dot(&div_b_app(phi, field, mesh).unwrap()) * area;
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    (lhs - rhs).abs() / scale
}

fn random_pair(mesh: &Mesh, seed: &[f64]) -> (DualField, PrimalField) {
    let mut k = 0;
    let mut next = || {
        k += 1;
        seed[k % seed.len()] * ((k as f64) * 0.7).sin() + seed[(3 * k) % seed.len()]
    };
    let mut psi = DualField::zeros(mesh);
    for n in mesh.interior_nodes() {
        psi[n] = next();
    }
    let phi = PrimalField::from_vec(mesh, (0..mesh.n_cells()).map(|_| next()).collect()).unwrap();
    (psi, phi)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn green_identity(seed in prop::collection::vec(-1.0f64..1.0, 17..40), radial: bool, grid in 0usize..3) {
        let n = [10, 20, 40][grid];
        let (field, mesh) = field_and_mesh(radial, n);
        let (psi, phi) = random_pair(&mesh, &seed);
        prop_assert!(green_defect(&field, &mesh, &psi, &phi) <= 1e-12);
    }

    #[test]
    fn operators_are_linear(a in -3.0f64..3.0, seed in prop::collection::vec(-1.0f64..1.0, 8..20), radial: bool) {
        let (field, mesh) = field_and_mesh(radial, 12);
        let (p1, f1) = random_pair(&mesh, &seed);
        let (p2, f2) = random_pair(&mesh, &seed[1..]);
        let lhs = b_grad_app(&p1.axpy(a, &p2), &field, &mesh).unwrap();
        let rhs = b_grad_app(&p1, &field, &mesh).unwrap().axpy(a, &b_grad_app(&p2, &field, &mesh).unwrap());
        prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-12 * (1.0 + rhs.max_abs()));
        let lhs = div_b_app(&f1.axpy(a, &f2), &field, &mesh).unwrap();
        let rhs = div_b_app(&f1, &field, &mesh).unwrap().axpy(a, &div_b_app(&f2, &field, &mesh).unwrap());
        prop_assert!(lhs.sub(&rhs).max_abs() <= 1e-12 * (1.0 + rhs.max_abs()));
    }
}

#[test]
fn stencils_match_operators_and_width() {
    let (field, mesh) = field_and_mesh(true, 7);
    let g = grad_stencil(&field, &mesh).unwrap();
    let d = div_stencil(&field, &mesh).unwrap();
    assert!(g.max_width() <= 4 && d.max_width() <= 4);
    let psi = DualField::from_fn(&mesh, |x, y| (x * y).sin());
    let phi = PrimalField::from_fn(&mesh, |x, y| x - y * y);
    let a = g.apply(psi.values());
    let b = b_grad_app(&psi, &field, &mesh).unwrap();
    assert!(a.iter().zip(b.values()).all(|(u, v)| (u - v).abs() < 1e-14));
    let a = d.apply(phi.values());
    let b = div_b_app(&phi, &field, &mesh).unwrap();
    assert!(a.iter().zip(b.values()).all(|(u, v)| (u - v).abs() < 1e-13));
}

fn consistency_slope(
    radial: bool,
    psi: impl Fn(f64, f64) -> f64,
    exact: impl Fn(f64, f64) -> f64,
) -> f64 {
    let grids = [20usize, 40, 80, 160];
    let mut h = Vec::new();
    let mut e = Vec::new();
    for &n in &grids {
        let (field, mesh) = field_and_mesh(radial, n);
        let s = second_order_app(&DualField::from_fn(&mesh, &psi), &field, &mesh).unwrap();
        let err = mesh
            .interior_nodes()
            .into_iter()
            .map(|k| {
                let (i, j) = mesh.node_ij(k);
                let (x, y) = mesh.node_point(i, j);
                (s[k] - exact(x, y)).abs()
            })
            .fold(0.0, f64::max);
        h.push(1.0 / n as f64);
        e.push(err);
    }
    fit_slope(&h, &e).unwrap().0
}

#[test]
fn second_order_consistency_oblique() {
    let b = [FRAC_PI_3.sin(), FRAC_PI_3.cos()];
    let slope = consistency_slope(
        false,
        |x, y| (2.0 * x).sin() * (3.0 * y).cos(),
        |x, y| {
            let (s2, c2, s3, c3) = ((2.0 * x).sin(), (2.0 * x).cos(), (3.0 * y).sin(), (3.0 * y).cos());
            let (xx, xy, yy) = (-4.0 * s2 * c3, -6.0 * c2 * s3, -9.0 * s2 * c3);
            b[0] * b[0] * xx + 2.0 * b[0] * b[1] * xy + b[1] * b[1] * yy
        },
    );
    assert!((slope - 2.0).abs() <= 0.2, "{slope}");
}

#[test]
fn second_order_consistency_radial() {
    let slope = consistency_slope(
        true,
        |x, _| x.powi(3),
        |x, y| (6.0 * x * y * y - 3.0 * x.powi(3)) / (x * x + y * y),
    );
    assert!((slope - 2.0).abs() <= 0.2, "{slope}");
}
