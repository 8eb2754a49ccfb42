use crate::bfield::AnisotropyField;
use crate::discrete_ops::{b_grad_app, div_b_app, second_order_app};
use crate::elliptic_ap::EllipticProblem;
use crate::error::{Error, Result};
use crate::field::{DualField, PrimalField};
use crate::mesh::Mesh;

/// A problem together with its analytic solution sampled at cell centres.
#[derive(Debug, Clone)]
pub struct Manufactured {
    pub problem: EllipticProblem,
    pub phi: PrimalField,
    /// Kernel part of the exact solution.
    pub p: PrimalField,
    /// Fluctuation part of the exact solution.
    pub q: PrimalField,
}

fn cubic_bump(x: f64, y: f64) -> f64 {
    ((x - 1.0) * (y - 1.0) * x * y).powi(3)
}

fn cubic_bump_grad(x: f64, y: f64) -> [f64; 2] {
    let p = (x - 1.0) * x * (y - 1.0) * y;
    let sx = (x - 1.0) * x;
    let sy = (y - 1.0) * y;
    [
        3.0 * p * p * sy * (2.0 * x - 1.0),
        3.0 * p * p * sx * (2.0 * y - 1.0),
    ]
}

fn shifted_bump(x: f64, y: f64) -> f64 {
    ((1.0 - x) * (2.0 - x) * (1.0 - y) * (2.0 - y)).powi(3)
}

fn shifted_bump_grad(x: f64, y: f64) -> [f64; 2] {
    let ax = (1.0 - x) * (2.0 - x);
    let ay = (1.0 - y) * (2.0 - y);
    let q = ax * ay;
    [
        3.0 * q * q * ay * (2.0 * x - 3.0),
        3.0 * q * q * ax * (2.0 * y - 3.0),
    ]
}

/// Builds `f = f0 + ε f1` with `f0 = −(b·∇)_app (w)`, `w` the interior part of
/// `(∇·(b⊗b∇))_app H`. This places `f0` in the range of `(b·∇)_app` exactly.
fn well_prepared(
    eps: f64,
    field: AnisotropyField,
    mesh: &Mesh,
    bump: impl Fn(f64, f64) -> f64,
    phi: PrimalField,
) -> Result<EllipticProblem> {
    let h = DualField::from_fn(mesh, bump);
    let w = second_order_app(&h, &field, mesh)?.zero_boundary(mesh);
    let f0 = b_grad_app(&w, &field, mesh)?.scale(-1.0);
    Ok(EllipticProblem::from_split(eps, field, mesh.clone(), f0, phi))
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("eps must be positive, got {eps}")))
    }
}

/// Oblique uniform field on `[0, 1]²` with `φ = sin(x cos α − y sin α) + b·∇H`,
/// `H = ((x−1)(y−1)xy)³`. The first term is constant along `b = (sin α, cos α)`.
pub fn oblique_manufactured(alpha: f64, eps: f64, mesh: &Mesh) -> Result<Manufactured> {
    check_eps(eps)?;
    let field = AnisotropyField::oblique(alpha, 1.0)?;
    let b = field.direction(0.0, 0.0);
    let p = PrimalField::from_fn(mesh, |x, y| (x * alpha.cos() - y * alpha.sin()).sin());
    let q = PrimalField::from_fn(mesh, |x, y| {
        let g = cubic_bump_grad(x, y);
        b[0] * g[0] + b[1] * g[1]
    });
    let phi = p.add(&q);
    let problem = well_prepared(eps, field, mesh, cubic_bump, phi.clone())?;
    Ok(Manufactured { problem, phi, p, q })
}

/// Circular field on `]1, 2[²` with `φ = 1 + b·∇H_var`,
/// `H_var = (1−x)³(1−y)³(2−x)³(2−y)³`.
pub fn radial_manufactured(eps: f64, mesh: &Mesh) -> Result<Manufactured> {
    check_eps(eps)?;
    let field = AnisotropyField::radial(1.0)?;
    field.validate_on(mesh)?;
    let p = PrimalField::constant(mesh, 1.0);
    let q = PrimalField::from_fn(mesh, |x, y| {
        let b = field.direction(x, y);
        let g = shifted_bump_grad(x, y);
        b[0] * g[0] + b[1] * g[1]
    });
    let phi = p.add(&q);
    let problem = well_prepared(eps, field, mesh, shifted_bump, phi.clone())?;
    Ok(Manufactured { problem, phi, p, q })
}

/// `φ = 2x² + y²` with `f₂ = ε φ` and `κ = −∇·(b φ)`. Interior values of `κ`
/// are taken from the discrete divergence of the sampled `φ` so that the
/// quadratic is an exact discrete solution; boundary values are analytic.
pub fn quadratic_inhomogeneous(
    eps: f64,
    mesh: &Mesh,
    field: AnisotropyField,
) -> Result<Manufactured> {
    check_eps(eps)?;
    field.validate_on(mesh)?;
    let phi = PrimalField::from_fn(mesh, |x, y| 2.0 * x * x + y * y);
    let div = div_b_app(&phi, &field, mesh)?;
    let mut kappa = DualField::from_fn(mesh, |x, y| {
        let b = field.direction(x, y);
        -(4.0 * x * b[0] + 2.0 * y * b[1])
    });
    for k in mesh.interior_nodes() {
        kappa[k] = -div[k];
    }
    let f2 = phi.scale(eps);
    let problem = EllipticProblem::inhomogeneous(eps, field, mesh.clone(), f2, kappa);
    Ok(Manufactured {
        problem,
        p: PrimalField::zeros(mesh),
        q: PrimalField::zeros(mesh),
        phi,
    })
}
