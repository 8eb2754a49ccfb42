//! Asymptotic-preserving solvers for degenerate anisotropic elliptic problems
//! with Neumann boundary conditions on 2D Cartesian grids, and a semi-implicit
//! scheme for the isothermal Euler-Lorentz system built on top of them.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`] and [`field`]: the primal rectangle mesh, its dual node mesh and
//!   the piecewise-constant fields living on each.
//! * [`bfield`]: analytic anisotropy directions and the electric field used by
//!   the plasma test cases.
//! * [`discrete_ops`]: the mutually adjoint stencils `(b·∇)_app` and
//!   `∇·(b ·)_app` and their composition.
//! * [`linsolve`]: sparse assembly with Dirichlet rows and direct / iterative
//!   solvers.
//! * [`elliptic_ap`]: the p/q decomposition solver.
//! * [`euler_lorentz`]: the AP and classical time steppers.
//! * [`harness`]: manufactured solutions, error norms and parameter sweeps.

pub mod bfield;
pub mod discrete_ops;
pub mod elliptic_ap;
pub mod error;
pub mod euler_lorentz;
pub mod field;
pub mod harness;
pub mod io;
pub mod linsolve;
pub mod mesh;

pub use bfield::{AnisotropyField, ElectricField};
pub use error::{Error, Result};
pub use field::{DualField, PrimalField};
pub use mesh::Mesh;
