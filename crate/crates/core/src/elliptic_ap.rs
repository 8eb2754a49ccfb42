//! The asymptotic-preserving decomposition solver for
//!
//! ```text
//! −(b·∇)(∇·(b φ)) + ε φ = f   in Ω,     (b·ν) ∇·(b φ) = −(b·ν) κ   on ∂Ω
//! ```
//!
//! The solution is split as `φ = p + q` with `p` in the discrete kernel
//! `K_app = {∇·(b ·)_app = 0}` and `q = (b·∇)_app h` in its orthogonal
//! complement. Three second-order solves are needed:
//!
//! * g-problem: `−∇·((b⊗b)∇g) = ∇·(b f)`, then `p = (f + b·∇g) / ε`;
//! * u-problem: `∇·((b⊗b)∇u) − ε u = ∇·(b f)`;
//! * h-problem: `−∇·((b⊗b)∇h) = u`, then `q = b·∇h`.
//!
//! In the inhomogeneous case `f = b·∇κ + f₂`: the g-problem and `p` use `f₂`
//! only, the u-problem uses the full `f` with `u = κ` on the boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bfield::AnisotropyField;
use crate::discrete_ops::{b_grad_app, div_b_app};
use crate::error::{Error, Result};
use crate::field::{DualField, PrimalField};
use crate::linsolve::{
    assemble_second_order, BcMode, Dirichlet, PreparedSystem, SolveReport, SolverOptions,
};
use crate::mesh::Mesh;

/// Right-hand side data.
#[derive(Debug, Clone, PartialEq)]
pub enum Rhs {
    /// Homogeneous Neumann conditions, source `f`.
    Homogeneous { f: PrimalField },
    /// `f = b·∇κ + f₂` with boundary flux data carried by `κ`.
    Inhomogeneous { f2: PrimalField, kappa: DualField },
}

/// Well-prepared split `f = f0 + ε f1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub f0: PrimalField,
    pub f1: PrimalField,
}

#[derive(Debug, Clone)]
pub struct EllipticProblem {
    pub eps: f64,
    pub field: AnisotropyField,
    pub mesh: Mesh,
    pub rhs: Rhs,
    pub split: Option<Split>,
    pub bc_mode: BcMode,
    pub solver: SolverOptions,
}

impl EllipticProblem {
    pub fn homogeneous(eps: f64, field: AnisotropyField, mesh: Mesh, f: PrimalField) -> Self {
        Self {
            eps,
            field,
            mesh,
            rhs: Rhs::Homogeneous { f },
            split: None,
            bc_mode: BcMode::All,
            solver: SolverOptions::default(),
        }
    }

    pub fn inhomogeneous(
        eps: f64,
        field: AnisotropyField,
        mesh: Mesh,
        f2: PrimalField,
        kappa: DualField,
    ) -> Self {
        Self {
            eps,
            field,
            mesh,
            rhs: Rhs::Inhomogeneous { f2, kappa },
            split: None,
            bc_mode: BcMode::All,
            solver: SolverOptions::default(),
        }
    }

    /// Builds a homogeneous problem from a split, `f = f0 + ε f1`.
    pub fn from_split(
        eps: f64,
        field: AnisotropyField,
        mesh: Mesh,
        f0: PrimalField,
        f1: PrimalField,
    ) -> Self {
        let f = f0.axpy(eps, &f1);
        let mut p = Self::homogeneous(eps, field, mesh, f);
        p.split = Some(Split { f0, f1 });
        p
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        self.field.validate_on(&self.mesh)?;
        self.solver.validate()?;
        match &self.rhs {
            Rhs::Homogeneous { f } => f.check(&self.mesh)?,
            Rhs::Inhomogeneous { f2, kappa } => {
                f2.check(&self.mesh)?;
                kappa.check(&self.mesh)?;
            }
        }
        if let Some(split) = &self.split {
            split.f0.check(&self.mesh)?;
            split.f1.check(&self.mesh)?;
            let f = self.total_rhs()?;
            let defect = split.f0.axpy(self.eps, &split.f1).sub(&f).max_abs();
            if defect > 1e-12 * f.max_abs() {
                return Err(Error::invalid(format!(
                    "split f0 + eps f1 deviates from f by {defect:e}"
                )));
            }
        }
        Ok(())
    }

    /// The source `f` of the problem. In the inhomogeneous case this is
    /// `(b·∇)_app κ + f₂` with `κ` restricted to the interior nodes, which is
    /// the right-hand side actually satisfied by the discrete solution.
    pub fn total_rhs(&self) -> Result<PrimalField> {
        match &self.rhs {
            Rhs::Homogeneous { f } => Ok(f.clone()),
            Rhs::Inhomogeneous { f2, kappa } => Ok(b_grad_app(
                &kappa.zero_boundary(&self.mesh),
                &self.field,
                &self.mesh,
            )?
            .add(f2)),
        }
    }

    /// Source used by the g-problem and by `p`.
    fn kernel_rhs(&self) -> &PrimalField {
        match &self.rhs {
            Rhs::Homogeneous { f } => f,
            Rhs::Inhomogeneous { f2, .. } => f2,
        }
    }

    /// Source used by the u-problem (full `κ`, boundary values included).
    fn u_rhs(&self) -> Result<PrimalField> {
        match &self.rhs {
            Rhs::Homogeneous { f } => Ok(f.clone()),
            Rhs::Inhomogeneous { f2, kappa } => {
                Ok(b_grad_app(kappa, &self.field, &self.mesh)?.add(f2))
            }
        }
    }

    fn u_boundary(&self) -> Option<&DualField> {
        match &self.rhs {
            Rhs::Homogeneous { .. } => None,
            Rhs::Inhomogeneous { kappa, .. } => Some(kappa),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct Diagnostics {
    /// `ε ‖p‖∞`; stays bounded as `ε → 0` for well-prepared data.
    pub eps_p_max: f64,
    /// `‖∇·(b p)_app‖∞` over free nodes.
    pub div_p_max: f64,
    /// `|⟨p, q⟩| / (‖p‖ ‖q‖)`, zero when either part vanishes.
    pub orthogonality: f64,
    /// Worst relative variational residual of the q-problem over random test fields.
    pub variational_residual: f64,
}

#[derive(Debug, Clone)]
pub struct DecomposedSolution {
    pub p: PrimalField,
    pub q: PrimalField,
    pub phi: PrimalField,
    pub g: DualField,
    pub u: DualField,
    pub h: DualField,
    pub g_report: SolveReport,
    pub u_report: SolveReport,
    pub h_report: SolveReport,
    pub diagnostics: Diagnostics,
}

/// Factored operators for one `(mesh, field, ε, bc_mode)`; reusable across
/// right-hand sides.
#[derive(Debug)]
pub struct EllipticSolver {
    mesh: Mesh,
    field: AnisotropyField,
    eps: f64,
    free: Vec<bool>,
    /// `−∇·((b⊗b)∇·)` with zero Dirichlet rows: g- and h-problems.
    minus_a: PreparedSystem,
    /// `∇·((b⊗b)∇·) − ε`: u-problem.
    a_eps: PreparedSystem,
}

impl EllipticSolver {
    pub fn new(
        mesh: &Mesh,
        field: &AnisotropyField,
        eps: f64,
        bc_mode: BcMode,
        opts: &SolverOptions,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be positive, got {eps}")));
        }
        let dir = Dirichlet::zero(mesh, field, bc_mode)?;
        let mut free = vec![true; mesh.n_nodes()];
        for &k in dir.values.keys() {
            free[k] = false;
        }
        let (minus_a, a_eps) = std::thread::scope(|s| {
            let h1 = s.spawn(|| {
                assemble_second_order(field, mesh, 0.0, -1.0, &dir).and_then(|x| x.prepare(opts))
            });
            let h2 = s.spawn(|| {
                assemble_second_order(field, mesh, eps, 1.0, &dir).and_then(|x| x.prepare(opts))
            });
            (h1.join().expect("assembly thread"), h2.join().expect("assembly thread"))
        });
        Ok(Self {
            mesh: mesh.clone(),
            field: *field,
            eps,
            free,
            minus_a: minus_a?,
            a_eps: a_eps?,
        })
    }

    pub fn for_problem(prob: &EllipticProblem) -> Result<Self> {
        prob.validate()?;
        Self::new(&prob.mesh, &prob.field, prob.eps, prob.bc_mode, &prob.solver)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn is_free(&self, node: usize) -> bool {
        self.free[node]
    }

    pub fn solve_g(&self, f: &PrimalField) -> Result<(DualField, SolveReport)> {
        let rhs = div_b_app(f, &self.field, &self.mesh)?;
        let (x, rep) = self.minus_a.solve(rhs.values())?;
        Ok((DualField::from_vec(&self.mesh, x)?, rep))
    }

    pub fn compute_p(&self, f: &PrimalField, g: &DualField) -> Result<PrimalField> {
        Ok(b_grad_app(g, &self.field, &self.mesh)?
            .add(f)
            .scale(1.0 / self.eps))
    }

    /// `f` is the full source; `boundary` the Dirichlet data for `u`
    /// (zero when `None`).
    pub fn solve_u(
        &self,
        f: &PrimalField,
        boundary: Option<&DualField>,
    ) -> Result<(DualField, SolveReport)> {
        let rhs = div_b_app(f, &self.field, &self.mesh)?;
        let (x, rep) = match boundary {
            None => self.a_eps.solve(rhs.values())?,
            Some(k) => {
                k.check(&self.mesh)?;
                self.a_eps.solve_with_boundary(rhs.values(), k.values())?
            }
        };
        Ok((DualField::from_vec(&self.mesh, x)?, rep))
    }

    pub fn solve_h(&self, u: &DualField) -> Result<(DualField, SolveReport)> {
        u.check(&self.mesh)?;
        let (x, rep) = self.minus_a.solve(u.values())?;
        Ok((DualField::from_vec(&self.mesh, x)?, rep))
    }

    /// Full decomposition with diagnostics. The g- and u-solves run concurrently.
    pub fn solve(&self, prob: &EllipticProblem) -> Result<DecomposedSolution> {
        let sol = self.solve_fast(prob)?;
        let mut sol = sol;
        sol.diagnostics.variational_residual = variational_residual(&sol, prob, 20, 0x5eed)?;
        Ok(sol)
    }

    /// Decomposition without the variational residual check, for use inside time
    /// loops.
    pub fn solve_fast(&self, prob: &EllipticProblem) -> Result<DecomposedSolution> {
        if prob.mesh != self.mesh || prob.field != self.field || prob.eps != self.eps {
            return Err(Error::invalid("problem does not match the prepared solver"));
        }
        let fk = prob.kernel_rhs();
        let fu = prob.u_rhs()?;
        let (gres, ures) = std::thread::scope(|s| {
            let hg = s.spawn(|| self.solve_g(fk));
            let hu = s.spawn(|| self.solve_u(&fu, prob.u_boundary()));
            (hg.join().expect("g-solve thread"), hu.join().expect("u-solve thread"))
        });
        let (g, g_report) = gres?;
        let (u, u_report) = ures?;
        let p = self.compute_p(fk, &g)?;
        let (h, h_report) = self.solve_h(&u)?;
        let q = b_grad_app(&h, &self.field, &self.mesh)?;
        let phi = p.add(&q);

        let div_p = div_b_app(&p, &self.field, &self.mesh)?;
        let div_p_max = (0..self.mesh.n_nodes())
            .filter(|&k| self.free[k])
            .fold(0.0f64, |m, k| m.max(div_p[k].abs()));
        let (pn, qn) = (p.norm2(), q.norm2());
        let orthogonality = if pn == 0.0 || qn == 0.0 {
            0.0
        } else {
            p.dot(&q).abs() / (pn * qn)
        };
        Ok(DecomposedSolution {
            diagnostics: Diagnostics {
                eps_p_max: self.eps * p.max_abs(),
                div_p_max,
                orthogonality,
                variational_residual: 0.0,
            },
            p,
            q,
            phi,
            g,
            u,
            h,
            g_report,
            u_report,
            h_report,
        })
    }
}

pub fn solve_g(prob: &EllipticProblem) -> Result<(DualField, SolveReport)> {
    EllipticSolver::for_problem(prob)?.solve_g(prob.kernel_rhs())
}

pub fn compute_p(prob: &EllipticProblem, g: &DualField) -> Result<PrimalField> {
    prob.validate()?;
    g.check(&prob.mesh)?;
    Ok(b_grad_app(g, &prob.field, &prob.mesh)?
        .add(prob.kernel_rhs())
        .scale(1.0 / prob.eps))
}

pub fn solve_u(prob: &EllipticProblem) -> Result<(DualField, SolveReport)> {
    EllipticSolver::for_problem(prob)?.solve_u(&prob.u_rhs()?, prob.u_boundary())
}

pub fn solve_h(prob: &EllipticProblem, u: &DualField) -> Result<(DualField, SolveReport)> {
    EllipticSolver::for_problem(prob)?.solve_h(u)
}

pub fn solve(prob: &EllipticProblem) -> Result<DecomposedSolution> {
    EllipticSolver::for_problem(prob)?.solve(prob)
}

/// Worst relative defect of
/// `Σ_D u·(−∇·((b⊗b)∇θ)) + ε Σ_R (b·∇h)(b·∇θ) = Σ_R f (b·∇θ)`
/// over `count` random test fields `θ` vanishing on the boundary. All sums are
/// weighted by `ΔxΔy`. The defect is measured against the Cauchy-Schwarz bound
/// `‖b·∇u‖‖b·∇θ‖ + ε‖b·∇h‖‖b·∇θ‖ + ‖f‖‖b·∇θ‖` of the three terms, since the
/// terms themselves may cancel.
pub fn variational_residual(
    sol: &DecomposedSolution,
    prob: &EllipticProblem,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let mesh = &prob.mesh;
    let field = &prob.field;
    let w = mesh.dx * mesh.dy;
    let f = prob.u_rhs()?;
    let gh = b_grad_app(&sol.h, field, mesh)?;
    let gu = b_grad_app(&sol.u, field, mesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let theta = DualField::from_vec(
            mesh,
            (0..mesh.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )?
        .zero_boundary(mesh);
        let gt = b_grad_app(&theta, field, mesh)?;
        let lt = div_b_app(&gt, field, mesh)?;
        let t1 = -w * sol.u.dot(&lt);
        let t2 = prob.eps * w * gh.dot(&gt);
        let t3 = w * f.dot(&gt);
        let scale = w * gt.norm2() * (gu.norm2() + prob.eps * gh.norm2() + f.norm2());
        if scale > 0.0 {
            worst = worst.max((t1 + t2 - t3).abs() / scale);
        }
    }
    Ok(worst)
}
