//! Isothermal Euler-Lorentz system
//!
//! ```text
//! ∂t n + ∇·(n u) = 0
//! ε [∂t (n u) + ∇·(n u ⊗ u)] + T ∇n = n (E + u × B)
//! ```
//!
//! with the semi-implicit asymptotic-preserving scheme and the classical
//! explicit-pressure scheme.
//!
//! Layout: the density lives on the dual nodes, the momenta `(nu)_x, (nu)_y,
//! (nu)_z` on the primal cells. With this placement the discrete divergence of
//! `φ b` is exactly `∇·(b ·)_app φ` and the parallel gradient of the density is
//! `(b·∇)_app n`, so the implicit pressure coupling reduces exactly to the
//! inhomogeneous elliptic problem solved by [`crate::elliptic_ap`]. Boundary
//! nodes carry the time-independent Dirichlet density `n_B`.

mod ops;
mod run;

pub use ops::{divergence_zero_ext, drift_momentum, lorentz_solve};
pub use run::{
    run, run_pair, run_pair_observed, write_report_csv, write_state_csv, PairResult, RunResult, Scenario,
    ScenarioField,
};

use serde::{Deserialize, Serialize};

use crate::bfield::{AnisotropyField, ElectricField};
use crate::discrete_ops::{b_grad_app, div_b_app, nodes_to_cells};
use crate::elliptic_ap::{EllipticProblem, EllipticSolver};
use crate::error::{Error, Result};
use crate::field::{DualField, PrimalField};
use crate::linsolve::{BcMode, SolveReport, SolverOptions};
use crate::mesh::Mesh;

use ops::{
    cell_density, convective_divergence_impl, cross, dot3, lorentz_solve_perp, perp,
    perp_divergence, unit3, CellDensity, Ctx, V3,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Ap,
    Classical,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ap" | "AP" => Ok(Scheme::Ap),
            "classical" => Ok(Scheme::Classical),
            other => Err(Error::invalid(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Density on nodes, momenta on cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PlasmaState {
    pub n: DualField,
    pub mx: PrimalField,
    pub my: PrimalField,
    pub mz: PrimalField,
    pub time: f64,
}

impl PlasmaState {
    pub fn uniform(mesh: &Mesh, n: f64, m: [f64; 3]) -> Self {
        Self {
            n: DualField::constant(mesh, n),
            mx: PrimalField::constant(mesh, m[0]),
            my: PrimalField::constant(mesh, m[1]),
            mz: PrimalField::constant(mesh, m[2]),
            time: 0.0,
        }
    }

    pub fn check(&self, mesh: &Mesh) -> Result<()> {
        self.n.check(mesh)?;
        self.mx.check(mesh)?;
        self.my.check(mesh)?;
        self.mz.check(mesh)
    }

    pub fn momentum(&self, c: usize) -> V3 {
        [self.mx[c], self.my[c], self.mz[c]]
    }

    /// Density averaged onto the cells.
    pub fn cell_density(&self, mesh: &Mesh) -> PrimalField {
        nodes_to_cells(&self.n, mesh)
    }

    pub fn all_finite(&self) -> bool {
        self.n.all_finite() && self.mx.all_finite() && self.my.all_finite() && self.mz.all_finite()
    }

    /// `max(‖n‖∞, ‖m‖∞)`.
    pub fn max_abs(&self) -> f64 {
        self.n
            .max_abs()
            .max(self.mx.max_abs())
            .max(self.my.max_abs())
            .max(self.mz.max_abs())
    }

    /// Max-norm differences `(n, momenta)` against another state.
    pub fn max_diff(&self, other: &Self) -> (f64, f64) {
        let dn = self.n.sub(&other.n).max_abs();
        let dm = self
            .mx
            .sub(&other.mx)
            .max_abs()
            .max(self.my.sub(&other.my).max_abs())
            .max(self.mz.sub(&other.mz).max_abs());
        (dn, dm)
    }
}

#[derive(Debug, Clone)]
pub struct PlasmaConfig {
    pub eps: f64,
    pub temperature: f64,
    pub dt: f64,
    pub mesh: Mesh,
    pub field: AnisotropyField,
    pub efield: ElectricField,
    pub scheme: Scheme,
    pub solver: SolverOptions,
    pub bc_mode: BcMode,
    /// Returned by [`cfl_dt`] when no wave speed limits the step.
    pub dt_cap: f64,
}

impl PlasmaConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps", self.eps),
            ("temperature", self.temperature),
            ("dt", self.dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        self.field.validate_on(&self.mesh)?;
        self.solver.validate()
    }

    fn ctx(&self) -> Ctx<'_> {
        Ctx {
            mesh: &self.mesh,
            field: &self.field,
            efield: &self.efield,
            temperature: self.temperature,
        }
    }

    /// `ε / (T Δt²)`, the `ε` of the parallel elliptic problem.
    pub fn eps_prime(&self) -> f64 {
        self.eps / (self.temperature * self.dt * self.dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub g_report: Option<SolveReport>,
    pub u_report: Option<SolveReport>,
    pub h_report: Option<SolveReport>,
    /// `max |∇·(b (nu)_∥)|` over interior nodes.
    pub parallel_div_max: f64,
    /// Max difference between the parallel momentum of the elliptic solve and
    /// the parallel part of the 3×3 momentum update.
    pub parallel_mismatch: f64,
    pub cfl_material: f64,
    pub cfl_acoustic: f64,
    pub n_min: f64,
    pub n_max: f64,
    /// `max ‖m‖∞` over the three components.
    pub m_max: f64,
}

/// Time step from the CFL condition: material plus acoustic speed for the
/// classical scheme, material speed only for the AP scheme.
pub fn cfl_dt(state: &PlasmaState, config: &PlasmaConfig, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::invalid(format!("safety factor {safety} outside (0, 1]")));
    }
    let h = config.mesh.dx.min(config.mesh.dy);
    let umax = max_speed(state, &config.mesh);
    let speed = match config.scheme {
        Scheme::Classical => umax + (config.temperature / config.eps).sqrt(),
        Scheme::Ap => umax,
    };
    if speed > 0.0 && speed.is_finite() {
        Ok((safety * h / speed).min(config.dt_cap))
    } else {
        Ok(config.dt_cap)
    }
}

/// Largest in-plane velocity magnitude over the cells.
pub fn max_speed(state: &PlasmaState, mesh: &Mesh) -> f64 {
    let n = state.cell_density(mesh);
    (0..mesh.n_cells())
        .map(|c| state.mx[c].hypot(state.my[c]) / n[c])
        .fold(0.0, f64::max)
}

/// `∇·(n u ⊗ u)` for the three momentum components (local Lax-Friedrichs).
pub fn convective_divergence(state: &PlasmaState, config: &PlasmaConfig) -> Result<[PrimalField; 3]> {
    state.check(&config.mesh)?;
    let dens = cell_density(&state.n, &config.mesh);
    Ok(convective_divergence_impl(&config.ctx(), state, &dens))
}

/// Right-hand side of the momentum equation without the pressure term:
/// `(ε/Δt) m^m − ε ∇·(nu⊗u)^m + n^m E`.
fn explicit_rhs(
    config: &PlasmaConfig,
    state: &PlasmaState,
    dens: &CellDensity,
    conv: &[PrimalField; 3],
    c: usize,
) -> V3 {
    let a = config.eps / config.dt;
    let (x, y) = config.mesh.cell_center(config.mesh.cell_ij(c).0, config.mesh.cell_ij(c).1);
    let e = config.efield.at(x, y);
    let m = state.momentum(c);
    let n = dens.n[c];
    [
        a * m[0] - config.eps * conv[0][c] + n * e[0],
        a * m[1] - config.eps * conv[1][c] + n * e[1],
        a * m[2] - config.eps * conv[2][c] + n * e[2],
    ]
}

fn bvec_at(config: &PlasmaConfig, c: usize) -> (V3, V3) {
    let (i, j) = config.mesh.cell_ij(c);
    let (x, y) = config.mesh.cell_center(i, j);
    let b = unit3(&config.field, x, y);
    let s = config.field.magnitude(x, y);
    (b, [s * b[0], s * b[1], 0.0])
}

/// Perpendicular momentum of the implicit Lorentz balance with the pressure
/// gradient of `n^m`. Only `n^m` enters the perpendicular equation, so this is
/// the exact perpendicular part of the step.
pub fn predict_perpendicular(
    state: &PlasmaState,
    config: &PlasmaConfig,
    conv: &[PrimalField; 3],
) -> Result<[PrimalField; 3]> {
    state.check(&config.mesh)?;
    let dens = cell_density(&state.n, &config.mesh);
    Ok(predict_perpendicular_impl(state, config, &dens, conv))
}

fn predict_perpendicular_impl(
    state: &PlasmaState,
    config: &PlasmaConfig,
    dens: &CellDensity,
    conv: &[PrimalField; 3],
) -> [PrimalField; 3] {
    let mesh = &config.mesh;
    let a = config.eps / config.dt;
    let t = config.temperature;
    let mut out = [
        PrimalField::zeros(mesh),
        PrimalField::zeros(mesh),
        PrimalField::zeros(mesh),
    ];
    for c in 0..mesh.n_cells() {
        let mut r = explicit_rhs(config, state, dens, conv, c);
        r[0] -= t * dens.gx[c];
        r[1] -= t * dens.gy[c];
        let (_, bv) = bvec_at(config, c);
        let m = lorentz_solve_perp(a, bv, r);
        for k in 0..3 {
            out[k][c] = m[k];
        }
    }
    out
}

/// Data of the parallel elliptic problem.
#[derive(Debug, Clone)]
pub struct ParallelRhs {
    pub eps_prime: f64,
    pub f2: PrimalField,
    /// `∇·(m_⊥)` at every node (boundary nodes via ghost cells).
    pub kappa: DualField,
}

/// Builds
/// `f₂ = [(ε/Δt) m^m_∥ − ε (∇·(nu⊗u))_∥ + n E_∥ − T (b·∇)_app n^m] / (T Δt)`
/// and `κ = ∇·(m_⊥^{m+1})`, so that `m_∥^{m+1}` solves
/// `ε' φ − (b·∇)(∇·(b φ)) = b·∇κ + f₂` with `ε' = ε/(TΔt²)`.
pub fn build_parallel_rhs(
    state: &PlasmaState,
    config: &PlasmaConfig,
    conv: &[PrimalField; 3],
    mperp: &[PrimalField; 3],
) -> Result<ParallelRhs> {
    state.check(&config.mesh)?;
    let dens = cell_density(&state.n, &config.mesh);
    build_parallel_rhs_impl(state, config, &dens, conv, mperp)
}

fn build_parallel_rhs_impl(
    state: &PlasmaState,
    config: &PlasmaConfig,
    dens: &CellDensity,
    conv: &[PrimalField; 3],
    mperp: &[PrimalField; 3],
) -> Result<ParallelRhs> {
    let mesh = &config.mesh;
    let t = config.temperature;
    let gn = b_grad_app(&state.n, &config.field, mesh)?;
    let mut f2 = PrimalField::zeros(mesh);
    for c in 0..mesh.n_cells() {
        let r = explicit_rhs(config, state, dens, conv, c);
        let (b, _) = bvec_at(config, c);
        f2[c] = (dot3(r, b) - t * gn[c]) / (t * config.dt);
    }
    let kappa = perp_divergence(&config.ctx(), state, dens, mperp);
    Ok(ParallelRhs {
        eps_prime: config.eps_prime(),
        f2,
        kappa,
    })
}

/// Output of the parallel solve.
#[derive(Debug, Clone)]
pub struct ParallelSolution {
    pub parallel: PrimalField,
    pub reports: [SolveReport; 3],
}

/// `(nu)_∥^{m+1}` from the inhomogeneous elliptic problem.
pub fn parallel_momentum_solve(config: &PlasmaConfig, rhs: &ParallelRhs) -> Result<ParallelSolution> {
    let solver = EllipticSolver::new(
        &config.mesh,
        &config.field,
        rhs.eps_prime,
        config.bc_mode,
        &config.solver,
    )?;
    parallel_solve_with(&solver, config, rhs)
}

fn parallel_solve_with(
    solver: &EllipticSolver,
    config: &PlasmaConfig,
    rhs: &ParallelRhs,
) -> Result<ParallelSolution> {
    let mut prob = EllipticProblem::inhomogeneous(
        rhs.eps_prime,
        config.field,
        config.mesh.clone(),
        rhs.f2.clone(),
        rhs.kappa.clone(),
    );
    prob.bc_mode = config.bc_mode;
    prob.solver = config.solver;
    let sol = solver.solve_fast(&prob)?;
    Ok(ParallelSolution {
        parallel: sol.phi,
        reports: [sol.g_report, sol.u_report, sol.h_report],
    })
}

/// Per-cell 3×3 solve of `(ε/Δt) m − m × B = R` with the pressure gradient
/// `grad_n_sharp = (gx, gy)`, recombined with the elliptic parallel momentum.
/// Returns the new momenta and the parallel part of the 3×3 solution.
pub fn perpendicular_momentum_update(
    state: &PlasmaState,
    config: &PlasmaConfig,
    conv: &[PrimalField; 3],
    parallel: &PrimalField,
    grad_n_sharp: &[PrimalField; 2],
) -> Result<([PrimalField; 3], PrimalField)> {
    state.check(&config.mesh)?;
    let dens = cell_density(&state.n, &config.mesh);
    Ok(momentum_update_impl(
        state,
        config,
        &dens,
        conv,
        Some(parallel),
        grad_n_sharp,
    ))
}

fn momentum_update_impl(
    state: &PlasmaState,
    config: &PlasmaConfig,
    dens: &CellDensity,
    conv: &[PrimalField; 3],
    parallel: Option<&PrimalField>,
    grad_n: &[PrimalField; 2],
) -> ([PrimalField; 3], PrimalField) {
    let mesh = &config.mesh;
    let a = config.eps / config.dt;
    let t = config.temperature;
    let mut out = [
        PrimalField::zeros(mesh),
        PrimalField::zeros(mesh),
        PrimalField::zeros(mesh),
    ];
    let mut own_parallel = PrimalField::zeros(mesh);
    for c in 0..mesh.n_cells() {
        let mut r = explicit_rhs(config, state, dens, conv, c);
        r[0] -= t * grad_n[0][c];
        r[1] -= t * grad_n[1][c];
        let (b, bv) = bvec_at(config, c);
        let m = ops::lorentz_solve(a, bv, r);
        own_parallel[c] = dot3(m, b);
        let m = match parallel {
            Some(p) => {
                let mp = perp(m, b);
                [mp[0] + p[c] * b[0], mp[1] + p[c] * b[1], mp[2]]
            }
            None => m,
        };
        for k in 0..3 {
            out[k][c] = m[k];
        }
    }
    (out, own_parallel)
}

/// `n^{m+1} = n^m − Δt ∇·m` at interior nodes; boundary nodes keep `n_B`.
pub fn density_update(
    state: &PlasmaState,
    config: &PlasmaConfig,
    m_new: &[PrimalField; 3],
) -> Result<DualField> {
    let mesh = &config.mesh;
    let div = divergence_zero_ext(mesh, &m_new[0], &m_new[1]);
    let mut n = state.n.clone();
    for k in mesh.interior_nodes() {
        n[k] -= config.dt * div[k];
        if !(n[k] > 0.0) {
            let (i, j) = mesh.node_ij(k);
            return Err(Error::Instability {
                step: 0,
                reason: format!("non-positive density {} at node ({i}, {j})", n[k]),
            });
        }
    }
    Ok(n)
}

/// Time stepper holding the factored elliptic operators between steps.
pub struct Stepper {
    pub config: PlasmaConfig,
    solver: Option<EllipticSolver>,
    step_index: usize,
}

impl Stepper {
    pub fn new(config: PlasmaConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            solver: None,
            step_index: 0,
        })
    }

    pub fn set_dt(&mut self, dt: f64) {
        if dt != self.config.dt {
            self.config.dt = dt;
            self.solver = None;
        }
    }

    pub fn step(&mut self, state: &PlasmaState) -> Result<(PlasmaState, StepReport)> {
        self.step_index += 1;
        let res = match self.config.scheme {
            Scheme::Ap => self.step_ap(state),
            Scheme::Classical => self.step_classical(state),
        };
        res.map(|(s, mut r)| {
            r.n_min = s.n.values().iter().copied().fold(f64::INFINITY, f64::min);
            r.n_max = s.n.max_abs();
            r.m_max = s.mx.max_abs().max(s.my.max_abs()).max(s.mz.max_abs());
            (s, r)
        })
        .map_err(|e| match e {
            Error::Instability { reason, .. } => Error::Instability {
                step: self.step_index,
                reason,
            },
            other => other,
        })
    }

    fn base_report(&self, state: &PlasmaState) -> StepReport {
        let cfg = &self.config;
        let h = cfg.mesh.dx.min(cfg.mesh.dy);
        StepReport {
            step: self.step_index,
            time: state.time + cfg.dt,
            dt: cfg.dt,
            cfl_material: cfg.dt * max_speed(state, &cfg.mesh) / h,
            cfl_acoustic: cfg.dt * (cfg.temperature / cfg.eps).sqrt() / h,
            ..Default::default()
        }
    }

    fn step_ap(&mut self, state: &PlasmaState) -> Result<(PlasmaState, StepReport)> {
        let cfg = &self.config;
        state.check(&cfg.mesh)?;
        let mesh = &cfg.mesh;
        let dens = cell_density(&state.n, mesh);
        let ctx = cfg.ctx();
        let conv = convective_divergence_impl(&ctx, state, &dens);
        let mperp = predict_perpendicular_impl(state, cfg, &dens, &conv);
        let rhs = build_parallel_rhs_impl(state, cfg, &dens, &conv, &mperp)?;
        if self.solver.is_none() {
            self.solver = Some(EllipticSolver::new(
                mesh,
                &cfg.field,
                rhs.eps_prime,
                cfg.bc_mode,
                &cfg.solver,
            )?);
        }
        let cfg = &self.config;
        let par = parallel_solve_with(self.solver.as_ref().expect("solver"), cfg, &rhs)?;

        // provisional density and the mixed gradient (∇n^m)_⊥ + (b·∇ñ) b
        let dphi = div_b_app(&par.parallel, &cfg.field, mesh)?;
        let mut ntilde = state.n.clone();
        for k in mesh.interior_nodes() {
            ntilde[k] -= cfg.dt * (dphi[k] + rhs.kappa[k]);
        }
        let gpar = b_grad_app(&ntilde, &cfg.field, mesh)?;
        let mut gx = PrimalField::zeros(mesh);
        let mut gy = PrimalField::zeros(mesh);
        for c in 0..mesh.n_cells() {
            let (b, _) = bvec_at(cfg, c);
            let g = perp([dens.gx[c], dens.gy[c], 0.0], b);
            gx[c] = g[0] + gpar[c] * b[0];
            gy[c] = g[1] + gpar[c] * b[1];
        }
        let (m_new, own_par) =
            momentum_update_impl(state, cfg, &dens, &conv, Some(&par.parallel), &[gx, gy]);
        let n_new = density_update(state, cfg, &m_new)?;

        let mut report = self.base_report(state);
        report.g_report = Some(par.reports[0]);
        report.u_report = Some(par.reports[1]);
        report.h_report = Some(par.reports[2]);
        report.parallel_div_max = dphi.max_abs_interior(mesh);
        report.parallel_mismatch = own_par.sub(&par.parallel).max_abs();
        let [mx, my, mz] = m_new;
        Ok((
            PlasmaState {
                n: n_new,
                mx,
                my,
                mz,
                time: state.time + cfg.dt,
            },
            report,
        ))
    }

    fn step_classical(&mut self, state: &PlasmaState) -> Result<(PlasmaState, StepReport)> {
        let cfg = &self.config;
        state.check(&cfg.mesh)?;
        let mesh = &cfg.mesh;
        let dens = cell_density(&state.n, mesh);
        let conv = convective_divergence_impl(&cfg.ctx(), state, &dens);
        let old_m = [state.mx.clone(), state.my.clone(), state.mz.clone()];
        let n_new = density_update(state, cfg, &old_m)?;
        let grad = [dens.gx.clone(), dens.gy.clone()];
        let (m_new, _) = momentum_update_impl(state, cfg, &dens, &conv, None, &grad);
        let mut report = self.base_report(state);
        let mut mpar = PrimalField::zeros(mesh);
        for c in 0..mesh.n_cells() {
            let (b, _) = bvec_at(cfg, c);
            mpar[c] = m_new[0][c] * b[0] + m_new[1][c] * b[1];
        }
        report.parallel_div_max = div_b_app(&mpar, &cfg.field, mesh)?.max_abs_interior(mesh);
        let [mx, my, mz] = m_new;
        Ok((
            PlasmaState {
                n: n_new,
                mx,
                my,
                mz,
                time: state.time + cfg.dt,
            },
            report,
        ))
    }
}

/// One AP step (factors the elliptic operators afresh).
pub fn step_ap(state: &PlasmaState, config: &PlasmaConfig) -> Result<(PlasmaState, StepReport)> {
    let mut cfg = config.clone();
    cfg.scheme = Scheme::Ap;
    Stepper::new(cfg)?.step(state)
}

/// One step of the classical scheme.
pub fn step_classical(
    state: &PlasmaState,
    config: &PlasmaConfig,
) -> Result<(PlasmaState, StepReport)> {
    let mut cfg = config.clone();
    cfg.scheme = Scheme::Classical;
    Stepper::new(cfg)?.step(state)
}

/// Perpendicular part of the momentum at every cell.
pub fn perpendicular_part(state: &PlasmaState, config: &PlasmaConfig) -> [PrimalField; 3] {
    let mesh = &config.mesh;
    let mut out = [
        PrimalField::zeros(mesh),
        PrimalField::zeros(mesh),
        PrimalField::zeros(mesh),
    ];
    for c in 0..mesh.n_cells() {
        let (b, _) = bvec_at(config, c);
        let m = perp(state.momentum(c), b);
        for k in 0..3 {
            out[k][c] = m[k];
        }
    }
    out
}

/// Drift momentum `(1/|B|) b × (T∇n − nE)` of `state` at every cell, and the
/// variant `−(1/|B|) b × (T∇n + nE)` with the opposite pressure sign.
pub fn drift_fields(state: &PlasmaState, config: &PlasmaConfig) -> ([PrimalField; 3], [PrimalField; 3]) {
    let mesh = &config.mesh;
    let dens = cell_density(&state.n, mesh);
    let mut a = [
        PrimalField::zeros(mesh),
        PrimalField::zeros(mesh),
        PrimalField::zeros(mesh),
    ];
    let mut b_out = a.clone();
    for c in 0..mesh.n_cells() {
        let (i, j) = mesh.cell_ij(c);
        let (x, y) = mesh.cell_center(i, j);
        let b = unit3(&config.field, x, y);
        let s = config.field.magnitude(x, y);
        let e = config.efield.at(x, y);
        let g = [dens.gx[c], dens.gy[c]];
        let m1 = drift_momentum(b, s, config.temperature, dens.n[c], g, e);
        let f = [
            config.temperature * g[0] + dens.n[c] * e[0],
            config.temperature * g[1] + dens.n[c] * e[1],
            dens.n[c] * e[2],
        ];
        let m2 = cross(b, f);
        for k in 0..3 {
            a[k][c] = m1[k];
            b_out[k][c] = -m2[k] / s;
        }
    }
    (a, b_out)
}
