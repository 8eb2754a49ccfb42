//! Sparse systems over dual-node unknowns: assembly of `sign · ∇·((b⊗b)∇·)_app − shift · I`
//! with Dirichlet rows, and direct or preconditioned iterative solves.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::bfield::AnisotropyField;
use crate::discrete_ops::{div_coeffs, grad_coeffs};
use crate::error::{Error, Result};
use crate::field::DualField;
use crate::mesh::{FlowKind, Mesh, DEFAULT_CLASSIFY_TOL};

/// Which boundary nodes receive Dirichlet rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcMode {
    /// Every boundary node.
    #[default]
    All,
    /// Only boundary nodes where `b·ν ≠ 0`.
    FluxOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Direct,
    Iterative,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Direct => "direct",
            Method::Iterative => "iterative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative 2-norm residual `‖b − Ax‖ / ‖b‖` of the full system.
    pub residual: f64,
    /// Normwise backward error `‖b − Ax‖∞ / (‖A‖∞ ‖x‖∞ + ‖b‖∞)`.
    pub backward_error: f64,
    pub method: Method,
    pub wall_time: f64,
    pub tolerance: f64,
}

impl SolveReport {
    /// A solve succeeds when either the relative residual or the backward error
    /// is within tolerance. The second test covers systems whose residual is
    /// limited by round-off in `A x` rather than by the solver.
    pub fn converged(&self) -> bool {
        self.residual <= self.tolerance || self.backward_error <= self.tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// `None` picks direct up to [`SolverOptions::direct_limit`] unknowns.
    pub method: Option<Method>,
    pub direct_limit: usize,
    /// Extra `η·I` added to the definite form of the reduced matrix.
    pub tikhonov: f64,
    /// Iterative refinement sweeps after a direct solve.
    pub refine_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 20_000,
            method: None,
            direct_limit: 50_000,
            tikhonov: 0.0,
            refine_steps: 3,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("solver tolerance must be positive"));
        }
        if !(self.tikhonov >= 0.0) {
            return Err(Error::invalid("tikhonov shift must be non-negative"));
        }
        Ok(())
    }
}

/// Constrained node values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dirichlet {
    pub values: BTreeMap<usize, f64>,
}

impl Dirichlet {
    pub fn nodes(mesh: &Mesh, field: &AnisotropyField, mode: BcMode) -> Result<Vec<usize>> {
        Ok(match mode {
            BcMode::All => mesh.boundary_nodes(),
            BcMode::FluxOnly => mesh
                .classify_boundary(field, DEFAULT_CLASSIFY_TOL)?
                .nodes
                .iter()
                .filter(|n| n.kind != FlowKind::Tangent || decoupled(mesh, field, n.node))
                .map(|n| n.node)
                .collect(),
        })
    }

    pub fn zero(mesh: &Mesh, field: &AnisotropyField, mode: BcMode) -> Result<Self> {
        Ok(Self {
            values: Self::nodes(mesh, field, mode)?
                .into_iter()
                .map(|k| (k, 0.0))
                .collect(),
        })
    }

    /// Constrain the selected boundary nodes to the values of `data`.
    pub fn from_field(
        mesh: &Mesh,
        field: &AnisotropyField,
        mode: BcMode,
        data: &DualField,
    ) -> Result<Self> {
        data.check(mesh)?;
        Ok(Self {
            values: Self::nodes(mesh, field, mode)?
                .into_iter()
                .map(|k| (k, data[k]))
                .collect(),
        })
    }
}

/// A node whose value never enters `(b·∇)_app` (e.g. a corner where `b` runs
/// along the diagonal). Leaving it free would make every system singular.
fn decoupled(mesh: &Mesh, field: &AnisotropyField, node: usize) -> bool {
    let (i, j) = mesh.node_ij(node);
    mesh.cells_around_node(i, j).into_iter().all(|(ci, cj)| {
        let g = grad_coeffs(field, mesh, ci, cj);
        let scale = g.iter().fold(0.0f64, |m, c| m.max(c.1.abs()));
        g.iter()
            .filter(|c| c.0 == (i, j))
            .all(|c| c.1.abs() <= 1e-12 * scale)
    })
}

/// One row per dual node, stored as sorted `(column, value)` lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    pub n: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
    pub dirichlet: Dirichlet,
}

/// Assemble `sign · second_order_app − shift · I` on free rows and identity rows on
/// constrained nodes. The right-hand side is zero on free rows and carries the
/// Dirichlet values on constrained ones.
pub fn assemble_second_order(
    field: &AnisotropyField,
    mesh: &Mesh,
    shift: f64,
    sign: f64,
    dirichlet: &Dirichlet,
) -> Result<SparseSystem> {
    if !(shift >= 0.0) {
        return Err(Error::invalid("shift must be non-negative"));
    }
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::invalid("sign must be +1 or -1"));
    }
    field.validate_on(mesh)?;
    let n = mesh.n_nodes();
    if let Some((&k, _)) = dirichlet.values.iter().next_back() {
        if k >= n {
            return Err(Error::invalid(format!("dirichlet node {k} out of range")));
        }
    }
    let mut dense_rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for c in 0..mesh.n_cells() {
        let (i, j) = mesh.cell_ij(c);
        let g = grad_coeffs(field, mesh, i, j);
        for ((a, b), d) in div_coeffs(field, mesh, i, j) {
            let row = mesh.node_index(a, b);
            if dirichlet.values.contains_key(&row) {
                continue;
            }
            for &((p, q), w) in &g {
                *dense_rows[row].entry(mesh.node_index(p, q)).or_insert(0.0) += sign * d * w;
            }
        }
    }
    let mut rows = Vec::with_capacity(n);
    let mut rhs = vec![0.0; n];
    for (k, mut row) in dense_rows.into_iter().enumerate() {
        if let Some(&v) = dirichlet.values.get(&k) {
            rows.push(vec![(k, 1.0)]);
            rhs[k] = v;
            continue;
        }
        if shift != 0.0 {
            *row.entry(k).or_insert(0.0) -= shift;
        }
        rows.push(row.into_iter().filter(|&(_, v)| v != 0.0).collect());
    }
    Ok(SparseSystem {
        n,
        rows,
        rhs,
        dirichlet: dirichlet.clone(),
    })
}

impl SparseSystem {
    /// Replace the free-row right-hand side with `rhs`; constrained rows keep
    /// their Dirichlet values.
    pub fn set_rhs(&mut self, rhs: &[f64]) -> Result<()> {
        if rhs.len() != self.n {
            return Err(Error::invalid(format!(
                "rhs has {} entries, system has {}",
                rhs.len(),
                self.n
            )));
        }
        for (k, r) in self.rhs.iter_mut().enumerate() {
            *r = self.dirichlet.values.get(&k).copied().unwrap_or(rhs[k]);
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        relative_residual(&self.rows, x, &self.rhs)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[r][c] += v;
            }
        }
        m
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Coordinate dump, one `row col value` line per entry (0-based), with a
    /// `rows cols nnz` header line.
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {} {}", self.n, self.n, self.nnz())?;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                writeln!(out, "{r} {c} {v}")?;
            }
        }
        Ok(())
    }

    /// Eliminate the Dirichlet columns and factor (or precondition) the
    /// remaining free block.
    pub fn prepare(&self, opts: &SolverOptions) -> Result<PreparedSystem> {
        PreparedSystem::new(self, opts)
    }

    /// One-shot convenience around [`SparseSystem::prepare`].
    pub fn solve(&self, opts: &SolverOptions) -> Result<(Vec<f64>, SolveReport)> {
        let start = Instant::now();
        let prepared = self.prepare(opts)?;
        let (x, mut rep) = prepared.solve(&self.rhs)?;
        rep.wall_time = start.elapsed().as_secs_f64();
        Ok((x, rep))
    }
}

/// Solve `system` and wrap the result as a nodal field.
pub fn solve(
    system: &SparseSystem,
    mesh: &Mesh,
    opts: &SolverOptions,
) -> Result<(DualField, SolveReport)> {
    if system.n != mesh.n_nodes() {
        return Err(Error::invalid("system size does not match mesh"));
    }
    let (x, rep) = system.solve(opts)?;
    Ok((DualField::from_vec(mesh, x)?, rep))
}

fn relative_residual(rows: &[Vec<(usize, f64)>], x: &[f64], b: &[f64]) -> f64 {
    let mut rr = 0.0;
    for (row, bi) in rows.iter().zip(b) {
        let ax: f64 = row.iter().map(|&(c, v)| v * x[c]).sum();
        rr += (bi - ax) * (bi - ax);
    }
    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bn == 0.0 {
        rr.sqrt()
    } else {
        rr.sqrt() / bn
    }
}

fn backward_error(rows: &[Vec<(usize, f64)>], x: &[f64], b: &[f64]) -> f64 {
    let mut rmax = 0.0f64;
    let mut amax = 0.0f64;
    for (row, bi) in rows.iter().zip(b) {
        let ax: f64 = row.iter().map(|&(c, v)| v * x[c]).sum();
        rmax = rmax.max((bi - ax).abs());
        amax = amax.max(row.iter().map(|&(_, v)| v.abs()).sum());
    }
    let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let denom = amax * xmax + bmax;
    if denom == 0.0 {
        rmax
    } else {
        rmax / denom
    }
}

enum Factor {
    Llt(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
    Iterative { inv_diag: Vec<f64> },
}

/// A system with its free block factored once, reusable for many right-hand sides.
pub struct PreparedSystem {
    full_rows: Vec<Vec<(usize, f64)>>,
    dirichlet: Dirichlet,
    /// full index -> reduced index
    free_of: Vec<Option<usize>>,
    free: Vec<usize>,
    /// Reduced rows in definite-sign form (`flip` already applied), with `η` added.
    reduced: Vec<Vec<(usize, f64)>>,
    /// Couplings of free rows to constrained columns, original sign.
    coupling: Vec<Vec<(usize, f64)>>,
    flip: f64,
    factor: Factor,
    opts: SolverOptions,
}

impl std::fmt::Debug for PreparedSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PreparedSystem")
            .field("n", &self.full_rows.len())
            .field("free", &self.free.len())
            .finish()
    }
}

impl PreparedSystem {
    fn new(sys: &SparseSystem, opts: &SolverOptions) -> Result<Self> {
        opts.validate()?;
        let mut free_of = vec![None; sys.n];
        let mut free = Vec::new();
        for k in 0..sys.n {
            if !sys.dirichlet.values.contains_key(&k) {
                free_of[k] = Some(free.len());
                free.push(k);
            }
        }
        let nf = free.len();
        // Negative-semidefinite operators are flipped so that the free block is
        // (semi)definite for Cholesky and CG.
        let diag_sum: f64 = free
            .iter()
            .map(|&k| {
                sys.rows[k]
                    .iter()
                    .find(|&&(c, _)| c == k)
                    .map_or(0.0, |&(_, v)| v)
            })
            .sum();
        let flip = if diag_sum < 0.0 { -1.0 } else { 1.0 };
        let mut reduced = Vec::with_capacity(nf);
        let mut coupling = Vec::with_capacity(nf);
        for (r, &k) in free.iter().enumerate() {
            let mut row = Vec::new();
            let mut cpl = Vec::new();
            let mut has_diag = false;
            for &(c, v) in &sys.rows[k] {
                match free_of[c] {
                    Some(rc) => {
                        let mut w = flip * v;
                        if rc == r {
                            w += opts.tikhonov;
                            has_diag = true;
                        }
                        row.push((rc, w));
                    }
                    None => cpl.push((c, v)),
                }
            }
            if !has_diag && opts.tikhonov != 0.0 {
                row.push((r, opts.tikhonov));
            }
            reduced.push(row);
            coupling.push(cpl);
        }

        let method = opts.method.unwrap_or(if nf <= opts.direct_limit {
            Method::Direct
        } else {
            Method::Iterative
        });
        let factor = match method {
            _ if nf == 0 => Factor::Iterative {
                inv_diag: Vec::new(),
            },
            Method::Direct => {
                let trip: Vec<Triplet<usize, usize, f64>> = reduced
                    .iter()
                    .enumerate()
                    .flat_map(|(r, row)| row.iter().map(move |&(c, v)| Triplet::new(r, c, v)))
                    .collect();
                let mat = SparseColMat::<usize, f64>::try_new_from_triplets(nf, nf, &trip)
                    .map_err(|e| Error::Singular(format!("matrix assembly failed: {e:?}")))?;
                match mat.sp_cholesky(Side::Lower) {
                    Ok(llt) => Factor::Llt(llt),
                    Err(_) => match mat.sp_lu() {
                        Ok(lu) => Factor::Lu(lu),
                        Err(e) => {
                            return Err(Error::Singular(format!(
                                "sparse factorization failed: {e:?}"
                            )))
                        }
                    },
                }
            }
            Method::Iterative => {
                let mut inv_diag = vec![0.0; nf];
                for (r, row) in reduced.iter().enumerate() {
                    let d = row.iter().find(|&&(c, _)| c == r).map_or(0.0, |&(_, v)| v);
                    if !(d > 0.0) {
                        return Err(Error::Singular(format!(
                            "non-positive diagonal {d} at reduced row {r}"
                        )));
                    }
                    inv_diag[r] = 1.0 / d;
                }
                Factor::Iterative { inv_diag }
            }
        };
        Ok(Self {
            full_rows: sys.rows.clone(),
            dirichlet: sys.dirichlet.clone(),
            free_of,
            free,
            reduced,
            coupling,
            flip,
            factor,
            opts: *opts,
        })
    }

    pub fn n(&self) -> usize {
        self.full_rows.len()
    }

    pub fn method(&self) -> Method {
        match self.factor {
            Factor::Iterative { .. } => Method::Iterative,
            _ => Method::Direct,
        }
    }

    /// Solve with full right-hand side `rhs` (free rows taken from `rhs`,
    /// constrained rows from the stored Dirichlet values).
    pub fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
        self.solve_impl(rhs, |k| self.dirichlet.values[&k])
    }

    /// Like [`PreparedSystem::solve`] but the constrained nodes take their
    /// values from `boundary` instead of the stored Dirichlet data.
    pub fn solve_with_boundary(
        &self,
        rhs: &[f64],
        boundary: &[f64],
    ) -> Result<(Vec<f64>, SolveReport)> {
        if boundary.len() != self.n() {
            return Err(Error::invalid("boundary data has the wrong length"));
        }
        self.solve_impl(rhs, |k| boundary[k])
    }

    fn solve_impl(
        &self,
        rhs: &[f64],
        value_at: impl Fn(usize) -> f64,
    ) -> Result<(Vec<f64>, SolveReport)> {
        let start = Instant::now();
        let n = self.n();
        if rhs.len() != n {
            return Err(Error::invalid(format!("rhs has {} entries, system has {n}", rhs.len())));
        }
        let mut b = rhs.to_vec();
        let mut x = vec![0.0; n];
        for &k in self.dirichlet.values.keys() {
            let v = value_at(k);
            b[k] = v;
            x[k] = v;
        }
        let rb: Vec<f64> = self
            .free
            .iter()
            .zip(&self.coupling)
            .map(|(&k, cpl)| {
                self.flip * (b[k] - cpl.iter().map(|&(c, v)| v * x[c]).sum::<f64>())
            })
            .collect();

        let (y, iterations) = match &self.factor {
            Factor::Iterative { inv_diag } => self.pcg(&rb, inv_diag)?,
            _ => {
                let mut y = self.direct(&rb);
                let mut sweeps = 1;
                for _ in 0..self.opts.refine_steps {
                    let r = self.reduced_residual(&y, &rb);
                    let rn = norm(&r);
                    let bn = norm(&rb);
                    if rn <= self.opts.tol * bn.max(f64::MIN_POSITIVE) * 1e-2 {
                        break;
                    }
                    let d = self.direct(&r);
                    y.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
                    sweeps += 1;
                }
                (y, sweeps)
            }
        };
        for (&k, v) in self.free.iter().zip(y) {
            x[k] = v;
        }
        let residual = relative_residual(&self.full_rows, &x, &b);
        let report = SolveReport {
            iterations,
            residual,
            backward_error: backward_error(&self.full_rows, &x, &b),
            method: self.method(),
            wall_time: start.elapsed().as_secs_f64(),
            tolerance: self.opts.tol,
        };
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Singular("solution contains non-finite values".into()));
        }
        if !report.converged() && self.opts.tikhonov == 0.0 {
            return Err(Error::SolverFailure {
                message: format!("relative residual above tolerance {:e}", self.opts.tol),
                report,
            });
        }
        Ok((x, report))
    }

    fn direct(&self, rb: &[f64]) -> Vec<f64> {
        let nf = rb.len();
        if nf == 0 {
            return Vec::new();
        }
        let rhs = Mat::<f64>::from_fn(nf, 1, |i, _| rb[i]);
        let sol = match &self.factor {
            Factor::Llt(f) => f.solve(&rhs),
            Factor::Lu(f) => f.solve(&rhs),
            Factor::Iterative { .. } => unreachable!(),
        };
        (0..nf).map(|i| sol[(i, 0)]).collect()
    }

    fn reduced_matvec(&self, y: &[f64]) -> Vec<f64> {
        self.reduced
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * y[c]).sum())
            .collect()
    }

    fn reduced_residual(&self, y: &[f64], rb: &[f64]) -> Vec<f64> {
        self.reduced_matvec(y)
            .into_iter()
            .zip(rb)
            .map(|(ay, b)| b - ay)
            .collect()
    }

    fn pcg(&self, rb: &[f64], inv_diag: &[f64]) -> Result<(Vec<f64>, usize)> {
        let nf = rb.len();
        let mut y = vec![0.0; nf];
        let bn = norm(rb);
        if bn == 0.0 {
            return Ok((y, 0));
        }
        // The stopping test works on the reduced system; a small safety factor
        // keeps the full-system residual below the requested tolerance.
        let target = 0.5 * self.opts.tol * bn;
        let mut r = rb.to_vec();
        let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for it in 1..=self.opts.max_iter {
            let ap = self.reduced_matvec(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::SolverFailure {
                    message: format!("conjugate gradient breakdown (pAp = {pap:e})"),
                    report: SolveReport {
                        iterations: it,
                        residual: norm(&r) / bn,
                        backward_error: f64::NAN,
                        method: Method::Iterative,
                        wall_time: 0.0,
                        tolerance: self.opts.tol,
                    },
                });
            }
            let alpha = rz / pap;
            for k in 0..nf {
                y[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            if norm(&r) <= target {
                return Ok((y, it));
            }
            for k in 0..nf {
                z[k] = r[k] * inv_diag[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..nf {
                p[k] = z[k] + beta * p[k];
            }
        }
        Err(Error::SolverFailure {
            message: "conjugate gradient did not converge".into(),
            report: SolveReport {
                iterations: self.opts.max_iter,
                residual: norm(&r) / bn,
                backward_error: f64::NAN,
                method: Method::Iterative,
                wall_time: 0.0,
                tolerance: self.opts.tol,
            },
        })
    }

    /// Whether `node` is a free (non-Dirichlet) unknown.
    pub fn is_free(&self, node: usize) -> bool {
        self.free_of.get(node).is_some_and(Option::is_some)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete_ops::second_order_app;

    #[test]
    fn identity_system() {
        let sys = SparseSystem {
            n: 3,
            rows: (0..3).map(|k| vec![(k, 1.0)]).collect(),
            rhs: vec![1.0, -2.0, 3.5],
            dirichlet: Dirichlet::default(),
        };
        for method in [Method::Direct, Method::Iterative] {
            let opts = SolverOptions {
                method: Some(method),
                ..Default::default()
            };
            let (x, rep) = sys.solve(&opts).unwrap();
            assert_eq!(x, vec![1.0, -2.0, 3.5]);
            assert!(rep.iterations <= 1 || method == Method::Direct);
        }
    }

    #[test]
    fn zero_data_gives_zero() {
        let m = Mesh::unit_square(6).unwrap();
        let f = AnisotropyField::oblique(0.8, 1.0).unwrap();
        let d = Dirichlet::zero(&m, &f, BcMode::All).unwrap();
        let sys = assemble_second_order(&f, &m, 0.0, -1.0, &d).unwrap();
        let (x, rep) = solve(&sys, &m, &SolverOptions::default()).unwrap();
        assert_eq!(x.max_abs(), 0.0);
        assert_eq!(rep.residual, 0.0);
    }

    #[test]
    fn nine_point_coupling_for_vertical_field() {
        let m = Mesh::unit_square(5).unwrap();
        let f = AnisotropyField::oblique(0.0, 1.0).unwrap();
        let sys = assemble_second_order(&f, &m, 0.0, 1.0, &Dirichlet::default()).unwrap();
        let k = m.node_index(2, 2);
        for &(c, _) in &sys.rows[k] {
            let (i, j) = m.node_ij(c);
            assert!(i.abs_diff(2) <= 1 && j.abs_diff(2) <= 1);
        }
    }

    #[test]
    fn rows_match_operator_application() {
        let m = Mesh::new(1.0, 2.0, 1.0, 2.0, 6, 5).unwrap();
        let f = AnisotropyField::radial(1.0).unwrap();
        let d = Dirichlet::zero(&m, &f, BcMode::All).unwrap();
        let sys = assemble_second_order(&f, &m, 0.3, 1.0, &d).unwrap();
        let psi = DualField::from_fn(&m, |x, y| (3.0 * x - y).sin());
        let ax = sys.matvec(psi.values());
        let op = second_order_app(&psi, &f, &m).unwrap();
        for k in m.interior_nodes() {
            assert!((ax[k] - (op[k] - 0.3 * psi[k])).abs() < 1e-10);
        }
    }

    #[test]
    fn direct_and_iterative_agree() {
        let m = Mesh::unit_square(16).unwrap();
        let f = AnisotropyField::oblique(1.0, 1.0).unwrap();
        let d = Dirichlet::zero(&m, &f, BcMode::All).unwrap();
        let mut sys = assemble_second_order(&f, &m, 0.0, -1.0, &d).unwrap();
        let rhs: Vec<f64> = (0..m.n_nodes()).map(|k| ((k * 7) % 11) as f64 - 5.0).collect();
        sys.set_rhs(&rhs).unwrap();
        let tol = 1e-10;
        let (xd, _) = sys
            .solve(&SolverOptions {
                tol,
                method: Some(Method::Direct),
                ..Default::default()
            })
            .unwrap();
        let (xi, ri) = sys
            .solve(&SolverOptions {
                tol,
                method: Some(Method::Iterative),
                ..Default::default()
            })
            .unwrap();
        assert!(ri.iterations > 1);
        let scale = xd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let diff = xd.iter().zip(&xi).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        assert!(diff <= 100.0 * tol * scale.max(1.0), "{diff} vs {scale}");
    }

    #[test]
    fn dirichlet_values_reproduced_exactly() {
        let m = Mesh::unit_square(8).unwrap();
        let f = AnisotropyField::oblique(0.5, 1.0).unwrap();
        let data = DualField::from_fn(&m, |x, y| 1.0 + x * y / 3.0);
        let d = Dirichlet::from_field(&m, &f, BcMode::All, &data).unwrap();
        let sys = assemble_second_order(&f, &m, 1.0, 1.0, &d).unwrap();
        let (x, _) = solve(&sys, &m, &SolverOptions::default()).unwrap();
        for k in m.boundary_nodes() {
            assert_eq!(x[k], data[k]);
        }
    }

    #[test]
    fn coordinate_dump_has_header() {
        let m = Mesh::unit_square(2).unwrap();
        let f = AnisotropyField::oblique(0.5, 1.0).unwrap();
        let sys = assemble_second_order(&f, &m, 0.0, 1.0, &Dirichlet::default()).unwrap();
        let mut buf = Vec::new();
        sys.write_coordinate(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, format!("9 9 {}", sys.nnz()));
        assert_eq!(text.lines().count(), 1 + sys.nnz());
    }

    #[test]
    fn invalid_inputs() {
        let m = Mesh::unit_square(3).unwrap();
        let f = AnisotropyField::oblique(0.5, 1.0).unwrap();
        assert!(assemble_second_order(&f, &m, -1.0, 1.0, &Dirichlet::default()).is_err());
        assert!(assemble_second_order(&f, &m, 0.0, 2.0, &Dirichlet::default()).is_err());
        let sys = assemble_second_order(&f, &m, 0.0, 1.0, &Dirichlet::default()).unwrap();
        let bad = SolverOptions {
            tol: 0.0,
            ..Default::default()
        };
        assert!(sys.solve(&bad).is_err());
    }
}
