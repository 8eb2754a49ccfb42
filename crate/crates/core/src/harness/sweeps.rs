use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{error_norms, fit_slope, oblique_manufactured, quadratic_inhomogeneous,
    radial_manufactured, ErrorTriple, Manufactured};
use crate::bfield::AnisotropyField;
use crate::elliptic_ap::{solve, DecomposedSolution, Diagnostics};
use crate::error::Result;
use crate::linsolve::{SolveReport, SolverOptions};
use crate::mesh::Mesh;

/// Manufactured problem families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Oblique { alpha: f64 },
    Radial,
    QuadraticOblique { alpha: f64 },
    QuadraticRadial,
}

impl Family {
    pub fn mesh(&self, n: usize) -> Result<Mesh> {
        match self {
            Family::Oblique { .. } | Family::QuadraticOblique { .. } => Mesh::unit_square(n),
            Family::Radial | Family::QuadraticRadial => Mesh::new(1.0, 2.0, 1.0, 2.0, n, n),
        }
    }

    pub fn build(&self, eps: f64, mesh: &Mesh) -> Result<Manufactured> {
        match *self {
            Family::Oblique { alpha } => oblique_manufactured(alpha, eps, mesh),
            Family::Radial => radial_manufactured(eps, mesh),
            Family::QuadraticOblique { alpha } => {
                quadratic_inhomogeneous(eps, mesh, AnisotropyField::oblique(alpha, 1.0)?)
            }
            Family::QuadraticRadial => {
                quadratic_inhomogeneous(eps, mesh, AnisotropyField::radial(1.0)?)
            }
        }
    }

    /// Build and solve with the given solver options.
    pub fn run(
        &self,
        eps: f64,
        n: usize,
        opts: &SolverOptions,
    ) -> Result<(Manufactured, DecomposedSolution)> {
        let mesh = self.mesh(n)?;
        let mut case = self.build(eps, &mesh)?;
        case.problem.solver = *opts;
        let sol = solve(&case.problem)?;
        Ok((case, sol))
    }
}

/// One sweep point. `param` is the swept quantity (`h`, `ε` or `α`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub n: usize,
    pub eps: f64,
    pub alpha: f64,
    pub e1: f64,
    pub e2: f64,
    pub einf: f64,
    pub e2_p: f64,
    pub einf_p: f64,
    pub e2_q: f64,
    pub einf_q: f64,
    pub eps_p_max: f64,
    pub div_p_max: f64,
    pub orthogonality: f64,
    pub variational_residual: f64,
    pub g_residual: f64,
    pub u_residual: f64,
    pub h_residual: f64,
    pub solve_time: f64,
    pub tol: f64,
    /// Empty on success, the error message otherwise.
    pub failure: String,
}

impl SweepRow {
    pub fn errors(&self) -> ErrorTriple {
        ErrorTriple {
            e1: self.e1,
            e2: self.e2,
            einf: self.einf,
        }
    }

    pub fn ok(&self) -> bool {
        self.failure.is_empty()
    }

    fn failed(param: f64, n: usize, eps: f64, alpha: f64, tol: f64, msg: String) -> Self {
        let nan = f64::NAN;
        Self {
            param,
            n,
            eps,
            alpha,
            e1: nan,
            e2: nan,
            einf: nan,
            e2_p: nan,
            einf_p: nan,
            e2_q: nan,
            einf_q: nan,
            eps_p_max: nan,
            div_p_max: nan,
            orthogonality: nan,
            variational_residual: nan,
            g_residual: nan,
            u_residual: nan,
            h_residual: nan,
            solve_time: nan,
            tol,
            failure: msg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Fitted log-log slopes `(slope, rms residual)` for `e₁, e₂, e∞`, when
    /// the sweep has a natural abscissa.
    pub slopes: Option<[(f64, f64); 3]>,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `max/min` over successful rows, per norm.
    pub fn spread(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let vals: Vec<f64> = self
                .rows
                .iter()
                .filter(|r| r.ok())
                .map(|r| r.errors().as_array()[k])
                .collect();
            let max = vals.iter().cloned().fold(f64::MIN, f64::max);
            let min = vals.iter().cloned().fold(f64::MAX, f64::min);
            *o = max / min;
        }
        out
    }
}

fn total_time(r: &[&SolveReport]) -> f64 {
    r.iter().map(|x| x.wall_time).sum()
}

fn sweep_row(
    family: &Family,
    param: f64,
    eps: f64,
    n: usize,
    opts: &SolverOptions,
) -> SweepRow {
    let alpha = match *family {
        Family::Oblique { alpha } | Family::QuadraticOblique { alpha } => alpha,
        _ => f64::NAN,
    };
    match family.run(eps, n, opts) {
        Err(e) => SweepRow::failed(param, n, eps, alpha, opts.tol, e.to_string()),
        Ok((case, sol)) => match row_from(&case, &sol, param, n, eps, alpha, opts.tol) {
            Ok(r) => r,
            Err(e) => SweepRow::failed(param, n, eps, alpha, opts.tol, e.to_string()),
        },
    }
}

fn row_from(
    case: &Manufactured,
    sol: &DecomposedSolution,
    param: f64,
    n: usize,
    eps: f64,
    alpha: f64,
    tol: f64,
) -> Result<SweepRow> {
    let e = error_norms(&sol.phi, &case.phi)?;
    let nan = ErrorTriple {
        e1: f64::NAN,
        e2: f64::NAN,
        einf: f64::NAN,
    };
    let ep = error_norms(&sol.p, &case.p).unwrap_or(nan);
    let eq = error_norms(&sol.q, &case.q).unwrap_or(nan);
    let Diagnostics {
        eps_p_max,
        div_p_max,
        orthogonality,
        variational_residual,
    } = sol.diagnostics;
    Ok(SweepRow {
        param,
        n,
        eps,
        alpha,
        e1: e.e1,
        e2: e.e2,
        einf: e.einf,
        e2_p: ep.e2,
        einf_p: ep.einf,
        e2_q: eq.e2,
        einf_q: eq.einf,
        eps_p_max,
        div_p_max,
        orthogonality,
        variational_residual,
        g_residual: sol.g_report.residual,
        u_residual: sol.u_report.residual,
        h_residual: sol.h_report.residual,
        solve_time: total_time(&[&sol.g_report, &sol.u_report, &sol.h_report]),
        tol,
        failure: String::new(),
    })
}

/// Errors on a ladder of `n × n` grids, with least-squares slopes against `h = 1/n`.
pub fn convergence_study(
    family: Family,
    eps: f64,
    grids: &[usize],
    opts: &SolverOptions,
) -> Result<SweepResult> {
    let rows: Vec<SweepRow> = grids
        .par_iter()
        .map(|&n| sweep_row(&family, 1.0 / n as f64, eps, n, opts))
        .collect();
    let slopes = if rows.len() >= 2 && rows.iter().all(SweepRow::ok) {
        let h: Vec<f64> = rows.iter().map(|r| r.param).collect();
        let mut s = [(0.0, 0.0); 3];
        for (k, out) in s.iter_mut().enumerate() {
            let e: Vec<f64> = rows.iter().map(|r| r.errors().as_array()[k]).collect();
            *out = fit_slope(&h, &e).unwrap_or((f64::NAN, f64::NAN));
        }
        Some(s)
    } else {
        None
    };
    Ok(SweepResult { rows, slopes })
}

/// Errors for a list of `ε` on a fixed grid.
pub fn eps_sweep(
    family: Family,
    n: usize,
    eps_list: &[f64],
    opts: &SolverOptions,
) -> Result<SweepResult> {
    let rows = eps_list
        .par_iter()
        .map(|&eps| sweep_row(&family, eps, eps, n, opts))
        .collect();
    Ok(SweepResult { rows, slopes: None })
}

/// Oblique manufactured case over a list of angles. Failing angles are kept
/// as rows with a failure message.
pub fn angle_sweep(
    eps: f64,
    n: usize,
    alphas: &[f64],
    opts: &SolverOptions,
) -> Result<SweepResult> {
    let rows = alphas
        .par_iter()
        .map(|&alpha| sweep_row(&Family::Oblique { alpha }, alpha, eps, n, opts))
        .collect();
    Ok(SweepResult { rows, slopes: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PStudyRow {
    pub eps: f64,
    pub einf_p: f64,
    pub div_p_max: f64,
    pub eps_p_max: f64,
    pub g_residual: f64,
    /// `true` when `e∞(p)` is within a factor 2 of the plateau value.
    pub plateau: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PStudyResult {
    pub rows: Vec<PStudyRow>,
    /// Median `e∞(p)` over `ε ≥ 1e−6`.
    pub plateau_level: f64,
    /// Largest `ε` at which `e∞(p)` leaves the plateau (NaN if never).
    pub floor_eps: f64,
    /// Slope of `log e∞(p)` against `log ε` below the floor.
    pub floor_slope: f64,
    /// Slope of `log ‖∇·(b p)_app‖∞` against `log ε` on the plateau.
    pub div_slope: f64,
}

impl PStudyResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Accuracy of the kernel part `p` on the oblique case over a range of `ε`.
pub fn p_accuracy_study(
    alpha: f64,
    eps_list: &[f64],
    n: usize,
    opts: &SolverOptions,
) -> Result<PStudyResult> {
    let mut eps_sorted = eps_list.to_vec();
    eps_sorted.sort_by(|a, b| b.total_cmp(a));
    let family = Family::Oblique { alpha };
    let mut raw: Vec<(f64, f64, f64, f64, f64)> = eps_sorted
        .par_iter()
        .map(|&eps| -> Result<(f64, f64, f64, f64, f64)> {
            let (case, sol) = family.run(eps, n, opts)?;
            let ep = error_norms(&sol.p, &case.p)?;
            Ok((
                eps,
                ep.einf,
                sol.diagnostics.div_p_max,
                sol.diagnostics.eps_p_max,
                sol.g_report.residual,
            ))
        })
        .collect::<Result<_>>()?;
    raw.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut plateau_vals: Vec<f64> = raw.iter().filter(|r| r.0 >= 1e-6).map(|r| r.1).collect();
    plateau_vals.sort_by(f64::total_cmp);
    let plateau_level = if plateau_vals.is_empty() {
        f64::NAN
    } else {
        plateau_vals[plateau_vals.len() / 2]
    };
    let rows: Vec<PStudyRow> = raw
        .iter()
        .map(|&(eps, einf_p, div_p_max, eps_p_max, g_residual)| PStudyRow {
            eps,
            einf_p,
            div_p_max,
            eps_p_max,
            g_residual,
            plateau: einf_p <= 2.0 * plateau_level && einf_p >= 0.5 * plateau_level,
        })
        .collect();
    let floor_idx = rows.iter().position(|r| r.eps < 1e-6 && !r.plateau);
    let floor_eps = floor_idx.map_or(f64::NAN, |k| rows[k].eps);
    let floor_slope = match floor_idx {
        Some(k) if rows.len() - k >= 2 => {
            let tail = &rows[k..];
            let x: Vec<f64> = tail.iter().map(|r| r.eps).collect();
            let y: Vec<f64> = tail.iter().map(|r| r.einf_p).collect();
            fit_slope(&x, &y).map_or(f64::NAN, |s| s.0)
        }
        _ => f64::NAN,
    };
    let resolved: Vec<&PStudyRow> = rows.iter().filter(|r| r.plateau && r.div_p_max > 0.0).collect();
    let div_slope = if resolved.len() >= 2 {
        let x: Vec<f64> = resolved.iter().map(|r| r.eps).collect();
        let y: Vec<f64> = resolved.iter().map(|r| r.div_p_max).collect();
        fit_slope(&x, &y).map_or(f64::NAN, |s| s.0)
    } else {
        f64::NAN
    };
    Ok(PStudyResult {
        rows,
        plateau_level,
        floor_eps,
        floor_slope,
        div_slope,
    })
}
