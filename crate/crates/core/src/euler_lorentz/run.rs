//! Test scenarios, run loops with blow-up detection, CSV output.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{cfl_dt, PlasmaConfig, PlasmaState, Scheme, StepReport, Stepper};
use crate::bfield::{AnisotropyField, ElectricField};
use crate::error::{Error, Result};
use crate::field::{DualField, PrimalField};
use crate::linsolve::{BcMode, SolverOptions};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScenarioField {
    /// Uniform field on `[0, 1]²`.
    Oblique { alpha: f64 },
    /// Circular field on `]1, 2[²`.
    Radial,
}

/// Plasma test case: uniform density and momentum plus an optional Gaussian
/// density bump `A exp(−|x − c|²/w²)` at the domain centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub field: ScenarioField,
    pub n: usize,
    pub eps: f64,
    pub temperature: f64,
    pub bmag: f64,
    /// Sign in `E = s (0, 0, B_x + B_y)`.
    pub efield_sign: f64,
    pub density: f64,
    pub momentum: [f64; 3],
    /// Bump amplitude; `None` means `eps`.
    pub bump_amplitude: Option<f64>,
    pub bump_width: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            field: ScenarioField::Oblique {
                alpha: std::f64::consts::FRAC_PI_3,
            },
            n: 40,
            eps: 1e-9,
            temperature: 1.0,
            bmag: 1.0,
            efield_sign: -1.0,
            density: 1.0,
            momentum: [1.0, -1.0, 0.0],
            bump_amplitude: None,
            bump_width: 0.1,
        }
    }
}

impl Scenario {
    pub fn radial() -> Self {
        Self {
            field: ScenarioField::Radial,
            ..Self::default()
        }
    }

    pub fn mesh(&self) -> Result<Mesh> {
        match self.field {
            ScenarioField::Oblique { .. } => Mesh::unit_square(self.n),
            ScenarioField::Radial => Mesh::new(1.0, 2.0, 1.0, 2.0, self.n, self.n),
        }
    }

    pub fn anisotropy(&self) -> Result<AnisotropyField> {
        match self.field {
            ScenarioField::Oblique { alpha } => AnisotropyField::oblique(alpha, self.bmag),
            ScenarioField::Radial => AnisotropyField::radial(self.bmag),
        }
    }

    pub fn efield(&self) -> Result<ElectricField> {
        Ok(ElectricField::FieldSum {
            field: self.anisotropy()?,
            sign: self.efield_sign,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.bump_amplitude.unwrap_or(self.eps)
    }

    pub fn initial_state(&self, perturbed: bool) -> Result<PlasmaState> {
        let mesh = self.mesh()?;
        let mut state = PlasmaState::uniform(&mesh, self.density, self.momentum);
        if perturbed {
            let (cx, cy) = (0.5 * (mesh.x0 + mesh.x1), 0.5 * (mesh.y0 + mesh.y1));
            let (a, w) = (self.amplitude(), self.bump_width);
            let bump = DualField::from_fn(&mesh, |x, y| {
                let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                a * (-r2 / (w * w)).exp()
            });
            state.n = state.n.add(&bump);
        }
        Ok(state)
    }

    pub fn config(&self, scheme: Scheme, dt: f64) -> Result<PlasmaConfig> {
        let config = PlasmaConfig {
            eps: self.eps,
            temperature: self.temperature,
            dt,
            mesh: self.mesh()?,
            field: self.anisotropy()?,
            efield: self.efield()?,
            scheme,
            solver: SolverOptions::default(),
            bc_mode: BcMode::All,
            dt_cap: 1.0,
        };
        config.validate()?;
        Ok(config)
    }

    /// CFL step of `scheme` evaluated on the unperturbed initial state.
    pub fn cfl_dt(&self, scheme: Scheme, safety: f64) -> Result<f64> {
        let state = self.initial_state(false)?;
        let cfg = self.config(scheme, 1.0)?;
        cfl_dt(&state, &cfg, safety)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: PlasmaState,
    pub reports: Vec<StepReport>,
    /// Step index and reason when the run was stopped by blow-up detection.
    pub instability: Option<(usize, String)>,
}

impl RunResult {
    pub fn stable(&self) -> bool {
        self.instability.is_none()
    }
}

fn blowup_check(state: &PlasmaState, bound: f64) -> Option<String> {
    if !state.all_finite() {
        return Some("non-finite value".into());
    }
    let m = state.max_abs();
    if m > bound {
        return Some(format!("max norm {m:.3e} exceeds {bound:.3e}"));
    }
    None
}

/// Runs `steps` steps. A non-finite value, a non-positive density, or a max
/// norm above `blowup_factor · max(‖U⁰‖∞, 1)` stops the run and is reported in
/// [`RunResult::instability`]. `observer` sees every accepted state.
pub fn run(
    config: &PlasmaConfig,
    initial: &PlasmaState,
    steps: usize,
    blowup_factor: f64,
    mut observer: impl FnMut(&PlasmaState, &StepReport) -> Result<()>,
) -> Result<RunResult> {
    initial.check(&config.mesh)?;
    let bound = blowup_factor * initial.max_abs().max(1.0);
    let mut stepper = Stepper::new(config.clone())?;
    let mut state = initial.clone();
    let mut reports = Vec::with_capacity(steps);
    for _ in 0..steps {
        match stepper.step(&state) {
            Ok((next, report)) => {
                if let Some(reason) = blowup_check(&next, bound) {
                    return Ok(RunResult {
                        state: next,
                        reports,
                        instability: Some((report.step, reason)),
                    });
                }
                observer(&next, &report)?;
                reports.push(report);
                state = next;
            }
            Err(Error::Instability { step, reason }) => {
                return Ok(RunResult {
                    state,
                    reports,
                    instability: Some((step, reason)),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunResult {
        state,
        reports,
        instability: None,
    })
}

/// Reference and perturbed runs advanced in lockstep.
#[derive(Debug, Clone)]
pub struct PairResult {
    pub reference: RunResult,
    pub perturbed: RunResult,
    /// `max |n − n_ref|` after each completed step (index 0 is the initial state).
    pub dn: Vec<f64>,
    /// Max momentum difference after each completed step.
    pub dm: Vec<f64>,
    /// Step and reason of the first detected instability of either run, or of
    /// the difference growing beyond the limit.
    pub instability: Option<(usize, String)>,
}

impl PairResult {
    pub fn max_dn(&self) -> f64 {
        self.dn.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_dm(&self) -> f64 {
        self.dm.iter().copied().fold(0.0, f64::max)
    }
}

/// Advances `reference` and `perturbed` together. Besides the per-run
/// blow-up checks of [`run`], the run is flagged unstable when the difference
/// of the two states grows beyond `growth_limit` times its initial size.
pub fn run_pair(
    config: &PlasmaConfig,
    reference: &PlasmaState,
    perturbed: &PlasmaState,
    steps: usize,
    blowup_factor: f64,
    growth_limit: f64,
) -> Result<PairResult> {
    run_pair_observed(config, reference, perturbed, steps, blowup_factor, growth_limit, |_, _| {
        Ok(())
    })
}

/// [`run_pair`] with an observer of the perturbed run.
pub fn run_pair_observed(
    config: &PlasmaConfig,
    reference: &PlasmaState,
    perturbed: &PlasmaState,
    steps: usize,
    blowup_factor: f64,
    growth_limit: f64,
    mut observer: impl FnMut(&PlasmaState, &StepReport) -> Result<()>,
) -> Result<PairResult> {
    let mut sa = Stepper::new(config.clone())?;
    let mut sb = Stepper::new(config.clone())?;
    let bound_a = blowup_factor * reference.max_abs().max(1.0);
    let bound_b = blowup_factor * perturbed.max_abs().max(1.0);
    let (dn0, dm0) = perturbed.max_diff(reference);
    let dev0 = dn0.max(dm0);
    let mut out = PairResult {
        reference: RunResult {
            state: reference.clone(),
            reports: Vec::new(),
            instability: None,
        },
        perturbed: RunResult {
            state: perturbed.clone(),
            reports: Vec::new(),
            instability: None,
        },
        dn: vec![dn0],
        dm: vec![dm0],
        instability: None,
    };
    for k in 1..=steps {
        let ra = sa.step(&out.reference.state);
        let rb = sb.step(&out.perturbed.state);
        for (res, rr, bound) in [
            (ra, &mut out.reference, bound_a),
            (rb, &mut out.perturbed, bound_b),
        ] {
            match res {
                Ok((next, report)) => {
                    if let Some(reason) = blowup_check(&next, bound) {
                        rr.instability = Some((k, reason));
                    }
                    rr.state = next;
                    rr.reports.push(report);
                }
                Err(Error::Instability { step, reason }) => rr.instability = Some((step, reason)),
                Err(e) => return Err(e),
            }
        }
        if let Some(i) = out
            .reference
            .instability
            .clone()
            .or_else(|| out.perturbed.instability.clone())
        {
            out.instability = Some(i);
            break;
        }
        if let Some(r) = out.perturbed.reports.last() {
            observer(&out.perturbed.state, r)?;
        }
        let (dn, dm) = out.perturbed.state.max_diff(&out.reference.state);
        out.dn.push(dn);
        out.dm.push(dm);
        let dev = dn.max(dm);
        if dev0 > 0.0 && dev > growth_limit * dev0 {
            out.instability = Some((
                k,
                format!("perturbation grew by {:.3e} (limit {growth_limit:.1e})", dev / dev0),
            ));
            break;
        }
    }
    Ok(out)
}

/// Writes `i,j,x,y,n,mx,my,mz` per cell, with `n` averaged from the nodes.
pub fn write_state_csv(path: &Path, state: &PlasmaState, mesh: &Mesh) -> Result<()> {
    state.check(mesh)?;
    let n: PrimalField = state.cell_density(mesh);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["i", "j", "x", "y", "n", "mx", "my", "mz"])?;
    for c in 0..mesh.n_cells() {
        let (i, j) = mesh.cell_ij(c);
        let (x, y) = mesh.cell_center(i, j);
        w.write_record(&[
            i.to_string(),
            j.to_string(),
            format!("{x:e}"),
            format!("{y:e}"),
            format!("{:e}", n[c]),
            format!("{:e}", state.mx[c]),
            format!("{:e}", state.my[c]),
            format!("{:e}", state.mz[c]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one row per step with solver residuals and max norms.
pub fn write_report_csv(path: &Path, reports: &[StepReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "step",
        "time",
        "dt",
        "g_residual",
        "u_residual",
        "h_residual",
        "parallel_div_max",
        "parallel_mismatch",
        "cfl_material",
        "cfl_acoustic",
        "n_min",
        "n_max",
        "m_max",
    ])?;
    let res = |r: Option<crate::linsolve::SolveReport>| {
        r.map(|r| format!("{:e}", r.residual)).unwrap_or_default()
    };
    for r in reports {
        w.write_record(&[
            r.step.to_string(),
            format!("{:e}", r.time),
            format!("{:e}", r.dt),
            res(r.g_report),
            res(r.u_report),
            res(r.h_report),
            format!("{:e}", r.parallel_div_max),
            format!("{:e}", r.parallel_mismatch),
            format!("{:e}", r.cfl_material),
            format!("{:e}", r.cfl_acoustic),
            format!("{:e}", r.n_min),
            format!("{:e}", r.n_max),
            format!("{:e}", r.m_max),
        ])?;
    }
    w.flush()?;
    Ok(())
}
