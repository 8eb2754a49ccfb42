use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::euler_lorentz::{
    drift_fields, perpendicular_part, run, run_pair, step_ap, Scenario, Scheme,
};

/// Number of steps of size `dt` needed to reach `t_end`.
pub fn steps_to(t_end: f64, dt: f64) -> Result<usize> {
    if !(t_end >= 0.0 && dt > 0.0 && t_end.is_finite()) {
        return Err(Error::invalid(format!("bad run length t_end={t_end}, dt={dt}")));
    }
    Ok((t_end / dt - 1e-9).ceil().max(0.0) as usize)
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub scheme: Scheme,
    pub dt: f64,
    pub steps_requested: usize,
    pub steps_completed: usize,
    pub time: f64,
    pub instability: Option<(usize, String)>,
    pub max_norm: f64,
    pub n_min: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl StabilityReport {
    pub fn stable(&self) -> bool {
        self.instability.is_none()
    }
}

/// Runs the perturbed scenario for `steps` steps with blow-up detection.
pub fn stability_run(scenario: &Scenario, scheme: Scheme, dt: f64, steps: usize) -> Result<StabilityReport> {
    let start = Instant::now();
    let cfg = scenario.config(scheme, dt)?;
    let r = run(&cfg, &scenario.initial_state(true)?, steps, 1e6, |_, _| Ok(()))?;
    Ok(StabilityReport {
        scheme,
        dt,
        steps_requested: steps,
        steps_completed: r.reports.len(),
        time: r.state.time,
        max_norm: r.state.max_abs(),
        n_min: r.state.n.values().iter().copied().fold(f64::INFINITY, f64::min),
        instability: r.instability,
        wall_time: start.elapsed(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub scheme: Scheme,
    pub dt: f64,
    pub steps: usize,
    /// Density difference after each step, starting with the initial one.
    pub dn: Vec<f64>,
    pub dm: Vec<f64>,
    pub max_dn: f64,
    pub max_dm: f64,
    /// Differences at the last step.
    pub final_dn: f64,
    pub final_dm: f64,
    pub instability: Option<(usize, String)>,
}

/// Perturbed and unperturbed runs in lockstep.
pub fn perturbation_study(
    scenario: &Scenario,
    scheme: Scheme,
    dt: f64,
    steps: usize,
) -> Result<PerturbationReport> {
    let cfg = scenario.config(scheme, dt)?;
    let p = run_pair(
        &cfg,
        &scenario.initial_state(false)?,
        &scenario.initial_state(true)?,
        steps,
        1e6,
        1e6,
    )?;
    Ok(PerturbationReport {
        scheme,
        dt,
        steps: p.dn.len() - 1,
        max_dn: p.max_dn(),
        max_dm: p.max_dm(),
        final_dn: *p.dn.last().expect("initial difference"),
        final_dm: *p.dm.last().expect("initial difference"),
        dn: p.dn,
        dm: p.dm,
        instability: p.instability,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DriftReport {
    pub eps: f64,
    pub dt: f64,
    /// Max-norm scale of the drift momentum.
    pub scale: f64,
    /// `‖m_⊥ − (1/|B|) b × (T∇n − nE)‖∞ / scale`.
    pub corrected: f64,
    /// `‖m_⊥ − (−(1/|B|) b × (T∇n + nE))‖∞ / scale`.
    pub opposite_pressure: f64,
}

/// One AP step from the perturbed state of `scenario`; compares the
/// perpendicular momentum with the drift formulas evaluated on the old state.
pub fn drift_check(scenario: &Scenario, dt: f64) -> Result<DriftReport> {
    let cfg = scenario.config(Scheme::Ap, dt)?;
    let s0 = scenario.initial_state(true)?;
    let (drift, opposite) = drift_fields(&s0, &cfg);
    let (s1, _) = step_ap(&s0, &cfg)?;
    let mp = perpendicular_part(&s1, &cfg);
    let scale = drift.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::UndefinedRatio("drift momentum vanishes".into()));
    }
    let err = |d: &[crate::field::PrimalField; 3]| {
        (0..3).map(|k| mp[k].sub(&d[k]).max_abs()).fold(0.0, f64::max) / scale
    };
    Ok(DriftReport {
        eps: scenario.eps,
        dt,
        scale,
        corrected: err(&drift),
        opposite_pressure: err(&opposite),
    })
}

/// AP versus classical density after a fixed time, for a ladder of time steps.
#[derive(Debug, Clone, Serialize)]
pub struct AgreementRow {
    pub dt: f64,
    pub steps: usize,
    pub dn: f64,
    pub dm: f64,
}

/// Runs both schemes to `steps · dt0`, halving `dt0` `levels − 1` times.
pub fn scheme_agreement(
    scenario: &Scenario,
    dt0: f64,
    steps: usize,
    levels: usize,
) -> Result<Vec<AgreementRow>> {
    let s0 = scenario.initial_state(true)?;
    (0..levels)
        .into_par_iter()
        .map(|k| {
            let dt = dt0 / 2f64.powi(k as i32);
            let steps = steps << k;
            let a = run(&scenario.config(Scheme::Ap, dt)?, &s0, steps, 1e6, |_, _| Ok(()))?;
            let c = run(&scenario.config(Scheme::Classical, dt)?, &s0, steps, 1e6, |_, _| Ok(()))?;
            if let Some((step, reason)) = a.instability.or(c.instability) {
                return Err(Error::Instability { step, reason });
            }
            let (dn, dm) = a.state.max_diff(&c.state);
            Ok(AgreementRow { dt, steps, dn, dm })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ElCompareConfig {
    pub scenario: Scenario,
    /// CFL safety factor of the resolved (classical) time step.
    pub safety: f64,
    /// Multiple of the resolved step used for the under-resolved runs.
    pub dt_mult: f64,
    pub t_end: f64,
    pub growth_limit: f64,
}

impl Default for ElCompareConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            safety: 0.5,
            dt_mult: 10.0,
            t_end: 3.95e-5,
            growth_limit: 1e6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ElCompareRow {
    pub scheme: Scheme,
    pub dt_mult: f64,
    pub dt: f64,
    pub steps: usize,
    pub stable: bool,
    pub instability_step: Option<usize>,
    pub reason: String,
    /// Max deviation of the unperturbed run from its initial state.
    pub drift_n: f64,
    pub drift_m: f64,
    /// Max perturbed minus unperturbed difference.
    pub max_dn: f64,
    pub max_dm: f64,
}

/// AP and classical schemes, resolved and under-resolved, each with and
/// without the density perturbation.
pub fn el_compare(cfg: &ElCompareConfig) -> Result<Vec<ElCompareRow>> {
    let dt0 = cfg.scenario.cfl_dt(Scheme::Classical, cfg.safety)?;
    let cases: Vec<(Scheme, f64)> = [Scheme::Ap, Scheme::Classical]
        .into_iter()
        .flat_map(|s| [(s, 1.0), (s, cfg.dt_mult)])
        .collect();
    let s0 = cfg.scenario.initial_state(false)?;
    let s1 = cfg.scenario.initial_state(true)?;
    cases
        .into_par_iter()
        .map(|(scheme, mult)| {
            let dt = dt0 * mult;
            let steps = steps_to(cfg.t_end, dt)?;
            let pc = cfg.scenario.config(scheme, dt)?;
            let p = run_pair(&pc, &s0, &s1, steps, 1e6, cfg.growth_limit)?;
            let (drift_n, drift_m) = p.reference.state.max_diff(&s0);
            Ok(ElCompareRow {
                scheme,
                dt_mult: mult,
                dt,
                steps,
                stable: p.instability.is_none(),
                instability_step: p.instability.as_ref().map(|i| i.0),
                reason: p.instability.clone().map(|i| i.1).unwrap_or_default(),
                drift_n,
                drift_m,
                max_dn: p.max_dn(),
                max_dm: p.max_dm(),
            })
        })
        .collect()
}

pub fn write_el_compare_csv(path: &Path, rows: &[ElCompareRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scheme",
        "dt_mult",
        "dt",
        "steps",
        "stable",
        "instability_step",
        "reason",
        "drift_n",
        "drift_m",
        "max_dn",
        "max_dm",
    ])?;
    for r in rows {
        w.write_record(&[
            format!("{:?}", r.scheme).to_lowercase(),
            format!("{}", r.dt_mult),
            format!("{:e}", r.dt),
            r.steps.to_string(),
            r.stable.to_string(),
            r.instability_step.map(|s| s.to_string()).unwrap_or_default(),
            r.reason.clone(),
            format!("{:e}", r.drift_n),
            format!("{:e}", r.drift_m),
            format!("{:e}", r.max_dn),
            format!("{:e}", r.max_dm),
        ])?;
    }
    w.flush()?;
    Ok(())
}
