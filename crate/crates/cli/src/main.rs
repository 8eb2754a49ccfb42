use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aniso_ap::elliptic_ap::{solve, EllipticProblem};
use aniso_ap::euler_lorentz::{
    run, run_pair_observed, write_report_csv, write_state_csv, Scenario, ScenarioField, Scheme,
};
use aniso_ap::harness::{
    angle_sweep, convergence_study, el_compare, error_norms, p_accuracy_study, steps_to,
    write_el_compare_csv, ElCompareConfig, Family, Manufactured,
};
use aniso_ap::io::{read_primal_csv, write_cell_columns};
use aniso_ap::linsolve::{BcMode, Method, SolverOptions};
use aniso_ap::{AnisotropyField, Error, Mesh};
use clap::{Parser, Subcommand};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "aniso-ap", version, about = "AP solvers for anisotropic elliptic problems and the Euler-Lorentz system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML file with flat key = value settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one elliptic problem and write solution.csv and diagnostics.csv.
    SolveElliptic(Common),
    /// Run the Euler-Lorentz test case.
    EulerLorentz {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: Option<String>,
        /// Time step as a multiple of the classical CFL step.
        #[arg(long)]
        dt_mult: Option<f64>,
    },
    /// Mesh-refinement study.
    Convergence(Common),
    /// Error against the field angle on a fixed grid.
    AngleSweep(Common),
    /// Accuracy of the kernel part over a range of eps.
    PStudy(Common),
    /// AP versus classical, resolved and under-resolved.
    ElCompare(Common),
}

/// Every key is optional; unused keys are ignored by subcommands that do not
/// need them, unknown keys are rejected.
#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    output_dir: PathBuf,
    // field
    field: String,
    alpha: f64,
    bmag: f64,
    // elliptic problems
    problem: String,
    source_file: Option<PathBuf>,
    eps: Option<f64>,
    eps_list: Vec<f64>,
    n: Option<usize>,
    grids: Vec<usize>,
    bc_mode: BcMode,
    tol: f64,
    max_iter: usize,
    method: Option<String>,
    alpha_min: f64,
    alpha_max: f64,
    alpha_count: usize,
    // plasma
    temperature: f64,
    efield_sign: f64,
    density: f64,
    momentum: [f64; 3],
    perturbed: bool,
    bump_amplitude: Option<f64>,
    bump_width: f64,
    scheme: String,
    safety: f64,
    dt: Option<f64>,
    dt_mult: Option<f64>,
    t_end: Option<f64>,
    steps: Option<usize>,
    snapshot_every: usize,
    blowup_factor: f64,
    growth_limit: f64,
    growth_check: bool,
}

impl Default for Config {
    fn default() -> Self {
        let s = Scenario::default();
        let e = ElCompareConfig::default();
        Self {
            output_dir: PathBuf::from("."),
            field: "oblique".into(),
            alpha: std::f64::consts::FRAC_PI_3,
            bmag: 1.0,
            problem: "manufactured".into(),
            source_file: None,
            eps: None,
            eps_list: Vec::new(),
            n: None,
            grids: vec![20, 40, 80, 160],
            bc_mode: BcMode::All,
            tol: 1e-12,
            max_iter: 20_000,
            method: None,
            alpha_min: 0.05,
            alpha_max: std::f64::consts::FRAC_PI_2 - 0.05,
            alpha_count: 16,
            temperature: s.temperature,
            efield_sign: s.efield_sign,
            density: s.density,
            momentum: s.momentum,
            perturbed: true,
            bump_amplitude: None,
            bump_width: s.bump_width,
            scheme: "ap".into(),
            safety: e.safety,
            dt: None,
            dt_mult: None,
            t_end: None,
            steps: None,
            snapshot_every: 0,
            blowup_factor: 1e6,
            growth_limit: e.growth_limit,
            growth_check: true,
        }
    }
}

enum Failure {
    Config(String),
    Solver(String),
    Instability(usize, String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Domain(_) => Failure::Config(e.to_string()),
            Error::Instability { step, reason } => Failure::Instability(step, reason),
            other => Failure::Solver(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Solver(format!("i/o error: {e}"))
    }
}

type CliResult<T> = Result<T, Failure>;

fn load(common: &Common) -> CliResult<(Config, PathBuf)> {
    let cfg: Config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => Config::default(),
    };
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&out)?;
    Ok((cfg, out))
}

impl Config {
    fn solver(&self) -> CliResult<SolverOptions> {
        let method = match self.method.as_deref() {
            None | Some("auto") => None,
            Some("direct") => Some(Method::Direct),
            Some("iterative") => Some(Method::Iterative),
            Some(m) => return Err(Failure::Config(format!("unknown method {m:?}"))),
        };
        let opts = SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            method,
            ..SolverOptions::default()
        };
        opts.validate()?;
        Ok(opts)
    }

    fn anisotropy(&self) -> CliResult<AnisotropyField> {
        Ok(match self.field.as_str() {
            "oblique" => AnisotropyField::oblique(self.alpha, self.bmag)?,
            "radial" => AnisotropyField::radial(self.bmag)?,
            f => return Err(Failure::Config(format!("unknown field {f:?}"))),
        })
    }

    fn family(&self) -> CliResult<Family> {
        Ok(match (self.field.as_str(), self.problem.as_str()) {
            ("oblique", "manufactured") => Family::Oblique { alpha: self.alpha },
            ("radial", "manufactured") => Family::Radial,
            ("oblique", "quadratic") => Family::QuadraticOblique { alpha: self.alpha },
            ("radial", "quadratic") => Family::QuadraticRadial,
            (f, p) => return Err(Failure::Config(format!("no problem {p:?} for field {f:?}"))),
        })
    }

    fn scenario(&self, n_default: usize) -> CliResult<Scenario> {
        let field = match self.field.as_str() {
            "oblique" => ScenarioField::Oblique { alpha: self.alpha },
            "radial" => ScenarioField::Radial,
            f => return Err(Failure::Config(format!("unknown field {f:?}"))),
        };
        Ok(Scenario {
            field,
            n: self.n.unwrap_or(n_default),
            eps: self.eps.unwrap_or(1e-9),
            temperature: self.temperature,
            bmag: self.bmag,
            efield_sign: self.efield_sign,
            density: self.density,
            momentum: self.momentum,
            bump_amplitude: self.bump_amplitude,
            bump_width: self.bump_width,
        })
    }
}

fn solve_elliptic(common: &Common) -> CliResult<()> {
    let (cfg, out) = load(common)?;
    let eps = cfg.eps.unwrap_or(1e-6);
    let n = cfg.n.unwrap_or(40);
    let opts = cfg.solver()?;
    let (problem, exact): (EllipticProblem, Option<Manufactured>) = match cfg.problem.as_str() {
        "file" => {
            let path = cfg
                .source_file
                .as_ref()
                .ok_or_else(|| Failure::Config("problem = \"file\" needs source_file".into()))?;
            let field = cfg.anisotropy()?;
            let mesh = match field {
                AnisotropyField::Radial { .. } => Mesh::new(1.0, 2.0, 1.0, 2.0, n, n)?,
                _ => Mesh::unit_square(n)?,
            };
            let f = read_primal_csv(path, &mesh, "value")?;
            (EllipticProblem::homogeneous(eps, field, mesh, f), None)
        }
        _ => {
            let family = cfg.family()?;
            let case = family.build(eps, &family.mesh(n)?)?;
            (case.problem.clone(), Some(case))
        }
    };
    let mut problem = problem;
    problem.solver = opts;
    problem.bc_mode = cfg.bc_mode;
    let sol = solve(&problem)?;
    write_cell_columns(
        &out.join("solution.csv"),
        &problem.mesh,
        &[("phi", &sol.phi), ("p", &sol.p), ("q", &sol.q)],
    )?;

    let mut rows: Vec<(String, String)> = vec![
        ("eps".into(), format!("{eps:e}")),
        ("n".into(), n.to_string()),
        ("tol".into(), format!("{:e}", opts.tol)),
        ("eps_p_max".into(), format!("{:e}", sol.diagnostics.eps_p_max)),
        ("div_p_max".into(), format!("{:e}", sol.diagnostics.div_p_max)),
        ("orthogonality".into(), format!("{:e}", sol.diagnostics.orthogonality)),
        ("variational_residual".into(), format!("{:e}", sol.diagnostics.variational_residual)),
    ];
    for (name, r) in [("g", sol.g_report), ("u", sol.u_report), ("h", sol.h_report)] {
        rows.push((format!("{name}_residual"), format!("{:e}", r.residual)));
        rows.push((format!("{name}_backward_error"), format!("{:e}", r.backward_error)));
        rows.push((format!("{name}_iterations"), r.iterations.to_string()));
        rows.push((format!("{name}_method"), r.method.to_string()));
    }
    if let Some(case) = &exact {
        let e = error_norms(&sol.phi, &case.phi)?;
        rows.push(("e1".into(), format!("{:e}", e.e1)));
        rows.push(("e2".into(), format!("{:e}", e.e2)));
        rows.push(("einf".into(), format!("{:e}", e.einf)));
        println!("e1 {:.3e}  e2 {:.3e}  einf {:.3e}", e.e1, e.e2, e.einf);
    }
    write_key_values(&out.join("diagnostics.csv"), &rows)?;
    Ok(())
}

fn write_key_values(path: &Path, rows: &[(String, String)]) -> CliResult<()> {
    let mut text = String::from("key,value\n");
    for (k, v) in rows {
        text.push_str(&format!("{k},{v}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

fn euler_lorentz(common: &Common, scheme: Option<&str>, dt_mult: Option<f64>) -> CliResult<()> {
    let (cfg, out) = load(common)?;
    let scenario = cfg.scenario(40)?;
    let scheme: Scheme = scheme.unwrap_or(&cfg.scheme).parse()?;
    let mult = dt_mult.or(cfg.dt_mult).unwrap_or(1.0);
    let dt = match (cfg.dt, dt_mult.or(cfg.dt_mult)) {
        (Some(dt), None) => dt,
        _ => mult * scenario.cfl_dt(Scheme::Classical, cfg.safety)?,
    };
    let steps = match cfg.steps {
        Some(s) => s,
        None => steps_to(cfg.t_end.unwrap_or(3.95e-6), dt)?,
    };
    let mut config = scenario.config(scheme, dt)?;
    config.solver = cfg.solver()?;
    config.bc_mode = cfg.bc_mode;
    let initial = scenario.initial_state(cfg.perturbed)?;
    let mesh = config.mesh.clone();
    let snapshot = |state: &aniso_ap::euler_lorentz::PlasmaState| {
        write_state_csv(&out.join(format!("state_t{:.6e}.csv", state.time)), state, &mesh)
    };
    snapshot(&initial)?;
    println!("{scheme:?} scheme, dt = {dt:.6e}, {steps} steps");
    let every = cfg.snapshot_every;
    let observer = |state: &aniso_ap::euler_lorentz::PlasmaState, report: &aniso_ap::euler_lorentz::StepReport| {
        if every > 0 && report.step % every == 0 && report.step < steps {
            snapshot(state)?;
        }
        Ok(())
    };
    let result = if cfg.perturbed && cfg.growth_check {
        // lockstep unperturbed run to watch the growth of the perturbation
        let reference = scenario.initial_state(false)?;
        let p = run_pair_observed(
            &config,
            &reference,
            &initial,
            steps,
            cfg.blowup_factor,
            cfg.growth_limit,
            observer,
        )?;
        let mut r = p.perturbed;
        r.instability = p.instability;
        r
    } else {
        run(&config, &initial, steps, cfg.blowup_factor, observer)?
    };
    snapshot(&result.state)?;
    write_report_csv(&out.join("report.csv"), &result.reports)?;
    if let Some((step, reason)) = result.instability {
        return Err(Failure::Instability(step, reason));
    }
    println!("t = {:.6e}, max norm {:.6e}", result.state.time, result.state.max_abs());
    Ok(())
}

fn convergence(common: &Common) -> CliResult<()> {
    let (cfg, out) = load(common)?;
    let family = cfg.family()?;
    let eps = cfg.eps.unwrap_or(1e-6);
    let res = convergence_study(family, eps, &cfg.grids, &cfg.solver()?)?;
    res.write_csv(File::create(out.join("convergence.csv"))?)?;
    for r in res.rows.iter().filter(|r| !r.ok()) {
        eprintln!("n = {}: {}", r.n, r.failure);
    }
    match res.slopes {
        Some(s) => {
            let mut text = String::from("norm,slope,rms\n");
            for (name, (slope, rms)) in ["e1", "e2", "einf"].iter().zip(s) {
                println!("{name}: slope {slope:.3} (rms {rms:.2e})");
                text.push_str(&format!("{name},{slope:e},{rms:e}\n"));
            }
            fs::write(out.join("slopes.csv"), text)?;
            Ok(())
        }
        None => Err(Failure::Solver("some grids failed; no slope fitted".into())),
    }
}

fn angle(common: &Common) -> CliResult<()> {
    let (cfg, out) = load(common)?;
    if cfg.alpha_count < 2 || !(cfg.alpha_min < cfg.alpha_max) {
        return Err(Failure::Config("need alpha_count >= 2 and alpha_min < alpha_max".into()));
    }
    let alphas: Vec<f64> = (0..cfg.alpha_count)
        .map(|k| cfg.alpha_min + (cfg.alpha_max - cfg.alpha_min) * k as f64 / (cfg.alpha_count - 1) as f64)
        .collect();
    let res = angle_sweep(cfg.eps.unwrap_or(1e-9), cfg.n.unwrap_or(40), &alphas, &cfg.solver()?)?;
    res.write_csv(File::create(out.join("angle_sweep.csv"))?)?;
    let s = res.spread();
    println!("max/min ratio: e1 {:.3}  e2 {:.3}  einf {:.3}", s[0], s[1], s[2]);
    Ok(())
}

fn p_study(common: &Common) -> CliResult<()> {
    let (cfg, out) = load(common)?;
    let eps_list = if cfg.eps_list.is_empty() {
        (2..=12).map(|k| 10f64.powi(-k)).collect()
    } else {
        cfg.eps_list.clone()
    };
    let res = p_accuracy_study(cfg.alpha, &eps_list, cfg.n.unwrap_or(60), &cfg.solver()?)?;
    res.write_csv(File::create(out.join("p_study.csv"))?)?;
    println!(
        "plateau {:.3e}, floor at eps {:.1e} (slope {:.2}), div slope {:.2}",
        res.plateau_level, res.floor_eps, res.floor_slope, res.div_slope
    );
    Ok(())
}

fn el_compare_cmd(common: &Common) -> CliResult<()> {
    let (cfg, out) = load(common)?;
    let ec = ElCompareConfig {
        scenario: cfg.scenario(40)?,
        safety: cfg.safety,
        dt_mult: cfg.dt_mult.unwrap_or(10.0),
        t_end: cfg.t_end.unwrap_or(3.95e-5),
        growth_limit: cfg.growth_limit,
    };
    let rows = el_compare(&ec)?;
    write_el_compare_csv(&out.join("el_compare.csv"), &rows)?;
    for r in &rows {
        println!(
            "{:<9} dt x{:<4} {:>4} steps  {}  dn {:.2e}  dm {:.2e}",
            format!("{:?}", r.scheme),
            r.dt_mult,
            r.steps,
            if r.stable { "stable".to_string() } else { format!("unstable at step {}", r.instability_step.unwrap_or(0)) },
            r.max_dn,
            r.max_dm
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::SolveElliptic(c) => solve_elliptic(c),
        Command::EulerLorentz {
            common,
            scheme,
            dt_mult,
        } => euler_lorentz(common, scheme.as_deref(), *dt_mult),
        Command::Convergence(c) => convergence(c),
        Command::AngleSweep(c) => angle(c),
        Command::PStudy(c) => p_study(c),
        Command::ElCompare(c) => el_compare_cmd(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("invalid configuration: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Instability(step, reason)) => {
            eprintln!("instability detected at step {step}: {reason}");
            ExitCode::from(3)
        }
    }
}
