//! Error norms, manufactured solutions and the experiment drivers.

mod manufactured;
mod plasma;
mod sweeps;

pub use manufactured::{
    oblique_manufactured, quadratic_inhomogeneous, radial_manufactured, Manufactured,
};
pub use plasma::{
    drift_check, el_compare, perturbation_study, scheme_agreement, stability_run, steps_to,
    write_el_compare_csv, AgreementRow, DriftReport, ElCompareConfig, ElCompareRow,
    PerturbationReport, StabilityReport,
};
pub use sweeps::{
    angle_sweep, convergence_study, eps_sweep, p_accuracy_study, Family, PStudyRow, PStudyResult,
    SweepResult, SweepRow,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::PrimalField;

/// Relative errors `(e₁, e₂, e∞)` with unweighted sums over cells.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ErrorTriple {
    pub e1: f64,
    pub e2: f64,
    pub einf: f64,
}

impl ErrorTriple {
    pub fn as_array(&self) -> [f64; 3] {
        [self.e1, self.e2, self.einf]
    }
}

pub fn error_norms(num: &PrimalField, exact: &PrimalField) -> Result<ErrorTriple> {
    if num.len() != exact.len() {
        return Err(Error::invalid("fields have different sizes"));
    }
    let (mut d1, mut d2, mut dinf) = (0.0, 0.0, 0.0f64);
    let (mut a1, mut a2, mut ainf) = (0.0, 0.0, 0.0f64);
    for (n, a) in num.values().iter().zip(exact.values()) {
        let d = (a - n).abs();
        d1 += d;
        d2 += d * d;
        dinf = dinf.max(d);
        a1 += a.abs();
        a2 += a * a;
        ainf = ainf.max(a.abs());
    }
    if ainf == 0.0 {
        return Err(Error::UndefinedRatio("exact field is identically zero".into()));
    }
    Ok(ErrorTriple {
        e1: d1 / a1,
        e2: (d2 / a2).sqrt(),
        einf: dinf / ainf,
    })
}

/// Least-squares fit `log y = s log x + c`; returns `(s, rms residual)`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("slope fit needs at least two matching points"));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("slope fit needs positive data"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope fit needs distinct abscissae"));
    }
    let s = sxy / sxx;
    let c = my - s * mx;
    let rms = (lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - (s * a + c)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((s, rms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    #[test]
    fn norm_examples() {
        let m = Mesh::unit_square(4).unwrap();
        let exact = PrimalField::from_fn(&m, |x, y| 1.0 + x + y);
        assert_eq!(error_norms(&exact, &exact).unwrap(), ErrorTriple::default());
        let e = error_norms(&exact.scale(2.0), &exact).unwrap();
        for v in e.as_array() {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let ones = PrimalField::constant(&m, 1.0);
        let mut num = ones.clone();
        num[5] += 0.25;
        let e = error_norms(&num, &ones).unwrap();
        assert_eq!(e.einf, 0.25);
        assert!((e.e1 - 0.25 / 16.0).abs() < 1e-16);
        assert!(matches!(
            error_norms(&ones, &PrimalField::zeros(&m)),
            Err(Error::UndefinedRatio(_))
        ));
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|h: &f64| 3.0 * h * h).collect();
        let (s, r) = fit_slope(&x, &y).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && r < 1e-12);
    }
}
