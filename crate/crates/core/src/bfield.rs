//! Analytic anisotropy directions, magnetic fields and the test electric field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Unit direction `b(x, y)` together with the field magnitude `|B|`.
///
/// `B = |B| (b_x, b_y, 0)`. Both analytic fields are divergence free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "lowercase")]
pub enum AnisotropyField {
    /// Uniform direction `b = (sin α, cos α)`.
    Oblique { alpha: f64, bmag: f64 },
    /// Circular field lines about the origin, `b = (y/r, -x/r)`.
    Radial { bmag: f64 },
}

impl AnisotropyField {
    pub fn oblique(alpha: f64, bmag: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&alpha) {
            return Err(Error::invalid(format!(
                "oblique angle {alpha} outside [0, pi/2]"
            )));
        }
        if !(bmag > 0.0 && bmag.is_finite()) {
            return Err(Error::invalid("field magnitude must be positive"));
        }
        Ok(Self::Oblique { alpha, bmag })
    }

    pub fn radial(bmag: f64) -> Result<Self> {
        if !(bmag > 0.0 && bmag.is_finite()) {
            return Err(Error::invalid("field magnitude must be positive"));
        }
        Ok(Self::Radial { bmag })
    }

    pub fn try_direction(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        match *self {
            Self::Oblique { alpha, .. } => Ok([alpha.sin(), alpha.cos()]),
            Self::Radial { .. } => {
                let r = x.hypot(y);
                if r == 0.0 {
                    return Err(Error::Domain(
                        "radial field direction is undefined at the origin".into(),
                    ));
                }
                Ok([y / r, -x / r])
            }
        }
    }

    /// Direction at `(x, y)`. Callers must have validated the domain with
    /// [`AnisotropyField::validate_on`]; the radial field yields NaN at the origin.
    #[inline]
    pub fn direction(&self, x: f64, y: f64) -> [f64; 2] {
        match *self {
            Self::Oblique { alpha, .. } => [alpha.sin(), alpha.cos()],
            Self::Radial { .. } => {
                let r = x.hypot(y);
                [y / r, -x / r]
            }
        }
    }

    #[inline]
    pub fn magnitude(&self, _x: f64, _y: f64) -> f64 {
        match *self {
            Self::Oblique { bmag, .. } | Self::Radial { bmag } => bmag,
        }
    }

    /// Full magnetic field `B = |B| (b, 0)`.
    #[inline]
    pub fn magnetic(&self, x: f64, y: f64) -> [f64; 3] {
        let b = self.direction(x, y);
        let m = self.magnitude(x, y);
        [m * b[0], m * b[1], 0.0]
    }

    /// Fails if the closed mesh domain contains a point where `b` is undefined.
    pub fn validate_on(&self, mesh: &Mesh) -> Result<()> {
        if let Self::Radial { .. } = self {
            let contains_origin =
                mesh.x0 <= 0.0 && 0.0 <= mesh.x1 && mesh.y0 <= 0.0 && 0.0 <= mesh.y1;
            if contains_origin {
                return Err(Error::Domain(
                    "radial field requires a domain that excludes the origin".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Prescribed electric field `E(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ElectricField {
    Zero,
    Uniform([f64; 3]),
    /// `E = sign · (0, 0, B_x + B_y)` for the given magnetic field.
    FieldSum { field: AnisotropyField, sign: f64 },
}

impl ElectricField {
    #[inline]
    pub fn at(&self, x: f64, y: f64) -> [f64; 3] {
        match *self {
            Self::Zero => [0.0; 3],
            Self::Uniform(e) => e,
            Self::FieldSum { field, sign } => {
                let b = field.magnetic(x, y);
                [0.0, 0.0, sign * (b[0] + b[1])]
            }
        }
    }
}

/// The plasma test-case electric field `E = (0, 0, B_x + B_y)`.
pub fn test_electric_field(field: AnisotropyField) -> ElectricField {
    ElectricField::FieldSum { field, sign: 1.0 }
}

/// Centred-difference estimate of `∇·B` at the interior dual nodes of `mesh`,
/// with step equal to the mesh spacing.
pub fn discrete_divergence_max(field: &AnisotropyField, mesh: &Mesh) -> f64 {
    let (hx, hy) = (mesh.dx, mesh.dy);
    let mut worst: f64 = 0.0;
    for k in mesh.interior_nodes() {
        let (i, j) = mesh.node_ij(k);
        let (x, y) = mesh.node_point(i, j);
        let dbx = (field.magnetic(x + hx, y)[0] - field.magnetic(x - hx, y)[0]) / (2.0 * hx);
        let dby = (field.magnetic(x, y + hy)[1] - field.magnetic(x, y - hy)[1]) / (2.0 * hy);
        worst = worst.max((dbx + dby).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn close(a: [f64; 2], b: [f64; 2]) -> bool {
        (a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15
    }

    #[test]
    fn oblique_directions() {
        let f = AnisotropyField::oblique(0.0, 1.0).unwrap();
        assert!(close(f.direction(0.3, 0.2), [0.0, 1.0]));
        let f = AnisotropyField::oblique(PI / 2.0, 1.0).unwrap();
        assert!(close(f.direction(0.3, 0.2), [1.0, 0.0]));
        let f = AnisotropyField::oblique(PI / 3.0, 1.0).unwrap();
        assert!(close(f.direction(0.3, 0.2), [3f64.sqrt() / 2.0, 0.5]));
        assert!(AnisotropyField::oblique(2.0, 1.0).is_err());
        assert!(AnisotropyField::oblique(0.5, 0.0).is_err());
    }

    #[test]
    fn radial_directions() {
        let f = AnisotropyField::radial(1.0).unwrap();
        assert!(close(f.try_direction(1.0, 0.0).unwrap(), [0.0, -1.0]));
        let s = 1.0 / 2f64.sqrt();
        assert!(close(f.try_direction(1.0, 1.0).unwrap(), [s, -s]));
        assert!(matches!(f.try_direction(0.0, 0.0), Err(Error::Domain(_))));
        let b = f.direction(1.3, 1.7);
        assert!((b[0] * 1.3 + b[1] * 1.7).abs() < 1e-15);
        assert!(f.validate_on(&Mesh::unit_square(4).unwrap()).is_err());
        assert!(f
            .validate_on(&Mesh::new(1.0, 2.0, 1.0, 2.0, 4, 4).unwrap())
            .is_ok());
    }

    #[test]
    fn unit_length_at_random_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let fields = [
            AnisotropyField::oblique(0.7, 2.0).unwrap(),
            AnisotropyField::radial(1.0).unwrap(),
        ];
        for _ in 0..1_000_000 {
            let x = rng.gen_range(1.0..2.0);
            let y = rng.gen_range(1.0..2.0);
            for f in &fields {
                let b = f.direction(x, y);
                assert!((b[0].hypot(b[1]) - 1.0).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn electric_field_examples() {
        let ob = AnisotropyField::oblique(PI / 3.0, 1.0).unwrap();
        let e = test_electric_field(ob).at(0.4, 0.9);
        assert!((e[2] - (3f64.sqrt() + 1.0) / 2.0).abs() < 1e-15);
        assert_eq!(e[0], 0.0);
        let up = AnisotropyField::oblique(0.0, 1.0).unwrap();
        assert!((test_electric_field(up).at(0.1, 0.1)[2] - 1.0).abs() < 1e-15);
        let rad = AnisotropyField::radial(1.0).unwrap();
        assert!(test_electric_field(rad).at(1.0, 1.0)[2].abs() < 1e-15);
    }

    #[test]
    fn divergence_free_checks() {
        let ob = AnisotropyField::oblique(PI / 3.0, 1.0).unwrap();
        assert_eq!(
            discrete_divergence_max(&ob, &Mesh::unit_square(20).unwrap()),
            0.0
        );
        let rad = AnisotropyField::radial(1.0).unwrap();
        let errs: Vec<f64> = [20, 40, 80, 160]
            .iter()
            .map(|&n| discrete_divergence_max(&rad, &Mesh::new(1.0, 2.0, 1.0, 2.0, n, n).unwrap()))
            .collect();
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
        }
    }
}
