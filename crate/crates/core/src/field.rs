//! Piecewise-constant fields on the primal cells (`PrimalField`) and on the dual
//! nodes (`DualField`).

use crate::error::{Error, Result};
use crate::mesh::Mesh;

macro_rules! mesh_field {
    ($name:ident, $len:ident, $what:literal) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            nx: usize,
            ny: usize,
            values: Vec<f64>,
        }

        impl $name {
            pub fn zeros(mesh: &Mesh) -> Self {
                Self {
                    nx: mesh.nx,
                    ny: mesh.ny,
                    values: vec![0.0; mesh.$len()],
                }
            }

            pub fn constant(mesh: &Mesh, c: f64) -> Self {
                Self {
                    nx: mesh.nx,
                    ny: mesh.ny,
                    values: vec![c; mesh.$len()],
                }
            }

            pub fn from_vec(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
                if values.len() != mesh.$len() {
                    return Err(Error::invalid(format!(
                        concat!($what, " field needs {} values, got {}"),
                        mesh.$len(),
                        values.len()
                    )));
                }
                Ok(Self {
                    nx: mesh.nx,
                    ny: mesh.ny,
                    values,
                })
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.values
            }

            /// Whether this field was built for (a mesh with the same shape as) `mesh`.
            pub fn fits(&self, mesh: &Mesh) -> bool {
                self.nx == mesh.nx && self.ny == mesh.ny && self.values.len() == mesh.$len()
            }

            pub fn check(&self, mesh: &Mesh) -> Result<()> {
                if self.fits(mesh) {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        concat!($what, " field of shape {}x{} does not match mesh {}x{}"),
                        self.nx, self.ny, mesh.nx, mesh.ny
                    )))
                }
            }

            pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
                Self {
                    nx: self.nx,
                    ny: self.ny,
                    values: self.values.iter().map(|&v| f(v)).collect(),
                }
            }

            pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
                assert_eq!(self.values.len(), other.values.len(), "field size mismatch");
                Self {
                    nx: self.nx,
                    ny: self.ny,
                    values: self
                        .values
                        .iter()
                        .zip(&other.values)
                        .map(|(&a, &b)| f(a, b))
                        .collect(),
                }
            }

            pub fn add(&self, other: &Self) -> Self {
                self.zip_map(other, |a, b| a + b)
            }

            pub fn sub(&self, other: &Self) -> Self {
                self.zip_map(other, |a, b| a - b)
            }

            pub fn scale(&self, s: f64) -> Self {
                self.map(|v| s * v)
            }

            /// `self + s * other`
            pub fn axpy(&self, s: f64, other: &Self) -> Self {
                self.zip_map(other, |a, b| a + s * b)
            }

            pub fn max_abs(&self) -> f64 {
                self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }

            pub fn dot(&self, other: &Self) -> f64 {
                self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
            }

            pub fn norm2(&self) -> f64 {
                self.dot(self).sqrt()
            }

            pub fn all_finite(&self) -> bool {
                self.values.iter().all(|v| v.is_finite())
            }
        }

        impl std::ops::Index<usize> for $name {
            type Output = f64;
            fn index(&self, k: usize) -> &f64 {
                &self.values[k]
            }
        }

        impl std::ops::IndexMut<usize> for $name {
            fn index_mut(&mut self, k: usize) -> &mut f64 {
                &mut self.values[k]
            }
        }
    };
}

mesh_field!(PrimalField, n_cells, "primal");
mesh_field!(DualField, n_nodes, "dual");

impl PrimalField {
    /// Sample `f` at every cell centre.
    pub fn from_fn(mesh: &Mesh, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..mesh.n_cells())
            .map(|k| {
                let (i, j) = mesh.cell_ij(k);
                let (x, y) = mesh.cell_center(i, j);
                f(x, y)
            })
            .collect();
        Self {
            nx: mesh.nx,
            ny: mesh.ny,
            values,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ny + j]
    }
}

impl DualField {
    /// Sample `f` at every dual node.
    pub fn from_fn(mesh: &Mesh, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..mesh.n_nodes())
            .map(|k| {
                let (i, j) = mesh.node_ij(k);
                let (x, y) = mesh.node_point(i, j);
                f(x, y)
            })
            .collect();
        Self {
            nx: mesh.nx,
            ny: mesh.ny,
            values,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.ny + 1) + j]
    }

    /// Copy with every boundary node set to zero.
    pub fn zero_boundary(&self, mesh: &Mesh) -> Self {
        let mut out = self.clone();
        for k in mesh.boundary_nodes() {
            out.values[k] = 0.0;
        }
        out
    }

    /// Max-norm over interior nodes only.
    pub fn max_abs_interior(&self, mesh: &Mesh) -> f64 {
        mesh.interior_nodes()
            .into_iter()
            .fold(0.0, |m, k| m.max(self.values[k].abs()))
    }
}
