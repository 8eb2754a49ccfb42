//! Primal rectangle mesh and dual node mesh on a rectangular domain.
//!
//! Primal cells are indexed by `(i, j)` with `0 <= i < nx`, `0 <= j < ny`; cell
//! `(i, j)` covers `]x_i, x_{i+1}[ × ]y_j, y_{j+1}[`. Dual nodes are indexed by
//! `(i, j)` with `0 <= i <= nx`, `0 <= j <= ny` and sit at `(x_i, y_j)`. Both
//! index spaces are flattened row-major over `(i, j)`.

use serde::{Deserialize, Serialize};

use crate::bfield::AnisotropyField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

/// Which side of the rectangle a boundary node lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Sign of `b·ν` at a boundary node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowKind {
    Inflow,
    Outflow,
    Tangent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryNode {
    pub node: usize,
    pub i: usize,
    pub j: usize,
    /// Outward unit normal (renormalised average at corners).
    pub normal: [f64; 2],
    pub b_dot_normal: f64,
    pub kind: FlowKind,
}

/// Classification of every boundary dual node, in increasing node order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryClass {
    pub tolerance: f64,
    pub nodes: Vec<BoundaryNode>,
}

impl BoundaryClass {
    pub fn kind_of(&self, node: usize) -> Option<FlowKind> {
        self.nodes
            .binary_search_by_key(&node, |n| n.node)
            .ok()
            .map(|k| self.nodes[k].kind)
    }

    pub fn count(&self, kind: FlowKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }
}

impl Mesh {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) {
            return Err(Error::invalid("domain bounds must be finite"));
        }
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::invalid(format!(
                "non-positive domain extent [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("cell counts must be positive"));
        }
        Ok(Self {
            x0,
            x1,
            y0,
            y1,
            nx,
            ny,
            dx: (x1 - x0) / nx as f64,
            dy: (y1 - y0) / ny as f64,
        })
    }

    /// The unit square `[0,1]²` with `n × n` cells.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(0.0, 1.0, 0.0, 1.0, n, n)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        i * self.ny + j
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        i * (self.ny + 1) + j
    }

    #[inline]
    pub fn cell_ij(&self, k: usize) -> (usize, usize) {
        (k / self.ny, k % self.ny)
    }

    #[inline]
    pub fn node_ij(&self, k: usize) -> (usize, usize) {
        (k / (self.ny + 1), k % (self.ny + 1))
    }

    #[inline]
    pub fn node_x(&self, i: usize) -> f64 {
        if i == self.nx {
            self.x1
        } else {
            self.x0 + i as f64 * self.dx
        }
    }

    #[inline]
    pub fn node_y(&self, j: usize) -> f64 {
        if j == self.ny {
            self.y1
        } else {
            self.y0 + j as f64 * self.dy
        }
    }

    /// Cell centre `(x_{i+1/2}, y_{j+1/2})`.
    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.dx,
            self.y0 + (j as f64 + 0.5) * self.dy,
        )
    }

    /// Centre of a cell given with signed indices, for ghost cells outside the domain.
    #[inline]
    pub fn cell_center_signed(&self, i: isize, j: isize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.dx,
            self.y0 + (j as f64 + 0.5) * self.dy,
        )
    }

    #[inline]
    pub fn node_point(&self, i: usize, j: usize) -> (f64, f64) {
        (self.node_x(i), self.node_y(j))
    }

    #[inline]
    pub fn is_boundary_node(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&k| {
                let (i, j) = self.node_ij(k);
                self.is_boundary_node(i, j)
            })
            .collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&k| {
                let (i, j) = self.node_ij(k);
                !self.is_boundary_node(i, j)
            })
            .collect()
    }

    /// Primal cells adjacent to node `(i, j)`, clipped at the boundary.
    pub fn cells_around_node(&self, i: usize, j: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(4);
        for ci in [i.wrapping_sub(1), i] {
            for cj in [j.wrapping_sub(1), j] {
                if ci < self.nx && cj < self.ny {
                    out.push((ci, cj));
                }
            }
        }
        out
    }

    /// The four corner nodes of cell `(i, j)`.
    #[inline]
    pub fn nodes_of_cell(&self, i: usize, j: usize) -> [(usize, usize); 4] {
        [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)]
    }

    /// Sides a boundary node belongs to (two at corners, empty for interior nodes).
    pub fn sides_of_node(&self, i: usize, j: usize) -> Vec<Side> {
        let mut sides = Vec::with_capacity(2);
        if i == 0 {
            sides.push(Side::Left);
        }
        if i == self.nx {
            sides.push(Side::Right);
        }
        if j == 0 {
            sides.push(Side::Bottom);
        }
        if j == self.ny {
            sides.push(Side::Top);
        }
        sides
    }

    /// Outward unit normal at a boundary node; corners use the renormalised
    /// average of the two adjacent side normals.
    pub fn outward_normal(&self, i: usize, j: usize) -> Option<[f64; 2]> {
        let sides = self.sides_of_node(i, j);
        if sides.is_empty() {
            return None;
        }
        let mut n = [0.0f64, 0.0];
        for s in &sides {
            let v = match s {
                Side::Left => [-1.0, 0.0],
                Side::Right => [1.0, 0.0],
                Side::Bottom => [0.0, -1.0],
                Side::Top => [0.0, 1.0],
            };
            n[0] += v[0];
            n[1] += v[1];
        }
        let len = (n[0] * n[0] + n[1] * n[1]).sqrt();
        Some([n[0] / len, n[1] / len])
    }

    /// Classify every boundary node by the sign of `b·ν` with tolerance `tol`.
    pub fn classify_boundary(&self, field: &AnisotropyField, tol: f64) -> Result<BoundaryClass> {
        if !(tol >= 0.0) {
            return Err(Error::invalid("classification tolerance must be >= 0"));
        }
        let mut nodes = Vec::with_capacity(2 * (self.nx + self.ny));
        for k in 0..self.n_nodes() {
            let (i, j) = self.node_ij(k);
            let Some(normal) = self.outward_normal(i, j) else {
                continue;
            };
            let (x, y) = self.node_point(i, j);
            let b = field.try_direction(x, y)?;
            let bn = b[0] * normal[0] + b[1] * normal[1];
            let kind = if bn > tol {
                FlowKind::Outflow
            } else if bn < -tol {
                FlowKind::Inflow
            } else {
                FlowKind::Tangent
            };
            nodes.push(BoundaryNode {
                node: k,
                i,
                j,
                normal,
                b_dot_normal: bn,
                kind,
            });
        }
        Ok(BoundaryClass {
            tolerance: tol,
            nodes,
        })
    }
}

/// Default tolerance for `b·ν` classification.
pub const DEFAULT_CLASSIFY_TOL: f64 = 1e-12;

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn counts_and_spacing() {
        let m = Mesh::new(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap();
        assert_eq!(m.dx, 0.5);
        assert_eq!(m.dy, 0.5);
        assert_eq!(m.n_cells(), 4);
        assert_eq!(m.n_nodes(), 9);

        let m = Mesh::new(1.0, 2.0, 1.0, 2.0, 40, 40).unwrap();
        assert!((m.dx - 1.0 / 40.0).abs() < 1e-16);
        let m = Mesh::unit_square(60).unwrap();
        assert!((m.dy - 1.0 / 60.0).abs() < 1e-16);
    }

    #[test]
    fn rejects_degenerate_domains() {
        assert!(matches!(
            Mesh::new(0.0, 0.0, 0.0, 1.0, 2, 2),
            Err(Error::InvalidArgument(_))
        ));
        assert!(Mesh::new(0.0, 1.0, 1.0, 0.5, 2, 2).is_err());
        assert!(Mesh::new(0.0, 1.0, 0.0, 1.0, 0, 2).is_err());
    }

    #[test]
    fn coordinates_and_indexing() {
        let m = Mesh::new(1.0, 2.0, -1.0, 1.0, 4, 8).unwrap();
        assert_eq!(m.node_x(4), 2.0);
        assert_eq!(m.node_y(0), -1.0);
        let (cx, cy) = m.cell_center(0, 0);
        assert!((cx - 1.125).abs() < 1e-15 && (cy + 0.875).abs() < 1e-15);
        for k in 0..m.n_cells() {
            let (i, j) = m.cell_ij(k);
            assert_eq!(m.cell_index(i, j), k);
        }
        for k in 0..m.n_nodes() {
            let (i, j) = m.node_ij(k);
            assert_eq!(m.node_index(i, j), k);
        }
        assert_eq!(
            m.boundary_nodes().len() + m.interior_nodes().len(),
            m.n_nodes()
        );
        assert_eq!(m.boundary_nodes().len(), 2 * (4 + 8));
    }

    #[test]
    fn node_cell_adjacency() {
        let m = Mesh::unit_square(3).unwrap();
        assert_eq!(m.cells_around_node(1, 1).len(), 4);
        assert_eq!(m.cells_around_node(0, 1).len(), 2);
        assert_eq!(m.cells_around_node(3, 3), vec![(2, 2)]);
    }

    #[test]
    fn refinement_nests_cells() {
        let coarse = Mesh::unit_square(5).unwrap();
        let fine = Mesh::unit_square(10).unwrap();
        for i in 0..=coarse.nx {
            assert!((coarse.node_x(i) - fine.node_x(2 * i)).abs() < 1e-15);
        }
    }

    #[test]
    fn classification_signs() {
        let m = Mesh::unit_square(4).unwrap();
        // b = (0, 1): bottom edge is inflow
        let up = AnisotropyField::oblique(0.0, 1.0).unwrap();
        let c = m.classify_boundary(&up, DEFAULT_CLASSIFY_TOL).unwrap();
        for n in c.nodes.iter().filter(|n| n.j == 0) {
            assert_eq!(n.kind, FlowKind::Inflow);
        }
        // b = (1, 0): top and bottom (non-corner) are tangent
        let right = AnisotropyField::oblique(PI / 2.0, 1.0).unwrap();
        let c = m.classify_boundary(&right, DEFAULT_CLASSIFY_TOL).unwrap();
        for n in c
            .nodes
            .iter()
            .filter(|n| (n.j == 0 || n.j == m.ny) && n.i > 0 && n.i < m.nx)
        {
            assert_eq!(n.kind, FlowKind::Tangent);
        }
        // oblique pi/3: right edge is outflow since b·ν = sin(pi/3) > 0
        let ob = AnisotropyField::oblique(PI / 3.0, 1.0).unwrap();
        let c = m.classify_boundary(&ob, DEFAULT_CLASSIFY_TOL).unwrap();
        for n in c.nodes.iter().filter(|n| n.i == m.nx) {
            assert_eq!(n.kind, FlowKind::Outflow);
        }
        assert_eq!(c.nodes.len(), m.boundary_nodes().len());
        assert_eq!(
            c.count(FlowKind::Inflow) + c.count(FlowKind::Outflow) + c.count(FlowKind::Tangent),
            c.nodes.len()
        );
    }

    #[test]
    fn corner_normal_is_renormalised() {
        let m = Mesh::unit_square(2).unwrap();
        let n = m.outward_normal(2, 2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((n[0] - s).abs() < 1e-15 && (n[1] - s).abs() < 1e-15);
        assert!(m.outward_normal(1, 1).is_none());
    }
}
