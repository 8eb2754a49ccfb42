//! The discrete operators `(b·∇)_app : L_D → L_R` and `∇·(b ·)_app : L_R → L_D`.
//!
//! Both use four-point stencils with `b` sampled at primal cell centres. For the
//! primal cell with lower-left node `(i, j)` the gradient combines the four
//! corner nodes:
//!
//! ```text
//! (b·∇ψ)_c = b_c · ( (ψ_NE - ψ_NW + ψ_SE - ψ_SW) / 2Δx ,
//!                    (ψ_NE - ψ_SE + ψ_NW - ψ_SW) / 2Δy )
//! ```
//!
//! and the divergence at node `(i, j)` collects the four surrounding cells with
//! coefficients `±b_x/2Δx ± b_y/2Δy`. At boundary nodes the cells outside the
//! domain are dropped, which is the same as extending `Φ` by zero. With that
//! convention `∇·(b ·)_app = -((b·∇)_app)^T` exactly.

use std::io::Write;

use crate::bfield::AnisotropyField;
use crate::error::Result;
use crate::field::{DualField, PrimalField};
use crate::mesh::Mesh;

/// Sparse rows `output index -> [(input index, coefficient)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorStencil {
    pub n_inputs: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl OperatorStencil {
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.n_inputs);
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, w)| w * input[c]).sum())
            .collect()
    }

    pub fn max_width(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Write `row,col,coeff` triplets.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "coeff"])?;
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                w.write_record([r.to_string(), c.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Gradient coefficients of primal cell `(i, j)` on its four corner nodes.
#[inline]
pub(crate) fn grad_coeffs(
    field: &AnisotropyField,
    mesh: &Mesh,
    i: usize,
    j: usize,
) -> [((usize, usize), f64); 4] {
    let (x, y) = mesh.cell_center(i, j);
    let b = field.direction(x, y);
    let ax = b[0] / (2.0 * mesh.dx);
    let ay = b[1] / (2.0 * mesh.dy);
    [
        ((i + 1, j + 1), ax + ay),
        ((i, j + 1), -ax + ay),
        ((i + 1, j), ax - ay),
        ((i, j), -ax - ay),
    ]
}

/// Divergence coefficients with which primal cell `(i, j)` contributes to each
/// of its corner nodes, transcribed from the node-centred formula: seen from a
/// node, the cell is its north-east, north-west, south-east or south-west
/// neighbour.
#[inline]
pub(crate) fn div_coeffs(
    field: &AnisotropyField,
    mesh: &Mesh,
    i: usize,
    j: usize,
) -> [((usize, usize), f64); 4] {
    let (x, y) = mesh.cell_center(i, j);
    let b = field.direction(x, y);
    let ax = b[0] / (2.0 * mesh.dx);
    let ay = b[1] / (2.0 * mesh.dy);
    [
        // node (i, j): cell is its (i+1/2, j+1/2) neighbour
        ((i, j), ax + ay),
        // node (i, j+1): cell is its (i+1/2, j-1/2) neighbour
        ((i, j + 1), ax - ay),
        // node (i+1, j): cell is its (i-1/2, j+1/2) neighbour
        ((i + 1, j), -(ax - ay)),
        // node (i+1, j+1): cell is its (i-1/2, j-1/2) neighbour
        ((i + 1, j + 1), -(ax + ay)),
    ]
}

/// `(b·∇)_app ψ`.
pub fn b_grad_app(psi: &DualField, field: &AnisotropyField, mesh: &Mesh) -> Result<PrimalField> {
    psi.check(mesh)?;
    field.validate_on(mesh)?;
    let mut out = PrimalField::zeros(mesh);
    for k in 0..mesh.n_cells() {
        let (i, j) = mesh.cell_ij(k);
        out[k] = grad_coeffs(field, mesh, i, j)
            .iter()
            .map(|&((a, b), w)| w * psi.at(a, b))
            .sum();
    }
    Ok(out)
}

/// `∇·(b Φ)_app`, with zero extension of `Φ` outside the domain.
pub fn div_b_app(phi: &PrimalField, field: &AnisotropyField, mesh: &Mesh) -> Result<DualField> {
    phi.check(mesh)?;
    field.validate_on(mesh)?;
    let mut out = DualField::zeros(mesh);
    for k in 0..mesh.n_cells() {
        let (i, j) = mesh.cell_ij(k);
        let v = phi[k];
        for ((a, b), w) in div_coeffs(field, mesh, i, j) {
            out[mesh.node_index(a, b)] += w * v;
        }
    }
    Ok(out)
}

/// `(∇·(b⊗b ∇))_app = ∇·(· b)_app ∘ (b·∇)_app`.
pub fn second_order_app(
    psi: &DualField,
    field: &AnisotropyField,
    mesh: &Mesh,
) -> Result<DualField> {
    div_b_app(&b_grad_app(psi, field, mesh)?, field, mesh)
}

pub fn grad_stencil(field: &AnisotropyField, mesh: &Mesh) -> Result<OperatorStencil> {
    field.validate_on(mesh)?;
    let rows = (0..mesh.n_cells())
        .map(|k| {
            let (i, j) = mesh.cell_ij(k);
            grad_coeffs(field, mesh, i, j)
                .iter()
                .map(|&((a, b), w)| (mesh.node_index(a, b), w))
                .collect()
        })
        .collect();
    Ok(OperatorStencil {
        n_inputs: mesh.n_nodes(),
        rows,
    })
}

pub fn div_stencil(field: &AnisotropyField, mesh: &Mesh) -> Result<OperatorStencil> {
    field.validate_on(mesh)?;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(4); mesh.n_nodes()];
    for k in 0..mesh.n_cells() {
        let (i, j) = mesh.cell_ij(k);
        for ((a, b), w) in div_coeffs(field, mesh, i, j) {
            rows[mesh.node_index(a, b)].push((k, w));
        }
    }
    Ok(OperatorStencil {
        n_inputs: mesh.n_cells(),
        rows,
    })
}

/// Plain cell-centred gradient of a nodal field, the `b`-free version of
/// [`b_grad_app`]: returns `(∂x, ∂y)` per primal cell.
pub fn cell_gradient(psi: &DualField, mesh: &Mesh) -> [PrimalField; 2] {
    let mut gx = PrimalField::zeros(mesh);
    let mut gy = PrimalField::zeros(mesh);
    for k in 0..mesh.n_cells() {
        let (i, j) = mesh.cell_ij(k);
        let ne = psi.at(i + 1, j + 1);
        let nw = psi.at(i, j + 1);
        let se = psi.at(i + 1, j);
        let sw = psi.at(i, j);
        gx[k] = (ne - nw + se - sw) / (2.0 * mesh.dx);
        gy[k] = (ne - se + nw - sw) / (2.0 * mesh.dy);
    }
    [gx, gy]
}

/// Four-point average of a nodal field onto the primal cells.
pub fn nodes_to_cells(psi: &DualField, mesh: &Mesh) -> PrimalField {
    let mut out = PrimalField::zeros(mesh);
    for k in 0..mesh.n_cells() {
        let (i, j) = mesh.cell_ij(k);
        out[k] = 0.25 * (psi.at(i, j) + psi.at(i + 1, j) + psi.at(i, j + 1) + psi.at(i + 1, j + 1));
    }
    out
}
