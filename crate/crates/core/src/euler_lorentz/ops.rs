//! Spatial operators of the plasma scheme: nodal density, cell momenta, ghost
//! cells and the local Lax-Friedrichs convective flux.

use crate::bfield::{AnisotropyField, ElectricField};
use crate::discrete_ops::{cell_gradient, nodes_to_cells};
use crate::field::{DualField, PrimalField};
use crate::mesh::Mesh;

use super::PlasmaState;

pub(crate) type V3 = [f64; 3];

#[inline]
pub(crate) fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn dot3(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn unit3(field: &AnisotropyField, x: f64, y: f64) -> V3 {
    let b = field.direction(x, y);
    [b[0], b[1], 0.0]
}

/// Component of `v` perpendicular to the unit vector `b`.
#[inline]
pub(crate) fn perp(v: V3, b: V3) -> V3 {
    let s = dot3(v, b);
    [v[0] - s * b[0], v[1] - s * b[1], v[2] - s * b[2]]
}

/// Solves `a m + B × m = r` for `a > 0`.
#[inline]
pub fn lorentz_solve(a: f64, bvec: V3, r: V3) -> V3 {
    let b2 = dot3(bvec, bvec);
    let bxr = cross(bvec, r);
    let br = dot3(bvec, r);
    let d = a * (a * a + b2);
    [
        (a * a * r[0] - a * bxr[0] + br * bvec[0]) / d,
        (a * a * r[1] - a * bxr[1] + br * bvec[1]) / d,
        (a * a * r[2] - a * bxr[2] + br * bvec[2]) / d,
    ]
}

/// Solves `a m + B × m = r` restricted to vectors perpendicular to `B`
/// (`r` is projected first). Well defined for `a ≥ 0` and `B ≠ 0`.
#[inline]
pub(crate) fn lorentz_solve_perp(a: f64, bvec: V3, r: V3) -> V3 {
    let b2 = dot3(bvec, bvec);
    let bhat = if b2 > 0.0 {
        let s = b2.sqrt();
        [bvec[0] / s, bvec[1] / s, bvec[2] / s]
    } else {
        [0.0; 3]
    };
    let rp = perp(r, bhat);
    let bxr = cross(bvec, rp);
    let d = a * a + b2;
    [
        (a * rp[0] - bxr[0]) / d,
        (a * rp[1] - bxr[1]) / d,
        (a * rp[2] - bxr[2]) / d,
    ]
}

/// Drift-limit perpendicular momentum `(1/|B|) b × (T∇n − nE)`, the balance
/// `T∇n = n E + m × B` solved for `m ⊥ B`.
#[inline]
pub fn drift_momentum(b: V3, bmag: f64, temperature: f64, n: f64, grad_n: [f64; 2], e: V3) -> V3 {
    let f = [
        temperature * grad_n[0] - n * e[0],
        temperature * grad_n[1] - n * e[1],
        -n * e[2],
    ];
    let c = cross(b, f);
    [c[0] / bmag, c[1] / bmag, c[2] / bmag]
}

/// Cell values derived from the nodal density.
pub(crate) struct CellDensity {
    pub n: PrimalField,
    pub gx: PrimalField,
    pub gy: PrimalField,
}

pub(crate) fn cell_density(n: &DualField, mesh: &Mesh) -> CellDensity {
    let [gx, gy] = cell_gradient(n, mesh);
    CellDensity {
        n: nodes_to_cells(n, mesh),
        gx,
        gy,
    }
}

/// Divergence of a cell vector field `(mx, my)` at node `(i, j)`, using the
/// four surrounding cells. `cell(ci, cj)` may be asked for indices one outside
/// the mesh when the node is on the boundary.
#[inline]
pub(crate) fn node_divergence(
    mesh: &Mesh,
    i: usize,
    j: usize,
    cell: impl Fn(isize, isize) -> [f64; 2],
) -> f64 {
    let (i, j) = (i as isize, j as isize);
    let ne = cell(i, j);
    let nw = cell(i - 1, j);
    let se = cell(i, j - 1);
    let sw = cell(i - 1, j - 1);
    (ne[0] + se[0] - nw[0] - sw[0]) / (2.0 * mesh.dx) + (ne[1] + nw[1] - se[1] - sw[1]) / (2.0 * mesh.dy)
}

/// Divergence at every node with cells outside the mesh taken as zero. At
/// interior nodes this is the conservative divergence of the scheme.
pub fn divergence_zero_ext(mesh: &Mesh, mx: &PrimalField, my: &PrimalField) -> DualField {
    let (nx, ny) = (mesh.nx as isize, mesh.ny as isize);
    let mut out = DualField::zeros(mesh);
    for k in 0..mesh.n_nodes() {
        let (i, j) = mesh.node_ij(k);
        out[k] = node_divergence(mesh, i, j, |ci, cj| {
            if ci < 0 || cj < 0 || ci >= nx || cj >= ny {
                [0.0, 0.0]
            } else {
                let c = mesh.cell_index(ci as usize, cj as usize);
                [mx[c], my[c]]
            }
        });
    }
    out
}

/// Fictitious cell outside the domain.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Ghost {
    pub n: f64,
    pub m: V3,
}

/// Shared context for ghost construction and the implicit updates.
pub(crate) struct Ctx<'a> {
    pub mesh: &'a Mesh,
    pub field: &'a AnisotropyField,
    pub efield: &'a ElectricField,
    pub temperature: f64,
}

impl Ctx<'_> {
    pub fn in_mesh(&self, ci: isize, cj: isize) -> bool {
        ci >= 0 && cj >= 0 && ci < self.mesh.nx as isize && cj < self.mesh.ny as isize
    }

    /// Ghost cell `(ci, cj)` outside the mesh: density averaged from the
    /// domain nodes it touches, perpendicular momentum from the drift balance
    /// with the density gradient of the adjacent cell, parallel momentum
    /// copied from the adjacent cell.
    pub fn ghost(
        &self,
        state: &PlasmaState,
        dens: &CellDensity,
        ci: isize,
        cj: isize,
        with_parallel: bool,
    ) -> Ghost {
        let mesh = self.mesh;
        let ai = ci.clamp(0, mesh.nx as isize - 1) as usize;
        let aj = cj.clamp(0, mesh.ny as isize - 1) as usize;
        let adj = mesh.cell_index(ai, aj);
        let mut sum = 0.0;
        let mut cnt = 0.0;
        for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let (ni, nj) = (ci + di, cj + dj);
            if ni >= 0 && nj >= 0 && ni <= mesh.nx as isize && nj <= mesh.ny as isize {
                sum += state.n.at(ni as usize, nj as usize);
                cnt += 1.0;
            }
        }
        let n = sum / cnt;
        let (x, y) = mesh.cell_center_signed(ci, cj);
        let b = unit3(self.field, x, y);
        let bmag = self.field.magnitude(x, y);
        let e = self.efield.at(x, y);
        let mut m = drift_momentum(
            b,
            bmag,
            self.temperature,
            n,
            [dens.gx[adj], dens.gy[adj]],
            e,
        );
        if with_parallel {
            let (ax, ay) = mesh.cell_center(ai, aj);
            let ba = unit3(self.field, ax, ay);
            let mpar = state.mx[adj] * ba[0] + state.my[adj] * ba[1];
            m[0] += mpar * b[0];
            m[1] += mpar * b[1];
        }
        Ghost { n, m }
    }
}

/// `∇·(m ⊗ u)` per momentum component with first-order local Lax-Friedrichs
/// face fluxes; faces on the boundary use ghost cells.
pub(crate) fn convective_divergence_impl(
    ctx: &Ctx<'_>,
    state: &PlasmaState,
    dens: &CellDensity,
) -> [PrimalField; 3] {
    let mesh = ctx.mesh;
    let (nx, ny) = (mesh.nx as isize, mesh.ny as isize);
    let value = |ci: isize, cj: isize| -> (f64, V3) {
        if ctx.in_mesh(ci, cj) {
            let c = mesh.cell_index(ci as usize, cj as usize);
            (dens.n[c], [state.mx[c], state.my[c], state.mz[c]])
        } else {
            let g = ctx.ghost(state, dens, ci, cj, true);
            (g.n, g.m)
        }
    };
    // flux through the face between L and R in direction `dir` (0 = x, 1 = y)
    let flux = |l: (f64, V3), r: (f64, V3), dir: usize| -> V3 {
        let ul = l.1[dir] / l.0;
        let ur = r.1[dir] / r.0;
        let s = ul.abs().max(ur.abs());
        let mut f = [0.0; 3];
        for k in 0..3 {
            f[k] = 0.5 * (l.1[k] * ul + r.1[k] * ur) - 0.5 * s * (r.1[k] - l.1[k]);
        }
        f
    };
    let mut out = [
        PrimalField::zeros(mesh),
        PrimalField::zeros(mesh),
        PrimalField::zeros(mesh),
    ];
    // x faces: between (i-1, j) and (i, j) for i = 0..=nx
    for j in 0..ny {
        let mut left = value(-1, j);
        for i in 0..=nx {
            let right = value(i, j);
            let f = flux(left, right, 0);
            for k in 0..3 {
                if i > 0 {
                    let c = mesh.cell_index((i - 1) as usize, j as usize);
                    out[k][c] += f[k] / mesh.dx;
                }
                if i < nx {
                    let c = mesh.cell_index(i as usize, j as usize);
                    out[k][c] -= f[k] / mesh.dx;
                }
            }
            left = right;
        }
    }
    for i in 0..nx {
        let mut below = value(i, -1);
        for j in 0..=ny {
            let above = value(i, j);
            let f = flux(below, above, 1);
            for k in 0..3 {
                if j > 0 {
                    let c = mesh.cell_index(i as usize, (j - 1) as usize);
                    out[k][c] += f[k] / mesh.dy;
                }
                if j < ny {
                    let c = mesh.cell_index(i as usize, j as usize);
                    out[k][c] -= f[k] / mesh.dy;
                }
            }
            below = above;
        }
    }
    out
}

/// Divergence of the perpendicular momentum at every node, with ghost cells
/// for the boundary nodes.
pub(crate) fn perp_divergence(
    ctx: &Ctx<'_>,
    state: &PlasmaState,
    dens: &CellDensity,
    mperp: &[PrimalField; 3],
) -> DualField {
    let mesh = ctx.mesh;
    let mut out = DualField::zeros(mesh);
    for k in 0..mesh.n_nodes() {
        let (i, j) = mesh.node_ij(k);
        out[k] = node_divergence(mesh, i, j, |ci, cj| {
            if ctx.in_mesh(ci, cj) {
                let c = mesh.cell_index(ci as usize, cj as usize);
                [mperp[0][c], mperp[1][c]]
            } else {
                let g = ctx.ghost(state, dens, ci, cj, false);
                [g.m[0], g.m[1]]
            }
        });
    }
    out
}
