use super::{Boundary, GridSpec, ScalarField, VectorField};
use crate::par;

/// Writes face-centred two-point differences of the cell field `f`.
/// Wall faces get a zero normal derivative.
pub(crate) fn grad_into(g: &GridSpec, f: &[f64], u: &mut [f64], w: &mut [f64]) {
    let (nx, nux) = (g.nx, g.nux());
    let (ihx, ihy) = (1.0 / g.hx, 1.0 / g.hy);
    par::for_each_row(u, nux, |j, row| {
        let fr = &f[j * nx..(j + 1) * nx];
        for (i, out) in row.iter_mut().enumerate() {
            *out = if g.u_is_boundary(i) { 0.0 } else { (fr[i % nx] - fr[g.left_of_u(i)]) * ihx };
        }
    });
    par::for_each_row(w, nx, |j, row| {
        if g.w_is_boundary(j) {
            row.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        let jb = g.below_w(j);
        let jc = j % g.ny;
        for (i, out) in row.iter_mut().enumerate() {
            *out = (f[jc * nx + i] - f[jb * nx + i]) * ihy;
        }
    });
}

/// Writes the cell-centred flux difference of the face field `(u, w)`.
pub(crate) fn div_into(g: &GridSpec, u: &[f64], w: &[f64], out: &mut [f64]) {
    let (nx, nux) = (g.nx, g.nux());
    let (ihx, ihy) = (1.0 / g.hx, 1.0 / g.hy);
    par::for_each_row(out, nx, |j, row| {
        let ur = &u[j * nux..(j + 1) * nux];
        let jt = g.top_face(j);
        for (i, out) in row.iter_mut().enumerate() {
            *out = (ur[g.right_face(i)] - ur[i]) * ihx + (w[jt * nx + i] - w[j * nx + i]) * ihy;
        }
    });
}

/// `out = div(c ∘ grad x)` in one pass. `None` coefficients mean unity.
pub(crate) fn apply_face_laplacian(
    g: &GridSpec,
    coeff: Option<(&[f64], &[f64])>,
    x: &[f64],
    out: &mut [f64],
) {
    let (nx, ny, nux) = (g.nx, g.ny, g.nux());
    let (ihx2, ihy2) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
    let wall_x = g.bc_x == Boundary::Wall;
    let wall_y = g.bc_y == Boundary::Wall;
    par::for_each_row(out, nx, |j, row| {
        let xr = &x[j * nx..(j + 1) * nx];
        let has_s = !(wall_y && j == 0);
        let has_n = !(wall_y && j + 1 == ny);
        let js = g.below_w(j);
        let jn = (j + 1) % ny;
        let jt = g.top_face(j);
        for (i, out) in row.iter_mut().enumerate() {
            let xc = xr[i];
            let (ce, cwest, cs, cn) = match coeff {
                Some((cu, cw)) => (
                    cu[j * nux + g.right_face(i)],
                    cu[j * nux + i],
                    cw[j * nx + i],
                    cw[jt * nx + i],
                ),
                None => (1.0, 1.0, 1.0, 1.0),
            };
            let mut acc = 0.0;
            if !(wall_x && i + 1 == nx) {
                acc += ce * (xr[(i + 1) % nx] - xc) * ihx2;
            }
            if !(wall_x && i == 0) {
                acc -= cwest * (xc - xr[g.left_of_u(i)]) * ihx2;
            }
            if has_n {
                acc += cn * (x[jn * nx + i] - xc) * ihy2;
            }
            if has_s {
                acc -= cs * (xc - x[js * nx + i]) * ihy2;
            }
            *out = acc;
        }
    });
}

pub fn grad_cc(f: &ScalarField) -> VectorField {
    let mut v = VectorField::zeros(f.grid);
    grad_into(&f.grid, &f.values, &mut v.u, &mut v.w);
    v
}

pub fn div_face(v: &VectorField) -> ScalarField {
    let mut out = ScalarField::zeros(v.grid);
    div_into(&v.grid, &v.u, &v.w, &mut out.values);
    out
}

/// `div ∘ grad`, sharing the stencil used by the Poisson solver.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(f.grid);
    apply_face_laplacian(&f.grid, None, &f.values, &mut out.values);
    out
}

/// Arithmetic face average of a cell field. Wall faces copy the adjacent
/// cell (mirror extension).
pub fn cell_to_faces(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let (nx, nux) = (g.nx, g.nux());
    let mut v = VectorField::zeros(g);
    let vals = &f.values;
    par::for_each_row(&mut v.u, nux, |j, row| {
        let fr = &vals[j * nx..(j + 1) * nx];
        for (i, out) in row.iter_mut().enumerate() {
            *out = match (g.bc_x, i) {
                (Boundary::Wall, 0) => fr[0],
                (Boundary::Wall, i) if i == nx => fr[nx - 1],
                _ => 0.5 * (fr[i] + fr[g.left_of_u(i)]),
            };
        }
    });
    par::for_each_row(&mut v.w, nx, |j, row| {
        let (ja, jb) = match (g.bc_y, j) {
            (Boundary::Wall, 0) => (0, 0),
            (Boundary::Wall, j) if j == g.ny => (g.ny - 1, g.ny - 1),
            _ => (j, g.below_w(j)),
        };
        for (i, out) in row.iter_mut().enumerate() {
            *out = 0.5 * (vals[ja * nx + i] + vals[jb * nx + i]);
        }
    });
    v
}

/// `|∇f|²` at cell centres: squares of the two bounding x-face differences
/// averaged, plus the same for y. Wall faces contribute their zero normal
/// derivative (mirrored variant).
pub fn grad_sq_cc(grad: &VectorField) -> ScalarField {
    let g = grad.grid;
    let (nx, nux) = (g.nx, g.nux());
    let mut out = ScalarField::zeros(g);
    par::for_each_row(&mut out.values, nx, |j, row| {
        let jt = g.top_face(j);
        for (i, out) in row.iter_mut().enumerate() {
            let ul = grad.u[j * nux + i];
            let ur = grad.u[j * nux + g.right_face(i)];
            let wb = grad.w[j * nx + i];
            let wt = grad.w[jt * nx + i];
            *out = 0.5 * (ul * ul + ur * ur) + 0.5 * (wb * wb + wt * wt);
        }
    });
    out
}

/// All four velocity derivatives: diagonal ones at cell centres, off-diagonal
/// ones at corner nodes (tangential no-slip ghosts on walls).
#[derive(Clone, Debug)]
pub struct VelocityGradient {
    pub grid: GridSpec,
    pub dudx: Vec<f64>,
    pub dwdy: Vec<f64>,
    pub dudy: Vec<f64>,
    pub dwdx: Vec<f64>,
}

pub fn velocity_gradient(v: &VectorField) -> VelocityGradient {
    let g = v.grid;
    let (nx, ny, nux) = (g.nx, g.ny, g.nux());
    let (ihx, ihy) = (1.0 / g.hx, 1.0 / g.hy);
    let mut dudx = vec![0.0; g.cells()];
    let mut dwdy = vec![0.0; g.cells()];
    par::for_each_row2(&mut dudx, &mut dwdy, nx, |j, rx, ry| {
        let jt = g.top_face(j);
        for i in 0..nx {
            rx[i] = (v.u[j * nux + g.right_face(i)] - v.u[j * nux + i]) * ihx;
            ry[i] = (v.w[jt * nx + i] - v.w[j * nx + i]) * ihy;
        }
    });
    let (nnx, nny) = (g.nodes_x(), g.nodes_y());
    let u_at = |i: usize, j: isize| -> f64 {
        // u row j, with periodic wrap or odd reflection across a y-wall.
        match g.bc_y {
            Boundary::Periodic => v.u[(j.rem_euclid(ny as isize) as usize) * nux + i],
            Boundary::Wall => {
                if j < 0 {
                    -v.u[i]
                } else if j as usize >= ny {
                    -v.u[(ny - 1) * nux + i]
                } else {
                    v.u[j as usize * nux + i]
                }
            }
        }
    };
    let w_at = |i: isize, j: usize| -> f64 {
        match g.bc_x {
            Boundary::Periodic => v.w[j * nx + i.rem_euclid(nx as isize) as usize],
            Boundary::Wall => {
                if i < 0 {
                    -v.w[j * nx]
                } else if i as usize >= nx {
                    -v.w[j * nx + nx - 1]
                } else {
                    v.w[j * nx + i as usize]
                }
            }
        }
    };
    let mut dudy = vec![0.0; nnx * nny];
    let mut dwdx = vec![0.0; nnx * nny];
    par::for_each_row2(&mut dudy, &mut dwdx, nnx, |j, ry, rx| {
        for i in 0..nnx {
            ry[i] = (u_at(i, j as isize) - u_at(i, j as isize - 1)) * ihy;
            rx[i] = (w_at(i as isize, j) - w_at(i as isize - 1, j)) * ihx;
        }
    });
    VelocityGradient { grid: g, dudx, dwdy, dudy, dwdx }
}

impl VelocityGradient {
    /// `‖∇v‖²_{L²}` with corner quadrature weights.
    pub fn l2_sq(&self) -> f64 {
        let g = &self.grid;
        let diag: f64 = self.dudx.iter().zip(&self.dwdy).map(|(a, b)| a * a + b * b).sum();
        diag * g.cell_area() + self.node_sum(|a, b| a * a + b * b) * g.cell_area()
    }

    /// `‖𝔻v‖²_{L²}`, `𝔻v = (∇v + ∇vᵀ)/2`.
    pub fn sym_l2_sq(&self) -> f64 {
        let g = &self.grid;
        let diag: f64 = self.dudx.iter().zip(&self.dwdy).map(|(a, b)| a * a + b * b).sum();
        diag * g.cell_area() + self.node_sum(|a, b| 0.5 * (a + b) * (a + b)) * g.cell_area()
    }

    fn node_sum(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let g = &self.grid;
        let nnx = g.nodes_x();
        let mut s = 0.0;
        for j in 0..g.nodes_y() {
            for i in 0..nnx {
                let k = j * nnx + i;
                s += g.node_weight(i, j) * f(self.dudy[k], self.dwdx[k]);
            }
        }
        s
    }

    /// Average of a node quantity over the four corners of each cell.
    pub fn corners_to_cells(&self, node_vals: &[f64]) -> ScalarField {
        let g = self.grid;
        let nnx = g.nodes_x();
        let mut out = ScalarField::zeros(g);
        for j in 0..g.ny {
            let jt = g.top_face(j);
            for i in 0..g.nx {
                let ir = g.right_face(i);
                out.values[j * g.nx + i] = 0.25
                    * (node_vals[j * nnx + i]
                        + node_vals[j * nnx + ir]
                        + node_vals[jt * nnx + i]
                        + node_vals[jt * nnx + ir]);
            }
        }
        out
    }

    /// Pointwise `|∇v|²` at cell centres (corner terms averaged).
    pub fn magnitude_sq_cc(&self) -> ScalarField {
        let node: Vec<f64> = self.dudy.iter().zip(&self.dwdx).map(|(a, b)| a * a + b * b).collect();
        let mut out = self.corners_to_cells(&node);
        for (k, o) in out.values.iter_mut().enumerate() {
            *o += self.dudx[k] * self.dudx[k] + self.dwdy[k] * self.dwdy[k];
        }
        out
    }
}
