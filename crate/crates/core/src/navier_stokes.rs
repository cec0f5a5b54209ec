//! Variable-density momentum predictor and pressure projection.
//!
//! Momentum lives on the velocity faces. Each face control volume carries the
//! face density `ρ_f` (arithmetic mean of the two adjacent cells) and is
//! advected by the mass flux `M = ρⁿ_f vⁿ + J`, interpolated to cell centres
//! and corner nodes by averaging. Because the Cahn–Hilliard update is
//! conservative and `ρ` is affine in `φ`, the face densities satisfy the
//! discrete continuity equation `ρ^{n+1}_f − ρⁿ_f + dt div(M) = 0` exactly.
//!
//! The viscous operator is the adjoint form of the discrete dissipation
//! `Σ_c 2ν(D₁₁² + D₂₂²) + Σ_nodes 4ν D₁₂²`, so the implicit solve is SPD and
//! `⟨−div(2ν𝔻v), v⟩` equals the reported viscous dissipation.
//!
//! The capillary force is written as `−φ_f ∇μ`, which differs from `μ∇φ` by
//! a gradient and therefore only shifts the modified pressure. It vanishes
//! identically when `μ` is constant.

use crate::cahn_hilliard::{cfl_advisory, check_solenoidal};
use crate::coupled_solver::State;
use crate::error::{AggError, Result};
use crate::grid_ops::{
    cell_to_faces, div_face, grad_cc, solve_poisson, velocity_gradient, Boundary, Coefficient, FastDiag, GridSpec,
    PoissonOptions, ScalarField, VectorField,
};
use crate::linalg::pcg;
use crate::materials::PhysicalParams;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NsSolveParams {
    /// Relative tolerance of the implicit viscous solve.
    pub visc_tol: f64,
    pub visc_max: usize,
    pub poisson: PoissonOptions,
    pub div_tol: f64,
    /// Include the density-mismatch flux `J` in the momentum transport.
    pub flux_j: bool,
}

impl Default for NsSolveParams {
    fn default() -> Self {
        Self { visc_tol: 1e-10, visc_max: 5000, poisson: PoissonOptions::default(), div_tol: 1e-9, flux_j: true }
    }
}

/// `J = −(ρ₁ − ρ₂)/2 · b(φ)_f ∇μ` on faces.
pub fn flux_j(phi: &ScalarField, mu: &ScalarField, p: &PhysicalParams) -> VectorField {
    let mut j = grad_cc(mu);
    let mut b = cell_to_faces(&phi.map(|s| p.b_of(s)));
    b.scale(-p.drho());
    j.mul_faces(&b);
    j
}

/// Face densities `ρ(φ)_f`.
pub fn face_density(phi: &ScalarField, p: &PhysicalParams) -> VectorField {
    cell_to_faces(&phi.map(|s| p.rho_of(s)))
}

/// Capillary force `−φ_f ∇μ` on faces (zero on wall faces).
pub fn capillary_force(phi: &ScalarField, mu: &ScalarField) -> VectorField {
    let mut f = grad_cc(mu);
    let mut pf = cell_to_faces(phi);
    pf.scale(-1.0);
    f.mul_faces(&pf);
    f
}

/// Viscosity sampled at cell centres and at corner nodes (mean of the
/// adjacent cells inside the domain).
#[derive(Clone, Debug, PartialEq)]
pub struct Viscosity {
    pub grid: GridSpec,
    pub cell: Vec<f64>,
    pub node: Vec<f64>,
}

impl Viscosity {
    pub fn from_phi(phi: &ScalarField, p: &PhysicalParams) -> Self {
        Self::from_cells(&phi.map(|s| p.nu_of(s)))
    }

    pub fn constant(grid: GridSpec, nu: f64) -> Self {
        Self::from_cells(&ScalarField::constant(grid, nu))
    }

    pub fn from_cells(nu: &ScalarField) -> Self {
        let g = nu.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (nnx, nny) = (g.nodes_x(), g.nodes_y());
        let mut node = vec![0.0; nnx * nny];
        for j in 0..nny {
            for i in 0..nnx {
                let xs = adjacent(i, nx, g.bc_x);
                let ys = adjacent(j, ny, g.bc_y);
                let (mut s, mut c) = (0.0, 0.0);
                for &jj in ys.iter().flatten() {
                    for &ii in xs.iter().flatten() {
                        s += nu.values[jj * nx + ii];
                        c += 1.0;
                    }
                }
                node[j * nnx + i] = s / c;
            }
        }
        Self { grid: g, cell: nu.values.clone(), node }
    }
}

/// Cells on either side of node line `k`.
fn adjacent(k: usize, n: usize, bc: Boundary) -> [Option<usize>; 2] {
    match bc {
        Boundary::Periodic => [Some((k + n - 1) % n), Some(k % n)],
        Boundary::Wall => [k.checked_sub(1), (k < n).then_some(k)],
    }
}

/// Discrete viscous dissipation `2∫ν|𝔻v|²`.
pub fn viscous_dissipation(v: &VectorField, nu: &Viscosity) -> f64 {
    let g = v.grid;
    let vg = velocity_gradient(v);
    let cells: f64 = (0..g.cells())
        .map(|k| 2.0 * nu.cell[k] * (vg.dudx[k] * vg.dudx[k] + vg.dwdy[k] * vg.dwdy[k]))
        .sum();
    let nnx = g.nodes_x();
    let mut nodes = 0.0;
    for j in 0..g.nodes_y() {
        for i in 0..nnx {
            let k = j * nnx + i;
            let d12 = 0.5 * (vg.dudy[k] + vg.dwdx[k]);
            nodes += g.node_weight(i, j) * 4.0 * nu.node[k] * d12 * d12;
        }
    }
    (cells + nodes) * g.cell_area()
}

/// Pointwise `|𝔻v|²` at cell centres: diagonal entries at the centre plus
/// twice the corner average of `D₁₂²`.
pub fn sym_grad_sq(v: &VectorField) -> ScalarField {
    let vg = velocity_gradient(v);
    let d12sq: Vec<f64> = vg.dudy.iter().zip(&vg.dwdx).map(|(a, b)| 0.25 * (a + b) * (a + b)).collect();
    let mut out = vg.corners_to_cells(&d12sq);
    for (k, o) in out.values.iter_mut().enumerate() {
        *o = vg.dudx[k] * vg.dudx[k] + vg.dwdy[k] * vg.dwdy[k] + 2.0 * *o;
    }
    out
}

/// `−div(2ν𝔻v)` on faces, zero on boundary faces.
pub fn viscous_operator(v: &VectorField, nu: &Viscosity) -> VectorField {
    let g = v.grid;
    let mut out = VectorField::zeros(g);
    viscous_apply(&g, nu, &v.u, &v.w, &mut out.u, &mut out.w);
    out
}

/// `−div(2ν𝔻v)` as the adjoint of the dissipation form, written into `out`
/// (boundary faces zero).
pub(crate) fn viscous_apply(g: &GridSpec, nu: &Viscosity, u: &[f64], w: &[f64], out_u: &mut [f64], out_w: &mut [f64]) {
    let (nx, ny, nux) = (g.nx, g.ny, g.nux());
    let nnx = g.nodes_x();
    let (ihx, ihy) = (1.0 / g.hx, 1.0 / g.hy);
    let wall_x = g.bc_x == Boundary::Wall;
    let wall_y = g.bc_y == Boundary::Wall;
    let v = VectorField { grid: *g, u: u.to_vec(), w: w.to_vec() };
    let vg = velocity_gradient(&v);
    let s11: Vec<f64> = (0..g.cells()).map(|k| 2.0 * nu.cell[k] * vg.dudx[k]).collect();
    let s22: Vec<f64> = (0..g.cells()).map(|k| 2.0 * nu.cell[k] * vg.dwdy[k]).collect();
    let mut tau = vec![0.0; nnx * g.nodes_y()];
    for j in 0..g.nodes_y() {
        for i in 0..nnx {
            let k = j * nnx + i;
            tau[k] = g.node_weight(i, j) * nu.node[k] * (vg.dudy[k] + vg.dwdx[k]);
        }
    }
    par::for_each_row(out_u, nux, |j, row| {
        let jn = (j + 1) % g.nodes_y();
        for (i, o) in row.iter_mut().enumerate() {
            if g.u_is_boundary(i) {
                *o = 0.0;
                continue;
            }
            let (cl, cr) = (g.left_of_u(i), i % nx);
            let mut acc = (s11[j * nx + cl] - s11[j * nx + cr]) * ihx;
            let jt = if wall_y { j + 1 } else { jn };
            acc += (tau[j * nnx + i] - tau[jt * nnx + i]) * ihy;
            if wall_y && j == 0 {
                acc += tau[i] * ihy;
            }
            if wall_y && j + 1 == ny {
                acc -= tau[ny * nnx + i] * ihy;
            }
            *o = acc;
        }
    });
    par::for_each_row(out_w, nx, |j, row| {
        if g.w_is_boundary(j) {
            row.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let (cb, ct) = (g.below_w(j), j % ny);
        for (i, o) in row.iter_mut().enumerate() {
            let mut acc = (s22[cb * nx + i] - s22[ct * nx + i]) * ihy;
            let ir = if wall_x { i + 1 } else { (i + 1) % nx };
            acc += (tau[j * nnx + i] - tau[j * nnx + ir]) * ihx;
            if wall_x && i == 0 {
                acc += tau[j * nnx] * ihx;
            }
            if wall_x && i + 1 == nx {
                acc -= tau[j * nnx + nx] * ihx;
            }
            *o = acc;
        }
    });
}

/// Centred conservative `div(v ⊗ M)` on face control volumes.
pub fn advection(v: &VectorField, m: &VectorField) -> VectorField {
    let g = v.grid;
    let (nx, ny, nux) = (g.nx, g.ny, g.nux());
    let (ihx, ihy) = (1.0 / g.hx, 1.0 / g.hy);
    let mut out = VectorField::zeros(g);
    par::for_each_row(&mut out.u, nux, |j, row| {
        let ur = &v.u[j * nux..(j + 1) * nux];
        let mr = &m.u[j * nux..(j + 1) * nux];
        let jt = g.top_face(j);
        let jup = (j + 1) % ny;
        let jdn = g.below_w(j);
        for (i, o) in row.iter_mut().enumerate() {
            if g.u_is_boundary(i) {
                continue;
            }
            let (cl, cr) = (g.left_of_u(i), i % nx);
            let (il, ir) = (cl, g.right_face(cr));
            let fr = 0.25 * (mr[i] + mr[ir]) * (ur[i] + ur[ir]);
            let fl = 0.25 * (mr[il] + mr[i]) * (ur[il] + ur[i]);
            // Corner fluxes; wall rows carry zero normal mass flux.
            let mt = 0.5 * (m.w[jt * nx + cl] + m.w[jt * nx + cr]);
            let mb = 0.5 * (m.w[j * nx + cl] + m.w[j * nx + cr]);
            let ft = if g.w_is_boundary(jt) { 0.0 } else { 0.5 * mt * (ur[i] + v.u[jup * nux + i]) };
            let fb = if g.w_is_boundary(j) { 0.0 } else { 0.5 * mb * (ur[i] + v.u[jdn * nux + i]) };
            *o = (fr - fl) * ihx + (ft - fb) * ihy;
        }
    });
    par::for_each_row(&mut out.w, nx, |j, row| {
        if g.w_is_boundary(j) {
            return;
        }
        let (cb, ct) = (g.below_w(j), j % ny);
        let (jb, jt) = (cb, g.top_face(ct));
        for (i, o) in row.iter_mut().enumerate() {
            let wc = v.w[j * nx + i];
            let ft = 0.25 * (m.w[jt * nx + i] + m.w[j * nx + i]) * (v.w[jt * nx + i] + wc);
            let fb = 0.25 * (m.w[j * nx + i] + m.w[jb * nx + i]) * (wc + v.w[jb * nx + i]);
            let ir = g.right_face(i);
            let mr = 0.5 * (m.u[cb * nux + ir] + m.u[ct * nux + ir]);
            let ml = 0.5 * (m.u[cb * nux + i] + m.u[ct * nux + i]);
            let ie = (i + 1) % nx;
            let iw = g.left_of_u(i);
            let fe = if g.u_is_boundary(ir) { 0.0 } else { 0.5 * mr * (wc + v.w[j * nx + ie]) };
            let fw = if g.u_is_boundary(i) { 0.0 } else { 0.5 * ml * (wc + v.w[j * nx + iw]) };
            *o = (ft - fb) * ihy + (fe - fw) * ihx;
        }
    });
    out
}

/// Residual of the face continuity equation
/// `ρ^{n+1}_f − ρⁿ_f + dt div(M)` on interior faces, max norm.
pub fn face_mass_residual(rho_old: &VectorField, rho_new: &VectorField, m: &VectorField, dt: f64) -> f64 {
    let g = m.grid;
    let ones = VectorField { grid: g, u: vec![1.0; g.n_u()], w: vec![1.0; g.n_w()] };
    let div = advection(&ones, m);
    let mut worst = 0.0f64;
    for k in 0..g.n_u() {
        if !g.u_is_boundary(k % g.nux()) {
            worst = worst.max((rho_new.u[k] - rho_old.u[k] + dt * div.u[k]).abs());
        }
    }
    for k in 0..g.n_w() {
        if !g.w_is_boundary(k / g.nx) {
            worst = worst.max((rho_new.w[k] - rho_old.w[k] + dt * div.w[k]).abs());
        }
    }
    worst
}

fn pack(v: &VectorField) -> Vec<f64> {
    v.u.iter().chain(&v.w).copied().collect()
}

fn unpack(g: GridSpec, x: &[f64]) -> VectorField {
    let nu = g.n_u();
    VectorField::from_parts(g, x[..nu].to_vec(), x[nu..].to_vec())
}

/// Momentum predictor. Solves
///
/// ```text
/// (ρ^{n+1}_f v* − ρⁿ_f vⁿ)/dt + div(vⁿ ⊗ (ρⁿ_f vⁿ + J)) − div(2ν(φ^{n+1})𝔻v*) + ∇pⁿ = −φ^{n+1}_f ∇μ^{n+1}
/// ```
///
/// with `J` built from `φⁿ` and `μ^{n+1}`.
pub fn momentum_predict(
    state: &State,
    phi_new: &ScalarField,
    mu_new: &ScalarField,
    dt: f64,
    p: &PhysicalParams,
    s: &NsSolveParams,
) -> Result<VectorField> {
    check_solenoidal(&state.v, s.div_tol)?;
    cfl_advisory(&state.v, dt);
    let g = state.v.grid;
    let rho_old = face_density(&state.phi, p);
    let rho_new = face_density(phi_new, p);
    let mut mass = state.v.clone();
    mass.mul_faces(&rho_old);
    if s.flux_j {
        mass.axpy(1.0, &flux_j(&state.phi, mu_new, p));
    }
    let adv = advection(&state.v, &mass);
    let gp = grad_cc(&state.p);
    let force = capillary_force(phi_new, mu_new);
    let inv_dt = 1.0 / dt;
    let mut rhs = state.v.clone();
    rhs.mul_faces(&rho_old);
    rhs.scale(inv_dt);
    rhs.axpy(-1.0, &adv);
    rhs.axpy(-1.0, &gp);
    rhs.axpy(1.0, &force);
    rhs.zero_boundary();

    let nu = Viscosity::from_phi(phi_new, p);
    let nuf = g.n_u();
    let mass_diag = pack(&rho_new);
    let boundary: Vec<bool> = (0..g.n_u())
        .map(|k| g.u_is_boundary(k % g.nux()))
        .chain((0..g.n_w()).map(|k| g.w_is_boundary(k / g.nx)))
        .collect();
    let b = pack(&rhs);
    let mut x = pack(&state.v);
    let mut tmp_u = vec![0.0; g.n_u()];
    let mut tmp_w = vec![0.0; g.n_w()];
    // Frozen-coefficient preconditioner: per component, `ρ̄/dt + ν̄ (2Lₙ + Lₜ)`
    // with `Lₙ`, `Lₜ` the normal and tangential second differences.
    let (fu, fw) = FastDiag::velocity(&g);
    let rho_bar = mass_diag.iter().zip(&boundary).filter(|(_, b)| !**b).map(|(m, _)| m).sum::<f64>()
        / boundary.iter().filter(|b| !**b).count().max(1) as f64;
    let nu_bar = nu.cell.iter().sum::<f64>() / nu.cell.len() as f64;
    let alpha = rho_bar * inv_dt;
    pcg(
        |x, y| {
            viscous_apply(&g, &nu, &x[..nuf], &x[nuf..], &mut tmp_u, &mut tmp_w);
            for k in 0..y.len() {
                let visc = if k < nuf { tmp_u[k] } else { tmp_w[k - nuf] };
                y[k] = if boundary[k] { x[k] } else { mass_diag[k] * inv_dt * x[k] + visc };
            }
        },
        |r, z| {
            let (zu, zw) = z.split_at_mut(nuf);
            fu.solve(|lx, ly| alpha + nu_bar * (2.0 * lx + ly), &r[..nuf], zu);
            fw.solve(|lx, ly| alpha + nu_bar * (lx + 2.0 * ly), &r[nuf..], zw);
        },
        &b,
        &mut x,
        s.visc_tol,
        s.visc_max,
        false,
    )
    .map_err(|e| AggError::LinearSolveDiverged(Box::new(e)))?;
    Ok(unpack(g, &x))
}

/// Variable-density projection. Solves `div(ρ_f⁻¹ ∇ψ) = div(v*)/dt`,
/// corrects `v = v* − dt ρ_f⁻¹ ∇ψ` and returns `(v, pⁿ + ψ)`.
pub fn project(
    v_star: &VectorField,
    rho_new: &ScalarField,
    p_old: &ScalarField,
    dt: f64,
    opts: &PoissonOptions,
) -> Result<(VectorField, ScalarField)> {
    let mut rhs = div_face(v_star).scaled(1.0 / dt);
    // The divergence telescopes to zero; only rounding is removed here.
    rhs.sub_mean();
    let mut beta = cell_to_faces(rho_new);
    beta.u.iter_mut().chain(beta.w.iter_mut()).for_each(|r| *r = 1.0 / *r);
    let psi = solve_poisson(&rhs, Coefficient::Face(&beta), opts)?;
    let mut corr = grad_cc(&psi);
    corr.mul_faces(&beta);
    let mut v = v_star.clone();
    v.axpy(-dt, &corr);
    v.zero_boundary();
    let mut p = p_old.clone();
    p.axpy(1.0, &psi);
    p.sub_mean();
    Ok((v, p))
}

/// Discrete curl of a stream function sampled at the corner nodes. The result
/// is solenoidal to rounding; `psi` should vanish on wall edges.
pub fn stream_field(g: GridSpec, psi: impl Fn(f64, f64) -> f64) -> VectorField {
    let node = |i: usize, j: usize| psi(i as f64 * g.hx, j as f64 * g.hy);
    let mut v = VectorField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nux() {
            v.u[j * g.nux() + i] = (node(i, j + 1) - node(i, j)) / g.hy;
        }
    }
    for j in 0..g.nwy() {
        for i in 0..g.nx {
            v.w[j * g.nx + i] = -(node(i + 1, j) - node(i, j)) / g.hx;
        }
    }
    v.zero_boundary();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_ops::Boundary::{Periodic, Wall};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn params(rho1: f64, rho2: f64) -> PhysicalParams {
        PhysicalParams::simple(rho1, rho2, 0.1, 0.05, 1.0, 2.0, 1e-2, 1.0).unwrap()
    }

    fn random_vector(g: GridSpec, rng: &mut ChaCha8Rng) -> VectorField {
        VectorField::from_parts(
            g,
            (0..g.n_u()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..g.n_w()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    fn random_scalar(g: GridSpec, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> ScalarField {
        ScalarField::from_values(g, (0..g.cells()).map(|_| rng.gen_range(lo..hi)).collect())
    }

    fn apply(nu: &Viscosity, v: &VectorField) -> VectorField {
        let mut out = VectorField::zeros(v.grid);
        viscous_apply(&v.grid, nu, &v.u, &v.w, &mut out.u, &mut out.w);
        out
    }

    #[test]
    fn matched_densities_switch_off_j() {
        let g = GridSpec::square(8, 1.0, Wall).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random_scalar(g, -0.5, 0.5, &mut rng);
        let mu = random_scalar(g, -1.0, 1.0, &mut rng);
        assert_eq!(flux_j(&phi, &mu, &params(1.0, 1.0)).max_abs(), 0.0);
        assert_eq!(flux_j(&phi, &ScalarField::constant(g, 0.3), &params(3.0, 1.0)).max_abs(), 0.0);
    }

    #[test]
    fn j_with_unit_mobility_is_scaled_gradient() {
        let g = GridSpec::square(8, 1.0, Periodic).unwrap();
        let mu = ScalarField::from_fn(g, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        let p = params(3.0, 1.0);
        let phi = ScalarField::constant(g, 0.2);
        let j = flux_j(&phi, &mu, &p);
        let gm = grad_cc(&mu);
        for k in 0..g.n_u() {
            assert_eq!(j.u[k], -p.drho() * gm.u[k]);
        }
    }

    #[test]
    fn symmetric_gradient_on_linear_fields() {
        let g = GridSpec::square(8, 1.0, Wall).unwrap();
        let interior = |k: usize| {
            let (i, j) = (k % 8, k / 8);
            i > 0 && i < 7 && j > 0 && j < 7
        };
        let trans = VectorField::constant(GridSpec::square(8, 1.0, Periodic).unwrap(), 0.7, -0.2);
        assert!(sym_grad_sq(&trans).max_abs() < 1e-24);
        let rot = VectorField::from_fns(g, |_, y| -(y - 0.5), |x, _| x - 0.5);
        let shear = VectorField::from_fns(g, |_, y| y, |_, _| 0.0);
        let (dr, ds) = (sym_grad_sq(&rot), sym_grad_sq(&shear));
        for k in (0..64).filter(|&k| interior(k)) {
            assert!(dr.values[k].abs() < 1e-20);
            assert!((ds.values[k] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn viscous_operator_is_adjoint_of_dissipation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (bx, by) in [(Periodic, Periodic), (Wall, Wall), (Wall, Periodic), (Periodic, Wall)] {
            let g = GridSpec::new(7, 6, 1.0, 0.8, bx, by).unwrap();
            let nu = Viscosity::from_cells(&random_scalar(g, 0.5, 2.0, &mut rng));
            let v = random_vector(g, &mut rng);
            let z = random_vector(g, &mut rng);
            let gv = apply(&nu, &v);
            let gz = apply(&nu, &z);
            // Symmetry and ⟨Gv, v⟩ = dissipation.
            assert!((gv.inner(&z) - gz.inner(&v)).abs() < 1e-10 * gv.l2() * z.l2());
            let d = viscous_dissipation(&v, &nu);
            assert!((gv.inner(&v) - d).abs() < 1e-11 * d, "{bx:?} {by:?}");
            // Polarisation gives the bilinear form.
            let mut s = v.clone();
            s.axpy(1.0, &z);
            let bil = 0.5 * (viscous_dissipation(&s, &nu) - d - viscous_dissipation(&z, &nu));
            assert!((gv.inner(&z) - bil).abs() < 1e-10 * d);
        }
    }

    #[test]
    fn viscous_operator_matches_laplacian_for_constant_viscosity() {
        // For div v = 0 and constant ν, −div(2ν𝔻v) = −νΔv.
        let n = 32;
        let g = GridSpec::square(n, 1.0, Periodic).unwrap();
        let (k, nu) = (2.0 * PI, 0.3);
        let v = VectorField::from_fns(g, |x, y| (k * x).sin() * (k * y).cos(), |x, y| -(k * x).cos() * (k * y).sin());
        let gv = apply(&Viscosity::constant(g, nu), &v);
        let lam = 2.0 * 4.0 * n as f64 * n as f64 * (PI / n as f64).sin().powi(2);
        for idx in 0..g.n_u() {
            assert!((gv.u[idx] - nu * lam * v.u[idx]).abs() < 1e-9);
        }
    }

    #[test]
    fn rest_state_without_forcing_stays_at_rest() {
        let g = GridSpec::square(8, 1.0, Wall).unwrap();
        let p = params(3.0, 1.0);
        let phi = ScalarField::constant(g, 0.3);
        let state = State::at_rest(phi.clone(), ScalarField::constant(g, 0.7));
        let v = momentum_predict(&state, &phi, &state.mu, 1e-2, &p, &NsSolveParams::default()).unwrap();
        assert_eq!(v.max_abs(), 0.0);
    }

    #[test]
    fn constant_potential_is_well_balanced() {
        // A non-trivial φ with exactly constant μ exerts no force.
        let g = GridSpec::square(16, 1.0, Wall).unwrap();
        let p = params(1.0, 1.0);
        let phi = ScalarField::from_fn(g, |x, _| 0.8 * (4.0 * (x - 0.5)).tanh());
        let mu = ScalarField::constant(g, -0.4);
        let state = State::at_rest(phi.clone(), mu.clone());
        let v = momentum_predict(&state, &phi, &mu, 1e-2, &p, &NsSolveParams::default()).unwrap();
        assert!(v.max_abs() <= 1e-12);
    }

    #[test]
    fn projection_removes_divergence_and_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for bc in [Periodic, Wall] {
            let g = GridSpec::square(12, 1.0, bc).unwrap();
            let v_star = random_vector(g, &mut rng);
            let rho = random_scalar(g, 1.0, 3.0, &mut rng);
            let opts = PoissonOptions { tol: 1e-14, ..Default::default() };
            let (v, p) = project(&v_star, &rho, &ScalarField::zeros(g), 0.1, &opts).unwrap();
            assert!(div_face(&v).max_abs() * g.hx <= 1e-9 * v.max_abs());
            // Orthogonality to discrete gradients.
            let chi = random_scalar(g, -1.0, 1.0, &mut rng);
            let gc = grad_cc(&chi);
            assert!(v.inner(&gc).abs() < 1e-9 * v.l2() * gc.l2());
            assert!(p.mean().abs() < 1e-14);
            // Idempotence.
            let (v2, _) = project(&v, &rho, &p, 0.1, &opts).unwrap();
            assert!(v2.sub(&v).max_abs() <= 1e-12 * v.max_abs().max(1.0));
        }
    }

    #[test]
    fn projection_annihilates_pure_gradients() {
        let g = GridSpec::square(16, 1.0, Wall).unwrap();
        let f = ScalarField::from_fn(g, |x, y| (PI * x).cos() * (2.0 * PI * y).cos());
        let v_star = grad_cc(&f);
        let one = ScalarField::constant(g, 1.0);
        let (v, _) = project(&v_star, &one, &ScalarField::zeros(g), 0.5, &PoissonOptions::default()).unwrap();
        assert!(v.max_abs() < 1e-8 * v_star.max_abs());
        // Discrete curl of a node stream function is exactly solenoidal.
        let sol = stream_field(g, |x, y| ((PI * x).sin() * (PI * y).sin()).powi(2));
        assert!(div_face(&sol).max_abs() < 1e-12);
        let (same, psi) = project(&sol, &one, &ScalarField::zeros(g), 0.5, &PoissonOptions::default()).unwrap();
        assert!(same.sub(&sol).max_abs() < 1e-13 * sol.max_abs());
        assert!(psi.max_abs() < 1e-10, "{}", psi.max_abs());
    }

    #[test]
    fn face_continuity_holds_for_conservative_phase_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for bc in [Periodic, Wall] {
            let g = GridSpec::square(10, 1.0, bc).unwrap();
            let p = params(3.0, 1.0);
            let phi_old = random_scalar(g, -0.5, 0.5, &mut rng);
            let mu = random_scalar(g, -1.0, 1.0, &mut rng);
            let v = random_solenoidal(g, &mut rng);
            let dt = 1e-4;
            // φ^{n+1} − φⁿ = dt(−div(v φⁿ_f) + div(b_f ∇μ)).
            let mut adv = v.clone();
            adv.mul_faces(&cell_to_faces(&phi_old));
            let mut diff = grad_cc(&mu);
            diff.mul_faces(&cell_to_faces(&phi_old.map(|s| p.b_of(s))));
            let mut rate = div_face(&diff);
            rate.axpy(-1.0, &div_face(&adv));
            let mut phi_new = phi_old.clone();
            phi_new.axpy(dt, &rate);
            let mut m = v.clone();
            m.mul_faces(&face_density(&phi_old, &p));
            m.axpy(1.0, &flux_j(&phi_old, &mu, &p));
            let r = face_mass_residual(&face_density(&phi_old, &p), &face_density(&phi_new, &p), &m, dt);
            assert!(r < 1e-13, "{bc:?} {r}");
        }
    }

    fn random_solenoidal(g: GridSpec, rng: &mut ChaCha8Rng) -> VectorField {
        let v = random_vector(g, rng);
        let opts = PoissonOptions { tol: 1e-13, ..Default::default() };
        project(&v, &ScalarField::constant(g, 1.0), &ScalarField::zeros(g), 1.0, &opts).unwrap().0
    }

    #[test]
    fn periodic_matched_momentum_is_conserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let g = GridSpec::square(16, 1.0, Periodic).unwrap();
        let p = params(1.0, 1.0);
        let phi = ScalarField::constant(g, 0.1);
        let mu = crate::cahn_hilliard::chemical_potential(&phi, &p).unwrap();
        let mut state = State::at_rest(phi.clone(), mu.clone());
        state.v = random_solenoidal(g, &mut rng);
        let momentum = |v: &VectorField| (v.u.iter().sum::<f64>(), v.w.iter().sum::<f64>());
        let m0 = momentum(&state.v);
        let dt = 1e-2;
        for _ in 0..10 {
            let vs = momentum_predict(&state, &phi, &mu, dt, &p, &NsSolveParams::default()).unwrap();
            let (v, pr) = project(&vs, &phi.map(|s| p.rho_of(s)), &state.p, dt, &PoissonOptions::default()).unwrap();
            state.v = v;
            state.p = pr;
        }
        let m1 = momentum(&state.v);
        let drift = ((m1.0 - m0.0).abs() + (m1.1 - m0.1).abs()) * g.cell_area();
        assert!(drift <= 1e-10 * 0.1, "{drift}");
    }
}
