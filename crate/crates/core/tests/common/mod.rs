//! Reference computations shared by the integration tests and the acceptance
//! suite: explicit RK4 integrations of the semi-discrete equations that the
//! time steppers discretise.

#![allow(dead_code)]

use agg_core::cahn_hilliard::{ch_step, chemical_potential, ChSolveParams};
use agg_core::coupled_solver::State;
use agg_core::grid_ops::{cell_to_faces, div_face, grad_cc};
use agg_core::materials::Polynomial;
use agg_core::navier_stokes::{
    advection, capillary_force, face_density, flux_j, momentum_predict, stream_field, viscous_operator,
    NsSolveParams, Viscosity,
};
use agg_core::{Boundary, GridSpec, PhysicalParams, ScalarField, VectorField};

/// Classical RK4 on a flat state vector, `n` equal substeps over `t`.
pub fn rk4(x0: &[f64], t: f64, n: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let h = t / n as f64;
    let axpy = |x: &[f64], a: f64, k: &[f64]| x.iter().zip(k).map(|(x, k)| x + a * k).collect::<Vec<_>>();
    let mut x = x0.to_vec();
    for _ in 0..n {
        let k1 = f(&x);
        let k2 = f(&axpy(&x, 0.5 * h, &k1));
        let k3 = f(&axpy(&x, 0.5 * h, &k2));
        let k4 = f(&axpy(&x, h, &k3));
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `‖x_scheme − x_oracle‖ / ‖x_oracle − x_n‖`.
pub fn relative_error(scheme: &[f64], oracle: &[f64], start: &[f64]) -> f64 {
    l2(scheme, oracle) / l2(oracle, start)
}

/// 4×4 cells of unit size; the stiffest modes then have rates of order one.
pub fn tiny_grid(bc: Boundary) -> GridSpec {
    GridSpec::square(4, 4.0, bc).unwrap()
}

pub fn oracle_params() -> PhysicalParams {
    PhysicalParams::new(
        3.0,
        1.0,
        0.2,
        0.1,
        1.0,
        2.0,
        Polynomial(vec![0.1, 0.02, 0.01]),
        Polynomial(vec![0.1, 0.0, -0.03]),
        1e-9,
    )
    .unwrap()
}

pub fn oracle_phase(g: GridSpec) -> ScalarField {
    ScalarField::from_fn(g, |x, y| 0.1 + 0.4 * (0.9 * x + 0.3).sin() * (0.7 * y - 0.2).cos())
}

pub fn oracle_velocity(g: GridSpec) -> VectorField {
    let (lx, ly) = (g.lx, g.ly);
    stream_field(g, move |x, y| {
        let s = (std::f64::consts::PI * x / lx).sin() * (std::f64::consts::PI * y / ly).sin();
        0.3 * s * s * (1.0 + 0.2 * x)
    })
}

/// `dφ/dt = div(b(φ)_f ∇μ(φ)) − div(v φ_f)` with `v` frozen.
pub fn ch_rhs(phi: &ScalarField, v: &VectorField, p: &PhysicalParams) -> ScalarField {
    let mu = chemical_potential(phi, p).unwrap();
    let mut flux = grad_cc(&mu);
    flux.mul_faces(&cell_to_faces(&phi.map(|s| p.b_of(s))));
    let mut conv = v.clone();
    conv.mul_faces(&cell_to_faces(phi));
    div_face(&flux).sub(&div_face(&conv))
}

/// Relative error of one `ch_step` against the RK4 solution.
pub fn ch_oracle_error(bc: Boundary, dt: f64) -> f64 {
    let g = tiny_grid(bc);
    let p = oracle_params();
    let phi0 = oracle_phase(g);
    let v = oracle_velocity(g);
    let s = ChSolveParams { newton_tol: 1e-14, linear_tol: 1e-15, ..ChSolveParams::default() };
    let got = ch_step(&phi0, &v, dt, &p, &s).unwrap();
    let exact = rk4(&phi0.values, dt, 40, |x| ch_rhs(&ScalarField::from_values(g, x.to_vec()), &v, &p).values);
    relative_error(&got.phi.values, &exact, &phi0.values)
}

fn pack(v: &VectorField) -> Vec<f64> {
    v.u.iter().chain(&v.w).copied().collect()
}

fn unpack(g: GridSpec, x: &[f64]) -> VectorField {
    VectorField { grid: g, u: x[..g.n_u()].to_vec(), w: x[g.n_u()..].to_vec() }
}

/// Momentum with `φ`, `μ`, `p` frozen:
/// `ρ_f dv/dt = −div(v ⊗ (ρ_f v + J)) − ∇p − φ_f∇μ + div(2ν𝔻v)`.
pub fn momentum_rhs(v: &VectorField, phi: &ScalarField, mu: &ScalarField, pr: &ScalarField, p: &PhysicalParams) -> VectorField {
    let rho = face_density(phi, p);
    let mut m = v.clone();
    m.mul_faces(&rho);
    m.axpy(1.0, &flux_j(phi, mu, p));
    let mut f = capillary_force(phi, mu);
    f.axpy(-1.0, &advection(v, &m));
    f.axpy(-1.0, &grad_cc(pr));
    f.axpy(-1.0, &viscous_operator(v, &Viscosity::from_phi(phi, p)));
    f.zero_boundary();
    let inv = VectorField { grid: v.grid, u: rho.u.iter().map(|r| 1.0 / r).collect(), w: rho.w.iter().map(|r| 1.0 / r).collect() };
    f.mul_faces(&inv);
    f
}

/// Relative error of one `momentum_predict` (with `φ^{n+1} = φⁿ`) against
/// the RK4 solution.
pub fn momentum_oracle_error(bc: Boundary, dt: f64) -> f64 {
    let g = tiny_grid(bc);
    let p = oracle_params();
    let phi = oracle_phase(g);
    let mu = chemical_potential(&phi, &p).unwrap();
    let pr = ScalarField::from_fn(g, |x, y| 0.05 * (x - 2.0) * (y - 1.5));
    let state = State { t: 0.0, step: 0, v: oracle_velocity(g), phi: phi.clone(), mu: mu.clone(), p: pr.clone() };
    let s = NsSolveParams { visc_tol: 1e-15, ..NsSolveParams::default() };
    let got = momentum_predict(&state, &phi, &mu, dt, &p, &s).unwrap();
    let x0 = pack(&state.v);
    let exact = rk4(&x0, dt, 40, |x| pack(&momentum_rhs(&unpack(g, x), &phi, &mu, &pr, &p)));
    relative_error(&pack(&got), &exact, &x0)
}
