//! Convective Cahn–Hilliard update.
//!
//! One step solves, by damped Newton on `φ^{n+1}`,
//!
//! ```text
//! (φ^{n+1} − φⁿ)/dt + div(vⁿ φⁿ_f) = div(b(φⁿ)_f ∇μ^{n+1})
//! μ^{n+1} = a'(φⁿ)|∇φ^{n+½}|²/2 − div(a(φⁿ)_f ∇φ^{n+1}) + Ψ₀'(φ^{n+1}) − Θ₀ φⁿ
//! ```
//!
//! The logarithmic part is implicit, the concave quadratic part explicit and
//! `a`, `b` are lagged. Fluxes are conservative, so the mean of `φ` is kept to
//! rounding.

use crate::error::{AggError, Result};
use crate::grid_ops::{
    apply_face_laplacian, cell_to_faces, div_face, grad_cc, grad_into, grad_sq_cc, FastDiag, GridSpec,
    ScalarField, VectorField,
};
use crate::linalg::bicgstab;
use crate::materials::PhysicalParams;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChSolveParams {
    /// Target for the weighted L² norm of the step residual.
    pub newton_tol: f64,
    pub newton_max: usize,
    /// Backtracking halvings per Newton iteration.
    pub max_halvings: usize,
    /// Floor on the relative tolerance of each linear solve.
    pub linear_tol: f64,
    pub linear_max: usize,
    /// Maximum allowed `max |div v|·h / max |v|` on input velocities.
    pub div_tol: f64,
}

impl Default for ChSolveParams {
    fn default() -> Self {
        Self { newton_tol: 1e-10, newton_max: 50, max_halvings: 30, linear_tol: 1e-11, linear_max: 5000, div_tol: 1e-9 }
    }
}

#[derive(Clone, Debug)]
pub struct ChStepOutput {
    pub phi: ScalarField,
    pub mu: ScalarField,
    /// Residual norm before each Newton update and after the last one.
    pub residuals: Vec<f64>,
    pub linear_iterations: usize,
}

pub(crate) fn check_separation(phi: &ScalarField, p: &PhysicalParams) -> Result<()> {
    let m = phi.max_abs();
    if m <= p.phi_limit() && phi.is_finite() {
        Ok(())
    } else {
        Err(AggError::SeparationViolated { max_abs: m, limit: p.phi_limit() })
    }
}

/// Face average of a cell-wise function of `φ`.
fn faces_of(phi: &ScalarField, f: impl Fn(f64) -> f64 + Sync + Send) -> VectorField {
    cell_to_faces(&phi.map(f))
}

/// `μ = a'(φ)|∇φ|²/2 − div(a(φ)_f ∇φ) + Ψ'(φ)`, the exact variational
/// derivative of the discrete free energy divided by the cell area.
pub fn chemical_potential(phi: &ScalarField, p: &PhysicalParams) -> Result<ScalarField> {
    check_separation(phi, p)?;
    let mut flux = grad_cc(phi);
    let gsq = grad_sq_cc(&flux);
    flux.mul_faces(&faces_of(phi, |s| p.a_of(s)));
    let div = div_face(&flux);
    let mut mu = ScalarField::zeros(phi.grid);
    par::fill(&mut mu.values, |k| {
        let s = phi.values[k];
        0.5 * p.a_prime(s) * gsq.values[k] - div.values[k] + p.psi0_prime(s) - p.theta0 * s
    });
    Ok(mu)
}

/// Split of the discrete free energy into gradient and bulk parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreeEnergy {
    pub gradient: f64,
    pub bulk: f64,
}

impl FreeEnergy {
    pub fn total(&self) -> f64 {
        self.gradient + self.bulk
    }
}

/// `∫ a(φ)|∇φ|²/2 + Ψ(φ)` with face quadrature for the gradient part.
pub fn free_energy_parts(phi: &ScalarField, p: &PhysicalParams) -> FreeEnergy {
    let g = grad_cc(phi);
    let af = faces_of(phi, |s| p.a_of(s));
    let grad: f64 = g.u.iter().zip(&af.u).chain(g.w.iter().zip(&af.w)).map(|(d, a)| 0.5 * a * d * d).sum();
    let bulk: f64 = phi.values.iter().map(|&s| p.psi(s)).sum();
    FreeEnergy { gradient: grad * phi.grid.cell_area(), bulk: bulk * phi.grid.cell_area() }
}

pub fn free_energy(phi: &ScalarField, p: &PhysicalParams) -> f64 {
    free_energy_parts(phi, p).total()
}

pub(crate) fn check_solenoidal(v: &VectorField, tol: f64) -> Result<()> {
    let d = div_face(v);
    let h = v.grid.hx.min(v.grid.hy);
    // Relative for large velocities, absolute below unit size: a decaying
    // flow keeps the projection's absolute round-off.
    let scale = v.max_abs().max(1.0);
    let max_div = d.max_abs();
    if max_div * h <= tol * scale {
        Ok(())
    } else {
        Err(AggError::NotSolenoidal { max_div })
    }
}

pub(crate) fn cfl_advisory(v: &VectorField, dt: f64) {
    let g = v.grid;
    let c = dt * v.max_abs() / g.hx.min(g.hy);
    if c > 1.0 {
        log::warn!("CFL number {c:.3} exceeds 1 (dt = {dt:.3e})");
    }
}

/// Lagged data of one step.
struct StepSystem<'a> {
    g: GridSpec,
    p: &'a PhysicalParams,
    dt: f64,
    phi_n: &'a [f64],
    grad_n: VectorField,
    a_face: VectorField,
    b_face: VectorField,
    /// `a'(φⁿ)/2`.
    half_a_prime: Vec<f64>,
    /// `div(vⁿ φⁿ_f)`.
    convection: Vec<f64>,
    a_bar: f64,
    b_bar: f64,
    spectral: FastDiag,
}

/// Per-iterate data needed by the Jacobian.
struct Linearization {
    grad_half: VectorField,
    psi0_second: Vec<f64>,
    psi0_second_mean: f64,
}

impl<'a> StepSystem<'a> {
    fn new(phi_n: &'a ScalarField, v_n: &VectorField, dt: f64, p: &'a PhysicalParams) -> Self {
        let g = phi_n.grid;
        let mut flux = v_n.clone();
        flux.mul_faces(&cell_to_faces(phi_n));
        let convection = div_face(&flux).values;
        let a_face = faces_of(phi_n, |s| p.a_of(s));
        let b_face = faces_of(phi_n, |s| p.b_of(s));
        let half_a_prime = phi_n.values.iter().map(|&s| 0.5 * p.a_prime(s)).collect();
        let n = g.cells() as f64;
        let a_bar = phi_n.values.iter().map(|&s| p.a_of(s)).sum::<f64>() / n;
        let b_bar = phi_n.values.iter().map(|&s| p.b_of(s)).sum::<f64>() / n;
        Self {
            g,
            p,
            dt,
            phi_n: &phi_n.values,
            grad_n: grad_cc(phi_n),
            a_face,
            b_face,
            half_a_prime,
            convection,
            a_bar,
            b_bar,
            spectral: FastDiag::new(&g),
        }
    }

    /// `μ(φ)` and the midpoint gradient used by the Jacobian.
    fn mu(&self, phi: &[f64]) -> (Vec<f64>, VectorField) {
        let g = &self.g;
        let mut grad = VectorField::zeros(*g);
        grad_into(g, phi, &mut grad.u, &mut grad.w);
        let mut half = grad.clone();
        half.axpy(1.0, &self.grad_n);
        half.scale(0.5);
        let gsq = grad_sq_cc(&half);
        let mut lap = vec![0.0; g.cells()];
        apply_face_laplacian(g, Some((&self.a_face.u, &self.a_face.w)), phi, &mut lap);
        let p = self.p;
        let mut mu = vec![0.0; g.cells()];
        par::fill(&mut mu, |k| {
            self.half_a_prime[k] * gsq.values[k] - lap[k] + p.psi0_prime(phi[k]) - p.theta0 * self.phi_n[k]
        });
        (mu, half)
    }

    fn residual(&self, phi: &[f64]) -> (Vec<f64>, Vec<f64>, VectorField) {
        let g = &self.g;
        let (mu, half) = self.mu(phi);
        let mut lap = vec![0.0; g.cells()];
        apply_face_laplacian(g, Some((&self.b_face.u, &self.b_face.w)), &mu, &mut lap);
        let inv_dt = 1.0 / self.dt;
        let mut r = vec![0.0; g.cells()];
        par::fill(&mut r, |k| (phi[k] - self.phi_n[k]) * inv_dt + self.convection[k] - lap[k]);
        (r, mu, half)
    }

    fn linearize(&self, phi: &[f64], grad_half: VectorField) -> Linearization {
        let psi0_second: Vec<f64> = phi.iter().map(|&s| self.p.psi0_second(s)).collect();
        let psi0_second_mean = psi0_second.iter().sum::<f64>() / psi0_second.len() as f64;
        Linearization { grad_half, psi0_second, psi0_second_mean }
    }

    fn jvp(&self, lin: &Linearization, x: &[f64], out: &mut [f64], scratch: &mut JvpScratch) {
        let g = &self.g;
        let (nx, nux) = (g.nx, g.nux());
        grad_into(g, x, &mut scratch.grad.u, &mut scratch.grad.w);
        apply_face_laplacian(g, Some((&self.a_face.u, &self.a_face.w)), x, &mut scratch.lap);
        let gh = &lin.grad_half;
        let gx = &scratch.grad;
        par::fill(&mut scratch.dmu, |k| {
            let (i, j) = (k % nx, k / nx);
            let ir = g.right_face(i);
            let jt = g.top_face(j);
            let dg = gh.u[j * nux + i] * gx.u[j * nux + i]
                + gh.u[j * nux + ir] * gx.u[j * nux + ir]
                + gh.w[j * nx + i] * gx.w[j * nx + i]
                + gh.w[jt * nx + i] * gx.w[jt * nx + i];
            self.half_a_prime[k] * 0.5 * dg - scratch.lap[k] + lin.psi0_second[k] * x[k]
        });
        apply_face_laplacian(g, Some((&self.b_face.u, &self.b_face.w)), &scratch.dmu, out);
        let inv_dt = 1.0 / self.dt;
        out.iter_mut().zip(x).for_each(|(o, x)| *o = x * inv_dt - *o);
    }

    /// Size of the residual that rounding alone can produce: the
    /// fourth-order stencil multiplies the error of every `μ` term by
    /// `O(b/h²)`, which at fine grids and thick interfaces exceeds any fixed
    /// absolute tolerance.
    fn rounding_floor(&self) -> f64 {
        let g = &self.g;
        let ih2 = 1.0 / (g.hx.min(g.hy)).powi(2);
        let a_max = self.a_face.max_abs();
        let b_max = self.b_face.max_abs();
        let p = self.p;
        let mu_scale = 8.0 * a_max * ih2 + p.theta0 + self.phi_n.iter().fold(0.0f64, |m, &s| m.max(p.psi0_prime(s).abs()));
        let scale = 1.0 / self.dt + 8.0 * b_max * ih2 * mu_scale;
        let area = g.lx * g.ly;
        f64::EPSILON * scale * area.sqrt()
    }

    /// Applies the inverse of the Jacobian with every coefficient frozen at
    /// its mean.
    fn precondition(&self, lin: &Linearization, r: &[f64], z: &mut [f64]) {
        let inv_dt = 1.0 / self.dt;
        let (a, b, c) = (self.a_bar, self.b_bar, lin.psi0_second_mean);
        self.spectral.solve(|lx, ly| inv_dt + b * (lx + ly) * (a * (lx + ly) + c), r, z);
    }
}

struct JvpScratch {
    grad: VectorField,
    lap: Vec<f64>,
    dmu: Vec<f64>,
}

fn weighted_l2(g: &GridSpec, r: &[f64]) -> f64 {
    (par::dot(r, r) * g.cell_area()).sqrt()
}

/// One mass-conservative convex–concave Cahn–Hilliard step with advecting
/// velocity `v_n`.
pub fn ch_step(
    phi_n: &ScalarField,
    v_n: &VectorField,
    dt: f64,
    p: &PhysicalParams,
    s: &ChSolveParams,
) -> Result<ChStepOutput> {
    check_separation(phi_n, p)?;
    check_solenoidal(v_n, s.div_tol)?;
    cfl_advisory(v_n, dt);
    let g = phi_n.grid;
    let sys = StepSystem::new(phi_n, v_n, dt, p);
    let limit = p.phi_limit();
    let mut phi = phi_n.values.clone();
    let (mut r, mut mu, mut half) = sys.residual(&phi);
    let mut rn = weighted_l2(&g, &r);
    let mut residuals = vec![rn];
    let mut linear_iterations = 0;
    let mut scratch = JvpScratch { grad: VectorField::zeros(g), lap: vec![0.0; g.cells()], dmu: vec![0.0; g.cells()] };
    let tol = s.newton_tol.max(sys.rounding_floor());
    let mut iter = 0;
    while rn > tol {
        if iter == s.newton_max {
            return Err(AggError::NewtonDiverged { iterations: iter, residual: rn });
        }
        iter += 1;
        let lin = sys.linearize(&phi, half);
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let eta = s.linear_tol.max(rn.min(1e-2)).max(0.1 * s.newton_tol / rn).min(0.1);
        let mut delta = vec![0.0; g.cells()];
        let stats = bicgstab(
            |x, y| sys.jvp(&lin, x, y, &mut scratch),
            |r, z| sys.precondition(&lin, r, z),
            &rhs,
            &mut delta,
            eta,
            s.linear_max,
        )?;
        linear_iterations += stats.iterations;
        let mean = delta.iter().sum::<f64>() / delta.len() as f64;
        delta.iter_mut().for_each(|d| *d -= mean);

        let mut lambda = 1.0;
        let mut accepted = None;
        let mut hit_guard = false;
        for _ in 0..=s.max_halvings {
            let trial: Vec<f64> = phi.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
            if trial.iter().any(|v| v.abs() > limit || !v.is_finite()) {
                hit_guard = true;
                lambda *= 0.5;
                continue;
            }
            let (rt, mut_, ht) = sys.residual(&trial);
            let rtn = weighted_l2(&g, &rt);
            if rtn < (1.0 - 1e-4 * lambda) * rn || rtn <= tol {
                accepted = Some((trial, rt, mut_, ht, rtn));
                break;
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((t, rt, mt, ht, rtn)) => {
                phi = t;
                r = rt;
                mu = mt;
                half = ht;
                rn = rtn;
                residuals.push(rn);
            }
            None if hit_guard => {
                let max_abs = phi.iter().zip(&delta).fold(0.0f64, |m, (a, d)| m.max((a + d).abs()));
                return Err(AggError::SeparationViolated { max_abs, limit });
            }
            None => return Err(AggError::NewtonDiverged { iterations: iter, residual: rn }),
        }
    }
    Ok(ChStepOutput {
        phi: ScalarField::from_values(g, phi),
        mu: ScalarField::from_values(g, mu),
        residuals,
        linear_iterations,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::grid_ops::{laplacian, Boundary::*};
    use crate::materials::Polynomial;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    pub(crate) fn noisy(g: GridSpec, mean: f64, amp: f64, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = ScalarField::from_values(g, (0..g.cells()).map(|_| rng.gen_range(-amp..amp)).collect());
        f.sub_mean();
        f.values.iter_mut().for_each(|v| *v += mean);
        f
    }

    fn variable_params() -> PhysicalParams {
        PhysicalParams::new(
            2.0, 1.0, 1.0, 1.0, 1.0, 2.0,
            Polynomial(vec![0.02, 0.005, 0.01]),
            Polynomial(vec![0.5, 0.1, 0.2]),
            1e-9,
        )
        .unwrap()
    }

    #[test]
    fn flat_state_potential_is_psi_prime() {
        let g = GridSpec::square(6, 1.0, Wall).unwrap();
        let p = variable_params();
        let mu = chemical_potential(&ScalarField::constant(g, 0.3), &p).unwrap();
        let expect = p.psi_prime(0.3).unwrap();
        assert!(mu.values.iter().all(|m| (m - expect).abs() < 1e-15));
    }

    #[test]
    fn potential_is_the_gradient_of_the_discrete_energy() {
        let p = variable_params();
        for bc in [Wall, Periodic] {
            let g = GridSpec::new(6, 5, 1.0, 0.8, bc, bc).unwrap();
            let phi = noisy(g, 0.1, 0.5, 4);
            let mu = chemical_potential(&phi, &p).unwrap();
            let h = 1e-6;
            for k in [0, 7, 13, g.cells() - 1] {
                let mut up = phi.clone();
                up.values[k] += h;
                let mut dn = phi.clone();
                dn.values[k] -= h;
                let fd = (free_energy(&up, &p) - free_energy(&dn, &p)) / (2.0 * h) / g.cell_area();
                assert!((fd - mu.values[k]).abs() < 1e-6 * (1.0 + mu.values[k].abs()), "{fd} vs {}", mu.values[k]);
            }
        }
    }

    #[test]
    fn linearized_potential_on_a_small_mode() {
        let p = PhysicalParams::simple(1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0).unwrap();
        let g = GridSpec::new(16, 4, 1.0, 0.25, Periodic, Periodic).unwrap();
        let mode = ScalarField::from_fn(g, |x, _| (2.0 * PI * x).sin());
        let lam = 4.0 / (g.hx * g.hx) * (PI * g.hx).sin().powi(2);
        for eps in [1e-3, 5e-4] {
            let mu = chemical_potential(&mode.scaled(eps), &p).unwrap();
            let lin = mode.scaled(eps * (lam + p.psi_second(0.0).unwrap()));
            // Remainder is the cubic term Θ s³/3.
            let err = mu.sub(&lin).max_abs();
            assert!(err < eps.powi(3), "{err}");
        }
    }

    #[test]
    fn flat_state_is_a_fixed_point() {
        let g = GridSpec::square(8, 1.0, Wall).unwrap();
        let p = variable_params();
        let phi = ScalarField::constant(g, -0.4);
        let out = ch_step(&phi, &VectorField::zeros(g), 1e-2, &p, &ChSolveParams::default()).unwrap();
        assert!(out.phi.sub(&phi).max_abs() < 1e-14);
        let expect = p.psi0_prime(-0.4) - p.theta0 * -0.4;
        assert!(out.mu.values.iter().all(|m| (m - expect).abs() < 1e-12));
    }

    #[test]
    fn step_conserves_mass_and_stays_separated() {
        let g = GridSpec::square(16, 1.0, Periodic).unwrap();
        let p = variable_params();
        let phi = noisy(g, 0.2, 0.6, 1);
        let v = VectorField::constant(g, 0.3, -0.2);
        let out = ch_step(&phi, &v, 1e-3, &p, &ChSolveParams::default()).unwrap();
        assert!((out.phi.mean() - phi.mean()).abs() < 1e-14);
        assert!(out.phi.max_abs() < 1.0);
        assert!(*out.residuals.last().unwrap() <= 1e-10);
    }

    #[test]
    fn rejects_divergent_velocity() {
        let g = GridSpec::square(8, 1.0, Periodic).unwrap();
        let p = variable_params();
        let v = VectorField::from_fns(g, |x, _| (2.0 * PI * x).sin(), |_, _| 0.0);
        let e = ch_step(&ScalarField::constant(g, 0.0), &v, 1e-3, &p, &ChSolveParams::default());
        assert!(matches!(e, Err(AggError::NotSolenoidal { .. })));
    }

    #[test]
    fn rejects_unseparated_input() {
        let g = GridSpec::square(8, 1.0, Wall).unwrap();
        let p = variable_params();
        let mut phi = ScalarField::constant(g, 0.0);
        phi.values[3] = 1.0;
        let e = ch_step(&phi, &VectorField::zeros(g), 1e-3, &p, &ChSolveParams::default());
        assert!(matches!(e, Err(AggError::SeparationViolated { .. })));
        assert!(matches!(chemical_potential(&phi, &p), Err(AggError::SeparationViolated { .. })));
    }

    #[test]
    fn jacobian_matches_directional_difference() {
        let p = variable_params();
        let g = GridSpec::new(8, 6, 1.0, 0.75, Wall, Periodic).unwrap();
        let phi_n = noisy(g, 0.0, 0.5, 2);
        let v = VectorField::zeros(g);
        let sys = StepSystem::new(&phi_n, &v, 1e-3, &p);
        let phi = noisy(g, 0.0, 0.5, 3).values;
        let dir = noisy(g, 0.0, 1.0, 4).values;
        let (r0, _, half) = sys.residual(&phi);
        let lin = sys.linearize(&phi, half);
        let mut jv = vec![0.0; g.cells()];
        let mut scratch = JvpScratch { grad: VectorField::zeros(g), lap: vec![0.0; g.cells()], dmu: vec![0.0; g.cells()] };
        sys.jvp(&lin, &dir, &mut jv, &mut scratch);
        let eps = 1e-6;
        let plus: Vec<f64> = phi.iter().zip(&dir).map(|(a, d)| a + eps * d).collect();
        let minus: Vec<f64> = phi.iter().zip(&dir).map(|(a, d)| a - eps * d).collect();
        let (rp, _, _) = sys.residual(&plus);
        let (rm, _, _) = sys.residual(&minus);
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        let num: f64 = fd.iter().zip(&jv).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = jv.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(num <= 1e-6 * den, "relative mismatch {}", num / den);
        let _ = r0;
    }

    #[test]
    fn newton_converges_quadratically() {
        let p = variable_params();
        let g = GridSpec::square(16, 1.0, Wall).unwrap();
        let phi = noisy(g, 0.0, 0.4, 7);
        let s = ChSolveParams { newton_tol: 1e-13, ..Default::default() };
        let out = ch_step(&phi, &VectorField::zeros(g), 1e-3, &p, &s).unwrap();
        let r = &out.residuals;
        assert!(r.len() >= 3, "{r:?}");
        // Pick the last contraction that is not limited by rounding.
        let pairs: Vec<(f64, f64)> = r.windows(2).map(|w| (w[0], w[1])).filter(|(_, b)| *b > 1e-12).collect();
        if let Some(&(a, b)) = pairs.last() {
            assert!(b <= 1e3 * a * a, "residuals {r:?}");
        }
    }

    #[test]
    fn pure_cahn_hilliard_dissipates_free_energy() {
        let p = PhysicalParams::simple(1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0).unwrap();
        let g = GridSpec::square(16, 16.0, Periodic).unwrap();
        let mut phi = noisy(g, 0.0, 0.05, 12);
        let v = VectorField::zeros(g);
        let e0 = free_energy(&phi, &p);
        let mut e = e0;
        for _ in 0..40 {
            phi = ch_step(&phi, &v, 0.2, &p, &ChSolveParams::default()).unwrap().phi;
            let en = free_energy(&phi, &p);
            assert!(en <= e + 1e-10 * e0.abs());
            e = en;
        }
        assert!(e < e0);
    }

    #[test]
    fn laplacian_sanity_for_helpers() {
        let g = GridSpec::square(8, 1.0, Wall).unwrap();
        let f = noisy(g, 0.0, 1.0, 1);
        assert!(laplacian(&f).integral().abs() < 1e-12);
    }
}
