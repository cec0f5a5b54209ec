//! Energies, dissipation rates, the energy-budget residual, separation and
//! norm monitors, the mixed-norm regularity monitor and the dt-refinement
//! energy audit.

use crate::cahn_hilliard::free_energy;
use crate::coupled_solver::State;
use crate::error::{AggError, Result};
use crate::grid_ops::{
    cell_to_faces, grad_cc, norm, vector_norm, velocity_gradient, NormKind, ScalarField, VectorField,
};
use crate::materials::PhysicalParams;
use crate::navier_stokes::{face_density, viscous_dissipation, Viscosity};

/// One row of the diagnostics table. Field order is the CSV column order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub e_kin: f64,
    pub e_free: f64,
    pub e_total: f64,
    pub d_visc: f64,
    pub d_chem: f64,
    pub r_energy: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub v_l2: f64,
    pub v_linf: f64,
    pub grad_v_lr: f64,
    pub dt_phi_hminus1: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 14] = [
        "t",
        "mass",
        "E_kin",
        "E_free",
        "E_total",
        "D_visc",
        "D_chem",
        "R_energy",
        "phi_min",
        "phi_max",
        "v_L2",
        "v_Linf",
        "grad_v_Lr",
        "dt_phi_Hminus1",
    ];

    pub fn to_array(&self) -> [f64; 14] {
        [
            self.t,
            self.mass,
            self.e_kin,
            self.e_free,
            self.e_total,
            self.d_visc,
            self.d_chem,
            self.r_energy,
            self.phi_min,
            self.phi_max,
            self.v_l2,
            self.v_linf,
            self.grad_v_lr,
            self.dt_phi_hminus1,
        ]
    }

    pub fn from_array(a: [f64; 14]) -> Self {
        Self {
            t: a[0],
            mass: a[1],
            e_kin: a[2],
            e_free: a[3],
            e_total: a[4],
            d_visc: a[5],
            d_chem: a[6],
            r_energy: a[7],
            phi_min: a[8],
            phi_max: a[9],
            v_l2: a[10],
            v_linf: a[11],
            grad_v_lr: a[12],
            dt_phi_hminus1: a[13],
        }
    }

    /// `min(1 − |φ|)` over the state.
    pub fn separation(&self) -> f64 {
        (1.0 - self.phi_max).min(1.0 + self.phi_min)
    }
}

/// `∫ρ(φ)|v|²/2` with face quadrature.
pub fn kinetic_energy(v: &VectorField, phi: &ScalarField, p: &PhysicalParams) -> f64 {
    let rho = face_density(phi, p);
    let s: f64 = v.u.iter().zip(&rho.u).chain(v.w.iter().zip(&rho.w)).map(|(x, r)| r * x * x).sum();
    0.5 * s * v.grid.cell_area()
}

/// `∫b(φ)|∇μ|²` with face quadrature.
pub fn chemical_dissipation(phi: &ScalarField, mu: &ScalarField, p: &PhysicalParams) -> f64 {
    let g = grad_cc(mu);
    let b = cell_to_faces(&phi.map(|s| p.b_of(s)));
    let s: f64 = g.u.iter().zip(&b.u).chain(g.w.iter().zip(&b.w)).map(|(d, b)| b * d * d).sum();
    s * mu.grid.cell_area()
}

/// Energies and dissipation rates of one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Energetics {
    pub e_kin: f64,
    pub e_free: f64,
    pub d_visc: f64,
    pub d_chem: f64,
}

impl Energetics {
    pub fn of(state: &State, p: &PhysicalParams) -> Self {
        Self {
            e_kin: kinetic_energy(&state.v, &state.phi, p),
            e_free: free_energy(&state.phi, p),
            d_visc: viscous_dissipation(&state.v, &Viscosity::from_phi(&state.phi, p)),
            d_chem: chemical_dissipation(&state.phi, &state.mu, p),
        }
    }

    pub fn total(&self) -> f64 {
        self.e_kin + self.e_free
    }

    pub fn dissipation(&self) -> f64 {
        self.d_visc + self.d_chem
    }
}

/// Running energy budget: `R = E(t) + ∫₀ᵗ D − E(0)` with trapezoidal time
/// integration of `D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accumulators {
    pub e0: f64,
    pub dissipated: f64,
    pub last_d: f64,
}

impl Accumulators {
    pub fn start(initial: &Energetics) -> Self {
        Self { e0: initial.total(), dissipated: 0.0, last_d: initial.dissipation() }
    }

    pub fn advance(&mut self, next: &Energetics, dt: f64) {
        let d = next.dissipation();
        self.dissipated += 0.5 * dt * (self.last_d + d);
        self.last_d = d;
    }

    pub fn residual(&self, e_total: f64) -> f64 {
        e_total + self.dissipated - self.e0
    }
}

/// Assembles a record. `dt_phi` is the last discrete time derivative of `φ`
/// (`None` at the initial time).
pub fn record(
    state: &State,
    p: &PhysicalParams,
    acc: &Accumulators,
    dt_phi: Option<&ScalarField>,
    r: f64,
) -> Result<DiagnosticsRecord> {
    let en = Energetics::of(state, p);
    let vg = velocity_gradient(&state.v);
    let grad_v_lr = lr_of_cell_values(&vg.magnitude_sq_cc(), r);
    Ok(DiagnosticsRecord {
        t: state.t,
        mass: state.phi.integral(),
        e_kin: en.e_kin,
        e_free: en.e_free,
        e_total: en.total(),
        d_visc: en.d_visc,
        d_chem: en.d_chem,
        r_energy: acc.residual(en.total()),
        phi_min: state.phi.min(),
        phi_max: state.phi.max(),
        v_l2: state.v.l2(),
        v_linf: vector_norm(&state.v, NormKind::Linf)?,
        grad_v_lr,
        dt_phi_hminus1: match dt_phi {
            Some(d) => {
                // Mass is conserved, so any mean left in the increment is
                // rounding and would trip the mean check on tiny increments.
                let mut d = d.clone();
                d.sub_mean();
                norm(&d, NormKind::HMinus1)?
            }
            None => 0.0,
        },
    })
}

/// `(∫ s^{r/2})^{1/r}` for a cell field of squared magnitudes `s`.
fn lr_of_cell_values(sq: &ScalarField, r: f64) -> f64 {
    let area = sq.grid.cell_area();
    if r.is_infinite() {
        return sq.max().max(0.0).sqrt();
    }
    (sq.values.iter().map(|s| s.max(0.0).powf(0.5 * r)).sum::<f64>() * area).powf(1.0 / r)
}

/// `‖∇v‖_{L^r}` using the cell-centred gradient magnitude.
pub fn grad_v_norm(v: &VectorField, r: f64) -> f64 {
    lr_of_cell_values(&velocity_gradient(v).magnitude_sq_cc(), r)
}

/// `‖v‖_{L^s}` using the cell-centred velocity magnitude (`s = ∞` allowed).
pub fn v_norm(v: &VectorField, s: f64) -> f64 {
    let kind = if s.is_infinite() { NormKind::Linf } else { NormKind::Lp(s) };
    vector_norm(v, kind).expect("L^p norms of a velocity are total")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularityReport {
    pub q: f64,
    pub r: f64,
    /// `(∫ ‖∇v‖_{L^r}^q dt)^{1/q}`.
    pub i1: f64,
    /// `(∫ ‖v‖_{L^{2r/(r−2)}}^{2q/(q−2)} dt)^{(q−2)/2q}`, with sup conventions
    /// at `q = 2` or `r = 2`.
    pub i2: f64,
    pub index_lhs: f64,
    /// `5/q + 6/r = 5` with `2 ≤ r ≤ 12/5`.
    pub index_satisfied: bool,
    /// The separate `r = 3, q ≥ 2` case of the gradient-only criterion.
    pub r3_branch: bool,
    /// Largest gap between consecutive samples.
    pub sampling_interval: f64,
    pub samples: usize,
}

const INDEX_TOL: f64 = 1e-12;

pub fn index_relation(q: f64, r: f64) -> (f64, bool, bool) {
    let lhs = 5.0 / q + 6.0 / r;
    let sat = (lhs - 5.0).abs() <= INDEX_TOL && (2.0..=12.0 / 5.0 + INDEX_TOL).contains(&r);
    let r3 = (r - 3.0).abs() <= INDEX_TOL && q >= 2.0;
    (lhs, sat, r3)
}

fn check_exponents(q: f64, r: f64) -> Result<()> {
    if q >= 2.0 && r >= 2.0 && !q.is_nan() && !r.is_nan() {
        Ok(())
    } else {
        Err(AggError::BadExponents { q, r })
    }
}

/// Time-integral part of the regularity monitor on sampled norms:
/// `grad_lr[k] = ‖∇v(t_k)‖_{L^r}`, `v_ls[k] = ‖v(t_k)‖_{L^{2r/(r−2)}}`.
pub fn regularity_from_samples(times: &[f64], grad_lr: &[f64], v_ls: &[f64], q: f64, r: f64) -> Result<RegularityReport> {
    check_exponents(q, r)?;
    if times.len() < 2 || grad_lr.len() != times.len() || v_ls.len() != times.len() {
        return Err(AggError::InsufficientData(format!("need at least 2 aligned samples, got {}", times.len())));
    }
    let trapezoid = |f: &dyn Fn(usize) -> f64| -> f64 {
        times.windows(2).enumerate().map(|(k, w)| 0.5 * (w[1] - w[0]) * (f(k) + f(k + 1))).sum()
    };
    let i1 = trapezoid(&|k| grad_lr[k].powf(q)).powf(1.0 / q);
    let i2 = if q == 2.0 {
        v_ls.iter().fold(0.0f64, |m, x| m.max(*x))
    } else {
        let e = 2.0 * q / (q - 2.0);
        trapezoid(&|k| v_ls[k].powf(e)).powf(1.0 / e)
    };
    let (index_lhs, index_satisfied, r3_branch) = index_relation(q, r);
    let sampling_interval = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(RegularityReport { q, r, i1, i2, index_lhs, index_satisfied, r3_branch, sampling_interval, samples: times.len() })
}

/// Regularity monitor over a trajectory of states.
pub fn regularity_monitor(traj: &[State], q: f64, r: f64) -> Result<RegularityReport> {
    check_exponents(q, r)?;
    let s = if r == 2.0 { f64::INFINITY } else { 2.0 * r / (r - 2.0) };
    let times: Vec<f64> = traj.iter().map(|st| st.t).collect();
    let grad: Vec<f64> = traj.iter().map(|st| grad_v_norm(&st.v, r)).collect();
    let vs: Vec<f64> = traj.iter().map(|st| v_norm(&st.v, s)).collect();
    regularity_from_samples(&times, &grad, &vs, q, r)
}

/// One run of a dt-refinement study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuditRun {
    pub dt: f64,
    /// `|R(T)|`.
    pub final_residual: f64,
    /// `max_t |R(t)|`.
    pub max_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyAuditReport {
    pub runs: Vec<AuditRun>,
    /// Least-squares slope of `log|R(T)|` against `log dt`.
    pub order: f64,
    /// Orders between consecutive refinements.
    pub pairwise_orders: Vec<f64>,
    pub max_abs_residual: f64,
}

/// Summarises a set of runs that differ only in `dt`, each given as its
/// diagnostics trajectory.
pub fn energy_audit(runs: &[(f64, Vec<DiagnosticsRecord>)]) -> Result<EnergyAuditReport> {
    if runs.len() < 2 {
        return Err(AggError::InsufficientData(format!("need at least 2 runs, got {}", runs.len())));
    }
    let mut out = Vec::with_capacity(runs.len());
    for (dt, recs) in runs {
        let last = recs.last().ok_or_else(|| AggError::InsufficientData(format!("run with dt = {dt} is empty")))?;
        let max_residual = recs.iter().fold(0.0f64, |m, r| m.max(r.r_energy.abs()));
        out.push(AuditRun { dt: *dt, final_residual: last.r_energy.abs(), max_residual });
    }
    out.sort_by(|a, b| b.dt.total_cmp(&a.dt));
    if out.iter().any(|r| r.final_residual == 0.0 || !r.final_residual.is_finite()) {
        return Err(AggError::InsufficientData("budget residual vanished; order is undefined".into()));
    }
    let xs: Vec<f64> = out.iter().map(|r| r.dt.ln()).collect();
    let ys: Vec<f64> = out.iter().map(|r| r.final_residual.ln()).collect();
    let order = least_squares(&xs, &ys).0;
    let pairwise_orders = out
        .windows(2)
        .map(|w| (w[0].final_residual / w[1].final_residual).ln() / (w[0].dt / w[1].dt).ln())
        .collect();
    let max_abs_residual = out.iter().fold(0.0f64, |m, r| m.max(r.max_residual));
    Ok(EnergyAuditReport { runs: out, order, pairwise_orders, max_abs_residual })
}

/// Ordinary least squares `y ≈ slope·x + intercept`; returns
/// `(slope, intercept, r²)`.
pub(crate) fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_ops::{Boundary, GridSpec};

    fn params() -> PhysicalParams {
        PhysicalParams::simple(3.0, 1.0, 0.1, 0.05, 1.0, 2.0, 1e-2, 1.0).unwrap()
    }

    #[test]
    fn rest_state_energetics() {
        let g = GridSpec::new(8, 6, 2.0, 1.5, Boundary::Wall, Boundary::Periodic).unwrap();
        let p = params();
        let m = 0.3;
        let st = State::initial(ScalarField::constant(g, m), &p).unwrap();
        let en = Energetics::of(&st, &p);
        assert_eq!(en.e_kin, 0.0);
        assert_eq!(en.d_visc, 0.0);
        assert_eq!(en.d_chem, 0.0);
        assert!((en.e_free - 3.0 * p.psi(m)).abs() < 1e-14);
        let rec = record(&st, &p, &Accumulators::start(&en), None, 2.0).unwrap();
        assert_eq!(rec.r_energy, 0.0);
        assert!((rec.mass - 3.0 * m).abs() < 1e-14);
    }

    #[test]
    fn pure_phase_energy() {
        let g = GridSpec::square(4, 1.0, Boundary::Wall).unwrap();
        let p = params();
        let e = free_energy(&ScalarField::constant(g, 1.0), &p);
        assert!((e - (2f64.ln() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn index_relation_cases() {
        assert!(index_relation(2.5, 2.0).1);
        assert!(index_relation(2.0, 12.0 / 5.0).1);
        let (lhs, sat, r3) = index_relation(4.0, 3.0);
        assert!((lhs - 3.25).abs() < 1e-15 && !sat && r3);
        assert!(!index_relation(3.0, 2.0).1);
    }

    #[test]
    fn bad_exponents_rejected() {
        let t = [0.0, 1.0];
        assert!(matches!(regularity_from_samples(&t, &[1.0; 2], &[1.0; 2], 1.5, 2.0), Err(AggError::BadExponents { .. })));
        assert!(matches!(regularity_from_samples(&t, &[1.0; 2], &[1.0; 2], 2.0, 1.0), Err(AggError::BadExponents { .. })));
    }

    #[test]
    fn constant_integrand_identity() {
        let times: Vec<f64> = (0..=20).map(|k| 0.15 * k as f64).collect();
        let c = 1.7;
        let q = 2.5;
        let rep = regularity_from_samples(&times, &vec![c; 21], &vec![0.4; 21], q, 2.0).unwrap();
        let t: f64 = 3.0;
        assert!((rep.i1 - c * t.powf(1.0 / q)).abs() < 1e-12);
        assert!((rep.i2 - 0.4 * t.powf((q - 2.0) / (2.0 * q))).abs() < 1e-12);
    }

    #[test]
    fn least_squares_recovers_a_line() {
        let xs = [0.0, 1.0, 2.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| -1.5 * x + 0.25).collect();
        let (s, i, r2) = least_squares(&xs, &ys);
        assert!((s + 1.5).abs() < 1e-14 && (i - 0.25).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn audit_order_of_synthetic_first_order_data() {
        let mk = |dt: f64| {
            let mut r = DiagnosticsRecord::from_array([0.0; 14]);
            r.r_energy = 3.0 * dt;
            (dt, vec![r])
        };
        let rep = energy_audit(&[mk(1e-3), mk(5e-4), mk(2.5e-4)]).unwrap();
        assert!((rep.order - 1.0).abs() < 1e-12);
        assert!(energy_audit(&[mk(1e-3)]).is_err());
    }
}
