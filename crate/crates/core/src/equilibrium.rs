//! Constrained free-energy minimisers, the stability experiment around them,
//! and power-law decay fits.

use std::f64::consts::PI;

use crate::cahn_hilliard::{ch_step, check_separation, chemical_potential, free_energy, ChSolveParams};
use crate::coupled_solver::{run_observed, RunConfig, RunObserver, State};
use crate::diagnostics::{least_squares, Accumulators, Energetics};
use crate::error::{AggError, Result};
use crate::grid_ops::{grad_cc, norm, Boundary, GridSpec, NormKind, ScalarField, VectorField};
use crate::materials::PhysicalParams;
use crate::navier_stokes::stream_field;

#[derive(Clone, Debug, PartialEq)]
pub struct SteadyState {
    pub phi_star: ScalarField,
    pub m: f64,
    pub e_free_value: f64,
    pub station_residual_l2: f64,
    /// Lagrange multiplier of the mass constraint.
    pub mu_const: f64,
    /// Flow time and number of steps taken to get here.
    pub t: f64,
    pub steps: usize,
    /// Largest single-step growth of the free energy along the flow.
    pub max_energy_increase: f64,
}

/// `μ(ψ) − mean μ(ψ)`, its `L²` norm and the mean.
pub fn station_residual(psi: &ScalarField, p: &PhysicalParams) -> Result<(ScalarField, f64, f64)> {
    check_separation(psi, p)?;
    let mut g = chemical_potential(psi, p)?;
    let mu_const = g.mean();
    g.sub_mean();
    let l2 = norm(&g, NormKind::Lp(2.0))?;
    Ok((g, l2, mu_const))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinimizerOptions {
    /// Target for both `‖∇μ‖_{L²}` and the stationary residual.
    pub tol: f64,
    pub max_t: f64,
    pub dt0: f64,
    pub dt_max: f64,
    pub ch: ChSolveParams,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_t: 1e4, dt0: 1e-4, dt_max: 10.0, ch: ChSolveParams::default() }
    }
}

impl MinimizerOptions {
    /// Tolerances from the experiment section, Newton settings from the
    /// scheme.
    pub fn from_config(cfg: &RunConfig) -> Self {
        let e = &cfg.experiment;
        Self {
            tol: e.minimizer_tol,
            max_t: e.minimizer_max_t,
            dt_max: e.minimizer_dt_max,
            ch: cfg.scheme.ch,
            ..Self::default()
        }
    }
}

/// Relative tolerance of the per-step free-energy descent audit.
const DESCENT_TOL: f64 = 1e-10;

/// Runs the pure Cahn–Hilliard flow (`v = 0`) from `seed` until the chemical
/// potential is constant to `opts.tol`. The step doubles after every accepted
/// step up to `dt_max` and halves when a step fails.
pub fn find_minimizer(seed: &ScalarField, p: &PhysicalParams, opts: &MinimizerOptions) -> Result<SteadyState> {
    check_separation(seed, p)?;
    let g = seed.grid;
    let zero = VectorField::zeros(g);
    let mut phi = seed.clone();
    let mut e = free_energy(&phi, p);
    let e0 = e.abs().max(f64::MIN_POSITIVE);
    let (mut t, mut dt, mut steps) = (0.0, opts.dt0, 0usize);
    let mut max_inc = f64::NEG_INFINITY;
    loop {
        let mu = chemical_potential(&phi, p)?;
        let grad_mu = grad_cc(&mu).l2();
        let (_, res, mu_const) = station_residual(&phi, p)?;
        if grad_mu <= opts.tol && res <= opts.tol {
            return Ok(SteadyState {
                m: phi.mean(),
                e_free_value: e,
                station_residual_l2: res,
                mu_const,
                phi_star: phi,
                t,
                steps,
                max_energy_increase: max_inc.max(0.0),
            });
        }
        if t >= opts.max_t {
            return Err(AggError::NotConverged { t, residual: grad_mu });
        }
        match ch_step(&phi, &zero, dt, p, &opts.ch) {
            Ok(out) => {
                let e_new = free_energy(&out.phi, p);
                let inc = e_new - e;
                max_inc = max_inc.max(inc);
                if inc > DESCENT_TOL * e0 {
                    log::warn!("gradient flow step {steps}: free energy rose by {inc:.3e}");
                }
                phi = out.phi;
                e = e_new;
                t += dt;
                steps += 1;
                dt = (2.0 * dt).min(opts.dt_max);
            }
            Err(
                err @ (AggError::NewtonDiverged { .. } | AggError::NonConvergence { .. } | AggError::SeparationViolated { .. }),
            ) => {
                if dt <= opts.dt0 * 1e-6 {
                    return Err(err);
                }
                log::debug!("gradient flow: step failed at dt = {dt:.3e} ({err}), halving");
                dt *= 0.5;
            }
            Err(err) => return Err(err),
        }
    }
}

/// One sample of the stability experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovSample {
    pub t: f64,
    /// `‖φ − φ*‖_{H2proxy}`.
    pub h2_dev: f64,
    /// `‖φ − φ*‖_{H¹}`.
    pub h1_dev: f64,
    pub v_l2: f64,
    pub e_total: f64,
    pub r_energy: f64,
}

impl LyapunovSample {
    /// Decay functional `‖v‖ + ‖φ − φ*‖_{H¹}`.
    pub fn y(&self) -> f64 {
        self.v_l2 + self.h1_dev
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovReport {
    pub eps: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub t_end: f64,
    /// Deviations use the Laplacian-based `H²` proxy norm.
    pub sup_h2_dev: f64,
    pub sup_v_l2: f64,
    pub passed: bool,
    pub escape_time: Option<f64>,
    /// Largest step-to-step growth of the total energy.
    pub max_energy_increase: f64,
    pub max_budget_residual: f64,
    /// Growth never exceeds the budget residual.
    pub energy_monotone: bool,
    /// One sample per step, starting at `t = 0`.
    pub samples: Vec<LyapunovSample>,
}

/// Mean-zero smooth bump used to perturb the phase field.
pub fn phase_perturbation(g: GridSpec) -> ScalarField {
    let k = |bc: Boundary| if bc == Boundary::Wall { PI } else { 2.0 * PI };
    let (kx, ky) = (k(g.bc_x) / g.lx, k(g.bc_y) / g.ly);
    let mut f = ScalarField::from_fn(g, |x, y| (kx * x).cos() * (ky * y).cos());
    f.sub_mean();
    f
}

/// Solenoidal vortex used to perturb the velocity: the curl of
/// `sin²(πx/Lx) sin²(πy/Ly)`, which vanishes on every edge.
pub fn velocity_perturbation(g: GridSpec) -> VectorField {
    stream_field(g, |x, y| ((PI * x / g.lx).sin() * (PI * y / g.ly).sin()).powi(2))
}

/// Initial state `(φ* + η₂ g/‖g‖, η₁ V/‖V‖)` with the mean reset to `m`.
pub fn perturbed_state(ss: &SteadyState, eta1: f64, eta2: f64, p: &PhysicalParams) -> Result<State> {
    let g = ss.phi_star.grid;
    let bump = phase_perturbation(g);
    let gn = norm(&bump, NormKind::H2Proxy)?;
    let mut phi = ss.phi_star.clone();
    if eta2 > 0.0 {
        phi.axpy(eta2 / gn, &bump);
    }
    let shift = ss.m - phi.mean();
    phi.values.iter_mut().for_each(|v| *v += shift);
    let max_abs = phi.max_abs();
    if max_abs > p.phi_limit() || !phi.is_finite() {
        return Err(AggError::PerturbationTooLarge { max_abs });
    }
    let mut state = State::initial(phi, p)?;
    if eta1 > 0.0 {
        let mut v = velocity_perturbation(g);
        let vn = v.l2();
        v.scale(eta1 / vn);
        state.v = v;
    }
    Ok(state)
}

struct Tracker<'a> {
    phi_star: &'a ScalarField,
    samples: Vec<LyapunovSample>,
}

impl Tracker<'_> {
    fn sample(&mut self, state: &State, acc: &Accumulators, en: &Energetics) -> Result<()> {
        let d = state.phi.sub(self.phi_star);
        self.samples.push(LyapunovSample {
            t: state.t,
            h2_dev: norm(&d, NormKind::H2Proxy)?,
            h1_dev: norm(&d, NormKind::H1)?,
            v_l2: state.v.l2(),
            e_total: en.total(),
            r_energy: acc.residual(en.total()),
        });
        Ok(())
    }
}

impl RunObserver for Tracker<'_> {
    fn on_step(&mut self, state: &State, acc: &Accumulators, en: &Energetics) -> Result<()> {
        self.sample(state, acc, en)
    }
}

/// Perturbs the minimiser, runs the coupled system to `t_end` with the
/// time stepping of `cfg`, and reports the largest excursions.
pub fn lyapunov_experiment(
    ss: &SteadyState,
    eta1: f64,
    eta2: f64,
    eps: f64,
    t_end: f64,
    cfg: &RunConfig,
) -> Result<LyapunovReport> {
    for (key, v) in [("eta1", eta1), ("eta2", eta2)] {
        if !(0.0..1.0).contains(&v) {
            return Err(AggError::Validation { key: key.into(), reason: format!("must lie in [0, 1), got {v}") });
        }
    }
    let p = &cfg.physics;
    let initial = perturbed_state(ss, eta1, eta2, p)?;
    let mut cfg = cfg.clone();
    cfg.t_end = t_end;
    cfg.snapshot_every = 0;
    let en0 = Energetics::of(&initial, p);
    let acc0 = Accumulators::start(&en0);
    let mut tracker = Tracker { phi_star: &ss.phi_star, samples: Vec::new() };
    tracker.sample(&initial, &acc0, &en0)?;
    run_observed(&cfg, initial, Some(acc0), &mut tracker)?;
    let samples = tracker.samples;

    let sup_h2_dev = samples.iter().fold(0.0f64, |m, s| m.max(s.h2_dev));
    let sup_v_l2 = samples.iter().fold(0.0f64, |m, s| m.max(s.v_l2));
    let escape_time = samples.iter().find(|s| s.h2_dev > eps).map(|s| s.t);
    let max_energy_increase = samples.windows(2).map(|w| w[1].e_total - w[0].e_total).fold(f64::NEG_INFINITY, f64::max);
    let max_budget_residual = samples.iter().fold(0.0f64, |m, s| m.max(s.r_energy.abs()));
    Ok(LyapunovReport {
        eps,
        eta1,
        eta2,
        t_end,
        sup_h2_dev,
        sup_v_l2,
        passed: escape_time.is_none(),
        escape_time,
        max_energy_increase,
        max_budget_residual,
        energy_monotone: max_energy_increase <= max_budget_residual,
        samples,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFitResult {
    /// Exponent of `(1 + t)^{−α}`.
    pub alpha_hat: f64,
    /// `α / (1 + 2α)`.
    pub theta_hat: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Inverse of `α = θ / (1 − 2θ)`.
pub fn theta_of_alpha(alpha: f64) -> f64 {
    alpha / (1.0 + 2.0 * alpha)
}

/// Least-squares fit of `log y` against `log(1 + t)` over `window`
/// (default: the second half of the time range).
pub fn decay_fit(times: &[f64], ys: &[f64], window: Option<(f64, f64)>) -> Result<DecayFitResult> {
    if times.len() != ys.len() || times.is_empty() {
        return Err(AggError::InsufficientData(format!("{} times for {} values", times.len(), ys.len())));
    }
    let t_last = times[times.len() - 1];
    let (ta, tb) = window.unwrap_or((0.5 * t_last, t_last));
    let (mut xs, mut ls) = (Vec::new(), Vec::new());
    for (&t, &y) in times.iter().zip(ys) {
        if t < ta || t > tb {
            continue;
        }
        if !(y > 0.0) || !y.is_finite() {
            return Err(AggError::DegenerateWindow(format!(
                "y({t}) = {y}; the trajectory reached equilibrium to machine precision (super-polynomial decay)"
            )));
        }
        xs.push((1.0 + t).ln());
        ls.push(y.ln());
    }
    if xs.len() < 10 {
        return Err(AggError::InsufficientData(format!("window [{ta}, {tb}] holds {} records, need 10", xs.len())));
    }
    let (slope, _, r_squared) = least_squares(&xs, &ls);
    let alpha_hat = -slope;
    Ok(DecayFitResult { alpha_hat, theta_hat: theta_of_alpha(alpha_hat), r_squared, window: (ta, tb), samples: xs.len() })
}

/// Decay fit of `‖v‖ + ‖φ − φ∞‖_{H¹}` along a trajectory.
pub fn decay_fit_states(traj: &[State], phi_inf: &ScalarField, window: Option<(f64, f64)>) -> Result<DecayFitResult> {
    let times: Vec<f64> = traj.iter().map(|s| s.t).collect();
    let ys = traj
        .iter()
        .map(|s| Ok(s.v.l2() + norm(&s.phi.sub(phi_inf), NormKind::H1)?))
        .collect::<Result<Vec<f64>>>()?;
    decay_fit(&times, &ys, window)
}
