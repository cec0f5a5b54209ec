//! Full time step (Cahn–Hilliard, momentum predictor, projection) and the
//! fixed-step trajectory driver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cahn_hilliard::{ch_step, chemical_potential, ChSolveParams};
use crate::diagnostics::{kinetic_energy, record, Accumulators, DiagnosticsRecord, Energetics};
use crate::error::{AggError, Result};
use crate::grid_ops::{div_face, Boundary, GridSpec, ScalarField, VectorField};
use crate::materials::PhysicalParams;
use crate::navier_stokes::{
    capillary_force, face_density, face_mass_residual, flux_j, momentum_predict, project, viscous_dissipation,
    NsSolveParams, Viscosity,
};

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub step: u64,
    pub v: VectorField,
    pub phi: ScalarField,
    pub mu: ScalarField,
    pub p: ScalarField,
}

impl State {
    /// Zero velocity and pressure at `t = 0`.
    pub fn at_rest(phi: ScalarField, mu: ScalarField) -> Self {
        let g = phi.grid;
        Self { t: 0.0, step: 0, v: VectorField::zeros(g), phi, mu, p: ScalarField::zeros(g) }
    }

    /// Rest state with `μ = μ(φ)`.
    pub fn initial(phi: ScalarField, p: &PhysicalParams) -> Result<Self> {
        let mu = chemical_potential(&phi, p)?;
        Ok(Self::at_rest(phi, mu))
    }

    pub fn grid(&self) -> GridSpec {
        self.phi.grid
    }

    /// `max |div v|·h / max |v|` (zero for a vanishing velocity).
    pub fn divergence_ratio(&self) -> f64 {
        let g = self.grid();
        let vmax = self.v.max_abs();
        if vmax == 0.0 {
            return 0.0;
        }
        div_face(&self.v).max_abs() * g.hx.min(g.hy) / vmax
    }

    /// `min(1 − |φ|)`.
    pub fn separation(&self) -> f64 {
        1.0 - self.phi.max_abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ordering {
    /// Phase update first; the capillary force uses `(φ^{n+1}, μ^{n+1})`.
    ChThenNs,
    /// Flow update first with `(φⁿ, μⁿ)`, then the phase update with `v^{n+1}`.
    NsThenCh,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeOptions {
    pub ordering: Ordering,
    pub ch: ChSolveParams,
    pub ns: NsSolveParams,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self { ordering: Ordering::ChThenNs, ch: ChSolveParams::default(), ns: NsSolveParams::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentMode {
    Run,
    Equilibrate,
    Lyapunov,
    EnergyAudit,
}

impl ExperimentMode {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentMode::Run => "run",
            ExperimentMode::Equilibrate => "equilibrate",
            ExperimentMode::Lyapunov => "lyapunov",
            ExperimentMode::EnergyAudit => "energy-audit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "run" => ExperimentMode::Run,
            "equilibrate" => ExperimentMode::Equilibrate,
            "lyapunov" => ExperimentMode::Lyapunov,
            "energy-audit" => ExperimentMode::EnergyAudit,
            _ => return None,
        })
    }
}

/// Initial phase field families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialCondition {
    /// `φ ≡ mean`.
    Flat,
    /// Independent uniform cell values in `mean ± amplitude`.
    Noise,
    /// Random combination of the lowest `modes` cosine/Fourier modes per
    /// axis, scaled to `max |φ − mean| = amplitude`.
    SmoothNoise,
    /// `mean ± amplitude` across the plane `x = lx/2`.
    Step,
}

impl InitialCondition {
    pub fn name(self) -> &'static str {
        match self {
            InitialCondition::Flat => "flat",
            InitialCondition::Noise => "noise",
            InitialCondition::SmoothNoise => "smooth_noise",
            InitialCondition::Step => "step",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "flat" => InitialCondition::Flat,
            "noise" => InitialCondition::Noise,
            "smooth_noise" => InitialCondition::SmoothNoise,
            "step" => InitialCondition::Step,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: ExperimentMode,
    pub initial: InitialCondition,
    pub mean: f64,
    pub amplitude: f64,
    pub modes: usize,
    pub seed: u64,
    /// Exponent `r` of the `grad_v_Lr` column.
    pub grad_r: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eps: f64,
    pub minimizer_tol: f64,
    pub minimizer_max_t: f64,
    pub minimizer_dt_max: f64,
    /// Decay-fit window; `None` uses the second half of the run.
    pub window: Option<(f64, f64)>,
    pub dts: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: ExperimentMode::Run,
            initial: InitialCondition::SmoothNoise,
            mean: 0.0,
            amplitude: 1e-2,
            modes: 8,
            seed: 1,
            grad_r: 2.0,
            eta1: 1e-3,
            eta2: 1e-3,
            eps: 0.1,
            minimizer_tol: 1e-9,
            minimizer_max_t: 1e4,
            minimizer_dt_max: 10.0,
            window: None,
            dts: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub physics: PhysicalParams,
    pub dt: f64,
    pub t_end: f64,
    /// Steps between snapshots; 0 disables them.
    pub snapshot_every: u64,
    /// Steps between diagnostics records (at least 1).
    pub diag_every: u64,
    pub scheme: SchemeOptions,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    /// Number of steps from `t = 0` to `t_end`.
    pub fn total_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        let mut c = self.clone();
        c.dt = dt;
        c
    }
}

/// Initial phase field described by the experiment section.
pub fn initial_phase(g: GridSpec, p: &PhysicalParams, e: &ExperimentConfig) -> Result<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(e.seed);
    let mut f = match e.initial {
        InitialCondition::Flat => ScalarField::zeros(g),
        InitialCondition::Noise => {
            ScalarField::from_values(g, (0..g.cells()).map(|_| rng.gen_range(-e.amplitude..=e.amplitude)).collect())
        }
        InitialCondition::SmoothNoise => smooth_noise(g, e.modes.max(1), e.amplitude, &mut rng),
        InitialCondition::Step => ScalarField::from_fn(g, |x, _| if x < 0.5 * g.lx { -e.amplitude } else { e.amplitude }),
    };
    f.sub_mean();
    f.values.iter_mut().for_each(|v| *v += e.mean);
    let m = f.max_abs();
    if m > p.phi_limit() || !f.is_finite() {
        return Err(AggError::Validation {
            key: "experiment.amplitude".into(),
            reason: format!("initial phase field reaches |phi| = {m}"),
        });
    }
    Ok(f)
}

fn smooth_noise(g: GridSpec, modes: usize, amp: f64, rng: &mut ChaCha8Rng) -> ScalarField {
    use std::f64::consts::PI;
    let basis = |bc: Boundary, k: usize, len: f64, phase: f64| {
        move |s: f64| match bc {
            Boundary::Wall => (PI * k as f64 * s / len).cos(),
            Boundary::Periodic => (2.0 * PI * k as f64 * s / len + phase).cos(),
        }
    };
    let mut vals = vec![0.0; g.cells()];
    for ky in 0..=modes {
        for kx in 0..=modes {
            if kx == 0 && ky == 0 {
                continue;
            }
            let c: f64 = rng.gen_range(-1.0..1.0);
            let (px, py): (f64, f64) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
            let bx = basis(g.bc_x, kx, g.lx, px);
            let by = basis(g.bc_y, ky, g.ly, py);
            for j in 0..g.ny {
                let yv = by(g.y_center(j));
                for i in 0..g.nx {
                    vals[j * g.nx + i] += c * bx(g.x_center(i)) * yv;
                }
            }
        }
    }
    let mut f = ScalarField::from_values(g, vals);
    f.sub_mean();
    let m = f.max_abs();
    if m > 0.0 {
        f.values.iter_mut().for_each(|v| *v *= amp / m);
    }
    f
}

/// Per-step solver statistics and the kinetic-energy audit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    /// `ΔE_kin + dt D_visc(v^{n+1}) − dt⟨F, v^{n+1}⟩`.
    pub kinetic_residual: f64,
}

/// One full step.
pub fn step(s: &State, cfg: &RunConfig) -> Result<State> {
    step_with_info(s, &cfg.physics, cfg.dt, &cfg.scheme).map(|(st, _)| st)
}

pub fn step_with_info(s: &State, p: &PhysicalParams, dt: f64, scheme: &SchemeOptions) -> Result<(State, StepInfo)> {
    let tag = |e: AggError| e.at_step(s.step + 1);
    let (phi, mu, v, pr, ch) = match scheme.ordering {
        Ordering::ChThenNs => {
            let ch = ch_step(&s.phi, &s.v, dt, p, &scheme.ch).map_err(tag)?;
            let vs = momentum_predict(s, &ch.phi, &ch.mu, dt, p, &scheme.ns).map_err(tag)?;
            if log::log_enabled!(log::Level::Debug) {
                log_continuity(s, &ch.phi, &ch.mu, dt, p, &scheme.ns);
            }
            let rho = ch.phi.map(|x| p.rho_of(x));
            let (v, pr) = project(&vs, &rho, &s.p, dt, &scheme.ns.poisson).map_err(tag)?;
            (ch.phi.clone(), ch.mu.clone(), v, pr, ch)
        }
        Ordering::NsThenCh => {
            let vs = momentum_predict(s, &s.phi, &s.mu, dt, p, &scheme.ns).map_err(tag)?;
            let rho = s.phi.map(|x| p.rho_of(x));
            let (v, pr) = project(&vs, &rho, &s.p, dt, &scheme.ns.poisson).map_err(tag)?;
            let ch = ch_step(&s.phi, &v, dt, p, &scheme.ch).map_err(tag)?;
            (ch.phi.clone(), ch.mu.clone(), v, pr, ch)
        }
    };
    let force = capillary_force(&phi, &mu);
    let kinetic_residual = kinetic_energy(&v, &phi, p) - kinetic_energy(&s.v, &s.phi, p)
        + dt * viscous_dissipation(&v, &Viscosity::from_phi(&phi, p))
        - dt * force.inner(&v);
    log::trace!("step {}: kinetic budget residual {kinetic_residual:.3e}", s.step + 1);
    let next = State { t: (s.step + 1) as f64 * dt, step: s.step + 1, v, phi, mu, p: pr };
    let info = StepInfo {
        newton_iterations: ch.residuals.len() - 1,
        linear_iterations: ch.linear_iterations,
        kinetic_residual,
    };
    Ok((next, info))
}

/// The conservative momentum form used here and the `ρ ∂ₜv` form differ by
/// `v` times the face continuity residual; log its size.
fn log_continuity(s: &State, phi_new: &ScalarField, mu_new: &ScalarField, dt: f64, p: &PhysicalParams, ns: &NsSolveParams) {
    let rho_old = face_density(&s.phi, p);
    let mut m = s.v.clone();
    m.mul_faces(&rho_old);
    if ns.flux_j {
        m.axpy(1.0, &flux_j(&s.phi, mu_new, p));
    }
    let r = face_mass_residual(&rho_old, &face_density(phi_new, p), &m, dt);
    log::debug!("step {}: face continuity residual {r:.3e}, |v| {:.3e}", s.step + 1, s.v.max_abs());
}

/// Receives run output as it is produced.
pub trait RunObserver {
    fn on_record(&mut self, _rec: &DiagnosticsRecord) -> Result<()> {
        Ok(())
    }
    fn on_snapshot(&mut self, _state: &State, _acc: &Accumulators) -> Result<()> {
        Ok(())
    }
    /// Called after every accepted step with its energies.
    fn on_step(&mut self, _state: &State, _acc: &Accumulators, _en: &Energetics) -> Result<()> {
        Ok(())
    }
    /// Called once before an error is returned.
    fn on_failure(&mut self, _err: &AggError, _last: &State) -> Result<()> {
        Ok(())
    }
}

/// Collects everything in memory.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<(State, Accumulators)>,
    /// Smallest `1 − |φ|` over every step.
    pub min_separation: f64,
    pub max_kinetic_residual: f64,
}

impl RunObserver for RunOutput {
    fn on_record(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        self.records.push(*rec);
        Ok(())
    }
    fn on_snapshot(&mut self, state: &State, acc: &Accumulators) -> Result<()> {
        self.snapshots.push((state.clone(), *acc));
        Ok(())
    }
}

/// Summary returned by [`run_observed`].
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub state: State,
    pub acc: Accumulators,
    pub min_separation: f64,
    pub max_kinetic_residual: f64,
}

/// Runs from `initial` to `cfg.t_end`. Passing `acc` resumes a run from a
/// snapshot; otherwise the initial state is recorded first.
pub fn run_observed(
    cfg: &RunConfig,
    initial: State,
    acc: Option<Accumulators>,
    obs: &mut dyn RunObserver,
) -> Result<RunSummary> {
    let p = &cfg.physics;
    let n_total = cfg.total_steps();
    let every = cfg.diag_every.max(1);
    let mut state = initial;
    let mut acc = match acc {
        Some(a) => a,
        None => {
            let en = Energetics::of(&state, p);
            let a = Accumulators::start(&en);
            let rec = record(&state, p, &a, None, cfg.experiment.grad_r)?;
            obs.on_record(&rec)?;
            if cfg.snapshot_every > 0 {
                obs.on_snapshot(&state, &a)?;
            }
            a
        }
    };
    let m0 = state.phi.mean();
    let mut min_sep = state.separation();
    let mut max_kin = 0.0f64;
    while state.step < n_total {
        let (next, info) = match step_with_info(&state, p, cfg.dt, &cfg.scheme) {
            Ok(x) => x,
            Err(e) => {
                obs.on_failure(&e, &state)?;
                return Err(e);
            }
        };
        let en = Energetics::of(&next, p);
        acc.advance(&en, cfg.dt);
        obs.on_step(&next, &acc, &en)?;
        min_sep = min_sep.min(next.separation());
        max_kin = max_kin.max(info.kinetic_residual.abs());
        let drift = (next.phi.mean() - m0).abs();
        if drift > 1e-12 {
            log::warn!("step {}: mean of phi drifted by {drift:.3e}", next.step);
        }
        if next.step % every == 0 || next.step == n_total {
            let mut dphi = next.phi.sub(&state.phi);
            dphi.values.iter_mut().for_each(|v| *v /= cfg.dt);
            let rec = match record(&next, p, &acc, Some(&dphi), cfg.experiment.grad_r) {
                Ok(r) => r,
                Err(e) => {
                    let e = e.at_step(next.step);
                    obs.on_failure(&e, &next)?;
                    return Err(e);
                }
            };
            obs.on_record(&rec)?;
        }
        if cfg.snapshot_every > 0 && (next.step % cfg.snapshot_every == 0 || next.step == n_total) {
            obs.on_snapshot(&next, &acc)?;
        }
        state = next;
    }
    Ok(RunSummary { state, acc, min_separation: min_sep, max_kinetic_residual: max_kin })
}

/// In-memory run.
pub fn run(cfg: &RunConfig, initial: State) -> Result<(State, RunOutput)> {
    let mut out = RunOutput::default();
    let summary = run_observed(cfg, initial, None, &mut out)?;
    out.min_separation = summary.min_separation;
    out.max_kinetic_residual = summary.max_kinetic_residual;
    Ok((summary.state, out))
}
