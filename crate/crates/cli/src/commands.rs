use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use agg_core::coupled_solver::{initial_phase, run as run_in_memory, RunConfig, State};
use agg_core::diagnostics::{energy_audit as audit, regularity_monitor, Accumulators, Energetics};
use agg_core::equilibrium::{decay_fit as fit, find_minimizer, lyapunov_experiment, MinimizerOptions};
use agg_core::io::{self, config_hash, list_snapshots, parse_config, read_table, CsvSink, Snapshot};
use agg_core::{AggError, Result};

use crate::Outcome;

pub fn parse_window(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `start,end`")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a >= 0.0 && b > a {
        Ok((a, b))
    } else {
        Err(format!("need 0 <= start < end, got {a},{b}"))
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&fs::read_to_string(path)?)
}

fn initial_state(cfg: &RunConfig) -> Result<State> {
    let phi = initial_phase(cfg.grid, &cfg.physics, &cfg.experiment)?;
    State::initial(phi, &cfg.physics)
}

pub fn run(config: &Path, out: &Path, resume: Option<&Path>) -> Result<Outcome> {
    let cfg = load_config(config)?;
    let summary = match resume {
        Some(snap) => io::resume_to_dir(&cfg, Snapshot::load(snap)?, out)?,
        None => io::run_to_dir(&cfg, initial_state(&cfg)?, out)?,
    };
    let s = &summary.state;
    println!("steps        {}", s.step);
    println!("t            {:.6e}", s.t);
    println!("mass         {:.16e}", s.phi.mean());
    println!("R_energy     {:.6e}", summary.acc.residual(Energetics::of(s, &cfg.physics).total()));
    println!("min 1-|phi|  {:.6e}", summary.min_separation);
    println!("output       {}", out.display());
    Ok(Outcome::Ok)
}

pub fn equilibrate(config: &Path, out: Option<&Path>) -> Result<Outcome> {
    let cfg = load_config(config)?;
    let seed = initial_phase(cfg.grid, &cfg.physics, &cfg.experiment)?;
    let ss = find_minimizer(&seed, &cfg.physics, &MinimizerOptions::from_config(&cfg))?;
    println!("mass                 {:.16e}", ss.m);
    println!("E_free               {:.16e}", ss.e_free_value);
    println!("station_residual_L2  {:.6e}", ss.station_residual_l2);
    println!("mu_const             {:.16e}", ss.mu_const);
    println!("max |phi|            {:.6e}", ss.phi_star.max_abs());
    println!("flow time / steps    {:.6e} / {}", ss.t, ss.steps);
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let mut state = State::initial(ss.phi_star.clone(), &cfg.physics)?;
        state.t = ss.t;
        let en = Energetics::of(&state, &cfg.physics);
        let snap = Snapshot { state, acc: Accumulators::start(&en), config_hash: config_hash(&cfg) };
        snap.save(&dir.join("steady.bin"))?;
    }
    Ok(Outcome::Ok)
}

pub fn lyapunov(
    config: &Path,
    eta1: Option<f64>,
    eta2: Option<f64>,
    eps: Option<f64>,
    t_end: Option<f64>,
    out: Option<&Path>,
) -> Result<Outcome> {
    let cfg = load_config(config)?;
    let e = &cfg.experiment;
    let (eta1, eta2, eps) = (eta1.unwrap_or(e.eta1), eta2.unwrap_or(e.eta2), eps.unwrap_or(e.eps));
    let t_end = t_end.unwrap_or(cfg.t_end);
    let seed = initial_phase(cfg.grid, &cfg.physics, e)?;
    let ss = find_minimizer(&seed, &cfg.physics, &MinimizerOptions::from_config(&cfg))?;
    let rep = lyapunov_experiment(&ss, eta1, eta2, eps, t_end, &cfg)?;
    println!("minimiser residual   {:.6e}", ss.station_residual_l2);
    println!("eta1 eta2 eps        {eta1:e} {eta2:e} {eps:e}");
    println!("T                    {t_end:e}");
    println!("sup |phi-phi*|_H2p   {:.6e}", rep.sup_h2_dev);
    println!("sup |v|_L2           {:.6e}", rep.sup_v_l2);
    println!("max E_total increase {:.6e}", rep.max_energy_increase);
    println!("max |R_energy|       {:.6e}", rep.max_budget_residual);
    println!("energy monotone      {}", rep.energy_monotone);
    match rep.escape_time {
        Some(t) => println!("escape time          {t:.6e}"),
        None => println!("escape time          none"),
    }
    println!("(H2 deviations use the Laplacian-based proxy norm)");
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let file = BufWriter::new(File::create(dir.join("lyapunov.csv"))?);
        let mut csv = CsvSink::new(file, &["t", "h2_dev", "h1_dev", "v_L2", "E_total", "R_energy", "y"])?;
        for s in &rep.samples {
            csv.row(&[s.t, s.h2_dev, s.h1_dev, s.v_l2, s.e_total, s.r_energy, s.y()])?;
        }
        csv.flush()?;
    }
    if rep.passed {
        println!("PASS");
        Ok(Outcome::Ok)
    } else {
        println!("FAIL");
        Ok(Outcome::Failed(format!("deviation {:.3e} exceeded eps = {eps:e}", rep.sup_h2_dev)))
    }
}

pub fn decay_fit(csv: &Path, column: &str, time_column: &str, window: Option<(f64, f64)>) -> Result<Outcome> {
    let table = read_table(File::open(csv)?)?;
    if let Some(why) = &table.failed {
        log::warn!("{} records a failed run ({why}); fitting the rows before the failure", csv.display());
    }
    let t = table.column(time_column)?;
    let y = table.column(column)?;
    let r = fit(&t, &y, window)?;
    println!("window     [{:e}, {:e}] ({} samples)", r.window.0, r.window.1, r.samples);
    println!("alpha_hat  {:.10e}", r.alpha_hat);
    println!("theta_hat  {:.10e}", r.theta_hat);
    println!("r_squared  {:.6}", r.r_squared);
    Ok(Outcome::Ok)
}

pub fn energy_audit(config: &Path, dts: &[f64], out: Option<&Path>) -> Result<Outcome> {
    let cfg = load_config(config)?;
    let dts = if dts.is_empty() { cfg.experiment.dts.clone() } else { dts.to_vec() };
    if dts.len() < 2 {
        return Err(AggError::Validation { key: "dts".into(), reason: "need at least two time steps".into() });
    }
    let initial = initial_state(&cfg)?;
    let mut runs = Vec::new();
    for &dt in &dts {
        let c = cfg.with_dt(dt);
        let steps = c.t_end / dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(AggError::Validation { key: "dts".into(), reason: format!("t_end is not a multiple of {dt}") });
        }
        log::info!("energy audit: dt = {dt:e}");
        let (_, out_run) = run_in_memory(&c, initial.clone())?;
        runs.push((dt, out_run.records));
    }
    let rep = audit(&runs)?;
    println!("{:>14} {:>14} {:>14}", "dt", "|R(T)|", "max|R|");
    for r in &rep.runs {
        println!("{:>14.6e} {:>14.6e} {:>14.6e}", r.dt, r.final_residual, r.max_residual);
    }
    let pairs: Vec<String> = rep.pairwise_orders.iter().map(|o| format!("{o:.4}")).collect();
    println!("pairwise orders  {}", pairs.join(" "));
    println!("observed order   {:.4}", rep.order);
    let dir = out.unwrap_or_else(|| config.parent().unwrap_or(Path::new(".")));
    {
        fs::create_dir_all(dir)?;
        let mut csv = CsvSink::new(BufWriter::new(File::create(dir.join("audit.csv"))?), &["dt", "R_final", "R_max"])?;
        for r in &rep.runs {
            csv.row(&[r.dt, r.final_residual, r.max_residual])?;
        }
        csv.flush()?;
        for (k, (dt, recs)) in runs.iter().enumerate() {
            let file = BufWriter::new(File::create(dir.join(format!("diag_dt{k}.csv")))?);
            let mut d = CsvSink::diagnostics(file)?;
            recs.iter().try_for_each(|r| d.record(r))?;
            d.flush()?;
            log::debug!("wrote diagnostics for dt = {dt:e}");
        }
    }
    println!("saved            {}", dir.join("audit.csv").display());
    Ok(Outcome::Ok)
}

pub fn regularity(dir: &Path, q: f64, r: f64) -> Result<Outcome> {
    let paths = list_snapshots(dir)?;
    let states = paths.iter().map(|p| Snapshot::load(p).map(|s| s.state)).collect::<Result<Vec<_>>>()?;
    let rep = regularity_monitor(&states, q, r)?;
    println!("q r                {q} {r}");
    println!("5/q + 6/r          {:.12}", rep.index_lhs);
    println!("index satisfied    {}", rep.index_satisfied);
    println!("r = 3 branch       {}", rep.r3_branch);
    println!("I1                 {:.10e}", rep.i1);
    println!("I2                 {:.10e}", rep.i2);
    println!("samples            {} (max gap {:.3e})", rep.samples, rep.sampling_interval);
    Ok(Outcome::Ok)
}
