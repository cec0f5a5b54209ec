//! Plain `key = value` run configuration.
//!
//! ```text
//! [grid]
//! nx = 64
//! ny = 64
//! bc = wall            # or bc_x / bc_y separately
//!
//! [physics]
//! rho1 = 3
//! rho2 = 1
//! nu1 = 0.05
//! nu2 = 0.05
//! theta = 1
//! theta0 = 2
//! a = 2e-3             # polynomial coefficients, ascending: a = 2e-3, 0, 1e-3
//! b = 0.08
//!
//! [scheme]
//! dt = 1e-3
//! t_end = 0.5
//! ```
//!
//! Every other key has a default (see [`KEYS`]). Unknown and repeated keys
//! are parse errors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::cahn_hilliard::ChSolveParams;
use crate::coupled_solver::{ExperimentConfig, ExperimentMode, InitialCondition, Ordering, RunConfig, SchemeOptions};
use crate::error::{AggError, Result};
use crate::grid_ops::{Boundary, GridSpec, PoissonOptions};
use crate::materials::{PhysicalParams, Polynomial, DEFAULT_SEP_GUARD};
use crate::navier_stokes::NsSolveParams;

const SECTIONS: [&str; 4] = ["grid", "physics", "scheme", "experiment"];

/// Every accepted `section.key`.
pub const KEYS: &[&str] = &[
    "grid.nx",
    "grid.ny",
    "grid.lx",
    "grid.ly",
    "grid.bc",
    "grid.bc_x",
    "grid.bc_y",
    "physics.rho1",
    "physics.rho2",
    "physics.nu1",
    "physics.nu2",
    "physics.theta",
    "physics.theta0",
    "physics.a",
    "physics.b",
    "physics.sep_guard",
    "scheme.dt",
    "scheme.t_end",
    "scheme.snapshot_every",
    "scheme.diag_every",
    "scheme.ordering",
    "scheme.newton_tol",
    "scheme.newton_max",
    "scheme.max_halvings",
    "scheme.linear_tol",
    "scheme.linear_max",
    "scheme.visc_tol",
    "scheme.visc_max",
    "scheme.poisson_tol",
    "scheme.poisson_max_iter",
    "scheme.compat_tol",
    "scheme.div_tol",
    "scheme.flux_j",
    "experiment.mode",
    "experiment.initial",
    "experiment.mean",
    "experiment.amplitude",
    "experiment.modes",
    "experiment.seed",
    "experiment.grad_r",
    "experiment.eta1",
    "experiment.eta2",
    "experiment.eps",
    "experiment.minimizer_tol",
    "experiment.minimizer_max_t",
    "experiment.minimizer_dt_max",
    "experiment.window",
    "experiment.dts",
];

/// Keys that do not change the computed trajectory and are left out of
/// [`config_hash`], so a run may be resumed with a later end time or a
/// different output cadence.
const UNHASHED: [&str; 3] = ["scheme.t_end", "scheme.snapshot_every", "scheme.diag_every"];

struct Entry {
    line: usize,
    value: String,
}

struct Entries(HashMap<String, Entry>);

impl Entries {
    fn raw(&self, key: &str) -> Option<&Entry> {
        self.0.get(key)
    }

    fn get<T: FromStr>(&self, key: &str, default: Option<T>) -> Result<T> {
        match self.raw(key) {
            Some(e) => e.value.parse().map_err(|_| AggError::Parse {
                line: e.line,
                msg: format!("cannot parse `{}` for `{key}`", e.value),
            }),
            None => default.ok_or_else(|| AggError::Validation { key: key.into(), reason: "required key is missing".into() }),
        }
    }

    fn with<T>(&self, key: &str, default: T, f: impl Fn(&str) -> Option<T>) -> Result<T> {
        match self.raw(key) {
            Some(e) => f(&e.value).ok_or_else(|| AggError::Parse {
                line: e.line,
                msg: format!("invalid value `{}` for `{key}`", e.value),
            }),
            None => Ok(default),
        }
    }
}

fn split_line(raw: &str) -> &str {
    raw.split('#').next().unwrap_or("").trim()
}

fn read_entries(text: &str) -> Result<Entries> {
    let mut section: Option<&str> = None;
    let mut map = HashMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let s = split_line(raw);
        if s.is_empty() {
            continue;
        }
        if let Some(name) = s.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| AggError::Parse { line, msg: format!("malformed section header `{s}`") })?
                .trim();
            section = Some(
                SECTIONS
                    .iter()
                    .copied()
                    .find(|&x| x == name)
                    .ok_or_else(|| AggError::Parse { line, msg: format!("unknown section `{name}`") })?,
            );
            continue;
        }
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| AggError::Parse { line, msg: format!("expected `key = value`, got `{s}`") })?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.ok_or_else(|| AggError::Parse { line, msg: format!("key `{key}` outside any section") })?;
        let full = format!("{sec}.{key}");
        if !KEYS.contains(&full.as_str()) {
            return Err(AggError::Parse { line, msg: format!("unknown key `{key}` in [{sec}]") });
        }
        if value.is_empty() {
            return Err(AggError::Parse { line, msg: format!("empty value for `{key}`") });
        }
        if let Some(prev) = map.insert(full, Entry { line, value: value.to_string() }) {
            return Err(AggError::Parse { line, msg: format!("`{key}` already set on line {}", prev.line) });
        }
    }
    Ok(Entries(map))
}

fn list(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(|x| x.trim().parse().ok()).collect()
}

fn boundary(s: &str) -> Option<Boundary> {
    match s {
        "wall" => Some(Boundary::Wall),
        "periodic" => Some(Boundary::Periodic),
        _ => None,
    }
}

fn boundary_name(b: Boundary) -> &'static str {
    match b {
        Boundary::Wall => "wall",
        Boundary::Periodic => "periodic",
    }
}

fn ordering(s: &str) -> Option<Ordering> {
    match s {
        "ch_then_ns" => Some(Ordering::ChThenNs),
        "ns_then_ch" => Some(Ordering::NsThenCh),
        _ => None,
    }
}

fn ordering_name(o: Ordering) -> &'static str {
    match o {
        Ordering::ChThenNs => "ch_then_ns",
        Ordering::NsThenCh => "ns_then_ch",
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> AggError {
    AggError::Validation { key: key.into(), reason: reason.into() }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be positive, got {v}")))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(invalid(key, "must be at least 1"))
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let e = read_entries(text)?;
    if e.raw("grid.bc").is_some() && (e.raw("grid.bc_x").is_some() || e.raw("grid.bc_y").is_some()) {
        let line = e.raw("grid.bc").map_or(0, |x| x.line);
        return Err(AggError::Parse { line, msg: "`bc` conflicts with `bc_x`/`bc_y`".into() });
    }
    let bc = e.with("grid.bc", Boundary::Wall, boundary)?;
    let grid = GridSpec::new(
        e.get("grid.nx", None)?,
        e.get("grid.ny", None)?,
        positive("grid.lx", e.get("grid.lx", Some(1.0))?)?,
        positive("grid.ly", e.get("grid.ly", Some(1.0))?)?,
        e.with("grid.bc_x", bc, boundary)?,
        e.with("grid.bc_y", bc, boundary)?,
    )?;

    let poly = |key: &str| -> Result<Polynomial> {
        let v = e.with(key, None, |s| list(s).map(Some))?;
        v.map(Polynomial).ok_or_else(|| invalid(key, "required key is missing"))
    };
    let physics = PhysicalParams::new(
        e.get("physics.rho1", None)?,
        e.get("physics.rho2", None)?,
        e.get("physics.nu1", None)?,
        e.get("physics.nu2", None)?,
        e.get("physics.theta", None)?,
        e.get("physics.theta0", None)?,
        poly("physics.a")?,
        poly("physics.b")?,
        e.get("physics.sep_guard", Some(DEFAULT_SEP_GUARD))?,
    )?;

    let dch = ChSolveParams::default();
    let dns = NsSolveParams::default();
    let dpo = PoissonOptions::default();
    let div_tol = positive("scheme.div_tol", e.get("scheme.div_tol", Some(dch.div_tol))?)?;
    let ch = ChSolveParams {
        newton_tol: positive("scheme.newton_tol", e.get("scheme.newton_tol", Some(dch.newton_tol))?)?,
        newton_max: at_least_one("scheme.newton_max", e.get("scheme.newton_max", Some(dch.newton_max))?)?,
        max_halvings: e.get("scheme.max_halvings", Some(dch.max_halvings))?,
        linear_tol: positive("scheme.linear_tol", e.get("scheme.linear_tol", Some(dch.linear_tol))?)?,
        linear_max: at_least_one("scheme.linear_max", e.get("scheme.linear_max", Some(dch.linear_max))?)?,
        div_tol,
    };
    let poisson_max: usize = e.get("scheme.poisson_max_iter", Some(0))?;
    let ns = NsSolveParams {
        visc_tol: positive("scheme.visc_tol", e.get("scheme.visc_tol", Some(dns.visc_tol))?)?,
        visc_max: at_least_one("scheme.visc_max", e.get("scheme.visc_max", Some(dns.visc_max))?)?,
        poisson: PoissonOptions {
            tol: positive("scheme.poisson_tol", e.get("scheme.poisson_tol", Some(dpo.tol))?)?,
            max_iter: (poisson_max > 0).then_some(poisson_max),
            compat_tol: positive("scheme.compat_tol", e.get("scheme.compat_tol", Some(dpo.compat_tol))?)?,
        },
        div_tol,
        flux_j: e.get("scheme.flux_j", Some(dns.flux_j))?,
    };
    let scheme = SchemeOptions { ordering: e.with("scheme.ordering", Ordering::ChThenNs, ordering)?, ch, ns };

    let dt = positive("scheme.dt", e.get("scheme.dt", None)?)?;
    let t_end: f64 = e.get("scheme.t_end", None)?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(invalid("scheme.t_end", format!("must be non-negative, got {t_end}")));
    }
    let steps = t_end / dt;
    if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
        return Err(invalid("scheme.t_end", format!("must be a whole number of steps of dt = {dt}")));
    }

    let d = ExperimentConfig::default();
    let window = e.with("experiment.window", d.window, |s| {
        if s == "none" {
            return Some(None);
        }
        match list(s)?.as_slice() {
            &[a, b] => Some(Some((a, b))),
            _ => None,
        }
    })?;
    if let Some((a, b)) = window {
        if !(a >= 0.0 && b > a) {
            return Err(invalid("experiment.window", format!("need 0 <= start < end, got [{a}, {b}]")));
        }
    }
    let dts = e.with("experiment.dts", d.dts.clone(), list)?;
    if let Some(bad) = dts.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(invalid("experiment.dts", format!("time steps must be positive, got {bad}")));
    }
    let unit = |key: &str, v: f64| -> Result<f64> {
        if (0.0..1.0).contains(&v) {
            Ok(v)
        } else {
            Err(invalid(key, format!("must lie in [0, 1), got {v}")))
        }
    };
    let mean: f64 = e.get("experiment.mean", Some(d.mean))?;
    if !(mean.abs() < 1.0) {
        return Err(invalid("experiment.mean", format!("must lie in (-1, 1), got {mean}")));
    }
    let amplitude: f64 = e.get("experiment.amplitude", Some(d.amplitude))?;
    if !(0.0..1.0).contains(&amplitude) {
        return Err(invalid("experiment.amplitude", format!("must lie in [0, 1), got {amplitude}")));
    }
    let grad_r: f64 = e.get("experiment.grad_r", Some(d.grad_r))?;
    if !(grad_r >= 1.0) {
        return Err(invalid("experiment.grad_r", format!("must be at least 1, got {grad_r}")));
    }
    let experiment = ExperimentConfig {
        mode: e.with("experiment.mode", d.mode, ExperimentMode::parse)?,
        initial: e.with("experiment.initial", d.initial, InitialCondition::parse)?,
        mean,
        amplitude,
        modes: at_least_one("experiment.modes", e.get("experiment.modes", Some(d.modes))?)?,
        seed: e.get("experiment.seed", Some(d.seed))?,
        grad_r,
        eta1: unit("experiment.eta1", e.get("experiment.eta1", Some(d.eta1))?)?,
        eta2: unit("experiment.eta2", e.get("experiment.eta2", Some(d.eta2))?)?,
        eps: positive("experiment.eps", e.get("experiment.eps", Some(d.eps))?)?,
        minimizer_tol: positive("experiment.minimizer_tol", e.get("experiment.minimizer_tol", Some(d.minimizer_tol))?)?,
        minimizer_max_t: positive("experiment.minimizer_max_t", e.get("experiment.minimizer_max_t", Some(d.minimizer_max_t))?)?,
        minimizer_dt_max: positive(
            "experiment.minimizer_dt_max",
            e.get("experiment.minimizer_dt_max", Some(d.minimizer_dt_max))?,
        )?,
        window,
        dts,
    };

    Ok(RunConfig {
        grid,
        physics,
        dt,
        t_end,
        snapshot_every: e.get("scheme.snapshot_every", Some(0))?,
        diag_every: at_least_one("scheme.diag_every", e.get::<usize>("scheme.diag_every", Some(1))?)? as u64,
        scheme,
        experiment,
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ")
}

/// Every key with its value, in [`KEYS`] order. Floats use the shortest
/// representation that parses back to the same bits.
fn pairs(c: &RunConfig) -> Vec<(&'static str, String)> {
    let (g, p, s, x) = (&c.grid, &c.physics, &c.scheme, &c.experiment);
    let f = |v: f64| format!("{v:e}");
    vec![
        ("grid.nx", g.nx.to_string()),
        ("grid.ny", g.ny.to_string()),
        ("grid.lx", f(g.lx)),
        ("grid.ly", f(g.ly)),
        ("grid.bc_x", boundary_name(g.bc_x).into()),
        ("grid.bc_y", boundary_name(g.bc_y).into()),
        ("physics.rho1", f(p.rho1)),
        ("physics.rho2", f(p.rho2)),
        ("physics.nu1", f(p.nu1)),
        ("physics.nu2", f(p.nu2)),
        ("physics.theta", f(p.theta)),
        ("physics.theta0", f(p.theta0)),
        ("physics.a", join(&p.a.0)),
        ("physics.b", join(&p.b.0)),
        ("physics.sep_guard", f(p.sep_guard)),
        ("scheme.dt", f(c.dt)),
        ("scheme.t_end", f(c.t_end)),
        ("scheme.snapshot_every", c.snapshot_every.to_string()),
        ("scheme.diag_every", c.diag_every.to_string()),
        ("scheme.ordering", ordering_name(s.ordering).into()),
        ("scheme.newton_tol", f(s.ch.newton_tol)),
        ("scheme.newton_max", s.ch.newton_max.to_string()),
        ("scheme.max_halvings", s.ch.max_halvings.to_string()),
        ("scheme.linear_tol", f(s.ch.linear_tol)),
        ("scheme.linear_max", s.ch.linear_max.to_string()),
        ("scheme.visc_tol", f(s.ns.visc_tol)),
        ("scheme.visc_max", s.ns.visc_max.to_string()),
        ("scheme.poisson_tol", f(s.ns.poisson.tol)),
        ("scheme.poisson_max_iter", s.ns.poisson.max_iter.unwrap_or(0).to_string()),
        ("scheme.compat_tol", f(s.ns.poisson.compat_tol)),
        ("scheme.div_tol", f(s.ch.div_tol)),
        ("scheme.flux_j", s.ns.flux_j.to_string()),
        ("experiment.mode", x.mode.name().into()),
        ("experiment.initial", x.initial.name().into()),
        ("experiment.mean", f(x.mean)),
        ("experiment.amplitude", f(x.amplitude)),
        ("experiment.modes", x.modes.to_string()),
        ("experiment.seed", x.seed.to_string()),
        ("experiment.grad_r", f(x.grad_r)),
        ("experiment.eta1", f(x.eta1)),
        ("experiment.eta2", f(x.eta2)),
        ("experiment.eps", f(x.eps)),
        ("experiment.minimizer_tol", f(x.minimizer_tol)),
        ("experiment.minimizer_max_t", f(x.minimizer_max_t)),
        ("experiment.minimizer_dt_max", f(x.minimizer_dt_max)),
        ("experiment.window", x.window.map_or("none".into(), |(a, b)| join(&[a, b]))),
        ("experiment.dts", join(&x.dts)),
    ]
}

/// Canonical text of a configuration; `parse_config` reads it back to an
/// equal value.
pub fn render_config(c: &RunConfig) -> String {
    let mut out = String::new();
    let mut current = "";
    for (key, value) in pairs(c) {
        let (sec, name) = key.split_once('.').expect("keys are qualified");
        if sec != current {
            if !current.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "[{sec}]");
            current = sec;
        }
        if key == "experiment.dts" && c.experiment.dts.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{name} = {value}");
    }
    out
}

/// SHA-256 of the canonical entries that determine the trajectory.
pub fn config_hash(c: &RunConfig) -> [u8; 32] {
    let mut h = Sha256::new();
    for (key, value) in pairs(c) {
        if !UNHASHED.contains(&key) {
            h.update(key.as_bytes());
            h.update(b"=");
            h.update(value.as_bytes());
            h.update(b"\n");
        }
    }
    h.finalize().into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
