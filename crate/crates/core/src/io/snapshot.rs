//! Binary restart files.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `AGG1` |
//! | 4 | format version (`u32`) |
//! | 8 + 8 | `nx`, `ny` (`u64`) |
//! | 8 + 8 | `lx`, `ly` (`f64`) |
//! | 1 + 1 | boundary codes for x and y (0 wall, 1 periodic) |
//! | 8 | time (`f64`) |
//! | 8 | step (`u64`) |
//! | 32 | configuration hash |
//! | 24 | energy-budget accumulators `e0`, `dissipated`, `last_d` (`f64`) |
//! | … | `φ`, `μ`, `p` (`nx·ny` each), `u` (x-faces), `w` (y-faces) as `f64` |

use std::fs;
use std::path::Path;

use crate::coupled_solver::State;
use crate::diagnostics::Accumulators;
use crate::error::{AggError, Result};
use crate::grid_ops::{Boundary, GridSpec, ScalarField, VectorField};

pub const MAGIC: &[u8; 4] = b"AGG1";
pub const VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 16 + 16 + 2 + 8 + 8 + 32 + 24;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub state: State,
    pub acc: Accumulators,
    pub config_hash: [u8; 32],
}

fn bc_code(b: Boundary) -> u8 {
    match b {
        Boundary::Wall => 0,
        Boundary::Periodic => 1,
    }
}

fn bc_of(code: u8) -> Result<Boundary> {
    match code {
        0 => Ok(Boundary::Wall),
        1 => Ok(Boundary::Periodic),
        c => Err(AggError::Snapshot(format!("unknown boundary code {c}"))),
    }
}

impl Snapshot {
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.state;
        let g = s.grid();
        let arrays = [&s.phi.values, &s.mu.values, &s.p.values, &s.v.u, &s.v.w];
        let n: usize = arrays.iter().map(|a| a.len()).sum();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(g.nx as u64).to_le_bytes());
        out.extend_from_slice(&(g.ny as u64).to_le_bytes());
        out.extend_from_slice(&g.lx.to_le_bytes());
        out.extend_from_slice(&g.ly.to_le_bytes());
        out.push(bc_code(g.bc_x));
        out.push(bc_code(g.bc_y));
        out.extend_from_slice(&s.t.to_le_bytes());
        out.extend_from_slice(&s.step.to_le_bytes());
        out.extend_from_slice(&self.config_hash);
        for x in [self.acc.e0, self.acc.dissipated, self.acc.last_d] {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for a in arrays {
            a.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(AggError::Snapshot(format!("file too short ({} bytes)", bytes.len())));
        }
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4) != MAGIC {
            return Err(AggError::Snapshot("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.array());
        if version != VERSION {
            return Err(AggError::Snapshot(format!("unsupported version {version}")));
        }
        let (nx, ny) = (r.u64() as usize, r.u64() as usize);
        let (lx, ly) = (r.f64(), r.f64());
        let (bx, by) = (bc_of(r.take(1)[0])?, bc_of(r.take(1)[0])?);
        let g = GridSpec::new(nx, ny, lx, ly, bx, by).map_err(|e| AggError::Snapshot(e.to_string()))?;
        let t = r.f64();
        let step = r.u64();
        let config_hash = r.array();
        let acc = Accumulators { e0: r.f64(), dissipated: r.f64(), last_d: r.f64() };
        let cells = g.cells();
        let expected = HEADER_LEN + 8 * (3 * cells + g.n_u() + g.n_w());
        if bytes.len() != expected {
            return Err(AggError::Snapshot(format!("expected {expected} bytes for a {nx}x{ny} grid, found {}", bytes.len())));
        }
        let phi = ScalarField::from_values(g, r.floats(cells));
        let mu = ScalarField::from_values(g, r.floats(cells));
        let p = ScalarField::from_values(g, r.floats(cells));
        let u = r.floats(g.n_u());
        let w = r.floats(g.n_w());
        let state = State { t, step, v: VectorField { grid: g, u, w }, phi, mu, p };
        Ok(Self { state, acc, config_hash })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // Write then rename so a crash never leaves a truncated snapshot.
        let tmp = path.with_extension("bin.tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        s
    }

    fn array<const N: usize>(&mut self) -> [u8; N] {
        self.take(N).try_into().expect("length checked")
    }

    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.array())
    }

    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.array())
    }

    fn floats(&mut self, n: usize) -> Vec<f64> {
        self.take(8 * n).chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
    }
}

/// File name of the snapshot taken after `step`.
pub fn snapshot_name(step: u64) -> String {
    format!("snap_{step:08}.bin")
}

/// Snapshots in `dir`, ordered by step.
pub fn list_snapshots(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("snap_") && n.ends_with(".bin"))
        })
        .collect();
    out.sort();
    Ok(out)
}
