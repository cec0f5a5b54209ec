//! Output directories: a lock file so two runs never share one, the
//! streaming `diag.csv` writer and snapshot files.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::{config_hash, hex, render_config};
use super::snapshot::{snapshot_name, Snapshot};
use super::table::CsvSink;
use crate::coupled_solver::{run_observed, RunConfig, RunObserver, RunSummary, State};
use crate::diagnostics::{Accumulators, DiagnosticsRecord};
use crate::error::{AggError, Result};

pub const LOCK_NAME: &str = ".agg.lock";
pub const DIAG_NAME: &str = "diag.csv";
pub const CONFIG_NAME: &str = "config.cfg";

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_NAME);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(AggError::Validation {
                key: "out".into(),
                reason: format!("{} is in use by another run (remove {} if that run is gone)", dir.display(), path.display()),
            }),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes records to `diag.csv` and snapshots to `snap_<step>.bin`.
pub struct DirWriter {
    dir: PathBuf,
    hash: [u8; 32],
    csv: CsvSink<BufWriter<File>>,
    _lock: DirLock,
}

impl DirWriter {
    /// Claims `dir`, writes the canonical configuration next to the output
    /// and starts a fresh `diag.csv`.
    pub fn create(dir: &Path, cfg: &RunConfig) -> Result<Self> {
        let lock = DirLock::acquire(dir)?;
        let mut text = render_config(cfg);
        text.insert_str(0, &format!("# config hash {}\n", hex(&config_hash(cfg))));
        fs::write(dir.join(CONFIG_NAME), text)?;
        let csv = CsvSink::diagnostics(BufWriter::new(File::create(dir.join(DIAG_NAME))?))?;
        Ok(Self { dir: dir.to_path_buf(), hash: config_hash(cfg), csv, _lock: lock })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl RunObserver for DirWriter {
    fn on_record(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        self.csv.record(rec)?;
        self.csv.flush()
    }

    fn on_snapshot(&mut self, state: &State, acc: &Accumulators) -> Result<()> {
        let snap = Snapshot { state: state.clone(), acc: *acc, config_hash: self.hash };
        snap.save(&self.dir.join(snapshot_name(state.step)))
    }

    fn on_failure(&mut self, err: &AggError, last: &State) -> Result<()> {
        let step = match err {
            AggError::AtStep { step, .. } => *step,
            _ => last.step,
        };
        self.csv.failed(step, err)
    }
}

/// Runs `initial` to `cfg.t_end`, writing into `dir`.
pub fn run_to_dir(cfg: &RunConfig, initial: State, dir: &Path) -> Result<RunSummary> {
    let mut w = DirWriter::create(dir, cfg)?;
    run_observed(cfg, initial, None, &mut w)
}

/// Continues from a snapshot. The snapshot must come from a run with the
/// same trajectory-defining configuration; records after the snapshot time
/// go to a fresh `diag.csv` in `dir`.
pub fn resume_to_dir(cfg: &RunConfig, snap: Snapshot, dir: &Path) -> Result<RunSummary> {
    check_compatible(cfg, &snap)?;
    let mut w = DirWriter::create(dir, cfg)?;
    run_observed(cfg, snap.state, Some(snap.acc), &mut w)
}

pub fn check_compatible(cfg: &RunConfig, snap: &Snapshot) -> Result<()> {
    if snap.config_hash != config_hash(cfg) {
        return Err(AggError::Validation {
            key: "resume".into(),
            reason: format!(
                "snapshot was written under configuration {}, this run is {}",
                hex(&snap.config_hash),
                hex(&config_hash(cfg))
            ),
        });
    }
    if snap.state.grid() != cfg.grid {
        return Err(AggError::Validation { key: "resume".into(), reason: "snapshot grid differs from the configuration".into() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scratch_dir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("agg-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let d = scratch_dir("lock");
        let first = DirLock::acquire(&d).unwrap();
        let second = DirLock::acquire(&d);
        assert!(matches!(second, Err(AggError::Validation { .. })));
        drop(first);
        let third = DirLock::acquire(&d).unwrap();
        drop(third);
        assert!(!d.join(LOCK_NAME).exists());
        fs::remove_dir_all(&d).unwrap();
    }
}
