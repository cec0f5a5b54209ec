//! Configuration files, binary snapshots, the diagnostics CSV and output
//! directories.

mod config;
mod run_dir;
mod snapshot;
mod table;

pub use config::{config_hash, hex, parse_config, render_config, KEYS};
pub use run_dir::{
    check_compatible, resume_to_dir, run_to_dir, DirLock, DirWriter, CONFIG_NAME, DIAG_NAME, LOCK_NAME,
};
pub use snapshot::{list_snapshots, snapshot_name, Snapshot, MAGIC, VERSION};
pub use table::{format_value, read_table, CsvSink, Table, FAILED_MARKER};
