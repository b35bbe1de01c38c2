//! Dataset ingestion, splitting, run configuration, checkpoints and the
//! train / evaluate / sweep pipeline behind the CLI.

pub mod checkpoint;
pub mod config;
pub mod ingest;
pub mod pipeline;
pub mod split;
pub mod synthetic;

use std::path::Path;

use crate::error::Result;

pub use config::{RunConfig, ALPHA_GRID};
pub use ingest::{ingest, IdMap, Interactions};
pub use pipeline::{density_report, load_dataset, run_evaluate, run_sweep, run_train, SweepPlan, SweepRow, TrainArtifacts};
pub use split::{split, DatasetSplit, PreparedDataset, SplitSpec};

/// Writes to a sibling temp file, then renames over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
