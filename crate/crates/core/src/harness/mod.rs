//! Experiment batches, timing, identification and default configuration.

pub mod batch;
pub mod bench;
pub mod identify;
pub mod lm;

pub use batch::{run_batch, run_batch_with, BatchConfig, BatchRow, BatchSummary};
pub use bench::{bench_variants, BenchReport, BenchRow};
pub use identify::{identify_params, simulate_voltage, FitParam, FitReport};
pub use lm::{levenberg_marquardt, LmOptions, LmOutcome};

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::model::{ModelParams, OcpCurves};

/// Writes the reference parameter file and both OCP tables into `dir`.
pub fn export_defaults(dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let curves = OcpCurves::default();
    let files = [
        ("params.toml", ModelParams::reference().to_toml()),
        ("ocp_positive.txt", curves.positive.to_table()),
        ("ocp_negative.txt", curves.negative.to_table()),
    ];
    let mut out = Vec::new();
    for (name, text) in files {
        let p = dir.join(name);
        std::fs::write(&p, text)?;
        out.push(p);
    }
    Ok(out)
}
