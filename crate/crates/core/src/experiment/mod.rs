//! JSON experiment configs and the commands built on them.
//!
//! Artifacts written by [`cmd_run`]: `cycles.csv`, `per_class.csv`,
//! `selections.json`, `summary.json`, `manifest.json`, plus one CSV per
//! enabled probe. Every file carries the config hash; CSV rows also carry
//! the strategy and seed.

mod artifacts;
mod check;
mod config;
mod plot;

use std::path::{Path, PathBuf};

pub use artifacts::{
    preflight, probe, run_jobs, summarize, write_artifacts, write_prefixed, BoundSummary, CycleRow, CycleSummary,
    JobResult, Manifest, MeanSd, ProbeName, SelectionEntry, SelectionRun, Selections, StrategySummary, Summary,
    CYCLES_FILE, MANIFEST_FILE, PER_CLASS_FILE, SELECTIONS_FILE, SUMMARY_FILE,
};
pub use check::{check_all, CheckResult};
pub use config::{AlSection, DatasetSpec, ExperimentConfig, ModelSpec, Overrides};
pub use plot::{line_chart, plot_dir, Series};

use crate::error::{Error, Result};

/// Process exit status for an error: 1 for configuration problems, 3 when
/// a probe cannot run on the model, 2 for anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Json(_) => 1,
        Error::OverCap { .. } => 3,
        Error::Cycle { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn load(config: &Path, overrides: &Overrides) -> Result<(ExperimentConfig, PathBuf)> {
    let c = ExperimentConfig::load_with(config, overrides)?;
    let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((c, base))
}

/// Runs every strategy × seed of the config and writes the artifacts.
/// Returns the output directory.
pub fn cmd_run(config: &Path, overrides: &Overrides) -> Result<PathBuf> {
    let (c, base) = load(config, overrides)?;
    let results = run_jobs(&c, &base, &c.probes)?;
    write_artifacts(&c.output_dir, &c, &results)?;
    Ok(c.output_dir)
}

/// Runs one probe alone; returns the CSV it wrote.
pub fn cmd_probe(config: &Path, name: &str, overrides: &Overrides) -> Result<PathBuf> {
    let name: ProbeName = name.parse()?;
    let (c, base) = load(config, overrides)?;
    probe(&c, &base, name)
}

/// Renders the charts for an artifact directory.
pub fn cmd_plot(dir: &Path) -> Result<Vec<String>> {
    plot_dir(dir)
}

pub fn cmd_check() -> Vec<CheckResult> {
    check_all()
}
