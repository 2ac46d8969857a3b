//! Configuration, data ingestion and experiment drivers behind the `abf`
//! command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod experiments;
pub mod hpd;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};

use config::ExperimentConfig;
use experiments::Outcome;
use output::{write_manifest, ArtifactWriter, Manifest};

/// Result of [`run_experiment`]: the typed outcome and the files written.
#[derive(Debug)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub wall_clock_seconds: f64,
}

/// Validates `cfg`, runs it on a pool of `cfg.worker_count()` threads and
/// writes every artifact plus `manifest.json` to `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let workers = cfg.worker_count()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("building the worker pool")?;
    let fingerprint = cfg.fingerprint()?;
    let start = Instant::now();
    let outcome = pool.install(|| experiments::execute(cfg))?;
    let wall = start.elapsed().as_secs_f64();
    let mut writer = ArtifactWriter::new(&cfg.output_dir, &fingerprint)?;
    outcome.emit(&mut writer)?;
    let files = writer.files().to_vec();
    let toml = cfg.to_toml()?;
    let manifest = Manifest {
        kind: cfg.kind.label(),
        config_fingerprint: &fingerprint,
        seeds: &cfg.seeds,
        workers: Some(workers.unwrap_or_else(|| pool.current_num_threads())),
        wall_clock_seconds: wall,
        library_version: env!("CARGO_PKG_VERSION"),
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
        config: &toml,
    };
    let manifest = write_manifest(&cfg.output_dir, &manifest)?;
    Ok(RunSummary {
        outcome,
        files,
        manifest,
        wall_clock_seconds: wall,
    })
}
