//! Loads a config or manifest, runs it and writes every output below the
//! output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::RunConfig;
use crate::error::{Result, RunError};
use crate::experiments::{run_experiment, run_sweep, Report};
use crate::io::{metrics_csv, write_artifacts, Artifact};
use crate::manifest::{artifact_versions, is_manifest, Command, Manifest, MANIFEST_FILE, METRICS_FILE};

pub const SEED_ENV: &str = "DBAT_SEED";

/// What to execute: a config plus the command that was recorded for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub command: Command,
    pub config: RunConfig,
}

/// Reads a key=value config or a manifest written by an earlier run.
pub fn load_job(path: &Path) -> Result<Job> {
    let text =
        fs::read_to_string(path).map_err(|e| RunError::config(None, format!("cannot read {}: {e}", path.display())))?;
    if is_manifest(&text) {
        let m = Manifest::from_json(&text)?;
        return Ok(Job {
            command: m.command,
            config: RunConfig::from_map(&m.config)?,
        });
    }
    Ok(Job {
        command: Command::Run,
        config: RunConfig::parse(&text)?,
    })
}

/// Applies a seed override given as text (the value of `DBAT_SEED`).
pub fn override_seed(cfg: RunConfig, value: Option<&str>) -> Result<RunConfig> {
    match value {
        None => Ok(cfg),
        Some(v) => {
            let seed = v
                .trim()
                .parse::<u64>()
                .map_err(|e| RunError::config(None, format!("{SEED_ENV}=`{v}`: {e}")))?;
            Ok(cfg.with_seed(seed))
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub manifest: Manifest,
    pub output_dir: PathBuf,
}

/// Runs `job` and writes metrics, artifacts and the manifest.
pub fn execute(job: &Job) -> Result<Outcome> {
    let cfg = &job.config;
    let start = Instant::now();
    let report = match job.command {
        Command::Run => run_experiment(cfg)?,
        Command::Sweep => run_sweep(cfg, &cfg.sweep.alphas)?,
    };
    let mut files = vec![Artifact::text(METRICS_FILE, metrics_csv(&report.metrics))];
    files.extend(report.artifacts.iter().cloned());
    let mut outputs: Vec<String> = files.iter().map(|a| a.name.clone()).collect();
    outputs.push(MANIFEST_FILE.into());
    outputs.sort();
    let manifest = Manifest {
        command: job.command,
        config: cfg.to_map(),
        artifact_versions: artifact_versions(),
        seed: cfg.seed,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs,
    };
    files.push(Artifact::text(MANIFEST_FILE, manifest.to_json()));
    write_artifacts(&cfg.output_dir, &files)?;
    Ok(Outcome {
        report,
        manifest,
        output_dir: cfg.output_dir.clone(),
    })
}
