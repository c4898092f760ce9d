use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::TheoremConfig;
use crate::error::{Result, RunError};
use crate::experiments::theorem::{solve, table};
use crate::manifest::Command;
use crate::runner::{execute, load_job, override_seed, SEED_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "dbat",
    version,
    about = "Diverse ensembles by disagreement: experiment runner"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run the experiment described by a config file or a manifest.
    Run {
        config: PathBuf,
        /// Write outputs here instead of the configured output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Train one sequential ensemble per alpha and summarise them.
    Sweep {
        config: PathBuf,
        /// Comma-separated alphas, e.g. 1,0.5,0.1.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Solve the two-feature posterior problem and check the predicted minimiser.
    Theorem {
        #[arg(long, default_value_t = 1001)]
        grid: usize,
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
    },
}

/// Runs a parsed command line. `seed_env` is the value of `DBAT_SEED`.
pub fn dispatch(cli: Cli, seed_env: Option<String>) -> Result<i32> {
    match cli.command {
        Cmd::Run { config, output_dir } => run_job(&config, output_dir, None, seed_env, false),
        Cmd::Sweep {
            config,
            alphas,
            output_dir,
        } => run_job(
            &config,
            output_dir,
            Some(alphas).filter(|a| !a.is_empty()),
            seed_env,
            true,
        ),
        Cmd::Theorem { grid, iterations } => {
            let o = solve(&TheoremConfig {
                grid,
                iterations,
                learning_rate: 1.0,
            })?;
            print!("{}", table(&o));
            println!("{}", if o.passed { "PASS" } else { "FAIL" });
            Ok(if o.passed { 0 } else { 1 })
        }
    }
}

fn run_job(
    path: &std::path::Path,
    output_dir: Option<PathBuf>,
    alphas: Option<Vec<f64>>,
    seed_env: Option<String>,
    sweep: bool,
) -> Result<i32> {
    let mut job = load_job(path)?;
    job.config = override_seed(job.config, seed_env.as_deref())?;
    if let Some(dir) = output_dir {
        job.config.output_dir = dir;
    }
    if sweep {
        job.command = Command::Sweep;
    }
    if let Some(a) = alphas {
        job.config.sweep.alphas = a;
    }
    if job.command == Command::Sweep && job.config.sweep.alphas.is_empty() {
        return Err(RunError::config(None, "no alphas: pass --alphas or set `sweep.alphas`"));
    }
    let out = execute(&job)?;
    eprintln!(
        "{}: wrote {} files to {} in {:.1}s",
        out.report.run_id,
        out.manifest.outputs.len(),
        out.output_dir.display(),
        out.manifest.wall_time_seconds
    );
    if let Some(t) = &out.report.theorem {
        print!("{}", table(t));
        println!("{}", if t.passed { "PASS" } else { "FAIL" });
    }
    for r in &out.report.sweep {
        println!(
            "alpha {:<8} val {:.4} test {:.4}{}",
            r.alpha,
            r.val_accuracy,
            r.test_accuracy,
            if r.selected { "  <- selected" } else { "" }
        );
    }
    Ok(0)
}

pub fn seed_from_env() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}
