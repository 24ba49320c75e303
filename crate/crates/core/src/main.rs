// Copyright 2026 Thermalsim Contributors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use thermalsim::config::{ExperimentConfig, ExperimentKind};
use thermalsim::experiments::{estimate_runtime, run_experiment, LARGE_QUBITS};
use thermalsim::{Error, Result};

/// Thermal state preparation by weak system-bath collisions.
#[derive(Debug, Parser)]
#[command(name = "thermalsim", version = thermalsim::experiments::VERSION)]
struct Cli {
    /// gap_sweep_j, fixpoint_sweep_j, resonance_sweep_t, resonance_sweep_beta,
    /// resonance_trace_dist, trajectories, randomized_bath or validate
    experiment: String,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable, applied after the file in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (same as `--set output_dir=...`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed for trajectory sampling (same as `--set seed=...`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, or `auto`.
    #[arg(long)]
    threads: Option<String>,
    /// Allow system sizes whose propagation needs more than 8 qubits.
    #[arg(long)]
    large: bool,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

fn run(cli: Cli) -> Result<()> {
    let kind: ExperimentKind = cli.experiment.parse()?;
    let text = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut overrides = cli.set.clone();
    if let Some(o) = &cli.out {
        overrides.push(format!("output_dir={}", o.display()));
    }
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(t) = &cli.threads {
        overrides.push(format!("threads={t}"));
    }
    let cfg = ExperimentConfig::resolve(kind, text.as_deref(), &overrides)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    if cfg.total_qubits() > LARGE_QUBITS {
        let secs = estimate_runtime(&cfg)?;
        eprintln!(
            "{} system and bath qubits; estimated runtime {:.0} s on {} thread(s)",
            cfg.total_qubits(),
            secs,
            rayon::current_num_threads()
        );
        if !cli.large {
            return Err(Error::Config(format!(
                "n = {} needs --large (more than {LARGE_QUBITS} propagated qubits)",
                cfg.n
            )));
        }
    }
    let out = run_experiment(&cfg, cli.force)?;
    for note in &out.notes {
        eprintln!("{note}");
    }
    for t in &out.tables {
        println!("{} ({} rows)", cfg.output_dir.join(&t.name).display(), t.rows.len());
    }
    println!("{}", cfg.output_dir.join("manifest.json").display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
