//! `harmonium`: config-driven runs of the two-electron trap pipelines.
//!
//! Exit status: 0 all checks pass, 1 a check failed, 2 invalid configuration
//! (nothing written), 3 numerical failure.

// validation is written as `!(x > 0.0)` so that NaN fails it
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use crate::config::{validate, Overrides};
use crate::output::{sha256_hex, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    GroundState,
    Evolve,
    Density,
    Scattering,
    VerifyMoshinsky,
    InvertKs,
    Roundtrip,
    CheckContinuity,
    CheckDvt,
    CheckDvtInteracting,
    CheckHpt,
    ExtractChi,
    CausalityRoundtrip,
}

impl Subcommand {
    #[cfg(test)]
    pub const ALL: [Subcommand; 13] = [
        Subcommand::GroundState,
        Subcommand::Evolve,
        Subcommand::Density,
        Subcommand::Scattering,
        Subcommand::VerifyMoshinsky,
        Subcommand::InvertKs,
        Subcommand::Roundtrip,
        Subcommand::CheckContinuity,
        Subcommand::CheckDvt,
        Subcommand::CheckDvtInteracting,
        Subcommand::CheckHpt,
        Subcommand::ExtractChi,
        Subcommand::CausalityRoundtrip,
    ];

    pub fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "harmonium", version, about = "Exactly solvable two-electron trap dynamics and density-functional checks")]
struct Cli {
    /// Pipeline to run.
    #[arg(value_enum)]
    command: Subcommand,
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Tolerance override, `name=value`; repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    tol: Vec<String>,
    /// Store every N-th time step.
    #[arg(long)]
    stride: Option<usize>,
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let source = cli.config.display().to_string();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {source}: {e}");
            return ExitCode::from(EXIT_INVALID_CONFIG);
        }
    };
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(EXIT_INVALID_CONFIG);
    }
    let overrides = Overrides {
        stride: cli.stride,
        tolerances: cli.tol.clone(),
        out: cli.out.clone(),
    };
    let cfg = match validate(&text, &source, cli.command, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid config: {e}");
            return ExitCode::from(EXIT_INVALID_CONFIG);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
        eprintln!("warning: worker pool not configured: {e}");
    }
    let mut run = commands::Run::new(&cfg);
    if let Err(e) = commands::execute(cli.command, &mut run) {
        eprintln!("error: {e}");
        let code = match e {
            harmonium_core::Error::GridTail { .. }
            | harmonium_core::Error::ModelInvalid(_)
            | harmonium_core::Error::InvalidGrid(_)
            | harmonium_core::Error::UnsupportedScope(_) => EXIT_INVALID_CONFIG,
            _ => EXIT_NUMERIC,
        };
        return ExitCode::from(code);
    }

    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    let pass = run.checks.iter().all(|c| c.pass);
    let manifest = Manifest {
        tool: "harmonium",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name(),
        config: source,
        config_sha256: sha256_hex(text.as_bytes()),
        stride: cfg.stride,
        jobs: cli.jobs,
        tolerances: cfg.tolerances.clone(),
        checks: run.checks,
        values: run.values,
        warnings: run.warnings,
        files: Vec::new(),
        pass,
    };
    let manifest = match run.sink.finish(manifest) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: writing manifest: {e}");
            return ExitCode::from(EXIT_NUMERIC);
        }
    };

    for c in &manifest.checks {
        println!("{:<18} {:>12.3e}  limit {:>9.1e}  {}", c.name, c.value, c.limit, if c.pass { "pass" } else { "FAIL" });
    }
    for (k, v) in &manifest.values {
        println!("{k} = {v:.12e}");
    }
    println!("wrote {} files to {}", manifest.files.len() + 1, cfg.out.display());
    if pass {
        ExitCode::SUCCESS
    } else {
        for c in manifest.checks.iter().filter(|c| !c.pass) {
            eprintln!("check `{}` failed: {:.3e} > {:.1e}", c.name, c.value, c.limit);
        }
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}
