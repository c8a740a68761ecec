mod commands;
mod output;

use clap::{Parser, Subcommand};
use commands::Command;
use irqcount_core::{Error, Profile};
use output::{now, write_run, RunManifest, ARTIFACT_VERSION};
use std::path::PathBuf;
use std::process::ExitCode;

/// Interrupt-counting attack experiments on a simulated enclave.
///
/// Each run writes `<subcommand>*.csv`, `<subcommand>.summary.json` and
/// `<subcommand>.manifest.json` into the output directory.
#[derive(Parser)]
#[command(name = "irqcount", version)]
struct Cli {
    /// Preset name (paper-like, noiseless, fast) or path to a TOML profile.
    #[arg(long, global = true, default_value = "paper-like")]
    profile: String,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, env = "IRQCOUNT_OUT", default_value = "irqcount-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Top,
}

#[derive(Subcommand)]
enum Top {
    #[command(flatten)]
    Run(Command),
    /// Re-run a manifest with its recorded profile, seed and parameters.
    Rerun { manifest: PathBuf },
    /// Print a profile as TOML, the schema `--profile <file>` accepts.
    ShowProfile,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) | Error::MalformedVictim(_) => 2,
        Error::Calibration(_) | Error::Infeasible(_) => 3,
        Error::BudgetExhausted(_) => 4,
        _ => 1,
    }
}

fn execute(profile: Profile, seed: u64, command: Command, out: PathBuf) -> irqcount_core::Result<PathBuf> {
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION.into(),
        subcommand: command.name().into(),
        seed,
        profile_name: profile.name.clone(),
        profile_hash: profile.hash(),
        profile: profile.clone(),
        parameters: command.clone(),
        started_at: now(),
        finished_at: String::new(),
        outputs: Vec::new(),
    };
    let outcome = command.run(&profile, seed)?;
    write_run(&out, manifest, outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Top::ShowProfile => Profile::resolve(&cli.profile).and_then(|p| p.to_toml_string()).map(|s| {
            print!("{s}");
            None
        }),
        Top::Rerun { manifest } => RunManifest::load(&manifest)
            .and_then(|m| execute(m.profile, m.seed, m.parameters, cli.out))
            .map(Some),
        Top::Run(command) => Profile::resolve(&cli.profile)
            .and_then(|p| execute(p, cli.seed, command, cli.out))
            .map(Some),
    };
    match result {
        Ok(Some(path)) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("irqcount: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
