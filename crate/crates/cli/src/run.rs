use std::fs;
use std::path::PathBuf;

use clap::Args;
use daeq_core::flsim::{ExperimentConfig, Simulation};

use crate::{Failure, RecoveryArg};

#[derive(Args, Debug)]
pub struct RunArgs {
    /// TOML experiment config. Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config value, e.g. `--set data.classes=6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Also write transcript.json with key generation logs and every bus message.
    #[arg(long)]
    transcript: bool,
    #[arg(long, value_enum)]
    recovery: Option<RecoveryArg>,
}

pub fn load_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(r) = args.recovery {
        let name = match r {
            RecoveryArg::Log => "log",
            RecoveryArg::Bruteforce => "bruteforce",
            RecoveryArg::Auto => "auto",
        };
        overrides.push(format!("recovery=\"{name}\""));
    }
    Ok(ExperimentConfig::from_toml_with_overrides(&text, &overrides)?)
}

pub fn run(args: RunArgs, verbose: u8) -> Result<(), Failure> {
    let config = load_config(&args)?;
    let sim = Simulation::new(config)?;
    let report = sim.run_with(|m, t| {
        if verbose > 0 {
            eprintln!(
                "round {:>3}  acc {:.4}  qual {}/{}  recover_steps {}  {:.2}s",
                m.round,
                m.test_accuracy,
                m.qual,
                m.participants,
                m.recover_steps,
                t.fkg + t.train + t.encrypt + t.decrypt + t.recover
            );
        }
    })?;
    report.write(&args.out, args.transcript)?;
    let summary = report.summary();
    println!(
        "{} seed {}: final accuracy {:.4} after {} rounds, wrote {}",
        summary.pipeline,
        summary.seed,
        summary.final_test_accuracy,
        summary.rounds,
        args.out.display()
    );
    Ok(())
}
