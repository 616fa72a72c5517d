mod bench;
mod keygen;
mod run;
mod selftest;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use daeq_core::ahe::RecoveryMode;
use daeq_core::group::GroupParams;

/// Threshold-encrypted federated learning simulator.
#[derive(Parser)]
#[command(name = "daeq", version)]
struct Cli {
    /// Repeat for more progress output on stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write metrics.csv, timings.csv and summary.json.
    Run(run::RunArgs),
    /// Run one key generation and print its transcript.
    KeygenDemo(keygen::KeygenArgs),
    /// Measure plaintext recovery cost per encoding bit length.
    BenchRecovery(bench::BenchArgs),
    /// Exhaustive protocol checks on the 23/11 group.
    Selftest(selftest::SelftestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RecoveryArg {
    Log,
    Bruteforce,
    Auto,
}

impl From<RecoveryArg> for RecoveryMode {
    fn from(r: RecoveryArg) -> Self {
        match r {
            RecoveryArg::Log => RecoveryMode::Log,
            RecoveryArg::Bruteforce => RecoveryMode::Bruteforce,
            RecoveryArg::Auto => RecoveryMode::Auto,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    Toy,
    Standard,
    Generated,
}

#[derive(Args, Clone, Debug)]
pub struct GroupOpts {
    #[arg(long, value_enum, default_value = "standard")]
    group: GroupArg,
    /// Subgroup order size for `--group generated`.
    #[arg(long, default_value_t = 256)]
    key_bits: u64,
    /// Modulus size for `--group generated`.
    #[arg(long, default_value_t = 3072)]
    group_bits: u64,
}

impl GroupOpts {
    pub fn params(&self) -> Result<GroupParams, Failure> {
        match self.group {
            GroupArg::Toy => Ok(GroupParams::toy()),
            GroupArg::Standard => Ok(GroupParams::preset_3072()),
            GroupArg::Generated => GroupParams::generate(self.key_bits, self.group_bits, b"daeq-fl")
                .map_err(|e| Failure::Config(e.to_string())),
        }
    }
}

/// Errors mapped onto the process exit status.
#[derive(Debug)]
pub enum Failure {
    /// Exit 1.
    Failed(String),
    /// Exit 2.
    Config(String),
    /// Exit 3.
    Abort(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Failed(e.to_string())
    }
}

impl From<daeq_core::flsim::FlError> for Failure {
    fn from(e: daeq_core::flsim::FlError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Abort(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    daeq_core::flsim::init_thread_pool();
    let result = match cli.command {
        Command::Run(args) => run::run(args, cli.verbose),
        Command::KeygenDemo(args) => keygen::run(args),
        Command::BenchRecovery(args) => bench::run(args, cli.verbose),
        Command::Selftest(args) => selftest::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Abort(msg)) => {
            eprintln!("protocol abort: {msg}");
            ExitCode::from(3)
        }
    }
}
