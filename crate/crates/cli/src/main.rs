//! `overlap`: run linkage, negotiation and averaging sessions, demos and
//! toy-scale attacks from the command line.

mod attack;
mod commands;
mod config;
mod demo;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use overlap_core::error::{ProtocolError, TransportError};

#[derive(Parser, Debug)]
#[command(name = "overlap", version, about = "Privacy-preserving overlap discovery")]
pub struct Cli {
    /// Parameter set name (toy-23, toy-64, test-512, modp-2048) or a
    /// parameter file from `keygen`.
    #[arg(long, global = true)]
    pub params: Option<String>,
    /// Seed for every random choice; makes a run reproducible.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Where to write the session transcript (a directory for `demo`).
    #[arg(long, global = true)]
    pub transcript: Option<PathBuf>,
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a parameter set and a secret key.
    Keygen(KeygenArgs),
    /// Join a linkage ring, or serve it as the mediator.
    Linkage(LinkageArgs),
    /// Two-party bid/reservation overlap check.
    Negotiate(NegotiateArgs),
    /// Ring secure sum; the first ring member learns the average.
    Average(AverageArgs),
    /// Scripted multi-party run over the simulated network.
    Demo(DemoArgs),
    /// Toy-scale attacks and transcript audits.
    #[command(subcommand)]
    Attack(AttackCommand),
}

#[derive(Args, Debug)]
pub struct KeygenArgs {
    #[arg(long)]
    pub prime_bits: u64,
    /// Output directory for params.toml and key.toml.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct NetArgs {
    /// Seconds to wait for peers.
    #[arg(long, default_value_t = 30)]
    pub timeout: u64,
    /// Pre-shared key (hex) for the authenticated channel; null channel
    /// when absent.
    #[arg(long)]
    pub psk: Option<String>,
}

#[derive(Args, Debug)]
pub struct LinkageArgs {
    #[arg(long)]
    pub ring: PathBuf,
    /// This party's id in the ring file.
    #[arg(long, required_unless_present = "mediator")]
    pub id: Option<String>,
    /// Item file, one item per line.
    #[arg(long, required_unless_present = "mediator")]
    pub items: Option<PathBuf>,
    /// Key file from `keygen`; a fresh key is drawn otherwise.
    #[arg(long)]
    pub key: Option<PathBuf>,
    /// Run as the keyless mediator listed in the ring file.
    #[arg(long, conflicts_with_all = ["id", "items", "key"])]
    pub mediator: bool,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RoleArg {
    Alice,
    Bob,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Symmetric,
    AliceOnly,
}

#[derive(Args, Debug)]
pub struct NegotiateArgs {
    #[arg(long, value_enum)]
    pub role: RoleArg,
    /// Bid (Alice) or reservation (Bob), in cents.
    #[arg(long)]
    pub price: u64,
    /// Public price grid `min:max:step`, in cents.
    #[arg(long)]
    pub grid: String,
    #[arg(long, value_enum, default_value = "symmetric")]
    pub mode: ModeArg,
    #[arg(long, conflicts_with = "connect", required_unless_present = "connect")]
    pub listen: Option<String>,
    #[arg(long)]
    pub connect: Option<String>,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Args, Debug)]
pub struct AverageArgs {
    #[arg(long)]
    pub value: String,
    #[arg(long)]
    pub ring: PathBuf,
    #[arg(long)]
    pub id: String,
    /// Initiator only: send the result to every member.
    #[arg(long)]
    pub broadcast: bool,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Args, Debug)]
pub struct DemoArgs {
    /// linkage-3party, negotiate-feasible, negotiate-infeasible or
    /// average-5party.
    pub scenario: String,
}

#[derive(Subcommand, Debug)]
pub enum AttackCommand {
    /// Brute-force discrete log against a random key at a fresh safe prime.
    Dlog {
        #[arg(long)]
        prime_bits: u64,
        #[arg(long)]
        budget: u64,
    },
    /// Audit what a coalition holds about one ring member.
    Collusion {
        /// Directory of `p<i>.jsonl` transcripts, optionally with
        /// `truth.json`.
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long, value_delimiter = ',')]
        colluders: Vec<usize>,
        #[arg(long)]
        target: usize,
        #[arg(long, default_value_t = 1 << 24)]
        budget: u64,
    },
    /// Cross-session ciphertext linkage.
    Frequency {
        /// One transcript file or directory per session.
        #[arg(long, num_args = 2.., required = true)]
        sessions: Vec<PathBuf>,
        #[arg(long)]
        salted: bool,
    },
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Network(anyhow::Error),
    Protocol(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Network(_) => 3,
            Failure::Protocol(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Network(e) | Failure::Protocol(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        Failure::Config(err)
    }
}

impl From<ProtocolError> for Failure {
    fn from(err: ProtocolError) -> Self {
        match err {
            ProtocolError::Transport(_) => Failure::Network(err.into()),
            ProtocolError::Parameters(_) => Failure::Config(err.into()),
            _ => Failure::Protocol(err.into()),
        }
    }
}

impl From<TransportError> for Failure {
    fn from(err: TransportError) -> Self {
        Failure::Network(err.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(output) => {
            println!("{output}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
