// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! `mda`: model-driven analytics from the command line.

/// `println!` that tolerates a closed pipe, so `mda ... | head` ends
/// cleanly and the store lock is still released.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = writeln!(std::io::stdout(), $($arg)*) {
            if e.kind() != std::io::ErrorKind::BrokenPipe {
                panic!("cannot write to standard output: {e}");
            }
        }
    }};
}

mod commands;
mod config;
mod fail;
mod session;
mod time;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mda_core::bench::{Epsilon, Signal};

use config::{Common, StoreFlags};

#[derive(Debug, Parser)]
#[command(name = "mda", version, about = "Model-driven analytics over a temporal graph store")]
#[command(after_help = "Exit codes: 0 success, 1 domain failure, 2 usage or I/O failure.")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a model file; diagnostics go to standard error
    Check {
        file: PathBuf,
    },
    /// Load topology and readings CSV files into a store, creating it if needed
    Ingest {
        /// Readings: node_id,attribute,timestamp_ms,value
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
        /// Topology: op,node_id,arg,target,timestamp_ms (applied first)
        #[arg(long, value_name = "FILE")]
        topology: Option<PathBuf>,
        /// Rows between refinements [default: 1000]
        #[arg(long)]
        batch: Option<usize>,
        #[command(flatten)]
        settings: StoreFlags,
    },
    /// Read one value at a point in time
    Query {
        #[arg(long)]
        node: String,
        #[arg(long)]
        attr: String,
        /// ISO 8601 time (UTC unless an offset is given) or epoch milliseconds
        #[arg(long, value_parser = time::parse)]
        at: i64,
    },
    /// Compression counters per class attribute
    Stats,
    /// Suspicious learned values in a time range
    Anomalies {
        #[arg(long, value_parser = time::parse)]
        from: i64,
        #[arg(long, value_parser = time::parse)]
        to: i64,
        /// Probability threshold [default: the store's theta]
        #[arg(long, value_name = "THETA")]
        threshold: Option<f64>,
    },
    /// Run scenario files against forks of the stored worlds; the store is not changed
    Whatif {
        #[arg(required = true, value_name = "SCENARIO")]
        scenarios: Vec<PathBuf>,
    },
    /// Compression ratio and random-read latency on a synthetic signal
    Bench {
        #[arg(long, default_value = "sine")]
        signal: Signal,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        /// Absolute bound, or a percentage of the signal range such as 1%
        #[arg(long, default_value = "0", value_parser = commands::parse_bench_epsilon)]
        epsilon: Epsilon,
        /// Timed random reads against the compressed chain
        #[arg(long, default_value_t = 10_000)]
        reads: usize,
        /// Timed reads against the raw CSV scan
        #[arg(long, default_value_t = 20)]
        scan_reads: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Write a synthetic smart-grid data set: model, topology, readings and injected anomalies
    Generate {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Generator settings as JSON (camelCase keys); flags below override it
        #[arg(long, value_name = "FILE")]
        settings: Option<PathBuf>,
        /// Start from the eight-week demo settings instead of four weeks
        #[arg(long)]
        demo: bool,
        #[arg(long)]
        meters: Option<usize>,
        #[arg(long)]
        days: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.common, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            f.code()
        }
    }
}
