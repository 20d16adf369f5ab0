use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nmqaoa::experiment::alloc::CountingAllocator;
use nmqaoa::experiment::config::OutputFormat;
use nmqaoa::experiment::{self as exp, ExperimentConfig, Table};
use nmqaoa::Error;
use serde::Serialize;

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

#[derive(Parser)]
#[command(name = "nmqaoa", version, about = "QAOA Max-Cut under non-Markovian noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a schedule and report the resulting distribution (JSON).
    Solve(Common),
    /// Sweep a mode parameter and report non-Markovianity and ratios (CSV).
    Sweep(Common),
    /// Sample random schedules and report exploration rates (CSV).
    Explore(Common),
    /// Compare master-equation and trajectory backends (CSV).
    Benchmark(Common),
    /// Optimize the multi-node fixtures over a node range (CSV).
    Multinode(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON); may name a preset via `"preset"`.
    #[arg(long)]
    config: PathBuf,
    /// Output file; defaults to the config's output path, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "NMQAOA_WORKERS")]
    workers: Option<NonZeroUsize>,
}

enum Failure {
    Config(Error),
    Solver(Error),
    Output(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => Failure::Config(e),
            e => Failure::Solver(e),
        }
    }
}

enum Output {
    Table(Table),
    Json(String),
}

fn json<T: Serialize>(value: &T) -> Result<Output, Failure> {
    serde_json::to_string_pretty(value).map(Output::Json).map_err(|e| Failure::Solver(e.into()))
}

fn run(command: Command) -> Result<(), Failure> {
    let (kind, common) = match command {
        Command::Solve(c) => ("solve", c),
        Command::Sweep(c) => ("sweep", c),
        Command::Explore(c) => ("explore", c),
        Command::Benchmark(c) => ("benchmark", c),
        Command::Multinode(c) => ("multinode", c),
    };
    let mut cfg = ExperimentConfig::load(&common.config).map_err(Failure::Config)?;
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    let workers = common
        .workers
        .or_else(|| std::thread::available_parallelism().ok())
        .map_or(1, NonZeroUsize::get);
    let as_json = cfg.output.format == OutputFormat::Json;

    let output = match kind {
        "solve" => {
            let res = exp::cmd_solve(&cfg, workers)?;
            if cfg.output.format == OutputFormat::Csv {
                Output::Table(exp::solve_table(&res))
            } else {
                json(&res)?
            }
        }
        "benchmark" => {
            let recs = exp::cmd_benchmark(&cfg, workers)?;
            if as_json { json(&recs)? } else { Output::Table(exp::benchmark_table(&recs)) }
        }
        "multinode" => {
            let rows = exp::cmd_multinode(&cfg, workers)?;
            if as_json { json(&rows)? } else { Output::Table(exp::multinode_table(&rows)) }
        }
        _ if as_json => {
            return Err(Failure::Config(Error::Config(format!("{kind} produces CSV only"))));
        }
        "sweep" => Output::Table(exp::cmd_sweep(&cfg, workers)?),
        _ => Output::Table(exp::cmd_explore(&cfg, workers)?),
    };

    let path = common.out.or_else(|| cfg.output.path.as_ref().map(PathBuf::from));
    let mut sink: Box<dyn Write> = match &path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(Failure::Output)?)),
        None => Box::new(io::stdout().lock()),
    };
    match output {
        Output::Table(t) => t.write_csv(&mut sink).map_err(|e| match e {
            Error::Io(e) => Failure::Output(e),
            e => Failure::Solver(e),
        })?,
        Output::Json(s) => writeln!(sink, "{s}").map_err(Failure::Output)?,
    }
    sink.flush().map_err(Failure::Output)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("nmqaoa: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("nmqaoa: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Output(e)) => {
            eprintln!("nmqaoa: cannot write output: {e}");
            ExitCode::from(1)
        }
    }
}
