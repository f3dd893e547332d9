use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hees_core::harness::config::{parse_config, wants_median, ConfigError, ExperimentConfig};
use hees_core::harness::csv::{write_medians, write_traces};
use hees_core::harness::experiment::{median_records, run_experiment_with_threads};

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "hees", about = "Hessian estimation evolution strategies on quadratic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment and write the trace CSV.
    Run {
        config: PathBuf,
        /// Output file; defaults to the config's `output`, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to all cores.
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
        parallel: Option<u16>,
        /// Write per-iteration medians over seeds instead of raw traces.
        #[arg(long)]
        aggregate: Option<Aggregate>,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// Print the version.
    Version,
}

#[derive(Clone, Copy, ValueEnum)]
enum Aggregate {
    Median,
}

fn load(path: &Path) -> Result<(String, ExperimentConfig), ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    let cfg = parse_config(&text)?;
    Ok((text, cfg))
}

fn open_output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(config: &Path, out: Option<PathBuf>, parallel: Option<u16>, aggregate: Option<Aggregate>) -> ExitCode {
    let (text, cfg) = match load(config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let traces = match run_experiment_with_threads(&cfg, parallel.map(usize::from)) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(RUNTIME_ERROR);
        }
    };
    let failed: Vec<_> = traces.iter().filter(|t| t.error.is_some()).collect();
    for t in &failed {
        eprintln!("error: run {} stopped after {} iterations: {}", t.seed, t.len(), t.error.as_deref().unwrap_or(""));
    }

    let out = out.or_else(|| cfg.output.as_ref().map(PathBuf::from));
    let median = aggregate.is_some() || wants_median(&text);
    let written = open_output(out.as_deref()).and_then(|mut w| {
        if median {
            let medians = median_records(&traces).map_err(|e| io::Error::other(e.to_string()))?;
            write_medians(&mut w, &medians)?;
        } else {
            write_traces(&mut w, &traces)?;
        }
        w.flush()
    });
    if let Err(e) = written {
        eprintln!("error: cannot write output: {e}");
        return ExitCode::from(RUNTIME_ERROR);
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(RUNTIME_ERROR)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { CONFIG_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run {
            config,
            out,
            parallel,
            aggregate,
        } => run(&config, out, parallel, aggregate),
        Command::Validate { config } => match load(&config) {
            Ok((_, cfg)) => {
                println!(
                    "ok: {} on {:?} d={}, {} seeds, budget {}",
                    cfg.algorithm,
                    cfg.problem.kind,
                    cfg.problem.d,
                    cfg.seeds.len(),
                    cfg.budget
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(CONFIG_ERROR)
            }
        },
        Command::Version => {
            println!("hees {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
    }
}
