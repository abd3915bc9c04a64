use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedinfo::config::parse_epsilons;
use fedinfo::plot::{render_all, PlotError};
use fedinfo::{run, RunConfig};
use fedinfo_core::probe::read_log;

#[derive(Parser)]
#[command(
    name = "fedinfo",
    version,
    about = "Federated averaging with mutual-information probes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Comma-separated MI bin widths, overriding `mi_epsilons`.
        #[arg(long)]
        epsilons: Option<String>,
        /// Treat the epsilons as absolute widths rather than multipliers.
        #[arg(long, requires = "epsilons")]
        absolute: bool,
        /// Overrides `hash_seed`.
        #[arg(long)]
        hash_seed: Option<u64>,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress per-round progress on stderr.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Render the SVG charts of an existing log.
    Plot { log: PathBuf, outdir: PathBuf },
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("FEDINFO_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("FEDINFO_THREADS must be a positive integer, found {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match cli.command {
        Command::Run {
            config,
            epsilons,
            absolute,
            hash_seed,
            out,
            quiet,
        } => {
            let mut cfg = match RunConfig::from_file(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(1);
                }
            };
            if let Some(eps) = epsilons {
                match parse_epsilons(&eps) {
                    Ok(v) => cfg.set_epsilons(v, absolute),
                    Err(e) => {
                        eprintln!("config error: {e}");
                        return ExitCode::from(1);
                    }
                }
            }
            if let Some(s) = hash_seed {
                cfg.mi.hash_seed = s;
            }
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            match run(&cfg, !quiet) {
                Ok(report) => {
                    if !quiet {
                        eprintln!(
                            "wrote {} records over {} aggregation points to {}",
                            report.records.len(),
                            report.rounds,
                            report.output_dir.display()
                        );
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    let kind = if e.exit_code() == 1 {
                        "config error"
                    } else {
                        "error"
                    };
                    eprintln!("{kind}: {e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
        Command::Plot { log, outdir } => {
            let result = read_log(&log)
                .map_err(PlotError::from)
                .and_then(|records| render_all(&records, &outdir));
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
