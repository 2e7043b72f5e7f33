use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rerender_cli::{apply, bench, simulate, Failure};
use rerender_core::intervention::Registry;
use rerender_core::model::Collaboration;
use rerender_server::config::ServerConfig;
use rerender_server::AppState;

#[derive(Parser)]
#[command(name = "rerender", version, about = "Re-render screen content through user-built interventions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP server.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Apply interventions to every PNG in a directory.
    Apply {
        #[arg(long = "in")]
        input: PathBuf,
        /// Intervention ids, `owner/name` pairs or unique bare names, in chain order.
        #[arg(long, num_args = 0..)]
        interventions: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Registry directory (the server keeps it at `<data_root>/interventions`).
        #[arg(long, default_value = "data/interventions")]
        registry: PathBuf,
    },
    /// Simulate collaborative labelling and print the accuracy curve as CSV.
    Simulate {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        users: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        rate: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON corpus `{"positives": [...], "negatives": [...]}`.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure pipeline throughput on a synthetic skin.
    Bench {
        #[arg(long)]
        skin: String,
        /// Mask interventions to activate; 0 measures encoding alone.
        #[arg(long)]
        masks: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        frames: u64,
        #[arg(long, default_value_t = 85, value_parser = clap::value_parser!(u8).range(1..=100))]
        quality: u8,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let result = match cli.command {
        Command::Serve { config } => serve(config),
        Command::Apply { input, interventions, out, registry } => run_apply(input, interventions, out, registry),
        Command::Simulate { users, rate, steps, seed, corpus, out } => {
            let c = Collaboration { users: users as usize, rate: rate as usize, steps: steps as usize, seed };
            run_simulate(c, corpus, out)
        }
        Command::Bench { skin, masks, frames, quality } => {
            bench::run(&skin, masks as usize, frames as usize, quality).and_then(|r| print_json(&r))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn serve(path: PathBuf) -> Result<(), Failure> {
    let config = ServerConfig::load(&path).map_err(|e| Failure::usage(e.to_string()))?;
    let state = AppState::open(config.clone()).map_err(|e| Failure::usage(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::domain(format!("cannot start runtime: {e}")))?;
    rt.block_on(async move {
        let listener = rerender_server::bind(&config).await.map_err(|e| Failure::usage(e.to_string()))?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        rerender_server::serve(listener, state, shutdown).await.map_err(|e| Failure::domain(e.to_string()))
    })
}

fn run_apply(input: PathBuf, names: Vec<String>, out: PathBuf, registry: PathBuf) -> Result<(), Failure> {
    let reg = if names.is_empty() {
        Registry::in_memory()
    } else if registry.is_dir() {
        Registry::open(&registry).map_err(|e| Failure::usage(format!("cannot open registry: {e}")))?
    } else {
        return Err(Failure::usage(format!("registry directory {} does not exist", registry.display())));
    };
    let ids = apply::resolve(&reg, &names)?;
    let summary = apply::apply_dir(&input, &out, &reg, ids)?;
    eprintln!("{} frames written, {} changed", summary.frames, summary.changed);
    Ok(())
}

fn run_simulate(c: Collaboration, corpus: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), Failure> {
    let corpus = corpus.as_deref().map(simulate::load_corpus).transpose()?;
    let report = simulate::run(&c, corpus)?;
    let written = match &out {
        Some(path) => std::fs::File::create(path)
            .map_err(csv::Error::from)
            .and_then(|f| simulate::write_csv(&report.curve, f)),
        None => simulate::write_csv(&report.curve, std::io::stdout().lock()),
    };
    written.map_err(|e| Failure::domain(format!("cannot write curve: {e}")))?;
    let converged = report.converged_at.map_or("never".to_string(), |t| t.to_string());
    eprintln!(
        "baseline accuracy {:.4}; reached {:.0}% of baseline at timestep {converged}; final accuracy {:.4}",
        report.baseline_accuracy,
        simulate::CONVERGED_SHARE * 100.0,
        report.final_accuracy
    );
    Ok(())
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v).map_err(|e| Failure::domain(e.to_string()))?;
    writeln!(out).map_err(|e| Failure::domain(e.to_string()))
}
