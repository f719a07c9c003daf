use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use specsense::cli::{self, Command, OutputFormat};

/// Energy-optimal spectrum sensing schedules for remote state estimation.
#[derive(Debug, Parser)]
#[command(name = "specsense", version)]
struct Args {
    /// Experiment config (TOML key-value); omitted means the reference scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "solve")]
    command: Command,
    /// Output file; overrides `output.path`. Without either, results go to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides `output.format`.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Overrides `monte_carlo.master_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn sidecar(path: &Path, format: OutputFormat) -> PathBuf {
    let ext = match format {
        OutputFormat::Csv => "per_n.csv",
        OutputFormat::Json => "per_n.json",
    };
    path.with_extension(ext)
}

fn run(args: Args) -> specsense::Result<bool> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| specsense::Error::Config(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = cli::parse_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.monte_carlo.master_seed = seed;
    }
    let format = args.format.unwrap_or(cfg.format);
    let out = cli::run_command(&cfg, args.command)?;
    match args.output.or(cfg.output_path.clone()) {
        Some(path) => {
            cli::write_output(&out.table, format, &path)?;
            cli::write_output(&out.per_n, format, &sidecar(&path, format))?;
            log::info!("wrote {}", path.display());
        }
        None => {
            print!("{}", out.table.render(format));
            eprint!("{}", out.per_n.render(format));
        }
    }
    if !out.success {
        log::error!("no feasible, converged result");
    }
    Ok(out.success)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPECSENSE_LOG", "warn")).init();
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
