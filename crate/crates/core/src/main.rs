use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use eulerlab::experiment::{self, error_exit_code};
use eulerlab::plot;

#[derive(Parser)]
#[command(
    name = "eulerlab",
    version,
    about = "Euler vorticity verification experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Dotted `key=value` replacement applied to the config before validation.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Extract columns of a CSV into a plot-ready data file.
    Plot {
        csv: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        cols: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = plot::DEFAULT_MAX_ROWS)]
        max_rows: usize,
    },
    /// Parse and validate a config without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("TOOL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("TOOL_THREADS must be a positive integer, got `{raw}`"))?;
    if n == 0 {
        return Err("TOOL_THREADS must be >= 1".into());
    }
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
    let code = match cli.command {
        Command::Run {
            config,
            output_dir,
            overrides,
        } => {
            match experiment::load_config(&config, &overrides)
                .and_then(|(v, c)| c.validate().map(|_| (v, c)))
            {
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
                Ok((value, cfg)) => {
                    let dir = output_dir
                        .or_else(|| cfg.output_dir.clone())
                        .unwrap_or_else(|| PathBuf::from("out"));
                    match experiment::run_experiment(&value, &cfg, &dir) {
                        Ok(outcome) => {
                            if let experiment::Outcome::Aborted(m) = &outcome {
                                eprintln!("aborted: {m}");
                            }
                            println!("{}", dir.join(experiment::MANIFEST_NAME).display());
                            outcome.exit_code()
                        }
                        Err(e) => {
                            eprintln!("error: {e}");
                            error_exit_code(&e)
                        }
                    }
                }
            }
        }
        Command::Plot {
            csv,
            cols,
            output,
            max_rows,
        } => match plot::plot_emit(&csv, &cols, output.as_deref(), max_rows) {
            Ok(out) => {
                println!("{} ({} rows)", out.data_path.display(), out.meta.rows_out);
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
        Command::Validate { config, overrides } => {
            match experiment::load_config(&config, &overrides).and_then(|(_, c)| c.validate()) {
                Ok(()) => {
                    println!("ok");
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            }
        }
    };
    ExitCode::from(code as u8)
}
