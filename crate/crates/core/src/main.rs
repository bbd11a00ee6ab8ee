use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use robust_detect::config::{ConfigFile, Experiment};
use robust_detect::experiment::{evaluate, write_csv, write_csv_file, Mode};
use robust_detect::{Error, Result};

#[derive(Parser)]
#[command(
    name = "robust-detect",
    version,
    about = "Robust Gaussian detection experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the config's trial count.
    #[arg(long, global = true)]
    trials: Option<u64>,

    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; changes speed only, never results.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo plus analytical predictions.
    Run {
        config: PathBuf,
        /// Output CSV; defaults to the config's `output`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytical predictions only.
    Predict {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and echo the resolved parameters.
    Validate { config: PathBuf },
    /// Replicate one of the canned figure experiments.
    Figure {
        figure: Figure,
        /// Directory receiving `<figure>.csv`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    Fig1,
    Fig2,
    Fig3,
}

impl Figure {
    fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;

    let overrides = |file: ConfigFile| -> Result<Experiment> {
        let mut file = file;
        if let Some(n) = cli.trials {
            file.config.n_trials = n;
        }
        if let Some(s) = cli.seed {
            file.config.master_seed = Some(s);
        }
        file.resolve()
    };

    match &cli.command {
        Command::Validate { config } => {
            let exp = overrides(ConfigFile::load(config)?)?;
            print!("{}", exp.report());
            Ok(())
        }
        Command::Run { config, out } | Command::Predict { config, out } => {
            let mode = match cli.command {
                Command::Run { .. } => Mode::Run,
                _ => Mode::Predict,
            };
            let exp = overrides(ConfigFile::load(config)?)?;
            let target = out.clone().or_else(|| {
                exp.config
                    .output
                    .as_ref()
                    .map(|o| config.parent().unwrap_or(Path::new(".")).join(o))
            });
            let report = pool.install(|| evaluate(&exp, mode))?;
            match target {
                Some(path) => {
                    write_csv_file(&exp, mode, &report, &path)?;
                    eprintln!("wrote {} rows to {}", report.len(), path.display());
                }
                None => write_csv(&exp, mode, &report, std::io::stdout().lock())?,
            }
            Ok(())
        }
        Command::Figure { figure, out } => {
            let file =
                ConfigFile::canned(figure.name()).expect("canned figure configs are built in");
            let exp = overrides(file)?;
            let mode = match figure {
                Figure::Fig3 => Mode::Predict,
                _ => Mode::Run,
            };
            let report = pool.install(|| evaluate(&exp, mode))?;
            let path = out.join(format!("{}.csv", figure.name()));
            write_csv_file(&exp, mode, &report, &path)?;
            eprintln!("wrote {} rows to {}", report.len(), path.display());
            Ok(())
        }
    }
}
