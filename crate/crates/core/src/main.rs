use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use agrostress::neural::ModelKind;
use agrostress::pipeline::{Command, Overrides, Run, RunConfig};
use agrostress::Error;

#[derive(Parser)]
#[command(name = "agrostress", version, about = "Heat and drought stress modelling for crop yield reduction")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; the run directory is created below it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread cap; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Model kind override: dem-mlp or cnn-mlp.
    #[arg(long, value_parser = parse_kind)]
    model: Option<ModelKind>,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    ModelKind::from_name(s).ok_or_else(|| format!("unknown model kind `{s}` (expected dem-mlp or cnn-mlp)"))
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset with planted labels.
    Synth(Common),
    /// Expert-model stress vectors per instance.
    Dem {
        #[command(flatten)]
        common: Common,
        /// Also write per-environment growth calendars.
        #[arg(long)]
        emit_calendar: bool,
    },
    /// Train the configured model.
    Train(Common),
    /// Covariance and susceptibility matrices.
    Sensitivity(Common),
    /// Rank hybrids and draw heatmaps.
    Rank(Common),
    /// Cluster hybrids into susceptible and resistant groups.
    Cluster(Common),
    /// Compare rankings.
    Compare(Common),
    /// End-to-end evaluation report.
    Eval(Common),
}

fn run(cli: Cli) -> Result<(), Error> {
    let (common, command) = match cli.command {
        Cmd::Synth(c) => (c, Command::Synth),
        Cmd::Dem { common, emit_calendar } => (common, Command::Dem { emit_calendar }),
        Cmd::Train(c) => (c, Command::Train),
        Cmd::Sensitivity(c) => (c, Command::Sensitivity),
        Cmd::Rank(c) => (c, Command::Rank),
        Cmd::Cluster(c) => (c, Command::Cluster),
        Cmd::Compare(c) => (c, Command::Compare),
        Cmd::Eval(c) => (c, Command::Eval),
    };
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply(&Overrides {
        seed: common.seed,
        output_dir: common.out.clone(),
        model: common.model,
    });
    let run = Run::new(config)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = common.threads {
        if k == 0 {
            return Err(Error::Config {
                field: "--threads".into(),
                message: "must be positive".into(),
            });
        }
        pool = pool.num_threads(k);
    }
    let pool = pool.build().map_err(|e| Error::Config {
        field: "--threads".into(),
        message: e.to_string(),
    })?;
    let written = pool.install(|| run.execute(command))?;

    println!("{} -> {}", command.name(), run.dir.display());
    for path in written {
        println!("  {}", path.display());
    }
    if command == Command::Eval {
        let report = std::fs::read_to_string(run.report_path()).map_err(|e| Error::Io {
            path: run.report_path(),
            source: e,
        })?;
        print!("{report}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
