use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpplearn_cli::commands::{self, DiversityMode, RunOptions, SamplerKind};
use dpplearn_cli::{CliError, CliResult, Config};

#[derive(Parser)]
#[command(name = "dpplearn", version = commands::VERSION, about = "Learn DPP kernel parameters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct Chains {
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    /// Defaults to bounded-slice for continuous models and slice otherwise.
    #[arg(long, value_enum)]
    sampler: Option<SamplerKind>,
}

impl Chains {
    fn options(&self, seed: u64) -> RunOptions {
        RunOptions {
            seed,
            chains: self.chains,
            iters: self.iters,
            burnin: self.burnin,
            thin: self.thin,
            sampler: self.sampler,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw exact samples at the configured parameters.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a model to a point-pattern CSV.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        chains: Chains,
        #[arg(long)]
        data: PathBuf,
    },
    /// Compare theoretical moments under posterior traces with the data.
    Moments {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        trace: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
    },
    /// Leave-one-out classification between labelled point-pattern files.
    ClassifyLoo {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        chains: Chains,
        /// `name=path`, once per class.
        #[arg(long = "class", required = true, value_parser = parse_class)]
        classes: Vec<(String, PathBuf)>,
    },
    /// Learn per-block feature weights from annotations or top-k lists.
    ImageDiversity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        chains: Chains,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, conflicts_with = "top_k")]
        annotations: Option<PathBuf>,
        #[arg(long)]
        top_k: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = DiversityMode::Conditional)]
        mode: DiversityMode,
    },
}

fn parse_class(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected name=path, got `{s}`")),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = Config::load(&common.config)?;
            commands::cmd_simulate(&cfg, common.seed, &common.out)?;
        }
        Command::Fit { common, chains, data } => {
            let cfg = Config::load(&common.config)?;
            commands::cmd_fit(&cfg, &data, &chains.options(common.seed), &common.out)?;
        }
        Command::Moments { common, trace, data } => {
            let cfg = Config::load(&common.config)?;
            commands::cmd_moments(&cfg, &trace, &data, &common.out)?;
        }
        Command::ClassifyLoo { common, chains, classes } => {
            let cfg = Config::load(&common.config)?;
            commands::cmd_classify_loo(&cfg, &classes, &chains.options(common.seed), &common.out)?;
        }
        Command::ImageDiversity {
            common,
            chains,
            features,
            annotations,
            top_k,
            mode,
        } => {
            let cfg = Config::load(&common.config)?;
            commands::cmd_image_diversity(
                &cfg,
                &features,
                annotations.as_deref(),
                top_k.as_deref(),
                mode,
                &chains.options(common.seed),
                &common.out,
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            if let CliError::Model(dpplearn::DppError::BoundedStepUnresolved { .. }) = &e {
                log::error!("raise fit.max_eigenvalues or reduce the proposal scale");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
