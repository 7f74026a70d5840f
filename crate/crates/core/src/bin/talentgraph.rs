use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use talentgraph::gnn::ConvKind;
use talentgraph::learning::HeadKind;
use talentgraph::pipeline::{Overrides, PipelineConfig, PipelineError, RunDir, Subcommand};

const EXIT_USAGE: u8 = 64;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Synth,
    Extract,
    Embed,
    BuildGraph,
    Train,
    Evaluate,
    Predict,
    Pipeline,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::Synth => Subcommand::Synth,
            Command::Extract => Subcommand::Extract,
            Command::Embed => Subcommand::Embed,
            Command::BuildGraph => Subcommand::BuildGraph,
            Command::Train => Subcommand::Train,
            Command::Evaluate => Subcommand::Evaluate,
            Command::Predict => Subcommand::Predict,
            Command::Pipeline => Subcommand::Pipeline,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Conv {
    Gcn,
    Rgcn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Head {
    Ordinal,
    Multilabel,
}

/// Recruitment stage prediction on candidate similarity graphs.
#[derive(Debug, Parser)]
#[command(name = "talentgraph", version)]
struct Cli {
    /// Stage to run.
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file; missing keys take defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Neighbors per keyword.
    #[arg(long, value_name = "N")]
    k: Option<usize>,
    #[arg(long, value_name = "F")]
    lambda: Option<f64>,
    #[arg(long, value_name = "F")]
    theta: Option<f64>,
    #[arg(long, value_enum)]
    conv: Option<Conv>,
    #[arg(long, value_enum)]
    head: Option<Head>,
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// Random-search trials; 0 trains the configured model.
    #[arg(long, value_name = "N")]
    trials: Option<usize>,
    /// Run directory.
    #[arg(long, value_name = "DIR", default_value = "run")]
    out: PathBuf,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            k: self.k,
            lambda: self.lambda,
            theta: self.theta,
            conv: self.conv.map(|c| match c {
                Conv::Gcn => ConvKind::Gcn,
                Conv::Rgcn => ConvKind::Rgcn,
            }),
            head: self.head.map(|h| match h {
                Head::Ordinal => HeadKind::Ordinal,
                Head::Multilabel => HeadKind::Multilabel,
            }),
            epochs: self.epochs,
            trials: self.trials,
        }
    }
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    config.apply(&cli.overrides());
    let dir = RunDir::open(&cli.out, config)?;
    for outcome in dir.run(cli.command.into())? {
        for w in &outcome.warnings {
            eprintln!("warning: {}: {w}", outcome.stage);
        }
        for path in &outcome.outputs {
            println!("{}\t{}", outcome.stage, path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
