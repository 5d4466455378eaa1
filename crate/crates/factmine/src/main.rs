use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use factmine::{commands, parallel, Error, PipelineConfig, Result};

#[derive(Parser)]
#[command(
    name = "factmine",
    version,
    about = "Fact-aware pair mining, retriever training and evaluation"
)]
struct Cli {
    /// Flat `key = value` config file, or a `.prov.json` sidecar to replay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Prefix for every relative artifact path.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Mine positive pairs from the train split.
    Mine,
    /// Pair statistics over the threshold grid.
    Sweep {
        /// Also report MRR of this checkpoint's run at every grid point.
        #[arg(long)]
        with_checkpoint: bool,
    },
    /// Train the projection encoders on mined pairs.
    Train {
        #[arg(long)]
        seed: u64,
    },
    /// Embed the train split with a checkpoint.
    Index,
    /// Retrieve for every query of `eval.split`.
    Retrieve,
    /// Score a retrieval run.
    Eval {
        /// Run to score instead of the config's `run`.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Use a pairs file as relevance judgments.
        #[arg(long)]
        qrels: Option<PathBuf>,
    },
    /// Ground-truth-informed rank-1 run.
    Oracle,
    /// Fine-tuning examples for a report generator.
    BuildRag {
        #[arg(long)]
        mode: Option<String>,
    },
    /// Scores between two reports of the corpus.
    Score {
        #[arg(long)]
        reference: String,
        #[arg(long)]
        hypothesis: String,
    },
    /// mine, train, index, retrieve and eval in one go.
    Pipeline {
        #[arg(long)]
        seed: u64,
        /// Generate the corpus first.
        #[arg(long)]
        synth: bool,
    },
}

fn resolve(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    cfg.apply(&cli.set)?;
    match &cli.command {
        Command::Synth { seed: Some(s) } | Command::Train { seed: s } | Command::Pipeline { seed: s, .. } => {
            cfg.seed = *s
        }
        Command::BuildRag { mode: Some(m) } => cfg.set("rag.mode", m)?,
        _ => {}
    }
    if let Some(dir) = &cli.out_dir {
        cfg.rebase_outputs(dir);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    parallel::init_threads()?;
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Mine => commands::mine(&cfg),
        Command::Sweep { with_checkpoint } => commands::sweep(&cfg, *with_checkpoint),
        Command::Train { .. } => commands::train(&cfg),
        Command::Index => commands::index(&cfg),
        Command::Retrieve => commands::retrieve(&cfg),
        Command::Eval { run, qrels } => commands::evaluate(&cfg, run.as_deref(), qrels.as_deref()),
        Command::Oracle => commands::oracle(&cfg),
        Command::BuildRag { .. } => commands::build_rag(&cfg),
        Command::Score { reference, hypothesis } => commands::score(&cfg, reference, hypothesis),
        Command::Pipeline { synth, .. } => commands::pipeline(&cfg, *synth),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = Error::record(&e);
            eprintln!("{}", serde_json::to_string(&record).expect("error record serializes"));
            ExitCode::from(2)
        }
    }
}
