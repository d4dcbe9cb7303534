use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sclrai::commands;
use sclrai::{CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "sclrai",
    version,
    about = "Span-based NER with contrastive learning and retrieval-augmented inference"
)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Overrides any config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distant supervision of raw text, or dropping gold entities from a BIO file.
    Corrupt(CorruptArgs),
    /// Trains a model; writes checkpoint, centroid table and epoch log.
    Train(TrainArgs),
    /// Scores a checkpoint on a test file.
    Eval(EvalArgs),
    /// Robustness or batch-size experiment over several seeds.
    Experiment(ExperimentArgs),
    /// Compares analytic gradients with finite differences on a small random problem.
    Gradcheck(GradcheckArgs),
    /// Writes projected span representations of a BIO file.
    DumpReprs(DumpArgs),
    /// Extracts an entity dictionary from a BIO file.
    BuildDict(BuildDictArgs),
    /// Generates the synthetic train/dev/test/extra corpus.
    GenSynth(GenSynthArgs),
}

#[derive(Args)]
struct CorruptArgs {
    /// dict, rate or surface.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    raw: Option<PathBuf>,
    #[arg(long)]
    dictionary: Option<PathBuf>,
    #[arg(long)]
    drop_prob: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    train_features: Option<PathBuf>,
    #[arg(long)]
    dev_features: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    centroids: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    centroids: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Triple-column BIO output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// robustness or batch_sweep.
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Corrupted extra sentences added to the training set.
    #[arg(long)]
    noisy: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    frozen: bool,
    #[arg(long, hide = true)]
    corrupt_block: Option<String>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BuildDictArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenSynthArgs {
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Default)]
struct Overrides(Vec<(&'static str, String)>);

impl Overrides {
    fn path(&mut self, key: &'static str, v: Option<PathBuf>) -> &mut Self {
        if let Some(v) = v {
            self.0.push((key, v.display().to_string()));
        }
        self
    }

    fn value(&mut self, key: &'static str, v: Option<impl ToString>) -> &mut Self {
        if let Some(v) = v {
            self.0.push((key, v.to_string()));
        }
        self
    }
}

fn build_config(cli: &Cli, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        cfg.apply_text(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim()).map_err(CliError::Usage)?;
    }
    if let Some(seed) = cli.seed {
        cfg.hyper.seed = seed;
    }
    for (k, v) in &overrides.0 {
        cfg.set(k, v).map_err(CliError::Usage)?;
    }
    cfg.validate().map_err(CliError::Usage)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut o = Overrides::default();
    let mut corrupt_block = None;
    match &cli.command {
        Command::Corrupt(a) => {
            o.value("corrupt_mode", a.mode.clone())
                .path("input", a.input.clone())
                .path("raw", a.raw.clone())
                .path("dictionary", a.dictionary.clone())
                .value("drop_prob", a.drop_prob)
                .path("output", a.output.clone());
        }
        Command::Train(a) => {
            o.path("train", a.train.clone())
                .path("dev", a.dev.clone())
                .path("train_features", a.train_features.clone())
                .path("dev_features", a.dev_features.clone())
                .path("checkpoint", a.checkpoint.clone())
                .path("centroids", a.centroids.clone())
                .path("log", a.log.clone())
                .value("epochs", a.epochs);
        }
        Command::Eval(a) => {
            o.path("checkpoint", a.checkpoint.clone())
                .path("centroids", a.centroids.clone())
                .path("test", a.test.clone())
                .path("features", a.features.clone())
                .path("output", a.output.clone())
                .value("alpha", a.alpha);
        }
        Command::Experiment(a) => {
            o.value("experiment", a.experiment.clone())
                .path("train", a.train.clone())
                .path("dev", a.dev.clone())
                .path("test", a.test.clone())
                .path("noisy", a.noisy.clone())
                .path("output", a.output.clone());
        }
        Command::Gradcheck(a) => {
            o.value("lambda", a.lambda)
                .value("frozen_encoder", a.frozen.then_some(true));
            corrupt_block = a.corrupt_block.clone();
        }
        Command::DumpReprs(a) => {
            o.path("checkpoint", a.checkpoint.clone())
                .path("input", a.input.clone())
                .path("features", a.features.clone())
                .path("output", a.output.clone());
        }
        Command::BuildDict(a) => {
            o.path("input", a.input.clone())
                .path("output", a.output.clone());
        }
        Command::GenSynth(a) => {
            o.path("output", a.output.clone());
        }
    }
    let cfg = build_config(&cli, &o)?;
    log::info!("effective config:\n{}", cfg.to_text().trim_end());
    match cli.command {
        Command::Corrupt(_) => commands::corrupt(&cfg),
        Command::Train(_) => commands::train(&cfg),
        Command::Eval(_) => commands::eval(&cfg),
        Command::Experiment(_) => commands::experiment(&cfg),
        Command::Gradcheck(_) => commands::gradcheck_cmd(&cfg, corrupt_block),
        Command::DumpReprs(_) => commands::dump_reprs(&cfg),
        Command::BuildDict(_) => commands::build_dict(&cfg),
        Command::GenSynth(_) => commands::gen_synth(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
