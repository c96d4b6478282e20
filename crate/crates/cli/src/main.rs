use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rfmlp::DecisionStrategy;
use rfmlp_bench::bench::render_summary;
use rfmlp_bench::config::parse_delimiter;
use rfmlp_bench::{
    cmd_bench, cmd_curves, cmd_predict, cmd_train, BenchError, PredictArgs, Result, RunConfig,
    SplitMode,
};

#[derive(Parser)]
#[command(name = "rfmlp", version, about = "Forests of feature-subset MLPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validate the baseline MLP and the ensemble strategies.
    Bench(RunArgs),
    /// Write per-epoch accuracy curves for one fold of every seed.
    Curves(RunArgs),
    /// Train a forest on a whole data file and save it.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Model file to write.
        #[arg(long, short = 'm')]
        model: PathBuf,
    },
    /// Classify the rows of a delimited file with a saved forest.
    Predict {
        #[arg(long, short = 'm')]
        model: PathBuf,
        #[arg(long, short = 'i')]
        input: PathBuf,
        /// vote, equiprobable or weighted.
        #[arg(long, default_value = "equiprobable")]
        strategy: String,
        #[arg(long, default_value_t = rfmlp::decision::DEFAULT_VOTE_THRESHOLD)]
        vote_threshold: f64,
        #[arg(long, default_value = ",")]
        delimiter: String,
        /// Column ignored if present in the input.
        #[arg(long, default_value = "class")]
        label_column: String,
        /// Output file; standard output if omitted.
        #[arg(long, short = 'o')]
        output: Option<PathBuf>,
    },
}

/// Settings shared by the commands that read a run configuration. Flags
/// override the values of `--config`.
#[derive(Args)]
struct RunArgs {
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    delimiter: Option<String>,
    #[arg(long)]
    k_folds: Option<usize>,
    /// Comma-separated list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated list of vote, equiprobable, weighted.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    #[arg(long)]
    vote_threshold: Option<f64>,
    /// Skip the single-MLP baseline.
    #[arg(long)]
    no_baseline: bool,
    #[arg(long)]
    whiten: bool,
    /// inverted_kfold or per_class.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    curve_fold: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batches_per_epoch: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Worker threads; 0 uses one per core.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set! {
            data => cfg.data,
            label_column => cfg.label_column,
            delimiter => cfg.delimiter,
            k_folds => cfg.k_folds,
            seeds => cfg.seeds,
            strategies => cfg.strategies,
            vote_threshold => cfg.vote_threshold,
            per_class => cfg.per_class,
            curve_fold => cfg.curve_fold,
            epochs => cfg.train.epochs,
            batches_per_epoch => cfg.train.batches_per_epoch,
            batch_size => cfg.train.batch_size,
            hidden => cfg.train.hidden,
            patience => cfg.train.early_stop_patience,
            threads => cfg.threads,
            out => cfg.output_dir,
        }
        if let Some(split) = self.split {
            cfg.split = match split.as_str() {
                "inverted_kfold" => SplitMode::InvertedKfold,
                "per_class" => SplitMode::PerClass,
                other => {
                    return Err(BenchError::Config(format!(
                        "unknown split {other:?} (expected inverted_kfold or per_class)"
                    )))
                }
            };
        }
        if self.no_baseline {
            cfg.include_baseline_mlp = false;
        }
        if self.whiten {
            cfg.whiten = true;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench(args) => {
            let cfg = args.into_config()?;
            let result = cmd_bench(&cfg)?;
            print!("{}", render_summary(&result));
            println!("results written to {}", cfg.output_dir.display());
        }
        Command::Curves(args) => {
            let cfg = args.into_config()?;
            let curves = cmd_curves(&cfg)?;
            println!(
                "wrote {} curve file(s) to {}",
                curves.len(),
                cfg.output_dir.display()
            );
        }
        Command::Train { run, model } => {
            let cfg = run.into_config()?;
            let forest = cmd_train(&cfg, &model)?;
            println!(
                "saved {} members (whitened: {}) to {}",
                forest.members.len(),
                forest.is_whitened(),
                model.display()
            );
        }
        Command::Predict {
            model,
            input,
            strategy,
            vote_threshold,
            delimiter,
            label_column,
            output,
        } => {
            let strategy = match strategy.parse::<DecisionStrategy>()? {
                DecisionStrategy::MajorityVote { .. } => DecisionStrategy::MajorityVote {
                    threshold: vote_threshold,
                },
                s => s,
            };
            strategy.validate()?;
            cmd_predict(&PredictArgs {
                model,
                input,
                strategy,
                delimiter: parse_delimiter(&delimiter)?,
                label_column,
                output,
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
