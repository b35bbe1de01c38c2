use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sagcn::distance::DistanceKind;
use sagcn::error::{Result, SagcnError};
use sagcn::graph::InteractionGraph;
use sagcn::io::config::parse_list;
use sagcn::io::pipeline::{self, CHECKPOINT_FILE};
use sagcn::io::synthetic::{write_two_block, TwoBlockSpec};
use sagcn::io::{self, RunConfig, SweepPlan, ALPHA_GRID};
use sagcn::propagation::Aggregator;

#[derive(Parser)]
#[command(name = "sagcn", version, about = "Distance-aware self-adaptive graph convolution for top-N recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest an interaction file and write a seeded train/validation/test split.
    Prepare(RunArgs),
    /// Train a model and report test metrics.
    Train(RunArgs),
    /// Evaluate a saved checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint to load (default: <out>/model.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train a grid of configurations and tabulate their test metrics.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated α values (default 0.5,0.8,1,1.2,1.5,2,5).
        #[arg(long)]
        alphas: Option<String>,
        /// Comma-separated distance kinds (default: the configured one).
        #[arg(long)]
        distances: Option<String>,
        /// Comma-separated aggregators from {sagcn, mean} (default: sagcn).
        #[arg(long)]
        aggregators: Option<String>,
        /// Comma-separated seeds (default: the configured seed).
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Print user, item and interaction counts and sparsity.
    Stats(RunArgs),
    /// Write a synthetic two-block interaction file.
    Synth {
        /// Output file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 200)]
        items: usize,
        #[arg(long, default_value_t = 20)]
        per_user: usize,
        /// Zipf exponent of within-block item popularity.
        #[arg(long, default_value_t = 1.0)]
        popularity: f64,
    },
}

/// Flags shared by every run-style subcommand. Each one overrides the key
/// of the same name in `--config`.
#[derive(Args, Default)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Interaction file or prepared dataset directory.
    #[arg(long)]
    data: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// sagcn | mean
    #[arg(long)]
    aggregator: Option<String>,
    /// euclidean | cosine | kl
    #[arg(long)]
    distance: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Distance scale (default: 1, 0.001, 100 for euclidean, cosine, kl).
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    layers: Option<String>,
    /// Embedding size.
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    /// L2 weight on the base embeddings.
    #[arg(long)]
    reg: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    /// Maximum number of epochs.
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    /// Comma-separated cutoffs, e.g. 10,20,50.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    train_frac: Option<String>,
    #[arg(long)]
    valid_frac: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let flags = [
            ("data", &self.data),
            ("out", &self.out),
            ("seed", &self.seed),
            ("aggregator", &self.aggregator),
            ("distance", &self.distance),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("layers", &self.layers),
            ("dim", &self.dim),
            ("lr", &self.lr),
            ("reg", &self.reg),
            ("batch", &self.batch),
            ("epochs", &self.epochs),
            ("patience", &self.patience),
            ("k", &self.k),
            ("train_fraction", &self.train_frac),
            ("valid_fraction", &self.valid_frac),
        ];
        flags
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }

    /// Defaults, then `base` text, then `--config`, then flags.
    fn resolve(&self, base: Option<&PathBuf>) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = base {
            cfg.apply_file(path)?;
        }
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (key, value) in self.overrides() {
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }
}

fn require_data(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.data
        .clone()
        .ok_or_else(|| SagcnError::Config("no dataset given (use --data PATH)".into()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(args) => {
            let cfg = args.resolve(None)?;
            cfg.validate()?;
            let data = io::ingest(&require_data(&cfg)?)?;
            let prepared = io::PreparedDataset::from_interactions(data, &cfg.split_spec())?;
            prepared.save(&cfg.out)?;
            let s = &prepared.split;
            println!(
                "{}\ttrain={}\tvalid={}\ttest={}",
                cfg.out.display(),
                s.train.len(),
                s.validation.len(),
                s.test.len()
            );
        }
        Command::Train(args) => {
            let cfg = args.resolve(None)?;
            let artifacts = io::run_train(&cfg)?;
            println!("{}", artifacts.report);
        }
        Command::Evaluate { run, checkpoint } => {
            let out = run.resolve(None)?.out;
            let ckpt = checkpoint.unwrap_or_else(|| out.join(CHECKPOINT_FILE));
            let sidecar = io::checkpoint::sidecar_path(&ckpt);
            let cfg = run.resolve(sidecar.exists().then_some(&sidecar))?;
            let report = io::run_evaluate(&cfg, &ckpt)?;
            println!("{report}");
            println!("{}", serde_json::to_string(&report.to_json())?);
        }
        Command::Sweep {
            run,
            alphas,
            distances,
            aggregators,
            seeds,
        } => {
            let cfg = run.resolve(None)?;
            require_data(&cfg)?;
            let plan = SweepPlan {
                alphas: match alphas {
                    Some(a) => parse_list("alphas", &a)?,
                    None => ALPHA_GRID.to_vec(),
                },
                distances: match distances {
                    Some(d) => d.split(',').map(str::parse).collect::<Result<Vec<DistanceKind>>>()?,
                    None => vec![cfg.distance],
                },
                aggregators: match aggregators {
                    Some(a) => a.split(',').map(str::parse).collect::<Result<Vec<Aggregator>>>()?,
                    None => vec![Aggregator::SelfAdaptive],
                },
                seeds: match seeds {
                    Some(s) => parse_list("seeds", &s)?,
                    None => vec![cfg.seed],
                },
            };
            let rows = io::run_sweep(&cfg, &plan)?;
            println!("{}", io::SweepRow::header(&cfg.cutoffs));
            for r in &rows {
                println!("{}", r.to_tsv(&cfg.cutoffs));
            }
        }
        Command::Stats(args) => {
            let cfg = args.resolve(None)?;
            let path = require_data(&cfg)?;
            let graph = if path.is_dir() {
                let s = pipeline::load_dataset(&cfg)?.split;
                let mut all = s.train.clone();
                all.extend(&s.validation);
                all.extend(&s.test);
                InteractionGraph::new(s.num_users, s.num_items, &all)?
            } else {
                let data = io::ingest(&path)?;
                InteractionGraph::new(data.num_users(), data.num_items(), &data.records)?
            };
            println!("{}", io::density_report(&graph));
        }
        Command::Synth {
            out,
            seed,
            users,
            items,
            per_user,
            popularity,
        } => {
            let spec = TwoBlockSpec {
                num_users: users,
                num_items: items,
                per_user,
                popularity_exponent: popularity,
                seed,
            };
            write_two_block(&out, &spec)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e.category() {
                sagcn::error::ErrorCategory::Config => "config",
                sagcn::error::ErrorCategory::Data => "data",
                sagcn::error::ErrorCategory::Numeric => "numeric",
            };
            eprintln!("sagcn: {kind} error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
