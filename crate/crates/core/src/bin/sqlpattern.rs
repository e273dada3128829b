use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use sqlpattern::corpus::Split;
use sqlpattern::eval::BaselineKind;
use sqlpattern::pipeline::{self, PipelineConfig};

#[derive(Parser)]
#[command(name = "sqlpattern", version, about = "Match questions to known SQL templates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Repair column types, filter and tokenize questions
    Clean,
    /// Build the vocabulary and k-means clusters from the training split
    Cluster,
    /// Train the Siamese encoder
    Train,
    /// Match one question; exit 0 when matched, 2 when rejected
    Match { question: String },
    /// Sweep beta over the evaluation split and compute the baselines
    Eval,
    /// Write encoder hidden states for external projection
    ExportEmbeddings,
}

/// Every flag overrides the matching config-file value.
#[derive(Args)]
struct Overrides {
    /// TOML config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    questions: Option<PathBuf>,
    #[arg(long, global = true)]
    tables: Option<PathBuf>,
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    model_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    report_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    embedding_dim: Option<usize>,
    #[arg(long, global = true)]
    min_tokens: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<usize>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    max_iterations: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    hidden_size: Option<usize>,
    #[arg(long, global = true)]
    pairs_per_epoch: Option<usize>,
    #[arg(long, global = true)]
    max_sequence_length: Option<usize>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    beta_start: Option<f64>,
    #[arg(long, global = true)]
    beta_stop: Option<f64>,
    #[arg(long, global = true)]
    beta_step: Option<f64>,
    /// train, dev or test
    #[arg(long, global = true, value_parser = parse_split)]
    eval_split: Option<Split>,
    #[arg(long, global = true)]
    min_group_size: Option<usize>,
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::parse(s).ok_or_else(|| format!("unknown split {s:?}"))
}

impl Overrides {
    fn apply(&self, mut c: PipelineConfig) -> PipelineConfig {
        fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        set(&mut c.paths.questions, &self.questions);
        set(&mut c.paths.tables, &self.tables);
        set(&mut c.paths.embeddings, &self.embeddings);
        set(&mut c.paths.model_dir, &self.model_dir);
        set(&mut c.paths.report_dir, &self.report_dir);
        set(&mut c.seed, &self.seed);
        set(&mut c.embedding_dim, &self.embedding_dim);
        set(&mut c.cleaning.min_tokens, &self.min_tokens);
        set(&mut c.lexical.alpha, &self.alpha);
        set(&mut c.lexical.k, &self.k);
        set(&mut c.lexical.max_iterations, &self.max_iterations);
        set(&mut c.train.epochs, &self.epochs);
        set(&mut c.train.batch_size, &self.batch_size);
        set(&mut c.train.learning_rate, &self.learning_rate);
        set(&mut c.train.hidden_size, &self.hidden_size);
        set(&mut c.train.pairs_per_epoch, &self.pairs_per_epoch);
        set(&mut c.train.max_sequence_length, &self.max_sequence_length);
        set(&mut c.matcher.beta, &self.beta);
        set(&mut c.beta_grid.start, &self.beta_start);
        set(&mut c.beta_grid.stop, &self.beta_stop);
        set(&mut c.beta_grid.step, &self.beta_step);
        set(&mut c.eval_split, &self.eval_split);
        set(&mut c.export.min_group_size, &self.min_group_size);
        c
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let base = match &cli.overrides.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    let config = cli.overrides.apply(base);
    match cli.command {
        Command::Clean => {
            let out = pipeline::cmd_clean(&config)?;
            println!(
                "retained {} of {} questions, rejected {}",
                out.report.retained,
                out.report.input,
                out.report.rejected()
            );
        }
        Command::Cluster => {
            let (_, s) = pipeline::cmd_cluster(&config)?;
            println!(
                "clusters {} vocabulary {} size mean {:.2} min {} max {}",
                s.clusters, s.vocabulary, s.mean_size, s.min_size, s.max_size
            );
        }
        Command::Train => {
            let model = pipeline::cmd_train(&config)?;
            println!("final loss {:.6}", model.metadata().final_loss);
        }
        Command::Match { question } => {
            let (result, record) = pipeline::cmd_match(&config, &question)?;
            println!("{}", serde_json::to_string(&record).context("serializing match record")?);
            if !result.is_matched() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Eval => {
            let report = pipeline::cmd_eval(&config)?;
            if let Some(best) = report.best_row() {
                println!(
                    "best beta {} accuracy_all {:.4} accuracy_non_rejected {:.4} pct_rejected {:.4}",
                    best.beta, best.accuracy_all, best.accuracy_non_rejected, best.pct_rejected
                );
            }
            for kind in [BaselineKind::EmbeddingsAverage, BaselineKind::AcceptAll] {
                if let Some(row) = report.baseline(kind) {
                    println!("{} accuracy_all {:.4}", kind.name(), row.accuracy_all);
                }
            }
        }
        Command::ExportEmbeddings => {
            let rows = pipeline::cmd_export_embeddings(&config)?;
            println!("exported {rows} rows");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
