//! `tguard`: extract, inject, train, quantize, eval, and predict.

/// `println!` that ignores a closed stdout, e.g. when piped into `head`.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod commands;
mod data;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tguard_core::eval::Mode;
use tguard_core::gnn::{Arch, GnnConfig};
use tguard_core::inject::TemplateKind;

use commands::Globals;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "tguard", version, about = "RTL hardware trojan detection with graph neural networks")]
struct Cli {
    /// Seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads for per-design extraction and per-fold evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Holdout,
    Kfold,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ArchArg {
    Gcn,
    Gat,
    Gin,
}

impl From<ArchArg> for Arch {
    fn from(a: ArchArg) -> Arch {
        match a {
            ArchArg::Gcn => Arch::Gcn,
            ArchArg::Gat => Arch::Gat,
            ArchArg::Gin => Arch::Gin,
        }
    }
}

/// Overrides on top of the default hyperparameters.
#[derive(Debug, clap::Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "gcn")]
    arch: ArchArg,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    pool_ratio: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> GnnConfig {
        let d = GnnConfig::default();
        GnnConfig {
            arch: self.arch.into(),
            num_layers: self.layers.unwrap_or(d.num_layers),
            hidden_units: self.hidden.unwrap_or(d.hidden_units),
            dropout: self.dropout.unwrap_or(d.dropout),
            attention_heads: self.heads.unwrap_or(d.attention_heads),
            pooling_ratio: self.pool_ratio.unwrap_or(d.pooling_ratio),
            embedding_dim: d.embedding_dim,
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            eval_every: self.eval_every.unwrap_or(d.eval_every),
            seed,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build data-flow graphs from Verilog designs.
    Extract {
        /// Verilog files or directories of them; each file is one design.
        paths: Vec<PathBuf>,
        /// Top module; defaults to each file's stem.
        #[arg(long)]
        top: Option<String>,
        /// Also extract every design of a dataset manifest, with labels.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate trojan variants of clean designs plus a manifest.
    Inject {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "dos,leak,func,perf", value_parser = parse_template)]
        templates: Vec<TemplateKind>,
        /// Total number of trojan variants.
        #[arg(long, default_value_t = 40)]
        variants: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the manifest's training split and write a checkpoint.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        args: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a 4-bit copy of an f32 checkpoint.
    Quantize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a holdout split, or cross-validate its config.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "holdout")]
        mode: ModeArg,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Also score the 4-bit quantized model.
        #[arg(long)]
        compare: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify graph JSON files.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "graph", required = true, num_args = 1..)]
        graphs: Vec<PathBuf>,
    },
}

fn parse_template(s: &str) -> Result<TemplateKind, String> {
    s.parse()
}

fn run(cli: Cli) -> CliResult<()> {
    let g = Globals {
        seed: cli.seed,
        force: cli.force,
        verbose: cli.verbose,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build()
        .map_err(CliError::internal)?;
    pool.install(|| match cli.command {
        Command::Extract {
            paths,
            top,
            manifest,
            out,
        } => commands::extract(&g, &paths, top.as_deref(), manifest.as_deref(), &out),
        Command::Inject {
            clean,
            templates,
            variants,
            out,
        } => commands::inject(&g, &clean, &templates, variants, &out),
        Command::Train { manifest, args, out } => commands::train(&g, &manifest, args.config(g.seed), &out),
        Command::Quantize { input, out } => commands::quantize(&g, &input, &out),
        Command::Eval {
            model,
            manifest,
            mode,
            folds,
            compare,
            out,
        } => {
            let mode = match mode {
                ModeArg::Holdout => Mode::Holdout,
                ModeArg::Kfold => Mode::Kfold,
            };
            commands::eval(&g, &model, &manifest, mode, folds, compare, &out)
        }
        Command::Predict { model, graphs } => commands::predict(&model, &graphs),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USER } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
