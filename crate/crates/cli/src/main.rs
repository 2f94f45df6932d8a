mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gstned::rank::{NodeWeightMode, Scheme};
use gstned::Result;

use crate::config::CliConfig;

#[derive(Debug, Parser)]
#[command(
    name = "gstned",
    version,
    about = "Unsupervised entity linking with group Steiner trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a KG and train (or reuse) its embeddings.
    Index(RunArgs),
    /// Rank candidates for every mention and write rankings JSONL.
    Link(RunArgs),
    /// Score rankings against gold annotations.
    Eval(EvalArgs),
    /// Evaluate every ranking scheme on one solve and print a comparison.
    Compare(RunArgs),
    /// Evaluate a threshold by k grid on a held-out split.
    Sweep(SweepArgs),
    /// Write a seeded synthetic KG and document set.
    Synth(SynthArgs),
}

/// Flags shared by the pipeline subcommands. Each one overrides the config file.
#[derive(Debug, Args)]
struct RunArgs {
    /// TOML config file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    documents: Option<PathBuf>,
    #[arg(long)]
    index_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Fuzzy match cut-off in (0, 1].
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    max_candidates: Option<usize>,
    #[arg(long)]
    hops: Option<usize>,
    /// Number of Steiner trees kept per window.
    #[arg(long)]
    k: Option<usize>,
    /// gst-count, gst-cost or node-weight.
    #[arg(long)]
    scheme: Option<Scheme>,
    /// tree-total or candidate-only.
    #[arg(long, value_parser = parse_mode)]
    node_weight_mode: Option<NodeWeightMode>,
    /// Most mentions solved together.
    #[arg(long)]
    window: Option<usize>,
    /// Exact-search budget in enqueued partial trees; 0 means unlimited.
    #[arg(long)]
    exact_budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Documents processed in parallel.
    #[arg(long)]
    workers: Option<usize>,
    /// Embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Rankings JSONL; defaults to `rankings.jsonl` in the output dir.
    #[arg(long)]
    rankings: Option<PathBuf>,
    /// Tree membership sidecar; defaults to the rankings path with `.gst.jsonl`.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Leave out mentions whose surface matched a label exactly.
    #[arg(long)]
    exclude_exact: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long)]
    held_out_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory for nodes.tsv, edges.tsv and documents.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    docs: usize,
    #[arg(long, default_value_t = 4)]
    mentions: usize,
    #[arg(long, default_value_t = 4)]
    candidates: usize,
    #[arg(long, default_value_t = 200)]
    filler: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn parse_mode(s: &str) -> std::result::Result<NodeWeightMode, String> {
    match s {
        "tree-total" => Ok(NodeWeightMode::TreeTotal),
        "candidate-only" => Ok(NodeWeightMode::CandidateOnly),
        _ => Err(format!("expected tree-total or candidate-only, got `{s}`")),
    }
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    fn resolve(&self) -> Result<CliConfig> {
        let mut cfg = match &self.config {
            Some(path) => CliConfig::load(path)?,
            None => CliConfig::default(),
        };
        let p = &mut cfg.pipeline;
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(self.threshold => p.fuzzy_threshold);
        set!(self.max_candidates => p.max_candidates);
        set!(self.hops => p.max_hops);
        set!(self.k => p.k);
        set!(self.scheme => p.scheme);
        set!(self.node_weight_mode => p.node_weight_mode);
        set!(self.window => p.window);
        set!(self.exact_budget => p.exact_budget);
        set!(self.seed => p.seed);
        set!(self.workers => p.workers);
        set!(self.dim => p.embedding.dim);
        set!(self.epochs => p.embedding.epochs);
        set!(self.index_dir => cfg.index_dir);
        set!(self.output_dir => cfg.output_dir);
        if self.nodes.is_some() {
            cfg.nodes = self.nodes.clone();
        }
        if self.edges.is_some() {
            cfg.edges = self.edges.clone();
        }
        if self.documents.is_some() {
            cfg.documents = self.documents.clone();
        }
        cfg.pipeline.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Index(args) => commands::index(&args.resolve()?),
        Command::Link(args) => commands::link(&args.resolve()?),
        Command::Compare(args) => commands::compare(&args.resolve()?),
        Command::Eval(args) => {
            let cfg = args.run.resolve()?;
            let rankings = args
                .rankings
                .unwrap_or_else(|| cfg.output_dir.join("rankings.jsonl"));
            let traces = args
                .traces
                .unwrap_or_else(|| commands::trace_path(&rankings));
            commands::eval(&cfg, &rankings, &traces, args.exclude_exact)
        }
        Command::Sweep(args) => {
            let mut cfg = args.run.resolve()?;
            if let Some(t) = args.thresholds {
                cfg.sweep.thresholds = t;
            }
            if let Some(k) = args.ks {
                cfg.sweep.ks = k;
            }
            if let Some(s) = args.schemes {
                cfg.sweep.schemes = s;
            }
            if let Some(f) = args.held_out_fraction {
                cfg.sweep.held_out_fraction = f;
            }
            commands::sweep(&cfg)
        }
        Command::Synth(a) => commands::synth(
            &gstned::synthetic::SyntheticParams {
                docs: a.docs,
                mentions_per_doc: a.mentions,
                candidates_per_mention: a.candidates,
                filler_nodes: a.filler,
                noise: a.noise,
                seed: a.seed,
                ..Default::default()
            },
            &a.out,
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
