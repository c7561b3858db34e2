use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use walk2kg::config::{extract_dotted, load, Overrides, SizeBucket};
use walk2kg::pipeline::{apply_single, Pipeline};
use walk2kg::{CliError, Result};
use walk2kg_core::kg::KgModelKind;
use walk2kg_core::walk::SourceMethod;

/// Walk-based to KG embedding pipeline.
///
/// Any configuration field can also be set by its dotted name, for example
/// `--kg.epochs 200` or `--transform.learning_rate=0.002`.
#[derive(Parser, Debug)]
#[command(name = "walk2kg", version, about)]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-graph work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Use the planted-partition generator instead of dataset files.
    #[arg(long, global = true)]
    synthetic: bool,
    /// Node-count range MIN-MAX; repeat for several buckets.
    #[arg(long = "size-bucket", global = true, value_name = "MIN-MAX")]
    size_bucket: Vec<SizeBucket>,
    #[arg(long, global = true, value_parser = parse_source)]
    source: Option<SourceMethod>,
    #[arg(long, global = true, value_parser = parse_target)]
    target: Option<KgModelKind>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract or generate the bucketed graphs and split edges and graphs.
    Prepare,
    /// Random-walk source embeddings for every graph.
    Embed,
    /// Target and finetuned KG embeddings for every graph.
    TrainKg,
    /// Fit the transformation model on train and validation graphs.
    TrainTransform,
    /// Transform test-graph source embeddings, or a single graph with --model.
    Apply {
        /// Saved model (.embr) for single-graph mode.
        #[arg(long, requires_all = ["graph", "output"])]
        model: Option<PathBuf>,
        /// Edge list or graph JSON.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Source embedding (binary); computed from the graph when omitted.
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write the text format instead of binary.
        #[arg(long)]
        text: bool,
    },
    /// Link-prediction metrics for the four embedding families.
    Evaluate,
    /// Sequential CPU timing of the finetune and transform paths.
    Bench,
    /// Summary tables over all evaluations in the run directory.
    Report,
    /// Every stage in order, then the report.
    Run,
}

fn parse_source(s: &str) -> std::result::Result<SourceMethod, String> {
    s.parse().map_err(|e: walk2kg_core::Error| e.to_string())
}

fn parse_target(s: &str) -> std::result::Result<KgModelKind, String> {
    s.parse().map_err(|e: walk2kg_core::Error| e.to_string())
}

fn print_summary(rows: &[walk2kg::pipeline::SummaryRow]) {
    println!("{:<8} {:<28} {:>6} {:>8} {:>8} {:>8} {:>8} {:>10}", "bucket", "method", "graphs", "MRR", "P@1", "P@3", "P@10", "cpu s");
    for r in rows {
        println!(
            "{:<8} {:<28} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>10.4}",
            r.size_bucket, r.method, r.graphs, r.mean_mrr, r.mean_p_at_1, r.mean_p_at_3, r.mean_p_at_10, r.mean_cpu_seconds
        );
    }
}

fn run() -> Result<()> {
    let (args, dotted) = extract_dotted(std::env::args().collect())?;
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let overrides = Overrides {
        dotted,
        seed: cli.seed,
        jobs: cli.jobs,
        synthetic: cli.synthetic,
        size_buckets: cli.size_bucket,
        source: cli.source,
        target: cli.target,
        out: cli.out,
    };
    let cfg = load(cli.config.as_deref(), &overrides)?;
    if cli.print_config {
        let text = serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
        println!("{text}");
        return Ok(());
    }

    if let Command::Apply { model: Some(model), graph, embedding, output, text } = &cli.command {
        let (Some(graph), Some(output)) = (graph, output) else {
            return Err(CliError::Config("--model needs --graph and --output".into()));
        };
        let out = apply_single(&cfg, model, graph, embedding.as_deref(), output, *text)?;
        println!("wrote {} ({} x {})", output.display(), out.node_count(), out.dim());
        return Ok(());
    }

    let mut pipeline = Pipeline::open(cfg)?;
    let stage = match cli.command {
        Command::Prepare => "prepare",
        Command::Embed => "embed",
        Command::TrainKg => "train-kg",
        Command::TrainTransform => "train-transform",
        Command::Apply { .. } => "apply",
        Command::Evaluate => "evaluate",
        Command::Bench => "bench",
        Command::Report => {
            print_summary(&pipeline.report()?);
            return Ok(());
        }
        Command::Run => {
            print_summary(&pipeline.run_all()?);
            return Ok(());
        }
    };
    pipeline.run_stage(stage)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
