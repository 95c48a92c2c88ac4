use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rtacm::pipeline::{self, DataSource, Method, RunConfig, Stage, SweepAxis};

#[derive(Parser)]
#[command(name = "rtacm", about = "Few-shot fault diagnosis with curriculum meta-learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Target condition id.
    #[arg(long, global = true)]
    target: Option<String>,
    #[arg(long, global = true)]
    n_way: Option<usize>,
    #[arg(long, global = true)]
    k_shot: Option<usize>,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    /// First-order outer gradient (the default).
    #[arg(long, global = true, conflicts_with = "second_order_toy")]
    first_order: bool,
    /// Differentiate through the inner steps. Slow; meant for small models.
    #[arg(long, global = true)]
    second_order_toy: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    RtAcm,
    Maml,
    Scratch,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    LocalSteps,
    FrozenLayers,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic suite as signal files plus a manifest and config.
    Synth,
    Ingest,
    Relevance,
    Difficulty,
    MetaTrain,
    FineTune,
    Evaluate,
    RunAll,
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
    },
}

fn build_config(c: &Common) -> rtacm::Result<RunConfig> {
    let mut config = match &c.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::quick(),
    };
    if let Some(seed) = c.seed {
        config.seed = seed;
    }
    if let Some(out) = &c.out {
        config.out_dir = out.clone();
    }
    if let Some(t) = &c.target {
        config.target = Some(t.clone());
    }
    if let Some(n) = c.n_way {
        config.meta.n_way = n;
    }
    if let Some(k) = c.k_shot {
        config.meta.k_shot = k;
    }
    if let Some(m) = c.method {
        config.method = match m {
            MethodArg::RtAcm => Method::RtAcm,
            MethodArg::Maml => Method::Maml,
            MethodArg::Scratch => Method::Scratch,
        };
    }
    if c.first_order {
        config.meta.first_order = true;
    }
    if c.second_order_toy {
        config.meta.first_order = false;
    }
    Ok(config)
}

fn synth(config: &RunConfig) -> rtacm::Result<()> {
    let dir = &config.out_dir;
    let manifest = pipeline::write_synthetic_dataset(config, dir)?;
    let mut replay = config.clone();
    replay.data = DataSource::Manifest(manifest.canonicalize().unwrap_or(manifest));
    replay.out_dir = dir.join("run");
    let path = dir.join("config.json");
    let mut text = serde_json::to_string_pretty(&replay)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| rtacm::Error::io(&path, e))?;
    println!("wrote {} and {}", dir.join("manifest.json").display(), path.display());
    Ok(())
}

fn run(cli: &Cli) -> rtacm::Result<()> {
    let config = build_config(&cli.common)?;
    let stage = |s| pipeline::run_stage(&config, s);
    match &cli.command {
        Command::Synth => synth(&config),
        Command::Ingest => stage(Stage::Ingest),
        Command::Relevance => stage(Stage::Relevance),
        Command::Difficulty => stage(Stage::Difficulty),
        Command::MetaTrain => stage(Stage::MetaTrain),
        Command::FineTune => stage(Stage::FineTune),
        Command::Evaluate => stage(Stage::Evaluate),
        Command::RunAll => {
            let outcome = pipeline::run_all(&config)?;
            println!(
                "accuracy {:.4} macro-F1 {:.4} -> {}",
                outcome.metrics.accuracy,
                outcome.metrics.macro_f1,
                config.out_dir.display()
            );
            Ok(())
        }
        Command::Sweep { axis } => {
            let axis = match axis {
                AxisArg::LocalSteps => SweepAxis::LocalSteps,
                AxisArg::FrozenLayers => SweepAxis::FrozenLayers,
            };
            for row in pipeline::sweep(&config, axis)? {
                println!("{} {:.4}", row.value, row.accuracy);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
