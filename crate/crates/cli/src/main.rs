use clap::{Parser, ValueEnum};
use cte_cli::{run_all, run_stage, CliError, PipelineConfig, Stage};
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Command {
    Ingest,
    Features,
    Gmm,
    TrainAe,
    Embed,
    Dbscan,
    TrainGen,
    Generate,
    TrainTrans,
    Translate,
    Metrics,
    ExpressiveRange,
    Render,
    CompareGenerators,
    /// Every stage in order.
    All,
    /// Write the synthetic fixture corpus to `--out`.
    Fixtures,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Stage::from_str(self.to_possible_value()?.get_name(), false).ok()
    }
}

/// Cluster-based tile embedding pipeline.
#[derive(Debug, Parser)]
#[command(name = "cte", version)]
struct Args {
    #[arg(value_enum)]
    stage: Command,
    /// Pipeline configuration (TOML). `CTE_SECTION__KEY` variables override entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, replacing `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, replacing `run.out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), CliError> {
    if args.stage == Command::Fixtures {
        let out = args.out.ok_or_else(|| CliError::Config("fixtures needs --out".into()))?;
        cte_core::corpus::synthetic::write_fixture_corpus(&out)?;
        log::info!("fixture corpus written to {}", out.display());
        return Ok(());
    }
    let path = args.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = PipelineConfig::load(&path)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.run.out = out;
    }
    match args.stage.stage() {
        Some(stage) => run_stage(stage, &cfg).map(drop),
        None => run_all(&cfg).map(drop),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Args::parse()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
