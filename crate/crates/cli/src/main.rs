use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use commute_core::pipeline::{self, PipelineError, RunConfig, Stage};
use commute_core::synth::{self, CitySpec};

#[derive(Parser)]
#[command(name = "commute", version, about = "Commuting and accessibility analytics from mobile-network events")]
struct Cli {
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse events, bin them by hour and keep active users.
    Ingest(StageArgs),
    /// Detect home and work towers.
    Anchors(StageArgs),
    /// Build the Voronoi tessellation and hex grid.
    Grid(StageArgs),
    /// Compute the hex-to-hex travel-time matrix.
    Matrix(StageArgs),
    /// Commute times, cumulative access and inequality metrics.
    Access(StageArgs),
    /// Bivariate local Moran clusters.
    Lisa(StageArgs),
    /// Cluster composition tests and the multinomial model.
    Stats(StageArgs),
    /// Every stage.
    Run(StageArgs),
    /// Generate a synthetic city bundle with a ready-to-run config.json.
    Synth(SynthArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Run configuration (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the global `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `access.threshold_min`.
    #[arg(long)]
    threshold_min: Option<f64>,
    /// Overrides `lisa.permutations`.
    #[arg(long)]
    permutations: Option<u32>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    users: usize,
    #[arg(long, default_value_t = 60)]
    bts: usize,
    #[arg(long, default_value_t = 0.2)]
    noise: f64,
    #[arg(long, default_value_t = 10)]
    routes: usize,
    /// Side of the square study area in metres.
    #[arg(long, default_value_t = 5000.0)]
    extent_m: f64,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(args: &StageArgs) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(t) = args.threshold_min {
        cfg.access.threshold_min = Some(t);
    }
    if let Some(p) = args.permutations {
        cfg.lisa.permutations = p;
    }
    Ok(cfg)
}

fn run_stage(args: &StageArgs, through: Stage) -> ExitCode {
    let result = load_config(args).and_then(|cfg| pipeline::run(&cfg, through).map(|m| (cfg, m)));
    match result {
        Ok((cfg, manifest)) => {
            for s in &manifest.stages {
                let state = if s.cache_hit { "cached" } else { "ran" };
                println!("{:<8} {:<6} {:>8.2}s", s.name, state, s.seconds);
            }
            println!("outputs in {}", cfg.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run_synth(args: &SynthArgs) -> ExitCode {
    let spec = CitySpec {
        seed: args.seed,
        n_bts: args.bts,
        n_users: args.users,
        n_routes: args.routes,
        noise: args.noise,
        extent_m: args.extent_m,
        ..Default::default()
    };
    match synth::generate_city(&spec, &args.out) {
        Ok(truth) => {
            let _ = synth::write_summary(&truth, std::io::stdout().lock());
            ExitCode::SUCCESS
        }
        Err(synth::SynthError::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match &cli.command {
        Command::Ingest(a) => run_stage(a, Stage::Ingest),
        Command::Anchors(a) => run_stage(a, Stage::Anchors),
        Command::Grid(a) => run_stage(a, Stage::Grid),
        Command::Matrix(a) => run_stage(a, Stage::Matrix),
        Command::Access(a) => run_stage(a, Stage::Access),
        Command::Lisa(a) => run_stage(a, Stage::Lisa),
        Command::Stats(a) => run_stage(a, Stage::Stats),
        Command::Run(a) => run_stage(a, Stage::Stats),
        Command::Synth(a) => run_synth(a),
    }
}
