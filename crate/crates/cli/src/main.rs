use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

mod commands;
mod scenario;

/// Swept-volume SDF planning, querying and certification.
#[derive(Debug, Parser)]
#[command(name = "swept-sdf", version, about)]
struct Cli {
    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Worker threads for parallel queries; 0 uses all cores.
    #[arg(long, env = "SWEPT_SDF_THREADS", default_value_t = 0, global = true)]
    threads: usize,
    /// Seed sampling stride of the argmin search (s).
    #[arg(long, global = true)]
    seed_stride: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize a trajectory for a scenario file.
    Plan {
        scenario: PathBuf,
        /// TOML file whose keys override the scenario's [config] section.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Swept SDF of each point as CSV.
    Query {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        points: PathBuf,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Dense-sampling clearance certificate.
    Check {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Planner config providing s_thr.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Swept SDF on a regular grid, with an optional z slice as CSV.
    SweepGrid {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// x0,y0,z0,x1,y1,z1
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        bounds: Vec<f64>,
        #[arg(long)]
        resolution: f64,
        #[arg(long, allow_negative_numbers = true)]
        slice_z: Option<f64>,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Cold and warm query latency, plus planning time.
    Bench {
        scenario: PathBuf,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        /// Benchmark this trajectory instead of planning one.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<commands::Outcome> {
    rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global()?;
    let stride = cli.seed_stride;
    if let Some(s) = stride {
        anyhow::ensure!(s > 0.0 && s.is_finite(), "seed stride must be positive, got {s}");
    }
    match &cli.command {
        Command::Plan { scenario, config, output_dir } => {
            commands::cmd_plan(scenario, config.as_deref(), output_dir.as_deref(), stride)
        }
        Command::Query { mesh, trajectory, points, output } => {
            commands::cmd_query(mesh, trajectory, points, output.as_deref(), stride)
        }
        Command::Check { mesh, trajectory, cloud, dt, config, output_dir } => {
            commands::cmd_check(mesh, trajectory, cloud, *dt, config.as_deref(), output_dir.as_deref())
        }
        Command::SweepGrid { mesh, trajectory, bounds, resolution, slice_z, output_dir } => {
            commands::cmd_sweep_grid(mesh, trajectory, bounds, *resolution, *slice_z, output_dir, stride)
        }
        Command::Bench { scenario, repetitions, trajectory, config } => {
            commands::cmd_bench(scenario, trajectory.as_deref(), *repetitions, config.as_deref(), stride)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            error!("{e:#}");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
