use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use symplan_cli::{cmd_oracle, cmd_simulate, cmd_solve, cmd_sweep, load_config, RunConfig, Status};

#[derive(Parser)]
#[command(name = "symplan", version, about = "Symmetry-reduced planning around a moving obstacle")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output file; overrides the path in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a value table by fitted value iteration.
    Solve(Common),
    /// Run closed-loop episodes and write the episode CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Value table for the rollout planner.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Evaluate the trade-off grid and baselines; write the trade-off CSV.
    Sweep(Common),
    /// Run the reference consistency checks.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_path(flag: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    match flag.as_ref().or(configured.as_ref()) {
        Some(p) => Ok(p.clone()),
        None => bail!("no output path: pass --out or set output.{what} in the config"),
    }
}

fn run(cli: Cli) -> Result<Status> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Solve(c) => {
            let cfg = load(&c)?;
            let out = out_path(&c.out, &cfg.output.table, "table")?;
            cmd_solve(&cfg, &out, &mut stdout)
        }
        Command::Simulate { common, table } => {
            let cfg = load(&common)?;
            let out = out_path(&common.out, &cfg.output.episodes, "episodes")?;
            let table = table.as_deref().or(cfg.output.table.as_deref()).map(Path::to_path_buf);
            cmd_simulate(&cfg, table.as_deref(), &out, &mut stdout)
        }
        Command::Sweep(c) => {
            let cfg = load(&c)?;
            let out = out_path(&c.out, &cfg.output.tradeoff, "tradeoff")?;
            cmd_sweep(&cfg, &out, &mut stdout)
        }
        Command::Oracle { seed } => cmd_oracle(seed, &mut stdout),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
