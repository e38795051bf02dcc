use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use invar_rl::config::{load_config, ExperimentConfig};
use invar_rl::harness::{
    run_bounds, run_eval, run_export, run_repro, run_train, ReproPreset, RunManifest,
};
use invar_rl::Result;

/// Train, evaluate, and analyze domain-randomized agents with a
/// feature-invariance penalty.
#[derive(Parser)]
#[command(name = "invar-rl", version, about)]
struct Cli {
    /// Worker threads (defaults to the rayon heuristic).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override the number of seeds per cell.
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (regime, lambda, seed) cell of the sweep.
    Train(ConfigArgs),
    /// Roll trained checkpoints over the configured evaluation grids.
    Eval(ConfigArgs),
    /// Lipschitz constants and return-gap bounds for trained checkpoints.
    Bounds(ConfigArgs),
    /// Export feature-layer activations per (state, domain).
    ExportFeatures(ConfigArgs),
    /// Run a canned study end to end.
    Repro {
        /// One of: gridworld_bound, gridworld_paths, cartpole_grid,
        /// cartpole_extrapolation, output_reg_tradeoff, value_std.
        #[arg(long)]
        preset: String,

        /// Root directory for study outputs.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

impl ConfigArgs {
    /// Load and re-route: `--out` wins, then `INVAR_RL_OUT/<name>`, then the
    /// config's own `out_dir`.
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = load_config(&self.config)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        } else if let Ok(root) = std::env::var("INVAR_RL_OUT") {
            cfg.out_dir = PathBuf::from(root).join(&cfg.name);
        }
        if let Some(seeds) = self.seeds {
            cfg.analysis.seeds = seeds;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_manifest(cfg: &ExperimentConfig) -> Result<RunManifest> {
    RunManifest::load(&cfg.out_dir.join("manifest.json"))
}

fn finish_cells(manifest: &RunManifest) -> ExitCode {
    for cell in manifest.failed_cells() {
        eprintln!("failed: {} ({:?})", cell.cell, cell.status);
    }
    if manifest.all_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.load()?;
            let manifest = run_train(&cfg)?;
            for cell in &manifest.cells {
                println!(
                    "{:32} {:>9} return {:>8} [{}ms]",
                    cell.cell,
                    cell.env_steps,
                    cell.final_return.map_or("-".into(), |r| format!("{r:.3}")),
                    cell.wall_ms,
                );
            }
            println!("manifest: {}", cfg.out_dir.join("manifest.json").display());
            Ok(finish_cells(&manifest))
        }
        Command::Eval(args) => {
            let cfg = args.load()?;
            let report = run_eval(&cfg, &load_manifest(&cfg)?)?;
            for f in &report.files {
                println!("{}", f.display());
            }
            for e in &report.errors {
                eprintln!("failed: {e}");
            }
            Ok(if report.errors.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Bounds(args) => {
            let cfg = args.load()?;
            let report = run_bounds(&cfg, &load_manifest(&cfg)?)?;
            for row in &report.rows {
                println!(
                    "{:32} K {:.4}  tight {:.4}  loose {}  gap {}",
                    row.cell,
                    row.k,
                    row.tight,
                    row.loose.map_or("-".into(), |l| format!("{l:.4}")),
                    row.empirical_gap.map_or("-".into(), |g| format!("{g:.4}")),
                );
            }
            for e in &report.errors {
                eprintln!("failed: {e}");
            }
            println!("report: {}", cfg.out_dir.join("bounds.json").display());
            Ok(if report.errors.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::ExportFeatures(args) => {
            let cfg = args.load()?;
            for f in run_export(&cfg, &load_manifest(&cfg)?)? {
                println!("{}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Repro { preset, out } => {
            let preset: ReproPreset = preset.parse()?;
            let out = match std::env::var("INVAR_RL_OUT") {
                Ok(root) => PathBuf::from(root),
                Err(_) => out,
            };
            let outcome = run_repro(preset, &out)?;
            println!("{}", std::fs::read_to_string(outcome.dir.join("summary.csv"))?);
            println!("summary: {}", outcome.dir.join("summary.json").display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
