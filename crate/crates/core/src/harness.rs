//! Orchestration: training sweeps over (regime, λ, seed) cells, evaluation
//! grids, bound reports, and the named reproduction studies. Every run roots
//! in one output directory holding the resolved config, a manifest, and one
//! subdirectory per cell; cells are pure functions of (config, derived seed),
//! so reruns reproduce artifacts byte-for-byte up to wall-clock fields.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{train_dqn, train_reinforce, Regime, TrainerKind};
use crate::analysis::{
    discretize_space, evaluate_grid, feature_dump, greedy_rollout_states, grid_lipschitz,
    grid_mean_policy_tv, grid_return_gap, lipschitz_constant, prop1_bounds, rb_plane,
    same_path_probability, value_std, BoundInputs, PolicyKind,
};
use crate::config::{EnvironmentConfig, ExperimentConfig};
use crate::error::{Error, Result};
use crate::net::{
    load_checkpoint, save_checkpoint, Checkpoint, NetworkParams, SeedProvenance,
    CHECKPOINT_VERSION,
};
use crate::randomize::{
    grid_state_sample, sup_distance, ObservationMetric, Observer, Randomizer,
};
use crate::rngutil::derive_seed;

pub const ARTIFACT_VERSION: u32 = 1;

/// λ rendered for labels and file names: `0.01`, `1`, `10`.
pub fn format_lambda(lambda: f64) -> String {
    format!("{lambda}")
}

/// One training job: a regime, a penalty weight, and a seed index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpec {
    pub regime: Regime,
    pub lambda: f64,
    pub seed_index: usize,
}

impl CellSpec {
    pub fn label(&self) -> String {
        format!("{}-lam{}-s{}", self.regime.label(), format_lambda(self.lambda), self.seed_index)
    }

    /// The seed a cell trains under, derived from the master seed and the
    /// cell label so no two cells share a stream.
    pub fn derived_seed(&self, master_seed: u64) -> u64 {
        derive_seed(master_seed, &self.label())
    }
}

/// The sweep grid: configured regimes × penalty weights × seed indices, with
/// λ pinned to 0 wherever the regime has no penalty term.
pub fn enumerate_cells(cfg: &ExperimentConfig) -> Vec<CellSpec> {
    let regimes = if cfg.analysis.regimes.is_empty() {
        vec![cfg.agent.regime]
    } else {
        cfg.analysis.regimes.clone()
    };
    let mut cells = Vec::new();
    for &regime in &regimes {
        let lambdas = if !regime.penalized() {
            vec![0.0]
        } else if cfg.analysis.lambdas.is_empty() {
            vec![cfg.agent.lambda]
        } else {
            cfg.analysis.lambdas.clone()
        };
        for &lambda in &lambdas {
            for seed_index in 0..cfg.analysis.seeds {
                cells.push(CellSpec { regime, lambda, seed_index });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    /// Zero-episode cells produce no checkpoint and empty metrics by design.
    NoOp,
    Failed { message: String },
}

impl CellStatus {
    pub fn succeeded(&self) -> bool {
        !matches!(self, CellStatus::Failed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell: String,
    pub regime: Regime,
    pub lambda: f64,
    pub seed_index: usize,
    pub derived_seed: u64,
    pub status: CellStatus,
    /// Relative to the run directory, so a moved run stays valid and reruns
    /// of one config are comparable wherever they land.
    pub checkpoint: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub env_steps: usize,
    /// Mean training return over the final 50 episodes.
    pub final_return: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: u32,
    pub name: String,
    /// FNV-1a of the resolved config text, hex.
    pub config_hash: String,
    pub cells: Vec<CellRecord>,
    pub wall_ms: u64,
}

impl RunManifest {
    pub fn all_ok(&self) -> bool {
        self.cells.iter().all(|c| c.status.succeeded())
    }

    pub fn failed_cells(&self) -> impl Iterator<Item = &CellRecord> {
        self.cells.iter().filter(|c| !c.status.succeeded())
    }

    /// Equality of everything reproducible (i.e. ignoring wall-clock).
    pub fn content_equals(&self, other: &RunManifest) -> bool {
        let strip = |m: &RunManifest| {
            let mut m = m.clone();
            m.wall_ms = 0;
            for c in &mut m.cells {
                c.wall_ms = 0;
            }
            m
        };
        strip(self) == strip(other)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// `# `-prefixed lines recording where a table came from; CSV consumers skip
/// them with `comment='#'`.
fn provenance_comment(config_hash: &str, cell: &str, derived_seed: u64) -> String {
    format!("# config {config_hash}\n# cell {cell} seed {derived_seed}\n")
}

/// Strips the trailing (wall-clock) column from every non-comment CSV line,
/// for reproducibility comparisons.
pub fn csv_without_wall(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        if line.starts_with('#') {
            out.push_str(line);
        } else {
            match line.rfind(',') {
                Some(i) => out.push_str(&line[..i]),
                None => out.push_str(line),
            }
        }
        out.push('\n');
    }
    out
}

fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join("manifest.json")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

struct CellArtifacts {
    checkpoint: Option<PathBuf>,
    metrics: PathBuf,
    env_steps: usize,
    final_return: Option<f64>,
    noop: bool,
}

fn train_cell(
    cfg: &ExperimentConfig,
    config_hash: &str,
    spec: &CellSpec,
    seed: u64,
) -> Result<CellArtifacts> {
    let mut agent = cfg.agent.clone();
    agent.regime = spec.regime;
    agent.lambda = spec.lambda;
    agent.validate()?;

    let label = spec.label();
    fs::create_dir_all(cfg.out_dir.join(&label))?;
    let metrics_rel = PathBuf::from(&label).join("metrics.csv");
    let header = provenance_comment(config_hash, &label, seed);

    if agent.episodes == 0 {
        write_file(
            &cfg.out_dir.join(&metrics_rel),
            &format!("{header}{}\n", crate::agents::MetricsRecord::CSV_HEADER),
        )?;
        return Ok(CellArtifacts {
            checkpoint: None,
            metrics: metrics_rel,
            env_steps: 0,
            final_return: None,
            noop: true,
        });
    }

    let mut sim = cfg.sim();
    let out = match agent.trainer {
        TrainerKind::Dqn => train_dqn(&agent, &mut sim, seed)?,
        TrainerKind::Reinforce => train_reinforce(&agent, &mut sim, seed)?,
    };

    write_file(
        &cfg.out_dir.join(&metrics_rel),
        &format!("{header}{}", out.metrics.to_csv_string()),
    )?;

    let checkpoint_rel = PathBuf::from(&label).join("checkpoint.json");
    save_checkpoint(
        &cfg.out_dir.join(&checkpoint_rel),
        &Checkpoint {
            format_version: CHECKPOINT_VERSION,
            provenance: SeedProvenance {
                master_seed: cfg.master_seed,
                cell: label,
                derived_seed: seed,
            },
            net: out.params,
            adam: out.adam,
        },
    )?;

    Ok(CellArtifacts {
        checkpoint: Some(checkpoint_rel),
        metrics: metrics_rel,
        env_steps: out.env_steps,
        final_return: Some(out.metrics.mean_return_last(50)),
        noop: false,
    })
}

fn run_cell(cfg: &ExperimentConfig, config_hash: &str, spec: &CellSpec) -> CellRecord {
    let started = Instant::now();
    let seed = spec.derived_seed(cfg.master_seed);
    let mut record = CellRecord {
        cell: spec.label(),
        regime: spec.regime,
        lambda: spec.lambda,
        seed_index: spec.seed_index,
        derived_seed: seed,
        status: CellStatus::Ok,
        checkpoint: None,
        metrics: None,
        env_steps: 0,
        final_return: None,
        wall_ms: 0,
    };
    match train_cell(cfg, config_hash, spec, seed) {
        Ok(a) => {
            record.checkpoint = a.checkpoint;
            record.metrics = Some(a.metrics);
            record.env_steps = a.env_steps;
            record.final_return = a.final_return;
            if a.noop {
                record.status = CellStatus::NoOp;
            }
        }
        Err(e) => record.status = CellStatus::Failed { message: e.to_string() },
    }
    record.wall_ms = started.elapsed().as_millis() as u64;
    record
}

/// Trains every cell of the sweep, in parallel, isolating per-cell failures.
/// Writes the resolved config, per-cell metrics and checkpoints, and the
/// manifest under `cfg.out_dir`.
pub fn run_train(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let started = Instant::now();
    fs::create_dir_all(&cfg.out_dir)?;
    let resolved = cfg.to_toml_string()?;
    write_file(&cfg.out_dir.join("config.toml"), &resolved)?;
    let config_hash = format!("{:016x}", cfg.config_hash()?);

    let cells = enumerate_cells(cfg);
    let records: Vec<CellRecord> =
        cells.par_iter().map(|spec| run_cell(cfg, &config_hash, spec)).collect();

    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION,
        name: cfg.name.clone(),
        config_hash,
        cells: records,
        wall_ms: started.elapsed().as_millis() as u64,
    };
    manifest.save(&manifest_path(&cfg.out_dir))?;
    Ok(manifest)
}

/// `run_train`, unless `cfg.out_dir` already holds a fully-successful
/// manifest for this exact config — then the finished run is reused. Training
/// is deterministic in (config, seed), so reuse changes nothing but time.
pub fn run_train_cached(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let hash = format!("{:016x}", cfg.config_hash()?);
    if let Ok(m) = RunManifest::load(&manifest_path(&cfg.out_dir)) {
        if m.config_hash == hash && m.all_ok() && !m.cells.is_empty() {
            return Ok(m);
        }
    }
    run_train(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub files: Vec<PathBuf>,
    /// Per-cell problems (missing or unreadable checkpoints, rollout
    /// failures); they skip the cell, never the run.
    pub errors: Vec<String>,
}

fn eval_cell(
    cfg: &ExperimentConfig,
    config_hash: &str,
    record: &CellRecord,
) -> (Vec<PathBuf>, Vec<String>) {
    let mut files = Vec::new();
    let mut errors = Vec::new();
    let Some(ckpt_rel) = &record.checkpoint else {
        return (files, errors);
    };
    let ckpt = match load_checkpoint(&cfg.out_dir.join(ckpt_rel)) {
        Ok(c) => c,
        Err(e) => {
            errors.push(format!("{}: {e}", record.cell));
            return (files, errors);
        }
    };
    let sim = cfg.sim();
    for preset in &cfg.analysis.grids {
        let seed = derive_seed(record.derived_seed, &format!("eval-{}", preset.name()));
        let out = evaluate_grid(
            &ckpt.net,
            &sim,
            &preset.domains(),
            cfg.analysis.eval_episodes,
            cfg.analysis.eval_mode,
            seed,
        );
        match out {
            Ok(grid) => {
                let path = cfg.out_dir.join(&record.cell).join(format!("eval-{}.csv", preset.name()));
                let text = format!(
                    "{}{}",
                    provenance_comment(config_hash, &record.cell, record.derived_seed),
                    grid.to_csv_string()
                );
                match write_file(&path, &text) {
                    Ok(()) => files.push(path),
                    Err(e) => errors.push(format!("{}: {e}", record.cell)),
                }
            }
            Err(e) => errors.push(format!("{} ({}): {e}", record.cell, preset.name())),
        }
    }
    (files, errors)
}

/// Rolls every trained checkpoint over every configured evaluation grid,
/// writing one `eval-<preset>.csv` per (cell, grid).
pub fn run_eval(cfg: &ExperimentConfig, manifest: &RunManifest) -> Result<EvalReport> {
    if cfg.analysis.grids.is_empty() {
        return Err(Error::validation("no evaluation grids configured"));
    }
    let config_hash = format!("{:016x}", cfg.config_hash()?);
    let results: Vec<(Vec<PathBuf>, Vec<String>)> = manifest
        .cells
        .par_iter()
        .map(|record| eval_cell(cfg, &config_hash, record))
        .collect();
    let mut report = EvalReport { files: Vec::new(), errors: Vec::new() };
    for (files, errors) in results {
        report.files.extend(files);
        report.errors.extend(errors);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub cell: String,
    pub regime: Regime,
    pub lambda: f64,
    pub seed_index: usize,
    pub policy: PolicyKind,
    pub k: f64,
    pub delta: f64,
    pub r_max: f64,
    pub gamma: f64,
    pub horizon: u32,
    pub tight: f64,
    /// `None` where the loose bound is vacuous (γ = 1).
    pub loose: Option<f64>,
    /// Exact greedy return gap across the tag pair; gridworld only.
    pub empirical_gap: Option<f64>,
    pub gap_within_tight: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub config_hash: String,
    pub rows: Vec<BoundsRow>,
    pub errors: Vec<String>,
}

fn policy_kind(trainer: TrainerKind) -> PolicyKind {
    match trainer {
        TrainerKind::Dqn => PolicyKind::Greedy,
        TrainerKind::Reinforce => PolicyKind::Softmax,
    }
}

fn bound_row(
    cfg: &ExperimentConfig,
    record: &CellRecord,
    net: &NetworkParams,
) -> Result<BoundsRow> {
    let spec = cfg.sim().spec();
    let kind = policy_kind(cfg.agent.trainer);
    let (k, delta, empirical_gap) = match &cfg.environment {
        EnvironmentConfig::Gridworld => {
            let states = grid_state_sample();
            let delta = sup_distance(
                &Randomizer::XiTag(5.0),
                &Randomizer::XiTag(-5.0),
                &states,
                &Observer::grid(),
                ObservationMetric::L2,
            )?;
            (grid_lipschitz(net, kind)?, delta, Some(grid_return_gap(net)?))
        }
        EnvironmentConfig::Cartpole(c) => {
            let n = cfg.analysis.k_discretization.ok_or_else(|| {
                Error::validation(
                    "bounds on a rendered environment need analysis.k_discretization: \
                     the constant is estimated over a finite styling lattice",
                )
            })?;
            let domains = discretize_space(&cfg.agent.space, n)?;
            let observer = Observer::Cartpole {
                physics: crate::env::CartpolePhysics::default(),
                render: crate::env::RenderConfig {
                    width: c.width,
                    height: c.height,
                    ..crate::env::RenderConfig::default()
                },
                k: c.frame_stack,
            };
            let states = greedy_rollout_states(
                net,
                &cfg.sim(),
                &cfg.agent.space.reference,
                record.derived_seed,
            )?;
            let k_hat =
                lipschitz_constant(net, kind, &observer, &domains, &states, ObservationMetric::L2)?;
            let mut delta: f64 = 0.0;
            for i in 0..domains.len() {
                for j in (i + 1)..domains.len() {
                    let d = sup_distance(
                        &domains[i],
                        &domains[j],
                        &states,
                        &observer,
                        ObservationMetric::L2,
                    )?;
                    delta = delta.max(d);
                }
            }
            (k_hat, delta, None)
        }
    };
    let bounds = prop1_bounds(&BoundInputs {
        k,
        r_max: spec.r_max,
        gamma: spec.gamma,
        delta,
        horizon: Some(spec.time_limit as usize),
    })?;
    Ok(BoundsRow {
        cell: record.cell.clone(),
        regime: record.regime,
        lambda: record.lambda,
        seed_index: record.seed_index,
        policy: kind,
        k,
        delta,
        r_max: spec.r_max,
        gamma: spec.gamma,
        horizon: spec.time_limit,
        tight: bounds.tight,
        loose: bounds.loose.is_finite().then_some(bounds.loose),
        empirical_gap,
        gap_within_tight: empirical_gap.map(|g| g <= bounds.tight + 1e-9),
    })
}

/// Computes the policy constant and both return-gap bounds for every trained
/// checkpoint; exact enumeration on the gridworld, lattice estimate on
/// rendered environments. Writes `bounds.json` in the run directory.
pub fn run_bounds(cfg: &ExperimentConfig, manifest: &RunManifest) -> Result<BoundsReport> {
    let config_hash = format!("{:016x}", cfg.config_hash()?);
    let results: Vec<std::result::Result<BoundsRow, String>> = manifest
        .cells
        .par_iter()
        .filter(|r| r.checkpoint.is_some())
        .map(|record| {
            let path = cfg.out_dir.join(record.checkpoint.as_ref().expect("filtered on checkpoint"));
            load_checkpoint(&path)
                .and_then(|ckpt| bound_row(cfg, record, &ckpt.net))
                .map_err(|e| {
                    // configuration mistakes should stop the run, not be
                    // recorded as per-cell noise
                    format!("{}: {e}", record.cell)
                })
        })
        .collect();
    let mut report =
        BoundsReport { config_hash, rows: Vec::new(), errors: Vec::new() };
    for r in results {
        match r {
            Ok(row) => report.rows.push(row),
            Err(e) => report.errors.push(e),
        }
    }
    if report.rows.is_empty() && !report.errors.is_empty() {
        return Err(Error::validation(format!(
            "bounds computed for no cell; first error: {}",
            report.errors[0]
        )));
    }
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_file(&cfg.out_dir.join("bounds.json"), &text)?;
    Ok(report)
}

/// Dumps feature-layer activations per (state, domain) for every trained
/// checkpoint, one `features.csv` per cell.
pub fn run_export(cfg: &ExperimentConfig, manifest: &RunManifest) -> Result<Vec<PathBuf>> {
    let config_hash = format!("{:016x}", cfg.config_hash()?);
    let results: Vec<std::result::Result<PathBuf, Error>> = manifest
        .cells
        .par_iter()
        .filter(|r| r.checkpoint.is_some())
        .map(|record| {
            let ckpt =
                load_checkpoint(&cfg.out_dir.join(record.checkpoint.as_ref().expect("filtered")))?;
            let (observer, states, domains) = match &cfg.environment {
                EnvironmentConfig::Gridworld => (
                    Observer::grid(),
                    grid_state_sample(),
                    crate::analysis::xi_domains(),
                ),
                EnvironmentConfig::Cartpole(c) => {
                    let observer = Observer::Cartpole {
                        physics: crate::env::CartpolePhysics::default(),
                        render: crate::env::RenderConfig {
                            width: c.width,
                            height: c.height,
                            ..crate::env::RenderConfig::default()
                        },
                        k: c.frame_stack,
                    };
                    let states = greedy_rollout_states(
                        &ckpt.net,
                        &cfg.sim(),
                        &cfg.agent.space.reference,
                        record.derived_seed,
                    )?;
                    let n = cfg.analysis.k_discretization.unwrap_or(2);
                    (observer, states, discretize_space(&cfg.agent.space, n)?)
                }
            };
            let dump = feature_dump(&ckpt.net, &observer, &states, &domains)?;
            let path = cfg.out_dir.join(&record.cell).join("features.csv");
            let text = format!(
                "{}{}",
                provenance_comment(&config_hash, &record.cell, record.derived_seed),
                dump.to_csv_string()
            );
            write_file(&path, &text)?;
            Ok(path)
        })
        .collect();
    results.into_iter().collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    assert!(!xs.is_empty(), "median of nothing");
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// The built-in studies. Each trains (or reuses) a sweep, derives the tables
/// the write-up is built on, and drops `summary.json` + `summary.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReproPreset {
    GridworldBound,
    GridworldPaths,
    CartpoleGrid,
    CartpoleExtrapolation,
    OutputRegTradeoff,
    ValueStd,
}

pub const ALL_PRESETS: [ReproPreset; 6] = [
    ReproPreset::GridworldBound,
    ReproPreset::GridworldPaths,
    ReproPreset::CartpoleGrid,
    ReproPreset::CartpoleExtrapolation,
    ReproPreset::OutputRegTradeoff,
    ReproPreset::ValueStd,
];

impl ReproPreset {
    pub fn name(&self) -> &'static str {
        match self {
            ReproPreset::GridworldBound => "gridworld_bound",
            ReproPreset::GridworldPaths => "gridworld_paths",
            ReproPreset::CartpoleGrid => "cartpole_grid",
            ReproPreset::CartpoleExtrapolation => "cartpole_extrapolation",
            ReproPreset::OutputRegTradeoff => "output_reg_tradeoff",
            ReproPreset::ValueStd => "value_std",
        }
    }
}

impl std::str::FromStr for ReproPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_PRESETS
            .iter()
            .find(|p| p.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<_> = ALL_PRESETS.iter().map(|p| p.name()).collect();
                Error::validation(format!("unknown preset {s:?}; one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaBoundStats {
    pub lambda: f64,
    pub seeds: usize,
    pub median_tight: f64,
    pub median_gap: f64,
    /// Fraction of seeds whose exact gap respects the tight bound.
    pub frac_within: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeGridStats {
    pub regime: Regime,
    pub seeds: usize,
    /// Median over seeds of the across-domain std of mean returns.
    pub median_std: f64,
    /// Median over seeds of the across-domain mean of mean returns.
    pub median_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationStats {
    pub regime: Regime,
    pub seeds: usize,
    pub median_reference_return: f64,
    pub median_far_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffStats {
    pub lambda: f64,
    pub seeds: usize,
    pub median_final_return: f64,
    /// Median over seeds of the mean cross-tag policy TV.
    pub median_policy_tv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueStdStats {
    pub regime: Regime,
    pub seeds: usize,
    pub median_value_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum ReproSummary {
    GridworldBound { per_lambda: Vec<LambdaBoundStats> },
    GridworldPaths {
        regularized_same_path: f64,
        regularized_seeds: usize,
        randomized_same_path: f64,
        randomized_seeds: usize,
    },
    CartpoleGrid { regimes: Vec<RegimeGridStats> },
    CartpoleExtrapolation { regimes: Vec<ExtrapolationStats> },
    OutputRegTradeoff { per_lambda: Vec<TradeoffStats> },
    ValueStd { regimes: Vec<ValueStdStats> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproOutcome {
    pub dir: PathBuf,
    pub summary: ReproSummary,
}

// Study budgets. Gridworld cells run in seconds; the cartpole study is the
// long-running battery shared by the three cartpole presets.
const BOUND_LAMBDAS: [f64; 4] = [0.01, 0.1, 1.0, 10.0];
const BOUND_SEEDS: usize = 10;
// Strong penalty for the path study: the two optimal paths tie exactly, so
// the argmax only agrees across domains once the residual cross-domain value
// gap sits well below the tie-breaking noise. λ sets that equilibrium gap.
const PATHS_LAMBDA: f64 = 100.0;
const PATHS_REG_SEEDS: usize = 20;
const PATHS_RAND_SEEDS: usize = 50;
const TRADEOFF_LAMBDAS: [f64; 4] = [0.01, 0.1, 1.0, 10.0];
const TRADEOFF_SEEDS: usize = 10;
const STUDY_SEEDS: usize = 5;
const STUDY_LAMBDA: f64 = 1.0;
const STUDY_EPISODES: usize = 300;
const STUDY_EVAL_EPISODES: usize = 5;
const STUDY_LATTICE: usize = 3;
/// The far-extrapolation probe of the gray diagonal: outside the trained
/// color range in every channel that the range constrains.
const FAR_GRAY: [f64; 3] = [0.2, 0.2, 0.2];

fn write_summary(dir: &Path, summary: &ReproSummary, csv: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    write_file(&dir.join("summary.json"), &text)?;
    write_file(&dir.join("summary.csv"), csv)?;
    Ok(())
}

fn require_all_ok(manifest: &RunManifest) -> Result<()> {
    if let Some(c) = manifest.failed_cells().next() {
        let CellStatus::Failed { message } = &c.status else { unreachable!() };
        return Err(Error::contract(format!("cell {} failed: {message}", c.cell)));
    }
    Ok(())
}

fn load_cell_nets(
    out_dir: &Path,
    manifest: &RunManifest,
    mut keep: impl FnMut(&CellRecord) -> bool,
) -> Result<Vec<(CellRecord, NetworkParams)>> {
    let mut out = Vec::new();
    for record in &manifest.cells {
        if !keep(record) {
            continue;
        }
        let Some(path) = &record.checkpoint else { continue };
        out.push((record.clone(), load_checkpoint(&out_dir.join(path))?.net));
    }
    Ok(out)
}

fn gridworld_bound(out_root: &Path) -> Result<ReproOutcome> {
    let mut cfg =
        ExperimentConfig::defaults("gridworld-bound", 11, EnvironmentConfig::Gridworld);
    cfg.out_dir = out_root.join(ReproPreset::GridworldBound.name());
    cfg.agent.regime = Regime::Regularized;
    cfg.agent.episodes = 2000;
    cfg.analysis.seeds = BOUND_SEEDS;
    cfg.analysis.lambdas = BOUND_LAMBDAS.to_vec();

    let manifest = run_train_cached(&cfg)?;
    require_all_ok(&manifest)?;
    let report = run_bounds(&cfg, &manifest)?;

    let mut per_lambda = Vec::new();
    for &lambda in &BOUND_LAMBDAS {
        let rows: Vec<&BoundsRow> =
            report.rows.iter().filter(|r| r.lambda == lambda).collect();
        if rows.is_empty() {
            return Err(Error::contract(format!("no bound rows for lambda {lambda}")));
        }
        let gaps: Vec<f64> = rows.iter().map(|r| r.empirical_gap.unwrap_or(f64::NAN)).collect();
        let within = rows
            .iter()
            .filter(|r| r.gap_within_tight == Some(true))
            .count();
        per_lambda.push(LambdaBoundStats {
            lambda,
            seeds: rows.len(),
            median_tight: median(rows.iter().map(|r| r.tight).collect()),
            median_gap: median(gaps),
            frac_within: within as f64 / rows.len() as f64,
        });
    }

    let mut csv = String::from("lambda,seeds,median_tight,median_gap,frac_within\n");
    for s in &per_lambda {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            format_lambda(s.lambda),
            s.seeds,
            s.median_tight,
            s.median_gap,
            s.frac_within
        ));
    }
    let summary = ReproSummary::GridworldBound { per_lambda };
    write_summary(&cfg.out_dir, &summary, &csv)?;
    Ok(ReproOutcome { dir: cfg.out_dir, summary })
}

fn gridworld_paths(out_root: &Path) -> Result<ReproOutcome> {
    let dir = out_root.join(ReproPreset::GridworldPaths.name());

    let mut reg =
        ExperimentConfig::defaults("paths-regularized", 12, EnvironmentConfig::Gridworld);
    reg.out_dir = dir.join("regularized");
    reg.agent.regime = Regime::Regularized;
    reg.agent.lambda = PATHS_LAMBDA;
    reg.agent.episodes = 2000;
    reg.analysis.seeds = PATHS_REG_SEEDS;

    let mut rand =
        ExperimentConfig::defaults("paths-randomized", 13, EnvironmentConfig::Gridworld);
    rand.out_dir = dir.join("randomized");
    rand.agent.regime = Regime::Randomized;
    rand.agent.episodes = 2000;
    rand.analysis.seeds = PATHS_RAND_SEEDS;

    let mut probs = Vec::new();
    for cfg in [&reg, &rand] {
        let manifest = run_train_cached(cfg)?;
        require_all_ok(&manifest)?;
        let nets: Vec<NetworkParams> = load_cell_nets(&cfg.out_dir, &manifest, |_| true)?
            .into_iter()
            .map(|(_, net)| net)
            .collect();
        probs.push((same_path_probability(&nets)?, nets.len()));
    }

    let summary = ReproSummary::GridworldPaths {
        regularized_same_path: probs[0].0,
        regularized_seeds: probs[0].1,
        randomized_same_path: probs[1].0,
        randomized_seeds: probs[1].1,
    };
    let csv = format!(
        "regime,seeds,same_path_probability\nregularized,{},{}\nrandomized,{},{}\n",
        probs[0].1, probs[0].0, probs[1].1, probs[1].0
    );
    write_summary(&dir, &summary, &csv)?;
    Ok(ReproOutcome { dir, summary })
}

/// The shared cartpole battery: normal, randomized, and regularized agents on
/// the big color range, `STUDY_SEEDS` seeds each. All three cartpole presets
/// read from this one sweep, so it trains at most once per output root.
pub fn cartpole_study(out_root: &Path) -> Result<(ExperimentConfig, RunManifest)> {
    let mut cfg =
        ExperimentConfig::defaults("cartpole-study", 14, EnvironmentConfig::cartpole_default());
    cfg.out_dir = out_root.join("cartpole-study");
    cfg.agent.episodes = STUDY_EPISODES;
    cfg.analysis.seeds = STUDY_SEEDS;
    cfg.analysis.lambdas = vec![STUDY_LAMBDA];
    cfg.analysis.regimes = vec![Regime::Normal, Regime::Randomized, Regime::Regularized];
    cfg.analysis.eval_episodes = STUDY_EVAL_EPISODES;
    cfg.analysis.k_discretization = Some(STUDY_LATTICE);
    let manifest = run_train_cached(&cfg)?;
    require_all_ok(&manifest)?;
    Ok((cfg, manifest))
}

fn cartpole_grid(out_root: &Path) -> Result<ReproOutcome> {
    let (cfg, manifest) = cartpole_study(out_root)?;
    let dir = out_root.join(ReproPreset::CartpoleGrid.name());
    let domains = rb_plane(5);

    let mut regimes = Vec::new();
    for regime in [Regime::Randomized, Regime::Regularized] {
        let cells = load_cell_nets(&cfg.out_dir, &manifest, |r| r.regime == regime)?;
        let mut stds = Vec::new();
        let mut means = Vec::new();
        for (record, net) in &cells {
            let grid = evaluate_grid(
                net,
                &cfg.sim(),
                &domains,
                cfg.analysis.eval_episodes,
                cfg.analysis.eval_mode,
                derive_seed(record.derived_seed, "eval-rb_plane"),
            )?;
            let row_means: Vec<f64> = grid.rows.iter().map(|r| r.mean).collect();
            let n = row_means.len() as f64;
            let mean = row_means.iter().sum::<f64>() / n;
            let var = row_means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n;
            means.push(mean);
            stds.push(var.sqrt());
        }
        regimes.push(RegimeGridStats {
            regime,
            seeds: cells.len(),
            median_std: median(stds),
            median_mean: median(means),
        });
    }

    let mut csv = String::from("regime,seeds,median_across_domain_std,median_mean_return\n");
    for s in &regimes {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            s.regime.label(),
            s.seeds,
            s.median_std,
            s.median_mean
        ));
    }
    let summary = ReproSummary::CartpoleGrid { regimes };
    write_summary(&dir, &summary, &csv)?;
    Ok(ReproOutcome { dir, summary })
}

fn cartpole_extrapolation(out_root: &Path) -> Result<ReproOutcome> {
    let (cfg, manifest) = cartpole_study(out_root)?;
    let dir = out_root.join(ReproPreset::CartpoleExtrapolation.name());
    let domains = vec![cfg.agent.space.reference, Randomizer::BackgroundColor(FAR_GRAY)];

    let mut regimes = Vec::new();
    for regime in [Regime::Randomized, Regime::Regularized] {
        let cells = load_cell_nets(&cfg.out_dir, &manifest, |r| r.regime == regime)?;
        let mut refs = Vec::new();
        let mut fars = Vec::new();
        for (record, net) in &cells {
            let grid = evaluate_grid(
                net,
                &cfg.sim(),
                &domains,
                cfg.analysis.eval_episodes,
                cfg.analysis.eval_mode,
                derive_seed(record.derived_seed, "eval-extrapolation"),
            )?;
            refs.push(grid.rows[0].mean);
            fars.push(grid.rows[1].mean);
        }
        regimes.push(ExtrapolationStats {
            regime,
            seeds: cells.len(),
            median_reference_return: median(refs),
            median_far_return: median(fars),
        });
    }

    let mut csv = String::from("regime,seeds,median_reference_return,median_far_return\n");
    for s in &regimes {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            s.regime.label(),
            s.seeds,
            s.median_reference_return,
            s.median_far_return
        ));
    }
    let summary = ReproSummary::CartpoleExtrapolation { regimes };
    write_summary(&dir, &summary, &csv)?;
    Ok(ReproOutcome { dir, summary })
}

fn output_reg_tradeoff(out_root: &Path) -> Result<ReproOutcome> {
    let mut cfg =
        ExperimentConfig::defaults("output-reg-tradeoff", 15, EnvironmentConfig::Gridworld);
    cfg.out_dir = out_root.join(ReproPreset::OutputRegTradeoff.name());
    cfg.agent = crate::agents::AgentConfig::grid_default(TrainerKind::Reinforce);
    cfg.agent.regime = Regime::OutputRegularized;
    cfg.analysis.seeds = TRADEOFF_SEEDS;
    cfg.analysis.lambdas = TRADEOFF_LAMBDAS.to_vec();

    let manifest = run_train_cached(&cfg)?;
    require_all_ok(&manifest)?;

    let mut per_lambda = Vec::new();
    for &lambda in &TRADEOFF_LAMBDAS {
        let cells = load_cell_nets(&cfg.out_dir, &manifest, |r| r.lambda == lambda)?;
        if cells.is_empty() {
            return Err(Error::contract(format!("no cells for lambda {lambda}")));
        }
        let mut returns = Vec::new();
        let mut tvs = Vec::new();
        for (record, net) in &cells {
            returns.push(record.final_return.ok_or_else(|| {
                Error::contract(format!("{} has no final return", record.cell))
            })?);
            tvs.push(grid_mean_policy_tv(net, PolicyKind::Softmax)?);
        }
        per_lambda.push(TradeoffStats {
            lambda,
            seeds: cells.len(),
            median_final_return: median(returns),
            median_policy_tv: median(tvs),
        });
    }

    let mut csv = String::from("lambda,seeds,median_final_return,median_policy_tv\n");
    for s in &per_lambda {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            format_lambda(s.lambda),
            s.seeds,
            s.median_final_return,
            s.median_policy_tv
        ));
    }
    let summary = ReproSummary::OutputRegTradeoff { per_lambda };
    write_summary(&cfg.out_dir, &summary, &csv)?;
    Ok(ReproOutcome { dir: cfg.out_dir, summary })
}

fn value_std_study(out_root: &Path) -> Result<ReproOutcome> {
    let (cfg, manifest) = cartpole_study(out_root)?;
    let dir = out_root.join(ReproPreset::ValueStd.name());
    let domains = discretize_space(&cfg.agent.space, STUDY_LATTICE)?;
    let EnvironmentConfig::Cartpole(c) = cfg.environment else {
        return Err(Error::contract("cartpole study is not a cartpole config"));
    };
    let observer = Observer::Cartpole {
        physics: crate::env::CartpolePhysics::default(),
        render: crate::env::RenderConfig {
            width: c.width,
            height: c.height,
            ..crate::env::RenderConfig::default()
        },
        k: c.frame_stack,
    };

    let mut regimes = Vec::new();
    for regime in [Regime::Normal, Regime::Randomized, Regime::Regularized] {
        let cells = load_cell_nets(&cfg.out_dir, &manifest, |r| r.regime == regime)?;
        let mut stds = Vec::new();
        for (record, net) in &cells {
            let states = greedy_rollout_states(
                net,
                &cfg.sim(),
                &cfg.agent.space.reference,
                record.derived_seed,
            )?;
            stds.push(value_std(net, &observer, &states, &domains)?);
        }
        regimes.push(ValueStdStats {
            regime,
            seeds: cells.len(),
            median_value_std: median(stds),
        });
    }

    let mut csv = String::from("regime,seeds,median_value_std\n");
    for s in &regimes {
        csv.push_str(&format!("{},{},{}\n", s.regime.label(), s.seeds, s.median_value_std));
    }
    let summary = ReproSummary::ValueStd { regimes };
    write_summary(&dir, &summary, &csv)?;
    Ok(ReproOutcome { dir, summary })
}

pub fn run_repro(preset: ReproPreset, out_root: &Path) -> Result<ReproOutcome> {
    match preset {
        ReproPreset::GridworldBound => gridworld_bound(out_root),
        ReproPreset::GridworldPaths => gridworld_paths(out_root),
        ReproPreset::CartpoleGrid => cartpole_grid(out_root),
        ReproPreset::CartpoleExtrapolation => cartpole_extrapolation(out_root),
        ReproPreset::OutputRegTradeoff => output_reg_tradeoff(out_root),
        ReproPreset::ValueStd => value_std_study(out_root),
    }
}
