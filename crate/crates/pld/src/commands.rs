//! The five experiment commands. Each one is deterministic given the config
//! and the seed list, and writes into `<output_dir>/<name>/[<grid>/]seed_<s>/`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use pld_core::analytics::{
    collect_losses, overlap_stats, quartile_gap_per_user, OverlapStats, Scope,
};
use pld_core::dataset::{
    filter_min_degree, generate_synthetic, inject_noise_per_user, inject_noise_ratio, split,
    IdMapping, Label, NoisyTrainSet, SplitDataset,
};
use pld_core::evaluation::{evaluate, MetricReport};
use pld_core::model::ModelState;
use pld_core::rng_from_seed;
use pld_core::theory::{simulate_lambda, theorem_expectation, TheoremParams};
use pld_core::trainer::{run_training, Clock, EpochStats, TrainingData};
use serde::Serialize;

use crate::config::{ExperimentConfig, GridPoint, NoiseMode};
use crate::io;

/// Overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the config's seed list when non-empty.
    pub seeds: Vec<u64>,
    /// Replaces the config's `output_dir`.
    pub out: Option<PathBuf>,
    /// Checkpoint for `analyze`/`eval`; defaults to each run's own.
    pub checkpoint: Option<PathBuf>,
}

impl RunOptions {
    fn apply(&self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = cfg.clone();
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg
    }
}

struct SystemClock(Instant);

impl Clock for SystemClock {
    fn now_s(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Everything the dataset pipeline produces for one seed.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: SplitDataset,
    pub train: NoisyTrainSet,
    pub ids: IdMapping,
}

impl PreparedData {
    pub fn training_data(&self) -> TrainingData {
        TrainingData {
            train: self.train.clone(),
            validation: self.split.validation.clone(),
        }
    }
}

// Distinct RNG streams per pipeline stage, all derived from the run seed.
const NOISE_SEED_OFFSET: u64 = 0x6e6f_6973_6500_0000;
const ANALYZE_SEED_OFFSET: u64 = 0x616e_616c_0000_0000;

/// Load or generate, filter, split and noise-inject.
pub fn build_data(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedData> {
    let d = &cfg.dataset;
    let (set, ids) = match (&d.path, &d.synthetic) {
        (Some(path), _) => io::load_interactions(path)?,
        (None, Some(s)) => {
            let syn = generate_synthetic(s.num_users, s.num_items, s.latent_dim, s.per_user, seed)?;
            let ids = IdMapping {
                users: (0..s.num_users).map(|u| format!("u{u}")).collect(),
                items: (0..s.num_items).map(|v| format!("i{v}")).collect(),
            };
            (syn.set, ids)
        }
        (None, None) => bail!("dataset: no source configured"),
    };
    let filtered = filter_min_degree(&set, d.min_degree)?;
    let ids = ids.restrict(&filtered.kept_users, &filtered.kept_items);
    let split = split(&filtered.set, d.train_frac, d.val_frac, seed)?;
    if !split.users_without_train.is_empty() {
        warn!(
            "{} users have no training interactions",
            split.users_without_train.len()
        );
    }
    let forbidden = split.validation.union(&split.test)?;
    let noise_seed = seed ^ NOISE_SEED_OFFSET;
    let train = match d.noise.mode {
        NoiseMode::None => NoisyTrainSet::clean(split.train.clone()),
        NoiseMode::Ratio => {
            inject_noise_ratio(&split.train, d.noise.level, noise_seed, &forbidden)?
        }
        NoiseMode::PerUser => {
            inject_noise_per_user(&split.train, d.noise.level as usize, noise_seed, &forbidden)?
        }
    };
    if !train.shortfall().is_empty() {
        warn!(
            "{} users could not receive the full noise count",
            train.shortfall().len()
        );
    }
    Ok(PreparedData { split, train, ids })
}

/// `data/` directory contents.
pub fn write_data(dir: &Path, data: &PreparedData) -> Result<()> {
    let dir = dir.join("data");
    io::write_noisy_train(&dir.join("train.tsv"), &data.train)?;
    io::write_plain_set(&dir.join("validation.tsv"), &data.split.validation)?;
    io::write_plain_set(&dir.join("test.tsv"), &data.split.test)?;
    io::write_id_mapping(&dir.join("user_ids.tsv"), &data.ids.users)?;
    io::write_id_mapping(&dir.join("item_ids.tsv"), &data.ids.items)?;
    let shortfall: Vec<ShortfallRow> = data
        .train
        .shortfall()
        .iter()
        .map(|s| ShortfallRow {
            user: s.user,
            requested: s.requested,
            injected: s.injected,
        })
        .collect();
    io::write_csv(&dir.join("noise_shortfall.csv"), &shortfall)
}

#[derive(Serialize)]
struct ShortfallRow {
    user: u32,
    requested: usize,
    injected: usize,
}

fn run_dir(cfg: &ExperimentConfig, point: &GridPoint, seed: u64) -> PathBuf {
    let base = cfg.experiment_dir();
    let base = if cfg.has_grid() {
        base.join(point.tag())
    } else {
        base
    };
    base.join(format!("seed_{seed}"))
}

fn snapshot_config(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let text = cfg.to_toml_string()?;
    io::write_atomic(&dir.join("config.toml"), |w| {
        Ok(w.write_all(text.as_bytes())?)
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub num_users: usize,
    pub num_items: usize,
    pub train_normal: usize,
    pub train_noisy: usize,
    pub validation: usize,
    pub test: usize,
    pub users_without_train: usize,
    pub noise_shortfall_users: usize,
}

impl DataSummary {
    fn of(d: &PreparedData) -> Self {
        Self {
            num_users: d.split.train.num_users(),
            num_items: d.split.train.num_items(),
            train_normal: d.train.base().len(),
            train_noisy: d.train.injected().len(),
            validation: d.split.validation.len(),
            test: d.split.test.len(),
            users_without_train: d.split.users_without_train.len(),
            noise_shortfall_users: d.train.shortfall().len(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PrepareSummary {
    pub command: &'static str,
    pub seed: u64,
    pub dir: PathBuf,
    pub data: DataSummary,
}

pub fn cmd_prepare(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<PrepareSummary>> {
    let cfg = opts.apply(cfg);
    cfg.validate()?;
    let mut out = Vec::new();
    for &seed in &cfg.seeds {
        let dir = cfg.experiment_dir().join(format!("seed_{seed}"));
        let data = build_data(&cfg, seed)?;
        write_data(&dir, &data)?;
        snapshot_config(&dir, &cfg)?;
        let summary = PrepareSummary {
            command: "prepare",
            seed,
            dir: dir.clone(),
            data: DataSummary::of(&data),
        };
        io::write_json(&dir.join("run_summary.json"), &summary)?;
        info!("prepared seed {seed} in {}", dir.display());
        out.push(summary);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub sampled_normal: usize,
    pub sampled_noisy: usize,
    pub val_metric: f64,
    pub wall_clock_s: f64,
}

impl From<&EpochStats> for EpochRow {
    fn from(s: &EpochStats) -> Self {
        Self {
            epoch: s.epoch,
            mean_train_loss: s.mean_train_loss,
            sampled_normal: s.sampled_normal,
            sampled_noisy: s.sampled_noisy,
            val_metric: s.val_metric,
            wall_clock_s: s.wall_clock_s,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub grid: String,
    pub seed: u64,
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub users: usize,
}

fn metric_rows(grid: &str, seed: u64, report: &MetricReport) -> Vec<MetricRow> {
    report
        .per_k
        .iter()
        .map(|m| MetricRow {
            grid: grid.to_string(),
            seed,
            k: m.k,
            recall: m.recall,
            ndcg: m.ndcg,
            users: report.num_evaluated_users,
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub command: &'static str,
    pub seed: u64,
    pub grid: String,
    pub denoiser: String,
    pub dir: PathBuf,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_metric: f64,
    pub total_wall_clock_s: f64,
    pub data: DataSummary,
    pub test_metrics: Vec<MetricRow>,
}

pub fn cmd_train(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<TrainSummary>> {
    let cfg = opts.apply(cfg);
    cfg.validate()?;
    let mut out = Vec::new();
    let mut all_metrics = Vec::new();
    for point in cfg.grid_points() {
        for &seed in &cfg.seeds {
            let dir = run_dir(&cfg, &point, seed);
            let data = build_data(&cfg, seed)?;
            write_data(&dir, &data)?;
            snapshot_config(&dir, &cfg)?;
            let train_cfg = cfg.train_config(point, seed);
            info!(
                "training {} seed {seed} ({})",
                point.tag(),
                train_cfg.denoiser
            );
            let clock = SystemClock(Instant::now());
            let outcome = run_training(
                &data.training_data(),
                cfg.model_config(),
                &train_cfg,
                &clock,
            )
            .with_context(|| format!("training seed {seed}"))?;
            let rows: Vec<EpochRow> = outcome.history.iter().map(EpochRow::from).collect();
            io::write_csv(&dir.join("epochs.csv"), &rows)?;
            let mut log = String::new();
            for s in &outcome.history {
                writeln!(
                    log,
                    "epoch {:>4}  loss {:.6}  noisy {:>7}/{:<7}  val_recall@20 {:.5}  {:.3}s",
                    s.epoch,
                    s.mean_train_loss,
                    s.sampled_noisy,
                    s.sampled_normal + s.sampled_noisy,
                    s.val_metric,
                    s.wall_clock_s
                )?;
            }
            io::write_atomic(&dir.join("train.log"), |w| Ok(w.write_all(log.as_bytes())?))?;
            io::write_checkpoint(&dir.join("checkpoint.txt"), &outcome.model)?;
            let report = evaluate(
                &outcome.model,
                data.train.combined(),
                &data.split.test,
                &cfg.eval.k,
            )?;
            let metrics = metric_rows(&point.tag(), seed, &report);
            io::write_csv(&dir.join("metrics.csv"), &metrics)?;
            all_metrics.extend(metrics.iter().cloned());
            let summary = TrainSummary {
                command: "train",
                seed,
                grid: point.tag(),
                denoiser: train_cfg.denoiser.to_string(),
                dir: dir.clone(),
                epochs_run: outcome.history.len(),
                best_epoch: outcome.best_epoch,
                best_val_metric: outcome
                    .history
                    .iter()
                    .find(|s| s.epoch == outcome.best_epoch)
                    .map_or(f64::NAN, |s| s.val_metric),
                total_wall_clock_s: outcome.history.iter().map(|s| s.wall_clock_s).sum(),
                data: DataSummary::of(&data),
                test_metrics: metrics,
            };
            io::write_json(&dir.join("run_summary.json"), &summary)?;
            out.push(summary);
        }
    }
    io::write_csv(&cfg.experiment_dir().join("test_metrics.csv"), &all_metrics)?;
    Ok(out)
}

/// Loads the checkpoint for one run and checks it fits the rebuilt data.
fn load_model_for(dir: &Path, opts: &RunOptions, data: &PreparedData) -> Result<ModelState> {
    let path = opts
        .checkpoint
        .clone()
        .unwrap_or_else(|| dir.join("checkpoint.txt"));
    let mut model = io::read_checkpoint(&path)?;
    let graph = data.train.combined();
    ensure!(
        model.num_users() == graph.num_users() && model.num_items() == graph.num_items(),
        "checkpoint {} is {}x{} but the data is {}x{}",
        path.display(),
        model.num_users(),
        model.num_items(),
        graph.num_users(),
        graph.num_items()
    );
    model.refresh(graph)?;
    Ok(model)
}

#[derive(Debug, Clone, Serialize)]
pub struct LossRow {
    pub user: u32,
    pub item: u32,
    pub loss: f64,
    pub label: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct OverlapRow {
    pub scope: &'static str,
    pub noise_level: f64,
    pub normal_count: usize,
    pub normal_ratio: f64,
    pub noisy_count: usize,
    pub noisy_ratio: f64,
    pub normal_total: usize,
    pub noisy_total: usize,
}

impl OverlapRow {
    fn new(s: &OverlapStats, noise_level: f64) -> Self {
        Self {
            scope: s.scope.as_str(),
            noise_level,
            normal_count: s.normal_in_overlap,
            normal_ratio: s.normal_ratio(),
            noisy_count: s.noisy_in_overlap,
            noisy_ratio: s.noisy_ratio(),
            normal_total: s.normal_total,
            noisy_total: s.noisy_total,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub user: u32,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeSummary {
    pub command: &'static str,
    pub seed: u64,
    pub dir: PathBuf,
    pub entries: usize,
    /// Set when the record has no noisy entries, so every noise-side
    /// statistic is vacuous.
    pub noise_side_empty: bool,
    pub overlap: Vec<OverlapRow>,
    pub users_with_gap: usize,
    pub users_excluded_from_gap: usize,
}

pub fn cmd_analyze(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<AnalyzeSummary>> {
    let cfg = opts.apply(cfg);
    cfg.validate()?;
    let mut out = Vec::new();
    for point in cfg.grid_points() {
        for &seed in &cfg.seeds {
            let dir = run_dir(&cfg, &point, seed);
            let data = build_data(&cfg, seed)?;
            let model = load_model_for(&dir, opts, &data)?;
            let mut rng = rng_from_seed(seed ^ ANALYZE_SEED_OFFSET);
            let record = collect_losses(&model, &data.train, cfg.loss_kind(), &mut rng)?;
            let rows: Vec<LossRow> = record
                .entries
                .iter()
                .map(|e| LossRow {
                    user: e.user,
                    item: e.item,
                    loss: e.loss,
                    label: e.label.as_str(),
                })
                .collect();
            io::write_csv(&dir.join("losses.csv"), &rows)?;
            let overlap: Vec<OverlapRow> = [Scope::Global, Scope::Personal]
                .iter()
                .map(|&s| OverlapRow::new(&overlap_stats(&record, s), cfg.dataset.noise.level))
                .collect();
            io::write_csv(&dir.join("overlap.csv"), &overlap)?;
            let gaps = quartile_gap_per_user(&record);
            let gap_rows: Vec<GapRow> = gaps
                .gaps
                .iter()
                .map(|&(user, gap)| GapRow { user, gap })
                .collect();
            io::write_csv(&dir.join("gaps.csv"), &gap_rows)?;
            let noise_side_empty = record.count(Label::Noisy) == 0;
            if noise_side_empty {
                warn!("seed {seed}: no noisy interactions; noise-side statistics are empty");
            }
            let summary = AnalyzeSummary {
                command: "analyze",
                seed,
                dir: dir.clone(),
                entries: record.entries.len(),
                noise_side_empty,
                overlap,
                users_with_gap: gaps.gaps.len(),
                users_excluded_from_gap: gaps.excluded.len(),
            };
            io::write_json(&dir.join("analysis_summary.json"), &summary)?;
            out.push(summary);
        }
    }
    Ok(out)
}

pub fn cmd_eval(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<MetricRow>> {
    let cfg = opts.apply(cfg);
    cfg.validate()?;
    let mut all = Vec::new();
    for point in cfg.grid_points() {
        for &seed in &cfg.seeds {
            let dir = run_dir(&cfg, &point, seed);
            let data = build_data(&cfg, seed)?;
            let model = load_model_for(&dir, opts, &data)?;
            let report = evaluate(&model, data.train.combined(), &data.split.test, &cfg.eval.k)?;
            let rows = metric_rows(&point.tag(), seed, &report);
            io::write_csv(&dir.join("eval_metrics.csv"), &rows)?;
            all.extend(rows);
        }
    }
    io::write_csv(&cfg.experiment_dir().join("eval_metrics.csv"), &all)?;
    Ok(all)
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoryRow {
    pub n: usize,
    pub m: usize,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma: f64,
    pub k: usize,
    pub tau: f64,
    pub closed_form: f64,
    pub mc_estimate: f64,
    pub mc_stderr: f64,
    pub trials: usize,
}

/// Sweeps the `[theory]` grid. Each row gets its own simulation seed,
/// derived from the first configured seed and the row index.
pub fn cmd_theory(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<TheoryRow>> {
    let cfg = opts.apply(cfg);
    cfg.validate()?;
    let Some(t) = &cfg.theory else {
        bail!("config has no [theory] section");
    };
    let base_seed = cfg.seeds[0];
    let mut rows = Vec::new();
    for &n in &t.n {
        for &m in &t.m {
            for &gap in &t.gap {
                for &sigma in &t.sigma {
                    for &k in &t.k {
                        for &tau in &t.tau {
                            let p = TheoremParams {
                                n,
                                m,
                                mu1: t.mu1,
                                mu2: t.mu1 + gap,
                                sigma,
                                k,
                                tau,
                            };
                            let seed = base_seed
                                .wrapping_mul(1_000_003)
                                .wrapping_add(rows.len() as u64);
                            let closed_form = theorem_expectation(&p)?;
                            let mc = simulate_lambda(&p, t.trials, seed)?;
                            rows.push(TheoryRow {
                                n,
                                m,
                                mu1: p.mu1,
                                mu2: p.mu2,
                                sigma,
                                k,
                                tau,
                                closed_form,
                                mc_estimate: mc.mean,
                                mc_stderr: mc.stderr,
                                trials: mc.trials,
                            });
                        }
                    }
                }
            }
        }
    }
    let dir = cfg.experiment_dir();
    io::write_csv(&dir.join("theory.csv"), &rows)?;
    snapshot_config(&dir, &cfg)?;
    Ok(rows)
}
