//! Mini-batch SGD with pluggable denoising.
//!
//! Each batch runs in two phases. First every triple is decided against the
//! frozen parameters (negative draw, candidate pool, pool losses, resampled
//! positive, weight). Then the gradients, also taken at the frozen point, are
//! applied. With graph propagation the scoring tables are refreshed once per
//! epoch and gradients with respect to the propagated rows are applied to the
//! raw rows.
//!
//! Noise labels are only read after a triple has been decided, to count
//! normal and noisy selections.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;

use crate::baselines::{rce_weight, TruncateSchedule};
use crate::dataset::{InteractionSet, Label, NoisyTrainSet};
use crate::evaluation::evaluate;
use crate::loss::{interaction_loss, loss_gradients, triple_loss, LossKind, TrainingTriple};
use crate::model::{init_model, ModelState, Tables};
use crate::sampler::{
    build_candidate_pool, resample, sample_categorical, sample_negative, softmax_neg_into,
    ResampleConfig,
};
use crate::{rng_from_seed, Error, Result, Rng};

/// Cutoff of the validation metric used for early stopping.
pub const VALIDATION_K: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Denoiser {
    /// Standard training: the enumerated interaction is the positive.
    None,
    /// Personalized loss-distribution resampling from a candidate pool.
    Pld(ResampleConfig),
    /// Positive weighted by `exp(−β·loss)`.
    Rce { beta: f64 },
    /// Largest-loss triples of each batch dropped on a ramped schedule.
    Tce(TruncateSchedule),
}

impl Denoiser {
    pub fn name(&self) -> &'static str {
        match self {
            Denoiser::None => "none",
            Denoiser::Pld(_) => "pld",
            Denoiser::Rce { .. } => "rce",
            Denoiser::Tce(_) => "tce",
        }
    }
}

impl fmt::Display for Denoiser {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Denoiser::None => f.write_str("none"),
            Denoiser::Pld(c) => write!(f, "pld(k={}, tau={})", c.k, c.tau),
            Denoiser::Rce { beta } => write!(f, "rce(beta={beta})"),
            Denoiser::Tce(s) => write!(
                f,
                "tce(max_drop_rate={}, ramp_epochs={})",
                s.max_drop_rate, s.ramp_epochs
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub denoiser: Denoiser,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping; `None`
    /// disables early stopping.
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Bpr,
            denoiser: Denoiser::None,
            learning_rate: 0.05,
            weight_decay: 1e-4,
            batch_size: 256,
            max_epochs: 100,
            patience: Some(10),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        match self.denoiser {
            Denoiser::Pld(c) => c.validate(),
            Denoiser::Rce { beta } if !(beta > 0.0 && beta.is_finite()) => Err(
                Error::InvalidArgument(format!("rce beta must be positive, got {beta}")),
            ),
            Denoiser::Tce(s) => s.validate(),
            _ => Ok(()),
        }
    }
}

/// Embedding size and propagation depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub dim: usize,
    pub layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { dim: 64, layers: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub sampled_normal: usize,
    pub sampled_noisy: usize,
    /// Validation Recall@20; NaN when there is no validation set.
    pub val_metric: f64,
    pub wall_clock_s: f64,
}

impl EpochStats {
    pub fn noisy_fraction(&self) -> f64 {
        let total = self.sampled_normal + self.sampled_noisy;
        if total == 0 {
            0.0
        } else {
            self.sampled_noisy as f64 / total as f64
        }
    }
}

/// Source of wall-clock time in seconds. `no_std` callers can pass
/// [`NoClock`].
pub trait Clock {
    fn now_s(&self) -> f64;
}

pub struct NoClock;

impl Clock for NoClock {
    fn now_s(&self) -> f64 {
        0.0
    }
}

impl<F: Fn() -> f64> Clock for F {
    fn now_s(&self) -> f64 {
        self()
    }
}

/// One full pass over the training interactions. `epoch` is 1-based.
pub fn train_epoch(
    state: &mut ModelState,
    data: &NoisyTrainSet,
    cfg: &TrainConfig,
    epoch: usize,
    rng: &mut Rng,
) -> Result<EpochStats> {
    train_epoch_observed(state, data, cfg, epoch, rng, &mut |_| {})
}

struct Planned {
    triple: TrainingTriple,
    weight: f64,
    loss: f64,
}

/// [`train_epoch`] that reports every optimized triple to `observe`, in
/// update order.
pub fn train_epoch_observed(
    state: &mut ModelState,
    data: &NoisyTrainSet,
    cfg: &TrainConfig,
    epoch: usize,
    rng: &mut Rng,
    observe: &mut dyn FnMut(TrainingTriple),
) -> Result<EpochStats> {
    cfg.validate()?;
    let graph = data.combined();
    if graph.num_users() != state.num_users() || graph.num_items() != state.num_items() {
        return Err(Error::DimensionMismatch(format!(
            "model {}x{} vs data {}x{}",
            state.num_users(),
            state.num_items(),
            graph.num_users(),
            graph.num_items()
        )));
    }
    let snapshot: Option<Tables> = if state.layers() > 0 {
        Some(state.propagate(graph)?.clone())
    } else {
        None
    };

    let mut order: Vec<usize> = (0..graph.len()).collect();
    order.shuffle(rng);

    let mut stats = EpochStats {
        epoch,
        mean_train_loss: 0.0,
        sampled_normal: 0,
        sampled_noisy: 0,
        val_metric: f64::NAN,
        wall_clock_s: 0.0,
    };
    let mut loss_sum = 0.0;
    let mut plan: Vec<Planned> = Vec::with_capacity(cfg.batch_size);
    let mut pool_losses: Vec<f64> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    let mut updates: Vec<(TrainingTriple, crate::loss::TripleGradient)> = Vec::new();

    for batch in order.chunks(cfg.batch_size) {
        plan.clear();
        updates.clear();
        {
            let tables = match &snapshot {
                Some(t) => t,
                None => state.params(),
            };
            for &idx in batch {
                let (user, orig) = graph.pair(idx);
                let items = graph.user_items(user);
                let neg = sample_negative(user, items, graph.num_items(), rng)?;
                let pos = match cfg.denoiser {
                    Denoiser::Pld(rc) => {
                        let pool = build_candidate_pool(user, items, rc.k, rng)?;
                        if pool.k() == 1 {
                            resample(&pool, &[0.0], rc.tau, rng)?
                        } else {
                            pool_losses.clear();
                            pool_losses.extend(pool.items.iter().map(|&c| {
                                interaction_loss(
                                    tables,
                                    TrainingTriple { user, pos: c, neg },
                                    cfg.loss,
                                )
                            }));
                            if let Some(p) = pool_losses.iter().position(|l| !l.is_finite()) {
                                return Err(Error::NonFiniteLoss {
                                    epoch,
                                    user,
                                    item: pool.items[p],
                                });
                            }
                            softmax_neg_into(&pool_losses, rc.tau, &mut probs);
                            pool.items[sample_categorical(&probs, rng)]
                        }
                    }
                    _ => orig,
                };
                let triple = TrainingTriple { user, pos, neg };
                let loss = triple_loss(tables, triple, cfg.loss);
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        user,
                        item: pos,
                    });
                }
                let weight = match cfg.denoiser {
                    Denoiser::Rce { beta } => {
                        rce_weight(interaction_loss(tables, triple, cfg.loss), beta)
                    }
                    _ => 1.0,
                };
                plan.push(Planned {
                    triple,
                    weight,
                    loss,
                });
            }
            if let Denoiser::Tce(schedule) = cfg.denoiser {
                let losses: Vec<f64> = plan
                    .iter()
                    .map(|p| interaction_loss(tables, p.triple, cfg.loss))
                    .collect();
                let keep = crate::baselines::tce_mask(&losses, epoch.saturating_sub(1), &schedule);
                let mut it = keep.iter();
                plan.retain(|_| *it.next().unwrap());
            }
            for p in &plan {
                let t = p.triple;
                let mut g = loss_gradients(
                    tables.users.row(t.user as usize),
                    tables.items.row(t.pos as usize),
                    tables.items.row(t.neg as usize),
                    cfg.loss,
                    p.weight,
                );
                if cfg.weight_decay != 0.0 {
                    let raw = state.params();
                    let wd = cfg.weight_decay;
                    add_scaled(&mut g.user, raw.users.row(t.user as usize), wd);
                    add_scaled(&mut g.pos, raw.items.row(t.pos as usize), wd);
                    add_scaled(&mut g.neg, raw.items.row(t.neg as usize), wd);
                }
                updates.push((t, g));
            }
        }

        for p in &plan {
            loss_sum += p.loss;
            match data.label(p.triple.user, p.triple.pos) {
                Some(Label::Noisy) => stats.sampled_noisy += 1,
                _ => stats.sampled_normal += 1,
            }
            observe(p.triple);
        }

        if cfg.learning_rate != 0.0 {
            let lr = cfg.learning_rate;
            let params = state.params_mut();
            for (t, g) in &updates {
                add_scaled(params.users.row_mut(t.user as usize), &g.user, -lr);
                add_scaled(params.items.row_mut(t.pos as usize), &g.pos, -lr);
                add_scaled(params.items.row_mut(t.neg as usize), &g.neg, -lr);
            }
        }
    }

    let n = stats.sampled_normal + stats.sampled_noisy;
    stats.mean_train_loss = if n == 0 { 0.0 } else { loss_sum / n as f64 };
    if snapshot.is_some() {
        state.refresh(graph)?;
    }
    Ok(stats)
}

#[inline]
fn add_scaled(dst: &mut [f64], src: &[f64], a: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

/// Noisy training interactions plus the validation set used for early
/// stopping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub train: NoisyTrainSet,
    pub validation: InteractionSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Checkpoint with the best validation metric (the final one when there
    /// is no validation data). Its propagation cache is fresh.
    pub model: ModelState,
    pub history: Vec<EpochStats>,
    /// 1-based epoch of `model`; 0 when no epoch ran.
    pub best_epoch: usize,
}

/// Trains from a fresh initialization until `max_epochs` or early stopping.
pub fn run_training(
    data: &TrainingData,
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let graph = data.train.combined();
    let mut state = init_model(
        graph.num_users(),
        graph.num_items(),
        model_cfg.dim,
        model_cfg.layers,
        cfg.seed,
    )?;
    state.refresh(graph)?;
    let mut rng = rng_from_seed(cfg.seed);
    rng.set_stream(1);

    let has_validation = !data.validation.is_empty();
    let mut best = state.clone();
    let mut best_epoch = 0usize;
    let mut best_metric = f64::NEG_INFINITY;
    let mut since_best = 0usize;
    let mut history = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let start = clock.now_s();
        let mut stats = train_epoch(&mut state, &data.train, cfg, epoch, &mut rng)?;
        if has_validation {
            let report = evaluate(&state, graph, &data.validation, &[VALIDATION_K])?;
            stats.val_metric = report.per_k[0].recall;
        }
        stats.wall_clock_s = clock.now_s() - start;
        history.push(stats);
        log::debug!(
            "epoch {epoch}: loss {:.5} noisy {}/{} val {:.5}",
            stats.mean_train_loss,
            stats.sampled_noisy,
            stats.sampled_normal + stats.sampled_noisy,
            stats.val_metric
        );
        if !has_validation {
            best_epoch = epoch;
            continue;
        }
        if stats.val_metric > best_metric {
            best_metric = stats.val_metric;
            best = state.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    let model = if has_validation { best } else { state };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}
