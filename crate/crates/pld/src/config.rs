//! Declarative experiment configuration (TOML).
//!
//! Every section has defaults, unknown keys are rejected, and
//! [`ExperimentConfig::validate`] runs before any work starts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use pld_core::baselines::TruncateSchedule;
use pld_core::loss::LossKind;
use pld_core::sampler::ResampleConfig;
use pld_core::trainer::{Denoiser, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Names the results directory `<output_dir>/<name>`.
    pub name: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory: Option<TheorySection>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Interaction file; mutually exclusive with `synthetic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSection>,
    #[serde(default = "one")]
    pub min_degree: usize,
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_val_frac")]
    pub val_frac: f64,
    #[serde(default)]
    pub noise: NoiseSection,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: None,
            synthetic: Some(SyntheticSection::default()),
            min_degree: 1,
            train_frac: default_train_frac(),
            val_frac: default_val_frac(),
            noise: NoiseSection::default(),
        }
    }
}

fn one() -> usize {
    1
}

fn default_train_frac() -> f64 {
    0.8
}

fn default_val_frac() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub num_users: usize,
    pub num_items: usize,
    pub latent_dim: usize,
    pub per_user: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            num_users: 500,
            num_items: 500,
            latent_dim: 8,
            per_user: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    None,
    /// `level` is the ratio of injected to normal training interactions.
    Ratio,
    /// `level` is the number of injected items per user.
    PerUser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "default_noise_mode")]
    pub mode: NoiseMode,
    #[serde(default)]
    pub level: f64,
}

fn default_noise_mode() -> NoiseMode {
    NoiseMode::None
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            mode: NoiseMode::None,
            level: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub layers: usize,
}

fn default_dim() -> usize {
    64
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { dim: 64, layers: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    Bpr,
    Bce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserName {
    None,
    Pld,
    Rce,
    Tce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub loss: LossName,
    pub denoiser: DenoiserName,
    /// PLD pool size.
    pub k: usize,
    /// PLD temperature.
    pub tau: f64,
    pub rce_beta: f64,
    pub tce_max_drop_rate: f64,
    pub tce_ramp_epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// 0 disables early stopping.
    pub patience: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            loss: LossName::Bpr,
            denoiser: DenoiserName::None,
            k: 5,
            tau: 0.1,
            rce_beta: 1.0,
            tce_max_drop_rate: 0.2,
            tce_ramp_epochs: 10,
            learning_rate: 0.05,
            weight_decay: 1e-4,
            batch_size: 256,
            max_epochs: 100,
            patience: 10,
        }
    }
}

/// Optional hyperparameter grid; every combination becomes one run per
/// seed. Empty lists leave the `[train]` value in place.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tau: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub learning_rate: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weight_decay: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub k: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { k: vec![20, 50] }
    }
}

/// Parameter grid for the closed-form vs simulation comparison. Noisy means
/// are `mu1 + gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySection {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    #[serde(default = "default_mu1")]
    pub mu1: f64,
    pub gap: Vec<f64>,
    pub sigma: Vec<f64>,
    pub k: Vec<usize>,
    pub tau: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_mu1() -> f64 {
    1.0
}

fn default_trials() -> usize {
    100_000
}

impl Default for TheorySection {
    fn default() -> Self {
        Self {
            n: vec![20, 50, 100],
            m: vec![2, 5, 10],
            mu1: 1.0,
            gap: vec![0.5, 1.0, 2.0],
            sigma: vec![0.2, 0.5],
            k: vec![1, 3, 5, 10],
            tau: vec![0.5, 1.0],
            trials: 100_000,
        }
    }
}

/// One point of the training grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub k: usize,
    pub tau: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl GridPoint {
    /// Directory-safe tag, e.g. `k5_tau0.1_lr0.05_wd0.0001`.
    pub fn tag(&self) -> String {
        format!(
            "k{}_tau{}_lr{}_wd{}",
            self.k, self.tau, self.learning_rate, self.weight_decay
        )
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.name.trim().is_empty(), "name must not be empty");
        ensure!(
            !self.name.contains(['/', '\\']),
            "name must not contain path separators"
        );
        ensure!(!self.seeds.is_empty(), "seeds must not be empty");
        let d = &self.dataset;
        match (&d.path, &d.synthetic) {
            (Some(_), Some(_)) => bail!("dataset: set either `path` or `synthetic`, not both"),
            (None, None) => bail!("dataset: one of `path` or `synthetic` is required"),
            (None, Some(s)) => {
                ensure!(
                    s.num_users > 0 && s.num_items > 0,
                    "dataset.synthetic: empty shape"
                );
                ensure!(
                    s.latent_dim > 0,
                    "dataset.synthetic.latent_dim must be >= 1"
                );
                ensure!(
                    s.per_user <= s.num_items,
                    "dataset.synthetic.per_user exceeds num_items"
                );
            }
            _ => {}
        }
        ensure!(d.min_degree >= 1, "dataset.min_degree must be >= 1");
        ensure!(
            d.train_frac > 0.0 && d.train_frac < 1.0,
            "dataset.train_frac must be in (0, 1)"
        );
        ensure!(
            (0.0..1.0).contains(&d.val_frac),
            "dataset.val_frac must be in [0, 1)"
        );
        match d.noise.mode {
            NoiseMode::None => {}
            NoiseMode::Ratio => ensure!(
                d.noise.level >= 0.0 && d.noise.level.is_finite(),
                "dataset.noise.level must be >= 0"
            ),
            NoiseMode::PerUser => ensure!(
                d.noise.level >= 0.0 && d.noise.level.fract() == 0.0,
                "dataset.noise.level must be a non-negative integer in per_user mode"
            ),
        }
        ensure!(self.model.dim >= 1, "model.dim must be >= 1");
        ensure!(!self.eval.k.is_empty(), "eval.k must not be empty");
        ensure!(
            self.eval.k.iter().all(|&k| k >= 1),
            "eval.k entries must be >= 1"
        );
        for point in self.grid_points() {
            self.train_config(point, 0)
                .validate()
                .with_context(|| format!("train config at grid point {}", point.tag()))?;
        }
        if let Some(t) = &self.theory {
            t.validate()?;
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            dim: self.model.dim,
            layers: self.model.layers,
        }
    }

    pub fn loss_kind(&self) -> LossKind {
        match self.train.loss {
            LossName::Bpr => LossKind::Bpr,
            LossName::Bce => LossKind::Bce,
        }
    }

    /// Cartesian product of the grid lists, falling back to `[train]`.
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let t = &self.train;
        let g = &self.grid;
        let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let ks = if g.k.is_empty() {
            vec![t.k]
        } else {
            g.k.clone()
        };
        let mut out = Vec::new();
        for &k in &ks {
            for &tau in &or(&g.tau, t.tau) {
                for &learning_rate in &or(&g.learning_rate, t.learning_rate) {
                    for &weight_decay in &or(&g.weight_decay, t.weight_decay) {
                        out.push(GridPoint {
                            k,
                            tau,
                            learning_rate,
                            weight_decay,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn has_grid(&self) -> bool {
        let g = &self.grid;
        !(g.k.is_empty()
            && g.tau.is_empty()
            && g.learning_rate.is_empty()
            && g.weight_decay.is_empty())
    }

    pub fn train_config(&self, point: GridPoint, seed: u64) -> TrainConfig {
        let t = &self.train;
        let denoiser = match t.denoiser {
            DenoiserName::None => Denoiser::None,
            DenoiserName::Pld => Denoiser::Pld(ResampleConfig {
                k: point.k,
                tau: point.tau,
            }),
            DenoiserName::Rce => Denoiser::Rce { beta: t.rce_beta },
            DenoiserName::Tce => Denoiser::Tce(TruncateSchedule {
                max_drop_rate: t.tce_max_drop_rate,
                ramp_epochs: t.tce_ramp_epochs,
            }),
        };
        TrainConfig {
            loss: self.loss_kind(),
            denoiser,
            learning_rate: point.learning_rate,
            weight_decay: point.weight_decay,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: (t.patience > 0).then_some(t.patience),
            seed,
        }
    }

    /// `<output_dir>/<name>`
    pub fn experiment_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }
}

impl TheorySection {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            !(self.n.is_empty()
                || self.m.is_empty()
                || self.gap.is_empty()
                || self.sigma.is_empty()
                || self.k.is_empty()
                || self.tau.is_empty()),
            "theory: every grid list must be nonempty"
        );
        ensure!(self.trials >= 1, "theory.trials must be >= 1");
        ensure!(
            self.k.iter().all(|&k| k >= 1),
            "theory.k entries must be >= 1"
        );
        ensure!(
            self.tau.iter().all(|&t| t > 0.0 && t.is_finite()),
            "theory.tau entries must be positive"
        );
        ensure!(
            self.sigma.iter().all(|&s| s >= 0.0 && s.is_finite()),
            "theory.sigma entries must be >= 0"
        );
        ensure!(
            self.n.iter().all(|&n| n >= 1),
            "theory.n entries must be >= 1"
        );
        ensure!(
            self.mu1.is_finite() && self.gap.iter().all(|g| g.is_finite()),
            "theory: non-finite mean"
        );
        Ok(())
    }
}
