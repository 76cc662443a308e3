//! Candidate pools and temperature-scaled loss-based resampling, plus the
//! uniform negative sampler used by every training mode.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::math::exp;
use crate::{Error, Result};

/// `k` items drawn with replacement from one user's interacted items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePool {
    pub user: u32,
    pub items: Vec<u32>,
}

impl CandidatePool {
    pub fn k(&self) -> usize {
        self.items.len()
    }
}

/// Pool size and softmax temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleConfig {
    pub k: usize,
    pub tau: f64,
}

impl ResampleConfig {
    pub fn new(k: usize, tau: f64) -> Result<Self> {
        let cfg = Self { k, tau };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("pool size k must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self { k: 5, tau: 0.1 }
    }
}

/// Draws `k` items uniformly, with replacement, from `user_items`.
pub fn build_candidate_pool<R: Rng + ?Sized>(
    user: u32,
    user_items: &[u32],
    k: usize,
    rng: &mut R,
) -> Result<CandidatePool> {
    if user_items.is_empty() {
        return Err(Error::EmptyUserItems(user));
    }
    let items = (0..k)
        .map(|_| user_items[rng.random_range(0..user_items.len())])
        .collect();
    Ok(CandidatePool { user, items })
}

/// `P_v = exp(−l_v/τ) / Σ_j exp(−l_j/τ)`, stabilized by subtracting the
/// smallest loss before exponentiating.
pub fn resample_probabilities(losses: &[f64], tau: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(losses.len());
    softmax_neg_into(losses, tau, &mut p);
    p
}

pub(crate) fn softmax_neg_into(losses: &[f64], tau: f64, out: &mut Vec<f64>) {
    out.clear();
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    out.extend(losses.iter().map(|&l| exp(-(l - min) / tau)));
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|w| *w /= z);
}

/// Index into `probs` drawn from the categorical distribution it defines.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    // r landed in the rounding slack above the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Picks one pool item according to [`resample_probabilities`].
pub fn resample<R: Rng + ?Sized>(
    pool: &CandidatePool,
    losses: &[f64],
    tau: f64,
    rng: &mut R,
) -> Result<u32> {
    if losses.len() != pool.items.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} losses for a pool of {}",
            losses.len(),
            pool.items.len()
        )));
    }
    if pool.items.is_empty() {
        return Err(Error::EmptyUserItems(pool.user));
    }
    if pool.items.len() == 1 {
        return Ok(pool.items[0]);
    }
    let probs = resample_probabilities(losses, tau);
    Ok(pool.items[sample_categorical(&probs, rng)])
}

/// Uniform draw from the items the user has not interacted with.
/// `user_items` must be sorted.
pub fn sample_negative<R: Rng + ?Sized>(
    user: u32,
    user_items: &[u32],
    num_items: usize,
    rng: &mut R,
) -> Result<u32> {
    let absent = num_items.saturating_sub(user_items.len());
    if absent == 0 {
        return Err(Error::NoNegativeAvailable(user));
    }
    if 2 * absent >= num_items {
        loop {
            let v = rng.random_range(0..num_items as u32);
            if user_items.binary_search(&v).is_err() {
                return Ok(v);
            }
        }
    }
    // Dense user: pick the r-th absent item directly.
    let mut r = rng.random_range(0..absent) as u32;
    let mut prev = 0u32;
    for &taken in user_items {
        let gap = taken - prev;
        if r < gap {
            return Ok(prev + r);
        }
        r -= gap;
        prev = taken + 1;
    }
    Ok(prev + r)
}
