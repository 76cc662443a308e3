//! Closed-form expectation of the probability mass that loss-based
//! resampling puts on normal versus noisy pool members, under a Gaussian
//! loss model, and a Monte Carlo simulator of that same model.
//!
//! Model: a user has `n` normal and `m` noisy items. A pool of `k` items is
//! drawn i.i.d. (normal with probability `n/(n+m)`). Normal losses are
//! `N(μ1, σ²)`, noisy losses `N(μ2, σ²)`. One item is resampled with
//! probability `∝ exp(−l/τ)`. `Λ_normal` and `Λ_noise` are the total
//! resampling probabilities of the normal and noisy pool members.
//!
//! The temperature is folded into the Gaussian parameters (`μ/τ`, `σ/τ`),
//! since dividing every loss by `τ` rescales both the means and the spread.

use alloc::format;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::math::{exp, sqrt};
use crate::{rng_from_seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremParams {
    /// Normal items of the user.
    pub n: usize,
    /// Noisy items of the user.
    pub m: usize,
    /// Mean normal loss.
    pub mu1: f64,
    /// Mean noisy loss.
    pub mu2: f64,
    /// Shared loss standard deviation.
    pub sigma: f64,
    /// Pool size.
    pub k: usize,
    /// Resampling temperature.
    pub tau: f64,
}

impl TheoremParams {
    /// Checks the parameters are usable: `n + m ≥ 1`, `k ≥ 1`, `σ ≥ 0`,
    /// `τ > 0`, all finite. The stricter assumptions the closed form is
    /// derived under are reported by [`Self::meets_assumptions`].
    pub fn validate(&self) -> Result<()> {
        if self.n + self.m == 0 {
            return Err(Error::InvalidArgument("n + m must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if !self.mu1.is_finite() || !self.mu2.is_finite() {
            return Err(Error::InvalidArgument("non-finite mean".into()));
        }
        Ok(())
    }

    /// `μ1 < μ2` and both means exceed `σ`.
    pub fn meets_assumptions(&self) -> bool {
        self.mu1 < self.mu2 && self.mu1 > self.sigma && self.mu2 > self.sigma
    }

    /// `(μ1/τ, μ2/τ, σ/τ)`
    pub fn scaled(&self) -> (f64, f64, f64) {
        (
            self.mu1 / self.tau,
            self.mu2 / self.tau,
            self.sigma / self.tau,
        )
    }

    fn normal_share(&self) -> f64 {
        self.n as f64 / (self.n + self.m) as f64
    }
}

/// `α = E[exp(−x)]`, `x ~ N(μ1/τ, (σ/τ)²)`, and the same `β` for the noisy
/// mean.
pub fn alpha_beta(p: &TheoremParams) -> (f64, f64) {
    let (mu1, mu2, s) = p.scaled();
    (exp(-mu1 + s * s / 2.0), exp(-mu2 + s * s / 2.0))
}

/// `ξ = β/α = exp((μ1 − μ2)/τ)`.
pub fn xi_ratio(p: &TheoremParams) -> f64 {
    let (alpha, beta) = alpha_beta(p);
    beta / alpha
}

/// Intermediate quantities of the closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremTerms {
    pub alpha: f64,
    pub beta: f64,
    /// `exp(σ'²) − 1`
    pub gamma: f64,
    /// `(nα + mβ)/(n + m)`
    pub eta: f64,
    /// Coefficient of the `1/k` fluctuation term.
    pub big_gamma: f64,
    /// Covariance coefficient `γ(nα² − mβ²)/(n + m)`.
    pub chi: f64,
    /// The constant in `[β, α]`, taken as the midpoint `(α + β)/2`.
    pub c: f64,
}

impl TheoremTerms {
    /// `(nα − mβ)/((m + n)η)`, equal to `(n − ξm)/(n + ξm)`.
    pub fn leading(&self, n: usize, m: usize) -> f64 {
        let (n, m) = (n as f64, m as f64);
        (n * self.alpha - m * self.beta) / ((m + n) * self.eta)
    }

    /// `Γ/k − (χ/C²)·k/(k − 1)²` for `k ≥ 2`.
    pub fn fluctuation(&self, k: usize) -> f64 {
        let k = k as f64;
        self.big_gamma / k - self.chi / (self.c * self.c) * k / ((k - 1.0) * (k - 1.0))
    }
}

pub fn theorem_terms(p: &TheoremParams) -> Result<TheoremTerms> {
    p.validate()?;
    let (alpha, beta) = alpha_beta(p);
    let (_, _, s) = p.scaled();
    let (n, m) = (p.n as f64, p.m as f64);
    let total = n + m;
    let gamma = exp(s * s) - 1.0;
    let eta = (n * alpha + m * beta) / total;
    let big_gamma = (n * alpha - m * beta) / total
        * ((alpha * alpha + beta * beta) * (gamma + m / total) + beta * beta)
        / (eta * eta * eta);
    let chi = gamma / total * (n * alpha * alpha - m * beta * beta);
    Ok(TheoremTerms {
        alpha,
        beta,
        gamma,
        eta,
        big_gamma,
        chi,
        c: (alpha + beta) / 2.0,
    })
}

/// Closed-form `E[Λ_normal − Λ_noise]`: `(n − m)/(n + m)` for `k = 1`,
/// otherwise the leading ratio plus the fluctuation term.
pub fn theorem_expectation(p: &TheoremParams) -> Result<f64> {
    p.validate()?;
    if p.k == 1 {
        return Ok((p.n as f64 - p.m as f64) / (p.n + p.m) as f64);
    }
    let t = theorem_terms(p)?;
    Ok(t.leading(p.n, p.m) + t.fluctuation(p.k))
}

/// Mean and variance of `S = Σ_{i ≤ N} exp(−x_i)` with
/// `N ~ Binomial(k, n/(n+m))` and `x_i ~ N(μ, σ²)`.
pub fn prop1_moments(k: usize, n: usize, m: usize, mu: f64, sigma: f64) -> Result<(f64, f64)> {
    if n + m == 0 {
        return Err(Error::InvalidArgument("n + m must be >= 1".into()));
    }
    let share = n as f64 / (n + m) as f64;
    let kp = k as f64 * share;
    let s2 = sigma * sigma;
    let mean = kp * exp(-mu + s2 / 2.0);
    let var = kp * exp(-2.0 * mu + s2) * (exp(s2) - share);
    Ok((mean, var))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Simulates the resampling model `trials` times and returns the sample mean
/// of `Λ_normal − Λ_noise` with its standard error.
pub fn simulate_lambda(p: &TheoremParams, trials: usize, seed: u64) -> Result<MonteCarloEstimate> {
    p.validate()?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let share = p.normal_share();
    let mut is_normal = alloc::vec![false; p.k];
    let mut z = alloc::vec![0.0; p.k];
    // Welford accumulation keeps the variance exactly 0 for constant samples.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for t in 0..trials {
        let mut zmax = f64::NEG_INFINITY;
        for i in 0..p.k {
            let normal = rng.random::<f64>() < share;
            let mu = if normal { p.mu1 } else { p.mu2 };
            let eps: f64 = StandardNormal.sample(&mut rng);
            let loss = mu + p.sigma * eps;
            is_normal[i] = normal;
            z[i] = -loss / p.tau;
            zmax = zmax.max(z[i]);
        }
        let (mut s_normal, mut s_noise) = (0.0, 0.0);
        for i in 0..p.k {
            let w = exp(z[i] - zmax);
            if is_normal[i] {
                s_normal += w;
            } else {
                s_noise += w;
            }
        }
        let d = (s_normal - s_noise) / (s_normal + s_noise);
        let delta = d - mean;
        mean += delta / (t + 1) as f64;
        m2 += delta * (d - mean);
    }
    let stderr = if trials > 1 {
        sqrt(m2 / (trials - 1) as f64 / trials as f64)
    } else {
        0.0
    };
    Ok(MonteCarloEstimate {
        mean,
        stderr,
        trials,
    })
}
