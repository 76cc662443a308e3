//! Loss-based denoising baselines: soft reweighting (R-CE style) and
//! large-loss truncation (T-CE style).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::exp;
use crate::{Error, Result};

/// `exp(−β·loss)`; equals 1 at zero loss and shrinks toward 0 as the loss
/// grows.
pub fn rce_weight(loss: f64, beta: f64) -> f64 {
    exp(-beta * loss)
}

/// Linear ramp of the truncation drop rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncateSchedule {
    pub max_drop_rate: f64,
    pub ramp_epochs: usize,
}

impl TruncateSchedule {
    pub fn new(max_drop_rate: f64, ramp_epochs: usize) -> Result<Self> {
        let s = Self {
            max_drop_rate,
            ramp_epochs,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.max_drop_rate) {
            return Err(Error::InvalidArgument(format!(
                "max_drop_rate must be in [0, 1), got {}",
                self.max_drop_rate
            )));
        }
        if self.ramp_epochs == 0 {
            return Err(Error::InvalidArgument("ramp_epochs must be >= 1".into()));
        }
        Ok(())
    }

    /// `max_drop_rate · min(1, epoch / ramp_epochs)`
    pub fn drop_rate(&self, epoch: usize) -> f64 {
        let ramp = (epoch as f64 / self.ramp_epochs as f64).min(1.0);
        self.max_drop_rate * ramp
    }
}

impl Default for TruncateSchedule {
    fn default() -> Self {
        Self {
            max_drop_rate: 0.2,
            ramp_epochs: 10,
        }
    }
}

/// Keep-mask that drops the `⌈r·B⌉` largest losses of the batch. Among
/// equal losses the lower index is kept.
pub fn tce_mask(batch_losses: &[f64], epoch: usize, schedule: &TruncateSchedule) -> Vec<bool> {
    truncate_mask(batch_losses, schedule.drop_rate(epoch))
}

pub fn truncate_mask(batch_losses: &[f64], drop_rate: f64) -> Vec<bool> {
    let b = batch_losses.len();
    let n_drop = (libm::ceil(drop_rate * b as f64) as usize).min(b);
    let mut order: Vec<usize> = (0..b).collect();
    // descending loss; among ties the higher index is dropped first
    order.sort_by(|&x, &y| batch_losses[y].total_cmp(&batch_losses[x]).then(y.cmp(&x)));
    let mut keep = vec![true; b];
    for &i in &order[..n_drop] {
        keep[i] = false;
    }
    keep
}
