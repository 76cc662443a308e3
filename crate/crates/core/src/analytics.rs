//! Loss-distribution diagnostics: where normal and noisy losses overlap,
//! measured over all interactions at once (global scope) or user by user
//! (personal scope).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::dataset::{Label, NoisyTrainSet};
use crate::loss::{interaction_loss, LossKind, TrainingTriple};
use crate::model::ModelState;
use crate::sampler::sample_negative;
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile of already sorted data: position
/// `h = (n − 1)·p`, interpolated between its floor and ceiling neighbors.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = libm::ceil(h) as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quartiles(values: &[f64]) -> Result<Quartiles> {
    if values.is_empty() {
        return Err(Error::Empty("quartiles of an empty sample"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Quartiles {
        q1: sorted_quantile(&sorted, 0.25),
        q2: sorted_quantile(&sorted, 0.5),
        q3: sorted_quantile(&sorted, 0.75),
    })
}

/// The loss interval `[q1(noisy), q3(normal)]` where noisy interactions with
/// low losses meet normal interactions with high losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OverlapRegion {
    Interval {
        low: f64,
        high: f64,
    },
    /// `q1(noisy) > q3(normal)`: the distributions separate cleanly.
    Separated,
    /// One of the two samples was empty.
    MissingSide,
}

impl OverlapRegion {
    /// Inclusive at both ends.
    pub fn contains(&self, loss: f64) -> bool {
        match *self {
            OverlapRegion::Interval { low, high } => low <= loss && loss <= high,
            _ => false,
        }
    }

    pub fn is_empty(&self) -> bool {
        !matches!(self, OverlapRegion::Interval { .. })
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match *self {
            OverlapRegion::Interval { low, high } => Some((low, high)),
            _ => None,
        }
    }
}

pub fn overlap_region(normal_losses: &[f64], noisy_losses: &[f64]) -> OverlapRegion {
    if normal_losses.is_empty() || noisy_losses.is_empty() {
        return OverlapRegion::MissingSide;
    }
    let low = quartiles(noisy_losses).expect("nonempty").q1;
    let high = quartiles(normal_losses).expect("nonempty").q3;
    if low > high {
        OverlapRegion::Separated
    } else {
        OverlapRegion::Interval { low, high }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEntry {
    pub user: u32,
    pub item: u32,
    pub loss: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossRecord {
    pub entries: Vec<LossEntry>,
}

impl LossRecord {
    pub fn losses_with(&self, label: Label) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.loss)
            .collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    /// Entries grouped by user: `(normal losses, noisy losses)`.
    pub fn by_user(&self) -> BTreeMap<u32, (Vec<f64>, Vec<f64>)> {
        let mut groups: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for e in &self.entries {
            let g = groups.entry(e.user).or_default();
            match e.label {
                Label::Normal => g.0.push(e.loss),
                Label::Noisy => g.1.push(e.loss),
            }
        }
        groups
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Global,
    Personal,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Global => "global",
            Scope::Personal => "personal",
        }
    }
}

/// Overlap membership counts for one scope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapStats {
    pub scope: Scope,
    pub normal_in_overlap: usize,
    pub noisy_in_overlap: usize,
    pub normal_total: usize,
    pub noisy_total: usize,
}

impl OverlapStats {
    /// `normal_in_overlap / normal_total`, or 0 with no normal entries.
    pub fn normal_ratio(&self) -> f64 {
        ratio(self.normal_in_overlap, self.normal_total)
    }

    pub fn noisy_ratio(&self) -> f64 {
        ratio(self.noisy_in_overlap, self.noisy_total)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn count_in(region: &OverlapRegion, losses: &[f64]) -> usize {
    losses.iter().filter(|&&l| region.contains(l)).count()
}

/// Counts entries falling inside the overlap region. The global scope uses
/// one region over the whole record; the personal scope builds a region per
/// user, and users lacking either label contribute nothing.
pub fn overlap_stats(record: &LossRecord, scope: Scope) -> OverlapStats {
    let normal_total = record.count(Label::Normal);
    let noisy_total = record.count(Label::Noisy);
    let (normal_in_overlap, noisy_in_overlap) = match scope {
        Scope::Global => {
            let normal = record.losses_with(Label::Normal);
            let noisy = record.losses_with(Label::Noisy);
            let region = overlap_region(&normal, &noisy);
            (count_in(&region, &normal), count_in(&region, &noisy))
        }
        Scope::Personal => record
            .by_user()
            .values()
            .map(|(normal, noisy)| {
                let region = overlap_region(normal, noisy);
                (count_in(&region, normal), count_in(&region, noisy))
            })
            .fold((0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1)),
    };
    OverlapStats {
        scope,
        normal_in_overlap,
        noisy_in_overlap,
        normal_total,
        noisy_total,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserGaps {
    /// `(user, q1(normal) − q3(noisy))`, by user index.
    pub gaps: Vec<(u32, f64)>,
    /// Users lacking normal or noisy entries.
    pub excluded: Vec<u32>,
}

/// Per-user gap between the lower quartile of normal losses and the upper
/// quartile of noisy losses. Negative gaps mean the noisy losses sit above.
pub fn quartile_gap_per_user(record: &LossRecord) -> UserGaps {
    let mut out = UserGaps::default();
    for (user, (normal, noisy)) in record.by_user() {
        if normal.is_empty() || noisy.is_empty() {
            out.excluded.push(user);
            continue;
        }
        let gap =
            quartiles(&normal).expect("nonempty").q1 - quartiles(&noisy).expect("nonempty").q3;
        out.gaps.push((user, gap));
    }
    out
}

/// Loss of every labeled training interaction under `state`. BPR pairs each
/// interaction with one fresh uniform negative drawn from `rng`.
pub fn collect_losses(
    state: &ModelState,
    data: &NoisyTrainSet,
    kind: LossKind,
    rng: &mut Rng,
) -> Result<LossRecord> {
    let graph = data.combined();
    if graph.num_users() != state.num_users() || graph.num_items() != state.num_items() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "model {}x{} vs data {}x{}",
            state.num_users(),
            state.num_items(),
            graph.num_users(),
            graph.num_items()
        )));
    }
    let tables = state.scoring_tables()?;
    let mut entries = Vec::with_capacity(graph.len());
    for (user, item, label) in data.labeled_rows() {
        let neg = match kind {
            LossKind::Bpr => sample_negative(user, graph.user_items(user), graph.num_items(), rng)?,
            LossKind::Bce => item,
        };
        let loss = interaction_loss(
            tables,
            TrainingTriple {
                user,
                pos: item,
                neg,
            },
            kind,
        );
        entries.push(LossEntry {
            user,
            item,
            loss,
            label,
        });
    }
    Ok(LossRecord { entries })
}
