//! Per-interaction losses `l_{u,v}` and their analytic gradients.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::math::{dot, sigmoid, softplus};
use crate::model::Tables;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Pairwise `−ln σ(s_pos − s_neg)`.
    Bpr,
    /// Pointwise binary cross-entropy; a triple contributes the positive with
    /// label 1 and its negative with label 0.
    Bce,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Bpr => "bpr",
            LossKind::Bce => "bce",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpr" => Ok(LossKind::Bpr),
            "bce" => Ok(LossKind::Bce),
            _ => Err(Error::InvalidArgument(alloc::format!("unknown loss {s:?}"))),
        }
    }
}

/// A user, one of their positives `i` and a sampled negative `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingTriple {
    pub user: u32,
    pub pos: u32,
    pub neg: u32,
}

pub fn bpr_loss(s_pos: f64, s_neg: f64) -> f64 {
    softplus(s_neg - s_pos)
}

pub fn bce_loss(s: f64, label: bool) -> f64 {
    if label {
        softplus(-s)
    } else {
        softplus(s)
    }
}

/// The loss of the triple's positive interaction: BPR against the triple's
/// negative, or BCE with label 1. This is the `l_{u,v}` resampling and the
/// overlap analytics consume.
pub fn interaction_loss(tables: &Tables, t: TrainingTriple, kind: LossKind) -> f64 {
    let s_pos = tables.score(t.user, t.pos);
    match kind {
        LossKind::Bpr => bpr_loss(s_pos, tables.score(t.user, t.neg)),
        LossKind::Bce => bce_loss(s_pos, true),
    }
}

/// The full training objective of one triple (without regularization). For
/// BCE it adds the negative's label-0 term to [`interaction_loss`].
pub fn triple_loss(tables: &Tables, t: TrainingTriple, kind: LossKind) -> f64 {
    match kind {
        LossKind::Bpr => interaction_loss(tables, t, kind),
        LossKind::Bce => {
            bce_loss(tables.score(t.user, t.pos), true)
                + bce_loss(tables.score(t.user, t.neg), false)
        }
    }
}

/// Gradient with respect to the three embedding rows a triple touches.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleGradient {
    pub user: Vec<f64>,
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

/// Gradient of `weight · triple_loss + (λ/2)(‖e_u‖² + ‖e_i‖² + ‖e_j‖²)` with
/// respect to `e_u`, `e_i`, `e_j`.
pub fn gradients(
    e_user: &[f64],
    e_pos: &[f64],
    e_neg: &[f64],
    kind: LossKind,
    weight: f64,
    weight_decay: f64,
) -> TripleGradient {
    let mut g = loss_gradients(e_user, e_pos, e_neg, kind, weight);
    add_scaled(&mut g.user, e_user, weight_decay);
    add_scaled(&mut g.pos, e_pos, weight_decay);
    add_scaled(&mut g.neg, e_neg, weight_decay);
    g
}

/// Gradient of `weight · triple_loss` alone.
pub fn loss_gradients(
    e_user: &[f64],
    e_pos: &[f64],
    e_neg: &[f64],
    kind: LossKind,
    weight: f64,
) -> TripleGradient {
    let s_pos = dot(e_user, e_pos);
    let s_neg = dot(e_user, e_neg);
    // dL/ds_pos and dL/ds_neg
    let (c_pos, c_neg) = match kind {
        LossKind::Bpr => {
            let c = -sigmoid(s_neg - s_pos);
            (c, -c)
        }
        LossKind::Bce => (sigmoid(s_pos) - 1.0, sigmoid(s_neg)),
    };
    let (c_pos, c_neg) = (weight * c_pos, weight * c_neg);
    let dim = e_user.len();
    let mut user = vec![0.0; dim];
    let mut pos = vec![0.0; dim];
    let mut neg = vec![0.0; dim];
    for k in 0..dim {
        user[k] = c_pos * e_pos[k] + c_neg * e_neg[k];
        pos[k] = c_pos * e_user[k];
        neg[k] = c_neg * e_user[k];
    }
    TripleGradient { user, pos, neg }
}

fn add_scaled(dst: &mut [f64], src: &[f64], a: f64) {
    if a != 0.0 {
        for (d, s) in dst.iter_mut().zip(src) {
            *d += a * s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Matrix;
    use proptest::prelude::*;

    const LN2: f64 = core::f64::consts::LN_2;

    #[test]
    fn bpr_values() {
        assert!((bpr_loss(0.3, 0.3) - LN2).abs() < 1e-15);
        // ln(1 + e^-1), evaluated to 20 digits: 0.31326168751822283405
        assert!((bpr_loss(1.0, 0.0) - 0.313_261_687_518_222_8).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for m in 0..60 {
            let l = bpr_loss(m as f64, 0.0);
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.0, true) - LN2).abs() < 1e-15);
        assert!((bce_loss(0.0, false) - LN2).abs() < 1e-15);
        // ln(1 + e^-2) = 0.12692801104297249644
        assert!((bce_loss(2.0, true) - 0.126_928_011_042_972_5).abs() < 1e-15);
    }

    #[test]
    fn extreme_margins_are_stable() {
        assert!(bpr_loss(50.0, 0.0) < 1e-20);
        let l = bpr_loss(-50.0, 0.0);
        assert!((49.9..=50.1).contains(&l));
        assert!(bce_loss(50.0, true) < 1e-20);
        assert!((49.9..=50.1).contains(&bce_loss(-50.0, true)));
        assert!(bpr_loss(-1e6, 0.0).is_finite());
    }

    fn tables(u: &[f64], i: &[f64], j: &[f64]) -> Tables {
        Tables {
            users: Matrix::from_vec(1, u.len(), u.to_vec()),
            items: Matrix::from_vec(2, u.len(), i.iter().chain(j).copied().collect()),
        }
    }

    #[test]
    fn interaction_loss_examples() {
        let t = tables(&[1.0, 2.0], &[0.5, 0.5], &[0.5, 0.5]);
        let tr = TrainingTriple {
            user: 0,
            pos: 0,
            neg: 1,
        };
        assert!((interaction_loss(&t, tr, LossKind::Bpr) - LN2).abs() < 1e-15);
        let z = tables(&[0.0, 0.0], &[0.5, 0.5], &[1.0, 0.0]);
        assert!((interaction_loss(&z, tr, LossKind::Bce) - LN2).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_is_pure_regularization() {
        let (u, i, j) = ([0.3, -0.2], [1.0, 0.4], [-0.5, 0.1]);
        let g = gradients(&u, &i, &j, LossKind::Bpr, 0.0, 0.01);
        assert_eq!(g.user, [0.003, -0.002]);
        assert_eq!(g.pos, [0.01, 0.004]);
        assert_eq!(g.neg, [-0.005, 0.001]);
    }

    #[test]
    fn zero_margin_user_gradient() {
        let (u, i, j) = ([1.0, 1.0], [0.5, -0.5], [-0.5, 0.5]);
        // s_pos = s_neg = 0
        let g = gradients(&u, &i, &j, LossKind::Bpr, 1.0, 0.0);
        for k in 0..2 {
            assert!((g.user[k] - (-0.5 * (i[k] - j[k]))).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn losses_nonnegative_and_finite(a in -1e3f64..1e3, b in -1e3f64..1e3) {
            let l = bpr_loss(a, b);
            prop_assert!(l.is_finite() && l >= 0.0);
            prop_assert!(bce_loss(a, true) >= 0.0 && bce_loss(a, false) >= 0.0);
        }

        #[test]
        fn bce_decreasing_in_score(a in -30f64..30.0, d in 0.01f64..5.0) {
            prop_assert!(bce_loss(a + d, true) < bce_loss(a, true));
            prop_assert!(bpr_loss(a + d, 0.0) < bpr_loss(a, 0.0));
        }
    }
}
