//! Full-ranking Recall@K and NDCG@K over held-out interactions.

use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::dataset::InteractionSet;
use crate::math::log2;
use crate::model::ModelState;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMetrics {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub per_k: Vec<KMetrics>,
    pub num_evaluated_users: usize,
}

impl MetricReport {
    pub fn get(&self, k: usize) -> Option<&KMetrics> {
        self.per_k.iter().find(|m| m.k == k)
    }

    pub fn recall(&self, k: usize) -> Option<f64> {
        self.get(k).map(|m| m.recall)
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.get(k).map(|m| m.ndcg)
    }
}

#[inline]
fn rank_order(scores: &[f64], a: u32, b: u32) -> Ordering {
    // adding 0.0 turns -0.0 into +0.0 so signed zeros tie
    (scores[b as usize] + 0.0)
        .total_cmp(&(scores[a as usize] + 0.0))
        .then(a.cmp(&b))
}

/// The `k` best items by descending score that are not in `excluded`
/// (sorted). Ties go to the lower index. `k` is clamped to the number of
/// rankable items.
pub fn topk(scores: &[f64], excluded: &[u32], k: usize) -> Vec<u32> {
    let mut candidates: Vec<u32> = (0..scores.len() as u32)
        .filter(|v| excluded.binary_search(v).is_err())
        .collect();
    if k < candidates.len() {
        if k > 0 {
            candidates.select_nth_unstable_by(k - 1, |&a, &b| rank_order(scores, a, b));
        }
        candidates.truncate(k);
    } else if k > candidates.len() {
        log::warn!(
            "top-{k} requested but only {} items are rankable; clamping",
            candidates.len()
        );
    }
    candidates.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    candidates
}

/// Recall and NDCG at `k` of one ranked list against a sorted test set.
pub fn user_metrics(ranked: &[u32], test_items: &[u32], k: usize) -> (f64, f64) {
    if test_items.is_empty() {
        return (0.0, 0.0);
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (r, v) in ranked.iter().take(k).enumerate() {
        if test_items.binary_search(v).is_ok() {
            hits += 1;
            dcg += 1.0 / log2(r as f64 + 2.0);
        }
    }
    let ideal = k.min(test_items.len());
    let idcg: f64 = (0..ideal).map(|r| 1.0 / log2(r as f64 + 2.0)).sum();
    (hits as f64 / test_items.len() as f64, dcg / idcg)
}

/// Ranks every item not in the user's training set and averages per-user
/// Recall@K and NDCG@K over users with a non-empty test set.
pub fn evaluate(
    state: &ModelState,
    train: &InteractionSet,
    test: &InteractionSet,
    k_values: &[usize],
) -> Result<MetricReport> {
    if k_values.contains(&0) {
        return Err(Error::InvalidArgument("every K must be >= 1".into()));
    }
    if test.num_users() != state.num_users()
        || train.num_users() != state.num_users()
        || test.num_items() != state.num_items()
    {
        return Err(Error::DimensionMismatch(format!(
            "model {}x{}, train {}x{}, test {}x{}",
            state.num_users(),
            state.num_items(),
            train.num_users(),
            train.num_items(),
            test.num_users(),
            test.num_items()
        )));
    }
    let k_max = k_values.iter().copied().max().unwrap_or(0);
    let mut recall = alloc::vec![0.0; k_values.len()];
    let mut ndcg = alloc::vec![0.0; k_values.len()];
    let mut users = 0usize;
    for u in 0..state.num_users() as u32 {
        let test_items = test.user_items(u);
        if test_items.is_empty() {
            continue;
        }
        let scores = state.score_all(u)?;
        let ranked = topk(&scores, train.user_items(u), k_max);
        for (i, &k) in k_values.iter().enumerate() {
            let (r, n) = user_metrics(&ranked, test_items, k);
            recall[i] += r;
            ndcg[i] += n;
        }
        users += 1;
    }
    let denom = users.max(1) as f64;
    Ok(MetricReport {
        per_k: k_values
            .iter()
            .enumerate()
            .map(|(i, &k)| KMetrics {
                k,
                recall: recall[i] / denom,
                ndcg: ndcg[i] / denom,
            })
            .collect(),
        num_evaluated_users: users,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use rand::Rng as _;

    #[test]
    fn signed_zero_scores_tie() {
        assert_eq!(topk(&[0.0, -0.0, 0.0], &[], 3), [0, 1, 2]);
        assert_eq!(topk(&[-0.0, 0.0], &[], 1), [0]);
    }

    #[test]
    fn topk_examples() {
        assert_eq!(topk(&[0.1, 0.9, 0.5], &[], 2), [1, 2]);
        assert_eq!(topk(&[0.1, 0.9, 0.5], &[1], 2), [2, 0]);
        assert_eq!(topk(&[0.1, 0.9, 0.5], &[1], 5), [2, 0]);
        assert_eq!(topk(&[1.0, 1.0, 1.0], &[], 2), [0, 1]);
        assert!(topk(&[1.0], &[], 0).is_empty());
    }

    #[test]
    fn topk_matches_full_sort() {
        let mut rng = rng_from_seed(10);
        let scores: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
        let mut order: Vec<u32> = (0..1000).collect();
        order.sort_by(|&a, &b| scores[b as usize].partial_cmp(&scores[a as usize]).unwrap());
        assert_eq!(topk(&scores, &[], 50), &order[..50]);
    }

    #[test]
    fn metric_examples() {
        // a=0, b=1, c=2
        assert_eq!(user_metrics(&[0, 1], &[0, 1], 2), (1.0, 1.0));
        let (r, n) = user_metrics(&[0, 2], &[0, 1], 2);
        assert_eq!(r, 0.5);
        let expected = 1.0 / (1.0 + 1.0 / 3f64.log2());
        assert!((n - expected).abs() < 1e-12);
        assert!((n - 0.6131).abs() < 1e-4);
        assert_eq!(user_metrics(&[2, 3], &[0, 1], 2), (0.0, 0.0));
    }

    #[test]
    fn evaluate_skips_users_without_test_items() {
        let m = crate::model::init_model(3, 5, 2, 0, 1).unwrap();
        let train = InteractionSet::from_pairs(3, 5, [(0, 0), (1, 1), (2, 2)]).unwrap();
        let test = InteractionSet::from_pairs(3, 5, [(0, 3), (2, 4)]).unwrap();
        let r = evaluate(&m, &train, &test, &[1, 4]).unwrap();
        assert_eq!(r.num_evaluated_users, 2);
        // with 4 rankable items and k=4 every test item is retrieved
        assert_eq!(r.recall(4), Some(1.0));
        assert!(evaluate(&m, &train, &test, &[0]).is_err());
    }
}
