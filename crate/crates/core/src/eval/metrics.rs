//! Ranking metrics for one ranked list and score-based AUCs.

use crate::error::{Error, Result};

/// Cutoff metrics of one user's ranked list.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AtK {
    pub f1: f64,
    pub ndcg: f64,
    pub map: f64,
    pub mrr: f64,
}

/// Metrics at cutoff `k` for `ranked` (best first) against the relevant
/// set. `is_relevant` must agree with `num_relevant`.
pub fn at_k(ranked: &[u32], is_relevant: impl Fn(u32) -> bool, num_relevant: usize, k: usize) -> AtK {
    if k == 0 || num_relevant == 0 {
        return AtK::default();
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    let mut ap = 0.0;
    let mut mrr = 0.0;
    for (i, &item) in ranked.iter().take(k).enumerate() {
        if is_relevant(item) {
            hits += 1;
            dcg += 1.0 / ((i + 2) as f64).log2();
            ap += hits as f64 / (i + 1) as f64;
            if hits == 1 {
                mrr = 1.0 / (i + 1) as f64;
            }
        }
    }
    let ideal_len = k.min(num_relevant);
    let idcg: f64 = (0..ideal_len).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    let precision = hits as f64 / k as f64;
    let recall = hits as f64 / num_relevant as f64;
    let f1 = if hits == 0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    AtK {
        f1,
        ndcg: dcg / idcg,
        map: ap / ideal_len as f64,
        mrr,
    }
}

/// Area under the ROC curve via the rank-sum statistic, ties receiving
/// their average rank.
pub fn auc_roc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // 1-based ranks i+1..=j share their mean.
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let (p, n) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Step-wise area under the precision-recall curve,
/// `sum_t (R_t - R_{t-1}) * P_t` over distinct score thresholds.
pub fn auc_pr(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total_pos = pos.len() as f64;
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            tp += usize::from(all[j].1);
            j += 1;
        }
        seen = j;
        let recall = tp as f64 / total_pos;
        let precision = tp as f64 / seen as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    debug_assert_eq!(seen, all.len());
    Ok(area)
}

fn check_scores(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::usage("AUC needs at least one positive and one negative score"));
    }
    if pos.iter().chain(neg).any(|s| !s.is_finite()) {
        return Err(Error::Numeric { op: "auc" });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn metrics(ranked: &[u32], rel: &[u32], k: usize) -> AtK {
        at_k(ranked, |x| rel.contains(&x), rel.len(), k)
    }

    /// All orderings of `items`.
    fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let head = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, head);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn perfect_ranking() {
        let m = metrics(&[4, 7, 1, 2, 3], &[4, 7], 3);
        assert!((m.ndcg - 1.0).abs() < 1e-15);
        assert_eq!(m.mrr, 1.0);
        assert_eq!(m.map, 1.0);
    }

    #[test]
    fn single_hit_at_first_rank() {
        let ranked: Vec<u32> = (0..20).collect();
        let m = metrics(&ranked, &[0], 10);
        assert_eq!(m.mrr, 1.0);
        assert_eq!(m.map, 1.0);
        assert!((m.f1 - 2.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn middle_hit_of_three() {
        let m = metrics(&[0, 1, 2], &[1], 3);
        assert!((m.ndcg - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((m.ndcg - 0.6309).abs() < 1e-4);
        assert_eq!(m.mrr, 0.5);
        // Every permutation puts the hit at one of three ranks.
        let mut by_rank = [0.0; 3];
        for p in permutations(&[0, 1, 2]) {
            let pos = p.iter().position(|&x| x == 1).unwrap();
            by_rank[pos] = metrics(&p, &[1], 3).ndcg;
        }
        assert!(by_rank[0] > by_rank[1] && by_rank[1] > by_rank[2]);
    }

    #[test]
    fn no_hits_scores_zero() {
        assert_eq!(metrics(&[0, 1, 2], &[9], 3), AtK::default());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc_pr(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.5; 3], &[0.5; 4]).unwrap(), 0.5);
        assert_eq!(auc_roc(&[0.9, 0.4], &[0.6, 0.1]).unwrap(), 0.75);
        assert!(auc_roc(&[], &[0.1]).is_err());
        assert!(auc_pr(&[f64::NAN], &[0.1]).is_err());
    }

    #[test]
    fn auc_pr_hand_value() {
        // Order: +(.9) -(.6) +(.4) -(.1): P at recall .5 is 1, at 1.0 is 2/3.
        let got = auc_pr(&[0.9, 0.4], &[0.6, 0.1]).unwrap();
        assert!((got - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn metrics_stay_in_unit_interval(
            n in 1usize..12,
            rel_mask in proptest::collection::vec(any::<bool>(), 12),
            k in 1usize..12,
        ) {
            let ranked: Vec<u32> = (0..n as u32).collect();
            let rel: Vec<u32> = ranked.iter().copied().filter(|&i| rel_mask[i as usize]).collect();
            let m = metrics(&ranked, &rel, k);
            for x in [m.f1, m.ndcg, m.map, m.mrr] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&x));
            }
        }

        #[test]
        fn auc_is_invariant_to_monotone_transforms(
            pos in proptest::collection::vec(-5.0f64..5.0, 1..10),
            neg in proptest::collection::vec(-5.0f64..5.0, 1..10),
        ) {
            let f = |xs: &[f64]| xs.iter().map(|x| (x * 0.5).exp()).collect::<Vec<_>>();
            let a = auc_roc(&pos, &neg).unwrap();
            prop_assert!((a - auc_roc(&f(&pos), &f(&neg)).unwrap()).abs() < 1e-12);
            let p = auc_pr(&pos, &neg).unwrap();
            prop_assert!((p - auc_pr(&f(&pos), &f(&neg)).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0 + 1e-12).contains(&p));
        }
    }
}
