//! Top-K recommendation protocol.

use super::metrics::{at_k, AtK};
use super::MetricsReport;
use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, EdgeSplit};
use crate::trainer::TrainedModel;

/// Ranks every item a user has no training edge with and averages the
/// cutoff metrics over users that have test edges.
pub fn topk_evaluate(model: &TrainedModel, split: &EdgeSplit, ks: &[usize]) -> Result<MetricsReport> {
    let scorer = model.scorer()?;
    topk_with(&split.train, &split.test_edges, ks, |u, out| scorer.score_all(u, out))
}

/// [`topk_evaluate`] over an arbitrary scoring function, which fills `out`
/// with one score per V node.
pub fn topk_with(
    train: &BipartiteGraph,
    test_edges: &[(u32, u32)],
    ks: &[usize],
    mut score_all: impl FnMut(u32, &mut Vec<f64>),
) -> Result<MetricsReport> {
    if test_edges.is_empty() {
        return Err(Error::usage("top-K evaluation needs test edges"));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let max_k = match ks.last() {
        Some(&k) if ks[0] > 0 => k,
        _ => return Err(Error::usage("cutoffs must be positive")),
    };

    let mut relevant: Vec<Vec<u32>> = vec![Vec::new(); train.num_u()];
    for &(u, v) in test_edges {
        if u as usize >= train.num_u() || v as usize >= train.num_v() {
            return Err(Error::usage(format!("test edge ({u}, {v}) out of range")));
        }
        relevant[u as usize].push(v);
    }

    let mut sums = vec![AtK::default(); ks.len()];
    let mut users = 0usize;
    let mut scores = Vec::with_capacity(train.num_v());
    let mut candidates = Vec::with_capacity(train.num_v());
    for (u, rel) in relevant.iter_mut().enumerate() {
        if rel.is_empty() {
            continue;
        }
        rel.sort_unstable();
        rel.dedup();
        score_all(u as u32, &mut scores);
        if scores.len() != train.num_v() {
            return Err(Error::usage("scorer returned the wrong number of scores"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numeric { op: "score" });
        }
        let ranked = rank_candidates(&scores, train.u_neighbors(u as u32), max_k, &mut candidates);
        let is_rel = |v: u32| rel.binary_search(&v).is_ok();
        for (sum, &k) in sums.iter_mut().zip(&ks) {
            let m = at_k(ranked, is_rel, rel.len(), k);
            sum.f1 += m.f1;
            sum.ndcg += m.ndcg;
            sum.map += m.map;
            sum.mrr += m.mrr;
        }
        users += 1;
    }

    let n = users as f64;
    let mut report = MetricsReport::new();
    report.insert(format!("F1@{max_k}"), sums[ks.len() - 1].f1 / n);
    for (s, k) in sums.iter().zip(&ks) {
        report.insert(format!("NDCG@{k}"), s.ndcg / n);
    }
    for (s, k) in sums.iter().zip(&ks) {
        report.insert(format!("MAP@{k}"), s.map / n);
    }
    for (s, k) in sums.iter().zip(&ks) {
        report.insert(format!("MRR@{k}"), s.mrr / n);
    }
    report.set_meta("users", users.to_string());
    Ok(report)
}

/// The `k` best items not in `exclude` (sorted), by descending score with
/// ascending index breaking ties.
pub fn rank_candidates<'a>(scores: &[f64], exclude: &[u32], k: usize, buf: &'a mut Vec<u32>) -> &'a [u32] {
    buf.clear();
    let mut ex = exclude.iter().peekable();
    for v in 0..scores.len() as u32 {
        while ex.peek().is_some_and(|&&e| e < v) {
            ex.next();
        }
        if ex.peek() != Some(&&v) {
            buf.push(v);
        }
    }
    let better = |a: &u32, b: &u32| scores[*b as usize].total_cmp(&scores[*a as usize]).then(a.cmp(b));
    if k < buf.len() {
        buf.select_nth_unstable_by(k, better);
        buf.truncate(k);
    }
    buf.sort_unstable_by(better);
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_filters_and_breaks_ties_by_index() {
        let scores = [0.5, 0.9, 0.5, 0.1, 0.9];
        let mut buf = Vec::new();
        assert_eq!(rank_candidates(&scores, &[], 5, &mut buf), &[1, 4, 0, 2, 3]);
        assert_eq!(rank_candidates(&scores, &[1, 3], 2, &mut buf), &[4, 0]);
        assert_eq!(rank_candidates(&scores, &[0, 1, 2, 3, 4], 2, &mut buf), &[] as &[u32]);
    }

    #[test]
    fn train_items_never_ranked() {
        // User 0 trained on item 0, which has the top score.
        let train = BipartiteGraph::from_edges(1, 4, [(0, 0)]).unwrap();
        let report = topk_with(&train, &[(0, 1)], &[1], |_, out| {
            out.clear();
            out.extend([10.0, 5.0, 1.0, 0.0]);
        })
        .unwrap();
        assert_eq!(report.get("MRR@1"), Some(1.0));
        assert_eq!(report.get("NDCG@1"), Some(1.0));
    }

    #[test]
    fn metric_grid_names() {
        let train = BipartiteGraph::from_edges(2, 12, [(0, 0), (1, 1)]).unwrap();
        let report = topk_with(&train, &[(0, 3), (1, 4)], &[10, 3, 5], |_, out| {
            out.clear();
            out.extend((0..12).map(|v| -(v as f64)));
        })
        .unwrap();
        let names: Vec<&str> = report.metrics().iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(
            names,
            ["F1@10", "NDCG@3", "NDCG@5", "NDCG@10", "MAP@3", "MAP@5", "MAP@10", "MRR@3", "MRR@5", "MRR@10"]
        );
        // User 0 ranks 1,2,3,...: item 3 at rank 3. User 1 ranks 0,2,3,4: item 4 at rank 4.
        assert!((report.get("MRR@10").unwrap() - (1.0 / 3.0 + 1.0 / 4.0) / 2.0).abs() < 1e-12);
        assert!((report.get("MRR@3").unwrap() - (1.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn users_without_test_edges_are_skipped() {
        let train = BipartiteGraph::from_edges(3, 3, [(0, 0), (1, 1), (2, 2)]).unwrap();
        let report = topk_with(&train, &[(0, 1)], &[1], |_, out| {
            out.clear();
            out.extend([0.0, 1.0, 0.0]);
        })
        .unwrap();
        assert_eq!(report.meta("users"), Some("1"));
        assert_eq!(report.get("MRR@1"), Some(1.0));
        assert!(topk_with(&train, &[], &[1], |_, _| {}).is_err());
    }
}
