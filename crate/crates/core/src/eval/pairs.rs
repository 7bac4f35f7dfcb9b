//! Prediction scores of chosen pairs next to their train-graph distance.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{distances_from_u, BipartiteGraph};
use crate::ranking::PairScorer;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub u: u32,
    pub v: u32,
    /// `None` when `v` is unreachable from `u`.
    pub distance: Option<usize>,
    pub score: f64,
}

/// Scores `pairs` in input order. One search runs per distinct U node.
pub fn dump_pair_scores(scorer: &PairScorer, train: &BipartiteGraph, pairs: &[(u32, u32)]) -> Result<Vec<PairScore>> {
    if let Some(&(u, v)) = pairs
        .iter()
        .find(|&&(u, v)| u as usize >= train.num_u() || v as usize >= train.num_v())
    {
        return Err(Error::usage(format!("pair ({u}, {v}) out of range")));
    }
    let mut cache: HashMap<u32, Vec<Option<usize>>> = HashMap::new();
    Ok(pairs
        .iter()
        .map(|&(u, v)| {
            let dist = cache.entry(u).or_insert_with(|| distances_from_u(train, u));
            PairScore {
                u,
                v,
                distance: dist[v as usize],
                score: scorer.score(u, v),
            }
        })
        .collect())
}

/// CSV `u,v,distance,score` with `inf` for unreachable pairs. Node labels
/// come from `u_name` / `v_name`.
pub fn pair_scores_csv(rows: &[PairScore], u_name: impl Fn(u32) -> String, v_name: impl Fn(u32) -> String) -> String {
    let mut out = String::from("u,v,distance,score\n");
    for r in rows {
        let dist = r.distance.map_or_else(|| "inf".to_string(), |d| d.to_string());
        let _ = writeln!(out, "{},{},{},{}", u_name(r.u), v_name(r.v), dist, r.score);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::distance;
    use crate::numerics::{ParamStore, Tensor};
    use crate::ranking::RankingParams;
    use crate::rng;

    fn scorer(nu: usize, nv: usize) -> PairScorer {
        let mut store = ParamStore::new();
        let p = RankingParams::init(&mut store, 2, 2, &mut rng::stream(0, rng::INIT));
        PairScorer::new(
            &Tensor::filled(nu, 2, 0.5),
            &Tensor::filled(nv, 2, -0.5),
            &store,
            &p,
            0.01,
        )
    }

    #[test]
    fn path_graph_distances() {
        // u0 - v0 - u1 - v1, plus an isolated pair u2 / v2.
        let g = BipartiteGraph::from_edges(3, 3, [(0, 0), (1, 0), (1, 1)]).unwrap();
        let rows = dump_pair_scores(&scorer(3, 3), &g, &[(0, 0), (0, 1), (2, 2), (0, 2)]).unwrap();
        let d: Vec<_> = rows.iter().map(|r| r.distance).collect();
        assert_eq!(d, [Some(1), Some(3), None, None]);
        let csv = pair_scores_csv(&rows, |u| format!("u{u}"), |v| format!("v{v}"));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "u,v,distance,score");
        assert!(lines[2].starts_with("u0,v1,3,"));
        assert!(lines[3].starts_with("u2,v2,inf,"));
        assert!(dump_pair_scores(&scorer(3, 3), &g, &[(5, 0)]).is_err());
    }

    #[test]
    fn single_source_matches_pairwise_search() {
        let g = BipartiteGraph::from_edges(5, 4, [(0, 0), (1, 0), (1, 1), (2, 1), (2, 2), (4, 3)]).unwrap();
        for u in 0..5 {
            let all = distances_from_u(&g, u);
            for v in 0..4 {
                assert_eq!(all[v as usize], distance(&g, u, v), "({u}, {v})");
            }
        }
    }
}
