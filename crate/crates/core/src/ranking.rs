//! Pair scorer `phi([u | v]) = W2 . leaky(W1 . [u | v])`, head/tail
//! negative sampling and the margin ranking loss.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::numerics::tensor::leaky_relu;
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankingParams {
    /// `hidden x 2d`.
    pub w1: ParamId,
    /// `1 x hidden`.
    pub w2: ParamId,
}

impl RankingParams {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, dim: usize, hidden: usize, rng: &mut R) -> Self {
        RankingParams {
            w1: store.add_uniform("rank.w1", hidden, 2 * dim, rng),
            w2: store.add_uniform("rank.w2", 1, hidden, rng),
        }
    }

    pub fn lookup(store: &ParamStore) -> Result<Self> {
        let get = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
        };
        Ok(RankingParams {
            w1: get("rank.w1")?,
            w2: get("rank.w2")?,
        })
    }
}

/// Scores row pairs `(u_rows[i], v_rows[i])`, returning `rows x 1`.
pub fn score_on_tape(
    tape: &mut Tape,
    store: &ParamStore,
    params: &RankingParams,
    u_rows: Var,
    v_rows: Var,
    slope: f64,
) -> Var {
    let w1 = tape.param(store, params.w1);
    let w2 = tape.param(store, params.w2);
    let h = tape.linear_cat(u_rows, v_rows, w1);
    let h = tape.leaky_relu(h, slope);
    tape.matmul_t(h, w2)
}

/// `phi([u | v])` for single embedding vectors.
pub fn score(u_emb: &[f64], v_emb: &[f64], store: &ParamStore, params: &RankingParams, slope: f64) -> Result<f64> {
    let w1 = store.value(params.w1);
    let w2 = store.value(params.w2);
    if u_emb.len() != v_emb.len() || w1.cols() != u_emb.len() + v_emb.len() || w2.cols() != w1.rows() {
        return Err(Error::usage(format!(
            "scorer shapes disagree: u {}, v {}, W1 {:?}, W2 {:?}",
            u_emb.len(),
            v_emb.len(),
            w1.shape(),
            w2.shape()
        )));
    }
    let x: Vec<f64> = u_emb.iter().chain(v_emb).copied().collect();
    Ok((0..w1.rows())
        .map(|h| {
            let pre: f64 = w1.row(h).iter().zip(&x).map(|(a, b)| a * b).sum();
            w2.get(0, h) * leaky_relu(pre, slope)
        })
        .sum())
}

/// Scores arbitrary `(u, v)` pairs of two embedding tables.
///
/// The first layer splits as `W1 [u | v] = W1_u u + W1_v v`, so both halves
/// are projected once per node and each pair costs `O(hidden)`.
pub struct PairScorer {
    hu: Tensor,
    hv: Tensor,
    w2: Vec<f64>,
    slope: f64,
}

impl PairScorer {
    pub fn new(u_emb: &Tensor, v_emb: &Tensor, store: &ParamStore, params: &RankingParams, slope: f64) -> Self {
        let w1 = store.value(params.w1);
        let d = u_emb.cols();
        let mut w1u = Tensor::zeros(w1.rows(), d);
        let mut w1v = Tensor::zeros(w1.rows(), d);
        for h in 0..w1.rows() {
            w1u.row_mut(h).copy_from_slice(&w1.row(h)[..d]);
            w1v.row_mut(h).copy_from_slice(&w1.row(h)[d..]);
        }
        PairScorer {
            hu: u_emb.matmul_t(&w1u),
            hv: v_emb.matmul_t(&w1v),
            w2: store.value(params.w2).data().to_vec(),
            slope,
        }
    }

    #[inline]
    pub fn score(&self, u: u32, v: u32) -> f64 {
        let (a, b) = (self.hu.row(u as usize), self.hv.row(v as usize));
        let mut s = 0.0;
        for ((x, y), w) in a.iter().zip(b).zip(&self.w2) {
            s += w * leaky_relu(x + y, self.slope);
        }
        s
    }

    /// Scores of every V node for one U node.
    pub fn score_all(&self, u: u32, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.hv.rows() as u32).map(|v| self.score(u, v)));
    }
}

/// Replaces the head with a uniform U node or the tail with a uniform V
/// node, each with probability 1/2. The result may coincide with an
/// observed edge.
pub fn sample_negative<R: Rng + ?Sized>(edge: (u32, u32), g: &BipartiteGraph, rng: &mut R) -> (u32, u32) {
    if rng.random_bool(0.5) {
        (rng.random_range(0..g.num_u() as u32), edge.1)
    } else {
        (edge.0, rng.random_range(0..g.num_v() as u32))
    }
}

/// Like [`sample_negative`], retrying (up to a bound) while the corrupted
/// pair is an observed edge.
pub fn sample_negative_filtered<R: Rng + ?Sized>(edge: (u32, u32), g: &BipartiteGraph, rng: &mut R) -> (u32, u32) {
    let mut pair = sample_negative(edge, g, rng);
    for _ in 0..64 {
        if !g.has_edge(pair.0, pair.1) {
            break;
        }
        pair = sample_negative(edge, g, rng);
    }
    pair
}

/// Draws `neg_per_pos` negatives for every edge. Returns the positive
/// edges repeated to line up with the negatives.
pub fn draw_negatives<R: Rng + ?Sized>(
    edges: &[(u32, u32)],
    neg_per_pos: usize,
    g: &BipartiteGraph,
    filtered: bool,
    rng: &mut R,
) -> (Vec<(u32, u32)>, Vec<(u32, u32)>) {
    let mut pos = Vec::with_capacity(edges.len() * neg_per_pos);
    let mut neg = Vec::with_capacity(edges.len() * neg_per_pos);
    for &e in edges {
        for _ in 0..neg_per_pos {
            pos.push(e);
            neg.push(if filtered {
                sample_negative_filtered(e, g, rng)
            } else {
                sample_negative(e, g, rng)
            });
        }
    }
    (pos, neg)
}

/// Mean of `[gamma + neg_i - pos_i]_+` over aligned `rows x 1` score columns.
pub fn margin_loss_on_tape(tape: &mut Tape, pos: Var, neg: Var, gamma: f64) -> Var {
    let diff = tape.sub(neg, pos);
    let shifted = tape.add_scalar(diff, gamma);
    let hinge = tape.relu(shifted);
    tape.mean(hinge)
}

/// Mean hinge over aligned positive/negative scores.
pub fn margin_loss(pos: &[f64], neg: &[f64], gamma: f64) -> Result<f64> {
    if gamma < 0.0 {
        return Err(Error::config(format!("margin must be non-negative, got {gamma}")));
    }
    if pos.len() != neg.len() || pos.is_empty() {
        return Err(Error::usage(
            "margin loss needs equally many positive and negative scores",
        ));
    }
    Ok(pos.iter().zip(neg).map(|(p, n)| (gamma + n - p).max(0.0)).sum::<f64>() / pos.len() as f64)
}
