//! Local-global infomax: prototype-based global representation, attentive
//! subgraph-level local representations, a bilinear discriminator and the
//! noise-contrastive loss.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::SubgraphSample;
use crate::numerics::tensor::{log_sigmoid, sigmoid};
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

/// Logits are clamped to this magnitude before entering a log-sigmoid.
pub const LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InfomaxParams {
    /// `W_a`, `d x d`, applied to V-side nodes.
    pub att_v: ParamId,
    /// `W_a'`, `d x d`, applied to U-side nodes.
    pub att_u: ParamId,
    /// `W_b`, `2d x 2d` discriminator matrix.
    pub disc: ParamId,
}

impl InfomaxParams {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, dim: usize, rng: &mut R) -> Self {
        InfomaxParams {
            att_v: store.add_uniform("infomax.att_v", dim, dim, rng),
            att_u: store.add_uniform("infomax.att_u", dim, dim, rng),
            disc: store.add_uniform("infomax.disc", 2 * dim, 2 * dim, rng),
        }
    }

    pub fn lookup(store: &ParamStore) -> Result<Self> {
        let get = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
        };
        Ok(InfomaxParams {
            att_v: get("infomax.att_v")?,
            att_u: get("infomax.att_u")?,
            disc: get("infomax.disc")?,
        })
    }
}

/// How the local side of a (local, global) pair is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocalRep {
    /// Attention over the enclosing subgraph.
    #[default]
    Subgraph,
    /// Each endpoint on its own: `[sigmoid(u) | 0]` and `[0 | sigmoid(v)]`.
    Node,
    /// `[sigmoid(u) | sigmoid(v)]`.
    Pair,
    /// Enclosing subgraph with uniform weights instead of attention.
    SubgraphMean,
}

impl FromStr for LocalRep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "subgraph" => Ok(LocalRep::Subgraph),
            "node" => Ok(LocalRep::Node),
            "pair" => Ok(LocalRep::Pair),
            "subgraph-mean" => Ok(LocalRep::SubgraphMean),
            other => Err(Error::config(format!(
                "unknown local representation `{other}` (expected subgraph, node, pair or subgraph-mean)"
            ))),
        }
    }
}

impl fmt::Display for LocalRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LocalRep::Subgraph => "subgraph",
            LocalRep::Node => "node",
            LocalRep::Pair => "pair",
            LocalRep::SubgraphMean => "subgraph-mean",
        })
    }
}

/// Subgraph samples flattened into index arrays for batched evaluation.
///
/// For the U-side family, entry `p` pairs neighbor `u_nbr[p]` (a V node)
/// with the center `u_ctr[p]`; segment `s` spans
/// `u_offsets[s]..u_offsets[s + 1]`. The V-side family mirrors it.
#[derive(Debug, Clone)]
pub struct SubgraphBatch {
    pub centers_u: Arc<[u32]>,
    pub centers_v: Arc<[u32]>,
    u_nbr: Arc<[u32]>,
    u_ctr: Arc<[u32]>,
    u_offsets: Arc<[usize]>,
    v_nbr: Arc<[u32]>,
    v_ctr: Arc<[u32]>,
    v_offsets: Arc<[usize]>,
}

impl SubgraphBatch {
    pub fn from_samples(samples: &[SubgraphSample]) -> Result<Self> {
        let mut b = Flat::default();
        for s in samples {
            if s.u_side_neighbors.is_empty() || s.v_side_neighbors.is_empty() {
                return Err(Error::usage(format!(
                    "subgraph around ({}, {}) has an empty side",
                    s.center_u, s.center_v
                )));
            }
            b.centers_u.push(s.center_u);
            b.centers_v.push(s.center_v);
            for &x in &s.u_side_neighbors {
                b.u_nbr.push(x);
                b.u_ctr.push(s.center_u);
            }
            b.u_offsets.push(b.u_nbr.len());
            for &x in &s.v_side_neighbors {
                b.v_nbr.push(x);
                b.v_ctr.push(s.center_v);
            }
            b.v_offsets.push(b.v_nbr.len());
        }
        Ok(SubgraphBatch {
            centers_u: b.centers_u.into(),
            centers_v: b.centers_v.into(),
            u_nbr: b.u_nbr.into(),
            u_ctr: b.u_ctr.into(),
            u_offsets: b.u_offsets.into(),
            v_nbr: b.v_nbr.into(),
            v_ctr: b.v_ctr.into(),
            v_offsets: b.v_offsets.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.centers_u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers_u.is_empty()
    }
}

struct Flat {
    centers_u: Vec<u32>,
    centers_v: Vec<u32>,
    u_nbr: Vec<u32>,
    u_ctr: Vec<u32>,
    u_offsets: Vec<usize>,
    v_nbr: Vec<u32>,
    v_ctr: Vec<u32>,
    v_offsets: Vec<usize>,
}

impl Default for Flat {
    fn default() -> Self {
        Flat {
            centers_u: Vec::new(),
            centers_v: Vec::new(),
            u_nbr: Vec::new(),
            u_ctr: Vec::new(),
            u_offsets: vec![0],
            v_nbr: Vec::new(),
            v_ctr: Vec::new(),
            v_offsets: vec![0],
        }
    }
}

/// `g = [sigmoid(mean U) | sigmoid(mean V)]` on the tape, `1 x 2d`.
pub fn global_on_tape(tape: &mut Tape, u: Var, v: Var) -> Var {
    let pu = tape.mean_rows(u);
    let pv = tape.mean_rows(v);
    let su = tape.sigmoid(pu);
    let sv = tape.sigmoid(pv);
    tape.concat(su, sv)
}

/// Global representation of embedding tables.
pub fn global_representation(u_emb: &Tensor, v_emb: &Tensor) -> Result<Tensor> {
    if u_emb.rows() == 0 || v_emb.rows() == 0 {
        return Err(Error::usage("global representation of an empty node side"));
    }
    let pu = u_emb.mean_rows().map(sigmoid);
    let pv = v_emb.mean_rows().map(sigmoid);
    Ok(pu.concat_cols(&pv))
}

/// Attention logits and weights of both families for a batch.
struct Attention {
    alpha_u: Var,
    alpha_v: Var,
}

fn attention(
    tape: &mut Tape,
    store: &ParamStore,
    params: &InfomaxParams,
    u: Var,
    v: Var,
    b: &SubgraphBatch,
) -> Attention {
    let wa = tape.param(store, params.att_v);
    let wa_prime = tape.param(store, params.att_u);
    let pv = tape.matmul_t(v, wa);
    let pu = tape.matmul_t(u, wa_prime);
    // (W_a v_i)^T (W_a' u) for v_i in the U-side family.
    let lu = tape.row_dot(pv, Arc::clone(&b.u_nbr), pu, Arc::clone(&b.u_ctr));
    // (W_a' u_i)^T (W_a v) for u_i in the V-side family.
    let lv = tape.row_dot(pu, Arc::clone(&b.v_nbr), pv, Arc::clone(&b.v_ctr));
    Attention {
        alpha_u: tape.segment_softmax(lu, Arc::clone(&b.u_offsets)),
        alpha_v: tape.segment_softmax(lv, Arc::clone(&b.v_offsets)),
    }
}

fn uniform_weights(offsets: &[usize]) -> Tensor {
    let mut w = Vec::with_capacity(*offsets.last().unwrap_or(&0));
    for s in offsets.windows(2) {
        let n = s[1] - s[0];
        w.extend(std::iter::repeat_n(1.0 / n as f64, n));
    }
    Tensor::from_vec(w.len(), 1, w)
}

/// Local representations of a batch, returned as one or more `rows x 2d`
/// blocks (the node variant yields one block per side).
pub fn local_on_tape(
    tape: &mut Tape,
    store: &ParamStore,
    params: &InfomaxParams,
    u: Var,
    v: Var,
    batch: &SubgraphBatch,
    variant: LocalRep,
) -> Vec<Var> {
    let cu = tape.gather(u, Arc::clone(&batch.centers_u));
    let cv = tape.gather(v, Arc::clone(&batch.centers_v));
    match variant {
        LocalRep::Subgraph | LocalRep::SubgraphMean => {
            let (alpha_u, alpha_v) = if variant == LocalRep::Subgraph {
                let att = attention(tape, store, params, u, v, batch);
                (att.alpha_u, att.alpha_v)
            } else {
                (
                    tape.constant(uniform_weights(&batch.u_offsets)),
                    tape.constant(uniform_weights(&batch.v_offsets)),
                )
            };
            let su = tape.segment_weighted_sum(alpha_u, v, Arc::clone(&batch.u_nbr), Arc::clone(&batch.u_offsets));
            let sv = tape.segment_weighted_sum(alpha_v, u, Arc::clone(&batch.v_nbr), Arc::clone(&batch.v_offsets));
            let left = tape.add(su, cu);
            let right = tape.add(sv, cv);
            let left = tape.sigmoid(left);
            let right = tape.sigmoid(right);
            vec![tape.concat(left, right)]
        }
        LocalRep::Pair => {
            let left = tape.sigmoid(cu);
            let right = tape.sigmoid(cv);
            vec![tape.concat(left, right)]
        }
        LocalRep::Node => {
            let [n, d] = tape.value(cu).shape();
            let zeros = tape.constant(Tensor::zeros(n, d));
            let su = tape.sigmoid(cu);
            let sv = tape.sigmoid(cv);
            vec![tape.concat(su, zeros), tape.concat(zeros, sv)]
        }
    }
}

/// Discriminator logits `local_i^T W_b g`, `rows x 1`.
pub fn discriminator_logits(tape: &mut Tape, store: &ParamStore, params: &InfomaxParams, local: Var, g: Var) -> Var {
    let wb = tape.param(store, params.disc);
    tape.bilinear(local, wb, g)
}

/// `-(sum log D(pos) + sum log(1 - D(neg))) / (|pos| + |neg|)` from logit
/// blocks, with `D = sigmoid(logit)`.
pub fn infomax_loss_on_tape(tape: &mut Tape, pos_logits: &[Var], neg_logits: &[Var]) -> Result<Var> {
    let count = |vars: &[Var], tape: &Tape| vars.iter().map(|&v| tape.value(v).len()).sum::<usize>();
    let (np, nn) = (count(pos_logits, tape), count(neg_logits, tape));
    if np == 0 || nn == 0 {
        return Err(Error::usage("infomax loss needs positive and negative scores"));
    }
    let mut terms = Vec::new();
    for &l in pos_logits {
        let ls = tape.log_sigmoid(l, LOGIT_CLAMP);
        terms.push(tape.sum(ls));
    }
    for &l in neg_logits {
        // log(1 - sigmoid(x)) = log sigmoid(-x)
        let flipped = tape.scale(l, -1.0);
        let ls = tape.log_sigmoid(flipped, LOGIT_CLAMP);
        terms.push(tape.sum(ls));
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t);
    }
    Ok(tape.scale(total, -1.0 / (np + nn) as f64))
}

/// Local representation of one sample from fixed embedding tables.
pub fn local_representation(
    sample: &SubgraphSample,
    u_emb: &Tensor,
    v_emb: &Tensor,
    store: &ParamStore,
    params: &InfomaxParams,
) -> Result<Tensor> {
    let batch = SubgraphBatch::from_samples(std::slice::from_ref(sample))?;
    let mut tape = Tape::new();
    let u = tape.constant(u_emb.clone());
    let v = tape.constant(v_emb.clone());
    let local = local_on_tape(&mut tape, store, params, u, v, &batch, LocalRep::Subgraph)[0];
    Ok(tape.value(local).clone())
}

/// Attention weights `(alpha_u, alpha_v)` of one sample, in the order of
/// its neighbor lists.
pub fn attention_weights(
    sample: &SubgraphSample,
    u_emb: &Tensor,
    v_emb: &Tensor,
    store: &ParamStore,
    params: &InfomaxParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let batch = SubgraphBatch::from_samples(std::slice::from_ref(sample))?;
    let mut tape = Tape::new();
    let u = tape.constant(u_emb.clone());
    let v = tape.constant(v_emb.clone());
    let att = attention(&mut tape, store, params, u, v, &batch);
    Ok((
        tape.value(att.alpha_u).data().to_vec(),
        tape.value(att.alpha_v).data().to_vec(),
    ))
}

/// `sigmoid(local^T W_b g)` for `1 x 2d` rows.
pub fn discriminate(local: &Tensor, g: &Tensor, w_b: &Tensor) -> Result<f64> {
    let n = local.len();
    if g.len() != n || w_b.shape() != [n, n] {
        return Err(Error::usage(format!(
            "discriminator shapes disagree: local {:?}, global {:?}, W_b {:?}",
            local.shape(),
            g.shape(),
            w_b.shape()
        )));
    }
    let wg = Tensor::from_vec(1, n, g.data().to_vec()).matmul_t(w_b);
    let logit: f64 = local.data().iter().zip(wg.data()).map(|(a, b)| a * b).sum();
    Ok(sigmoid(logit))
}

/// Noise-contrastive loss from discriminator probabilities. Probabilities
/// are mapped back to logits and clamped like the training path.
pub fn infomax_loss(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::usage("infomax loss needs positive and negative scores"));
    }
    let logit = |p: f64| (p.ln() - (1.0 - p).ln()).clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    let total: f64 = pos.iter().map(|&p| log_sigmoid(logit(p))).sum::<f64>()
        + neg.iter().map(|&p| log_sigmoid(-logit(p))).sum::<f64>();
    Ok(-total / (pos.len() + neg.len()) as f64)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng as _;

    use super::*;
    use crate::rng;

    fn params(dim: usize) -> (ParamStore, InfomaxParams) {
        let mut store = ParamStore::new();
        let p = InfomaxParams::init(&mut store, dim, &mut rng::stream(0, rng::INIT));
        (store, p)
    }

    fn sample(u: u32, v: u32, u_side: Vec<u32>, v_side: Vec<u32>) -> SubgraphSample {
        SubgraphSample {
            center_u: u,
            center_v: v,
            u_side_neighbors: u_side,
            v_side_neighbors: v_side,
            hop: 1,
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn global_of_zero_embeddings_is_one_half() {
        let g = global_representation(&Tensor::zeros(3, 2), &Tensor::zeros(5, 2)).unwrap();
        assert_eq!(g, Tensor::filled(1, 4, 0.5));
    }

    #[test]
    fn global_of_single_nodes() {
        let u = Tensor::from_rows(&[&[0.3, -1.2]]);
        let v = Tensor::from_rows(&[&[2.0, 0.0]]);
        let g = global_representation(&u, &v).unwrap();
        assert_eq!(g.data(), &[sigmoid(0.3), sigmoid(-1.2), sigmoid(2.0), 0.5]);
    }

    #[test]
    fn global_hand_example() {
        let u = Tensor::from_rows(&[&[2.0, 0.0], &[0.0, 2.0]]);
        let v = Tensor::from_rows(&[&[-2.0, -2.0]]);
        let g = global_representation(&u, &v).unwrap();
        let want = [
            0.7310585786300049,
            0.7310585786300049,
            0.11920292202211755,
            0.11920292202211755,
        ];
        for (a, b) in g.data().iter().zip(want) {
            assert!(close(*a, b, 1e-12));
        }
        assert!(global_representation(&Tensor::zeros(0, 2), &v).is_err());
    }

    #[test]
    fn singleton_neighbor_gets_full_weight() {
        let (store, p) = params(3);
        let u = Tensor::from_rows(&[&[0.4, -0.3, 2.0]]);
        let v = Tensor::from_rows(&[&[1.0, 5.0, -2.0]]);
        let (au, av) = attention_weights(&sample(0, 0, vec![0], vec![0]), &u, &v, &store, &p).unwrap();
        assert_eq!((au, av), (vec![1.0], vec![1.0]));
    }

    #[test]
    fn equal_neighbors_get_uniform_weight() {
        let (store, p) = params(2);
        let u = Tensor::from_rows(&[&[0.4, -0.3]]);
        let v = Tensor::from_rows(&[&[1.0, 5.0], &[1.0, 5.0], &[1.0, 5.0], &[1.0, 5.0]]);
        let (au, _) = attention_weights(&sample(0, 0, vec![0, 1, 2, 3], vec![0]), &u, &v, &store, &p).unwrap();
        assert!(au.iter().all(|&a| close(a, 0.25, 1e-15)));
    }

    #[test]
    fn hand_evaluated_attention_and_local() {
        let (mut store, p) = params(2);
        *store.value_mut(p.att_v) = Tensor::identity(2);
        *store.value_mut(p.att_u) = Tensor::identity(2);
        let u = Tensor::from_rows(&[&[1.0, 0.0]]);
        let v = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let s = sample(0, 0, vec![0, 1], vec![0]);
        let (au, _) = attention_weights(&s, &u, &v, &store, &p).unwrap();
        let e = std::f64::consts::E;
        assert!(close(au[0], e / (e + 1.0), 1e-12) && close(au[1], 1.0 / (e + 1.0), 1e-12));
        let local = local_representation(&s, &u, &v, &store, &p).unwrap();
        assert!(close(local.data()[0], 0.8495, 1e-4), "{local:?}");
        assert!(close(local.data()[1], 0.5668, 1e-4), "{local:?}");
        assert!(close(local.data()[0], sigmoid(1.0 + e / (e + 1.0)), 1e-12));
    }

    #[test]
    fn discriminator_examples() {
        let local = Tensor::from_rows(&[&[1.0, 0.0, 0.0, 0.0]]);
        assert_eq!(discriminate(&local, &local, &Tensor::zeros(4, 4)).unwrap(), 0.5);
        assert!(close(
            discriminate(&local, &local, &Tensor::identity(4)).unwrap(),
            0.7310585786300049,
            1e-15
        ));
        let mut w = Tensor::identity(4);
        w.set(0, 1, 0.5);
        let g = Tensor::from_rows(&[&[0.2, 0.9, 0.1, 0.3]]);
        let base = Tensor::from_rows(&[&[0.5, 0.1, 0.7, 0.2]]);
        let scores: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&c| discriminate(&base.map(|x| x * c), &g, &w).unwrap())
            .collect();
        assert!(scores[0] < scores[1] && scores[1] < scores[2]);
        assert!(discriminate(&local, &g, &Tensor::identity(3)).is_err());
    }

    #[test]
    fn loss_examples() {
        assert!(close(
            infomax_loss(&[0.5, 0.5], &[0.5]).unwrap(),
            std::f64::consts::LN_2,
            1e-15
        ));
        let want = -((0.9f64).ln() + (0.8f64).ln() + (0.7f64).ln()) / 3.0;
        assert!(close(infomax_loss(&[0.9, 0.8], &[0.3]).unwrap(), want, 1e-12));
        assert!(close(want, 0.2284, 1e-4));
        let near = infomax_loss(&[1.0 - 1e-12], &[1e-12]).unwrap();
        assert!((0.0..1e-10).contains(&near));
        assert!(infomax_loss(&[1.0], &[0.0]).unwrap().is_finite());
        assert!(infomax_loss(&[], &[0.5]).is_err());
    }

    #[test]
    fn tape_loss_matches_value_loss() {
        let mut tape = Tape::new();
        let logits = [0.3, -1.1, 2.4];
        let pos = tape.constant(Tensor::from_vec(2, 1, logits[..2].to_vec()));
        let neg = tape.constant(Tensor::from_vec(1, 1, logits[2..].to_vec()));
        let l = infomax_loss_on_tape(&mut tape, &[pos], &[neg]).unwrap();
        let want = infomax_loss(&[sigmoid(0.3), sigmoid(-1.1)], &[sigmoid(2.4)]).unwrap();
        assert!(close(tape.value(l).item(), want, 1e-12));
    }

    #[test]
    fn pair_variant_ignores_attention() {
        let (store, p) = params(2);
        let batch = SubgraphBatch::from_samples(&[sample(0, 1, vec![0, 1], vec![0])]).unwrap();
        let mut tape = Tape::new();
        let u = tape.constant(Tensor::from_rows(&[&[0.1, 0.2]]));
        let v = tape.constant(Tensor::from_rows(&[&[0.3, 0.4], &[0.5, 0.6]]));
        let pair = local_on_tape(&mut tape, &store, &p, u, v, &batch, LocalRep::Pair)[0];
        let want = [sigmoid(0.1), sigmoid(0.2), sigmoid(0.5), sigmoid(0.6)];
        assert_eq!(tape.value(pair).data(), &want);
        let nodes = local_on_tape(&mut tape, &store, &p, u, v, &batch, LocalRep::Node);
        assert_eq!(nodes.len(), 2);
        assert_eq!(tape.value(nodes[0]).data(), &[want[0], want[1], 0.0, 0.0]);
        let mean = local_on_tape(&mut tape, &store, &p, u, v, &batch, LocalRep::SubgraphMean)[0];
        assert!(close(tape.value(mean).data()[0], sigmoid(0.4 + 0.1), 1e-15));
    }

    #[test]
    fn empty_side_is_rejected() {
        assert!(SubgraphBatch::from_samples(&[sample(0, 0, vec![], vec![0])]).is_err());
    }

    proptest! {
        #[test]
        fn attention_rows_sum_to_one_and_are_shift_invariant(
            seed in 0u64..5000, nu in 1usize..6, nv in 1usize..6, shift in -5.0f64..5.0
        ) {
            let dim = 3;
            let (store, p) = params(dim);
            let mut r = rng::stream(seed, rng::INIT);
            let mut table = |n| Tensor::from_vec(n, dim, (0..n * dim).map(|_| r.random_range(-2.0..2.0)).collect());
            let u = table(nu);
            let v = table(nv);
            let s = sample(0, 0, (0..nv as u32).collect(), (0..nu as u32).collect());
            let (au, av) = attention_weights(&s, &u, &v, &store, &p).unwrap();
            prop_assert!((au.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!((av.iter().sum::<f64>() - 1.0).abs() < 1e-10);

            // Adding a constant to every logit of a family leaves alpha unchanged.
            let mut tape = Tape::new();
            let logits = tape.constant(Tensor::from_vec(au.len(), 1, au.iter().map(|a| a.ln()).collect()));
            let shifted = tape.add_scalar(logits, shift);
            let offsets: Arc<[usize]> = Arc::from(vec![0, au.len()]);
            let a = tape.segment_softmax(logits, Arc::clone(&offsets));
            let b = tape.segment_softmax(shifted, offsets);
            for (x, y) in tape.value(a).data().iter().zip(tape.value(b).data()) {
                prop_assert!((x - y).abs() < 1e-12);
            }

            let local = local_representation(&s, &u, &v, &store, &p).unwrap();
            prop_assert!(local.data().iter().all(|&x| x > 0.0 && x < 1.0));
        }

        #[test]
        fn loss_is_non_negative(pos in proptest::collection::vec(0.001f64..0.999, 1..8),
                                neg in proptest::collection::vec(0.001f64..0.999, 1..8)) {
            prop_assert!(infomax_loss(&pos, &neg).unwrap() >= 0.0);
        }
    }
}
