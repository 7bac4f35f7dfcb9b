//! Two-hop bipartite graph encoder.
//!
//! Each layer first converts one side into "temporary" representations of
//! the other type by averaging heterogeneous neighbors (the node's own
//! previous feature is not part of that mean), then averages those
//! temporary representations over the node's own neighborhood and
//! concatenates the result with the node's previous embedding:
//!
//! ```text
//! v_hat_j = leaky(W_hat_v . mean{ u_i^{k-1} : u_i in N(v_j) })
//! u_bar_i = leaky(W_bar_u . mean{ v_hat_j : v_j in N(u_i) })
//! u_i^k   = W_u . [u_bar_i | u_i^{k-1}]
//! ```
//!
//! and symmetrically for the V side. Empty neighborhoods average to zero.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::BipartiteGraph;
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub depth: usize,
    pub dim: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            depth: 2,
            dim: 128,
            dropout: 0.1,
            leaky_slope: 0.01,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::config("encoder depth must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::config("embedding dimension must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Weights of one encoder layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerParams {
    /// `d x d`, V-side temporary representations from U neighbors.
    pub het_v: ParamId,
    /// `d x d`, U-side temporary representations from V neighbors.
    pub het_u: ParamId,
    /// `d x d`, U-side homogeneous aggregation.
    pub hom_u: ParamId,
    /// `d x d`, V-side homogeneous aggregation.
    pub hom_v: ParamId,
    /// `d x 2d`, U-side concatenation projection.
    pub proj_u: ParamId,
    /// `d x 2d`, V-side concatenation projection.
    pub proj_v: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderParams {
    /// Base embedding table, `num_u x d`.
    pub u_base: ParamId,
    /// Base embedding table, `num_v x d`.
    pub v_base: ParamId,
    pub layers: Vec<LayerParams>,
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        cfg: &EncoderConfig,
        num_u: usize,
        num_v: usize,
        rng: &mut R,
    ) -> Self {
        let d = cfg.dim;
        let u_base = store.add_uniform("enc.u0", num_u, d, rng);
        let v_base = store.add_uniform("enc.v0", num_v, d, rng);
        let layers = (1..=cfg.depth)
            .map(|k| LayerParams {
                het_v: store.add_uniform(&format!("enc.{k}.het_v"), d, d, rng),
                het_u: store.add_uniform(&format!("enc.{k}.het_u"), d, d, rng),
                hom_u: store.add_uniform(&format!("enc.{k}.hom_u"), d, d, rng),
                hom_v: store.add_uniform(&format!("enc.{k}.hom_v"), d, d, rng),
                proj_u: store.add_uniform(&format!("enc.{k}.proj_u"), d, 2 * d, rng),
                proj_v: store.add_uniform(&format!("enc.{k}.proj_v"), d, 2 * d, rng),
            })
            .collect();
        EncoderParams { u_base, v_base, layers }
    }

    /// Resolves parameters registered by [`EncoderParams::init`].
    pub fn lookup(store: &ParamStore, depth: usize) -> Result<Self> {
        let get = |name: String| {
            store
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
        };
        let layers = (1..=depth)
            .map(|k| {
                Ok(LayerParams {
                    het_v: get(format!("enc.{k}.het_v"))?,
                    het_u: get(format!("enc.{k}.het_u"))?,
                    hom_u: get(format!("enc.{k}.hom_u"))?,
                    hom_v: get(format!("enc.{k}.hom_v"))?,
                    proj_u: get(format!("enc.{k}.proj_u"))?,
                    proj_v: get(format!("enc.{k}.proj_v"))?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(EncoderParams {
            u_base: get("enc.u0".into())?,
            v_base: get("enc.v0".into())?,
            layers,
        })
    }

    fn check_shapes(&self, store: &ParamStore, cfg: &EncoderConfig, g: &BipartiteGraph) -> Result<()> {
        let d = cfg.dim;
        let expect = |id: ParamId, shape: [usize; 2]| {
            let got = store.value(id).shape();
            if got == shape {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "parameter `{}` has shape {got:?}, expected {shape:?}",
                    store.name(id)
                )))
            }
        };
        if self.layers.len() != cfg.depth {
            return Err(Error::config(format!(
                "encoder has {} layers, config asks for {}",
                self.layers.len(),
                cfg.depth
            )));
        }
        expect(self.u_base, [g.num_u(), d])?;
        expect(self.v_base, [g.num_v(), d])?;
        for l in &self.layers {
            for id in [l.het_v, l.het_u, l.hom_u, l.hom_v] {
                expect(id, [d, d])?;
            }
            expect(l.proj_u, [d, 2 * d])?;
            expect(l.proj_v, [d, 2 * d])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Inverted-dropout masks for one encoder pass, one `(u, v)` pair per layer.
#[derive(Debug, Clone)]
pub struct DropoutMasks(Vec<(Arc<Tensor>, Arc<Tensor>)>);

impl DropoutMasks {
    /// Returns `None` when the rate is zero.
    pub fn sample<R: Rng + ?Sized>(cfg: &EncoderConfig, num_u: usize, num_v: usize, rng: &mut R) -> Option<Self> {
        if cfg.dropout <= 0.0 {
            return None;
        }
        let keep = 1.0 - cfg.dropout;
        let scale = 1.0 / keep;
        // Keep an entry when a uniform 32-bit draw falls below keep * 2^32.
        let threshold = (keep * 4_294_967_296.0) as u64;
        let mut mask = |rows: usize| {
            let data = (0..rows * cfg.dim)
                .map(|_| {
                    if u64::from(rng.next_u32()) < threshold {
                        scale
                    } else {
                        0.0
                    }
                })
                .collect();
            Arc::new(Tensor::from_vec(rows, cfg.dim, data))
        };
        Some(DropoutMasks(
            (0..cfg.depth).map(|_| (mask(num_u), mask(num_v))).collect(),
        ))
    }
}

/// Records a full encoder pass on `tape` and returns the layer-K `(U, V)`
/// embeddings.
pub fn encode_on_tape(
    tape: &mut Tape,
    store: &ParamStore,
    g: &BipartiteGraph,
    params: &EncoderParams,
    cfg: &EncoderConfig,
    masks: Option<&DropoutMasks>,
) -> Result<(Var, Var)> {
    params.check_shapes(store, cfg, g)?;
    let u_adj = g.u_adjacency();
    let v_adj = g.v_adjacency();
    let slope = cfg.leaky_slope;
    let mut u = tape.param(store, params.u_base);
    let mut v = tape.param(store, params.v_base);
    for (k, layer) in params.layers.iter().enumerate() {
        let het_v = tape.param(store, layer.het_v);
        let het_u = tape.param(store, layer.het_u);
        let hom_u = tape.param(store, layer.hom_u);
        let hom_v = tape.param(store, layer.hom_v);
        let proj_u = tape.param(store, layer.proj_u);
        let proj_v = tape.param(store, layer.proj_v);

        let agg = tape.sparse_mean(v_adj, u);
        let v_hat = tape.linear_leaky(agg, het_v, slope);
        let agg = tape.sparse_mean(u_adj, v);
        let u_hat = tape.linear_leaky(agg, het_u, slope);

        let agg = tape.sparse_mean(u_adj, v_hat);
        let u_bar = tape.linear_leaky(agg, hom_u, slope);
        let agg = tape.sparse_mean(v_adj, u_hat);
        let v_bar = tape.linear_leaky(agg, hom_v, slope);

        let mut u_next = tape.linear_cat(u_bar, u, proj_u);
        let mut v_next = tape.linear_cat(v_bar, v, proj_v);

        if let Some(DropoutMasks(layers)) = masks {
            let (mu, mv) = &layers[k];
            u_next = tape.mask_mul(u_next, Arc::clone(mu));
            v_next = tape.mask_mul(v_next, Arc::clone(mv));
        }
        u = u_next;
        v = v_next;
    }
    Ok((u, v))
}

/// Runs the encoder and returns `(U, V)` embedding tables. Dropout masks
/// are drawn from `rng` only in [`Mode::Train`].
pub fn encode<R: Rng + ?Sized>(
    g: &BipartiteGraph,
    store: &ParamStore,
    params: &EncoderParams,
    cfg: &EncoderConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, Tensor)> {
    cfg.validate()?;
    let masks = match mode {
        Mode::Train => DropoutMasks::sample(cfg, g.num_u(), g.num_v(), rng),
        Mode::Infer => None,
    };
    let mut tape = Tape::new();
    let (u, v) = encode_on_tape(&mut tape, store, g, params, cfg, masks.as_ref())?;
    if let Some(op) = tape.first_nonfinite() {
        return Err(Error::Numeric { op });
    }
    Ok((tape.value(u).clone(), tape.value(v).clone()))
}
