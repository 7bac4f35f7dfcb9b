//! Joint optimization of `L = lambda * L_m + (1 - lambda) * L_r`.
//!
//! All randomness of a batch (corrupted graph, negatives, subgraph samples,
//! dropout masks) is drawn into a [`BatchPlan`] before the forward pass, so
//! [`batch_loss`] is a pure function of the parameters.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use sha2::{Digest, Sha256};

use crate::encoder::{self, DropoutMasks, EncoderConfig, EncoderParams, Mode};
use crate::error::{Error, Result};
use crate::graph::{self, BipartiteGraph, EdgeSplit, SubgraphSample};
use crate::infomax::{self, InfomaxParams, SubgraphBatch};
use crate::numerics::{checkpoint, AdamConfig, ParamStore, Tape, Tensor, Var};
use crate::ranking::{self, PairScorer, RankingParams};
use crate::rng;

pub use crate::infomax::LocalRep;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub depth: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Ranking margin.
    pub gamma: f64,
    /// Per-cell corruption flip probability.
    pub beta: f64,
    /// Weight of the infomax term.
    pub lambda: f64,
    /// Enclosing-subgraph radius, odd.
    pub hop: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    /// Per-side cap on enclosing-subgraph size; 0 disables the cap.
    pub neighbor_cap: usize,
    pub neg_per_pos: usize,
    /// Ranking MLP width; 0 means `dim`.
    pub hidden: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub local_rep: LocalRep,
    /// Score every corrupted edge instead of a sample balanced against the
    /// training edges.
    pub exact_corruption: bool,
    /// Resample ranking negatives that hit an observed edge.
    pub filter_negatives: bool,
    /// Epoch period of checkpoints; the last epoch is always written.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 128,
            depth: 2,
            lr: 0.001,
            epochs: 100,
            gamma: 0.3,
            beta: 1e-5,
            lambda: 0.3,
            hop: 1,
            dropout: 0.1,
            leaky_slope: 0.01,
            neighbor_cap: 50,
            neg_per_pos: 1,
            hidden: 0,
            batch_size: 512,
            seed: 1,
            local_rep: LocalRep::Subgraph,
            exact_corruption: false,
            filter_negatives: false,
            checkpoint_every: 10,
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "dim",
        "depth",
        "lr",
        "epochs",
        "gamma",
        "beta",
        "lambda",
        "hop",
        "dropout",
        "leaky_slope",
        "neighbor_cap",
        "neg_per_pos",
        "hidden",
        "batch_size",
        "seed",
        "local_rep",
        "exact_corruption",
        "filter_negatives",
        "checkpoint_every",
    ];

    pub fn validate(&self) -> Result<()> {
        self.encoder_config().validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!(
                "margin must be non-negative, got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config(format!("corruption rate {} outside [0, 1]", self.beta)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.hop == 0 || self.hop.is_multiple_of(2) {
            return Err(Error::config(format!("hop must be odd, got {}", self.hop)));
        }
        if self.neg_per_pos == 0 {
            return Err(Error::config("neg_per_pos must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::config("leaky_slope must be finite"));
        }
        Ok(())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            depth: self.depth,
            dim: self.dim,
            dropout: self.dropout,
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn hidden_width(&self) -> usize {
        if self.hidden == 0 {
            self.dim
        } else {
            self.hidden
        }
    }

    fn cap(&self) -> Option<usize> {
        (self.neighbor_cap > 0).then_some(self.neighbor_cap)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "dim" => self.dim.to_string(),
            "depth" => self.depth.to_string(),
            "lr" => self.lr.to_string(),
            "epochs" => self.epochs.to_string(),
            "gamma" => self.gamma.to_string(),
            "beta" => self.beta.to_string(),
            "lambda" => self.lambda.to_string(),
            "hop" => self.hop.to_string(),
            "dropout" => self.dropout.to_string(),
            "leaky_slope" => self.leaky_slope.to_string(),
            "neighbor_cap" => self.neighbor_cap.to_string(),
            "neg_per_pos" => self.neg_per_pos.to_string(),
            "hidden" => self.hidden.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "seed" => self.seed.to_string(),
            "local_rep" => self.local_rep.to_string(),
            "exact_corruption" => self.exact_corruption.to_string(),
            "filter_negatives" => self.filter_negatives.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            _ => return None,
        })
    }

    /// Sets one field from its text form. Does not validate ranges.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "dim" => self.dim = parse(key, value)?,
            "depth" => self.depth = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "hop" => self.hop = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "leaky_slope" => self.leaky_slope = parse(key, value)?,
            "neighbor_cap" => self.neighbor_cap = parse(key, value)?,
            "neg_per_pos" => self.neg_per_pos = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "local_rep" => self.local_rep = value.parse()?,
            "exact_corruption" => self.exact_corruption = parse(key, value)?,
            "filter_negatives" => self.filter_negatives = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            _ => return Err(Error::config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// One `key=value` line per field.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let _ = writeln!(out, "{key}={}", self.get(key).unwrap());
        }
        out
    }

    /// Applies `key=value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_kv(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value `{value}` for `{key}`")))
}

/// Parameter handles of the whole model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub infomax: InfomaxParams,
    pub ranking: RankingParams,
}

impl ModelParams {
    /// Registers freshly initialized parameters, drawn from the `init`
    /// stream of `cfg.seed`.
    pub fn init(store: &mut ParamStore, cfg: &TrainConfig, num_u: usize, num_v: usize) -> Self {
        let mut r = rng::stream(cfg.seed, rng::INIT);
        let encoder = EncoderParams::init(store, &cfg.encoder_config(), num_u, num_v, &mut r);
        let infomax = InfomaxParams::init(store, cfg.dim, &mut r);
        let ranking = RankingParams::init(store, cfg.dim, cfg.hidden_width(), &mut r);
        ModelParams {
            encoder,
            infomax,
            ranking,
        }
    }

    pub fn lookup(store: &ParamStore, cfg: &TrainConfig) -> Result<Self> {
        Ok(ModelParams {
            encoder: EncoderParams::lookup(store, cfg.depth)?,
            infomax: InfomaxParams::lookup(store)?,
            ranking: RankingParams::lookup(store)?,
        })
    }
}

/// The per-run random streams consumed by training.
pub struct Sampler {
    corruption: rng::Rng,
    shuffle: rng::Rng,
    subgraph: rng::Rng,
    negatives: rng::Rng,
    dropout: rng::Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler {
            corruption: rng::stream(seed, rng::CORRUPTION),
            shuffle: rng::stream(seed, rng::SHUFFLE),
            subgraph: rng::stream(seed, rng::SUBGRAPH),
            negatives: rng::stream(seed, rng::NEGATIVES),
            dropout: rng::stream(seed, rng::DROPOUT),
        }
    }
}

/// One epoch's corrupted graph and its edge batches.
pub struct EpochPlan {
    pub corrupted: BipartiteGraph,
    /// `(positive edges, corrupted edges)` per batch.
    pub batches: Vec<(Vec<(u32, u32)>, Vec<(u32, u32)>)>,
}

impl EpochPlan {
    /// Draws a fresh corrupted graph, shuffles the training edges into
    /// batches and spreads the scored corrupted edges evenly across them.
    pub fn sample(train: &BipartiteGraph, cfg: &TrainConfig, sampler: &mut Sampler) -> Result<EpochPlan> {
        let corrupted = graph::corrupt(train, cfg.beta, &mut sampler.corruption)?;
        let mut positives: Vec<_> = train.edges().collect();
        positives.shuffle(&mut sampler.shuffle);
        let all: Vec<_> = corrupted.edges().collect();
        let scored: Vec<(u32, u32)> = if cfg.exact_corruption || all.len() <= positives.len() {
            let mut all = all;
            all.shuffle(&mut sampler.shuffle);
            all
        } else {
            index::sample(&mut sampler.shuffle, all.len(), positives.len())
                .into_iter()
                .map(|i| all[i])
                .collect()
        };
        let nb = positives.len().div_ceil(cfg.batch_size);
        let batches = (0..nb)
            .map(|b| {
                let pos = positives[b * cfg.batch_size..((b + 1) * cfg.batch_size).min(positives.len())].to_vec();
                let neg = scored[b * scored.len() / nb..(b + 1) * scored.len() / nb].to_vec();
                (pos, neg)
            })
            .collect();
        Ok(EpochPlan { corrupted, batches })
    }

    /// Draws the per-batch randomness for batch `b`.
    pub fn batch(
        &self,
        b: usize,
        train: &BipartiteGraph,
        cfg: &TrainConfig,
        sampler: &mut Sampler,
    ) -> Result<BatchPlan> {
        let (pos, neg) = &self.batches[b];
        BatchPlan::sample(pos, neg, train, &self.corrupted, cfg, sampler)
    }
}

/// Everything random about one optimization step.
pub struct BatchPlan {
    /// Present when the infomax term is active and the batch has
    /// corrupted edges.
    subgraphs: Option<(SubgraphBatch, SubgraphBatch)>,
    rank: Option<RankIndex>,
    masks_clean: Option<DropoutMasks>,
    masks_corrupted: Option<DropoutMasks>,
}

struct RankIndex {
    pos_u: Arc<[u32]>,
    pos_v: Arc<[u32]>,
    neg_u: Arc<[u32]>,
    neg_v: Arc<[u32]>,
}

impl BatchPlan {
    pub fn sample(
        positives: &[(u32, u32)],
        corrupted_edges: &[(u32, u32)],
        train: &BipartiteGraph,
        corrupted: &BipartiteGraph,
        cfg: &TrainConfig,
        sampler: &mut Sampler,
    ) -> Result<BatchPlan> {
        let enc = cfg.encoder_config();
        let masks_clean = DropoutMasks::sample(&enc, train.num_u(), train.num_v(), &mut sampler.dropout);
        let infomax_on = cfg.lambda > 0.0 && !corrupted_edges.is_empty() && !positives.is_empty();
        let masks_corrupted = if infomax_on {
            DropoutMasks::sample(&enc, corrupted.num_u(), corrupted.num_v(), &mut sampler.dropout)
        } else {
            None
        };
        let subgraphs = if infomax_on {
            let pos = subgraph_batch(train, positives, cfg, &mut sampler.subgraph)?;
            let neg = subgraph_batch(corrupted, corrupted_edges, cfg, &mut sampler.subgraph)?;
            Some((pos, neg))
        } else {
            None
        };
        let rank = if cfg.lambda < 1.0 && !positives.is_empty() {
            let (pos, neg) = ranking::draw_negatives(
                positives,
                cfg.neg_per_pos,
                train,
                cfg.filter_negatives,
                &mut sampler.negatives,
            );
            let (pos_u, pos_v): (Vec<u32>, Vec<u32>) = pos.into_iter().unzip();
            let (neg_u, neg_v): (Vec<u32>, Vec<u32>) = neg.into_iter().unzip();
            Some(RankIndex {
                pos_u: pos_u.into(),
                pos_v: pos_v.into(),
                neg_u: neg_u.into(),
                neg_v: neg_v.into(),
            })
        } else {
            None
        };
        Ok(BatchPlan {
            subgraphs,
            rank,
            masks_clean,
            masks_corrupted,
        })
    }
}

fn subgraph_batch(
    g: &BipartiteGraph,
    edges: &[(u32, u32)],
    cfg: &TrainConfig,
    r: &mut rng::Rng,
) -> Result<SubgraphBatch> {
    let samples = match cfg.local_rep {
        LocalRep::Subgraph | LocalRep::SubgraphMean => edges
            .iter()
            .map(|&(u, v)| graph::enclosing_subgraph(g, u, v, cfg.hop, cfg.cap(), r))
            .collect::<Result<Vec<_>>>()?,
        // These variants only read the centers.
        LocalRep::Node | LocalRep::Pair => edges
            .iter()
            .map(|&(u, v)| SubgraphSample {
                center_u: u,
                center_v: v,
                u_side_neighbors: vec![v],
                v_side_neighbors: vec![u],
                hop: cfg.hop,
            })
            .collect(),
    };
    SubgraphBatch::from_samples(&samples)
}

/// Loss nodes of one batch. Inactive terms are `None`.
pub struct BatchLoss {
    pub total: Var,
    /// Summary of the clean graph, present with the infomax term.
    pub global: Option<Var>,
    pub infomax: Option<Var>,
    pub ranking: Option<Var>,
}

/// Records the batch objective on `tape`.
pub fn batch_loss(
    tape: &mut Tape,
    store: &ParamStore,
    params: &ModelParams,
    train: &BipartiteGraph,
    corrupted: &BipartiteGraph,
    plan: &BatchPlan,
    cfg: &TrainConfig,
) -> Result<BatchLoss> {
    let enc = cfg.encoder_config();
    let (u, v) = encoder::encode_on_tape(tape, store, train, &params.encoder, &enc, plan.masks_clean.as_ref())?;

    let mut global = None;
    let infomax = match &plan.subgraphs {
        Some((pos_sg, neg_sg)) => {
            let (cu, cv) = encoder::encode_on_tape(
                tape,
                store,
                corrupted,
                &params.encoder,
                &enc,
                plan.masks_corrupted.as_ref(),
            )?;
            let g = infomax::global_on_tape(tape, u, v);
            global = Some(g);
            let pos_local = infomax::local_on_tape(tape, store, &params.infomax, u, v, pos_sg, cfg.local_rep);
            let neg_local = infomax::local_on_tape(tape, store, &params.infomax, cu, cv, neg_sg, cfg.local_rep);
            let pos: Vec<Var> = pos_local
                .into_iter()
                .map(|l| infomax::discriminator_logits(tape, store, &params.infomax, l, g))
                .collect();
            let neg: Vec<Var> = neg_local
                .into_iter()
                .map(|l| infomax::discriminator_logits(tape, store, &params.infomax, l, g))
                .collect();
            Some(infomax::infomax_loss_on_tape(tape, &pos, &neg)?)
        }
        None => None,
    };

    let ranking = match &plan.rank {
        Some(ix) => {
            let slope = cfg.leaky_slope;
            let pu = tape.gather(u, Arc::clone(&ix.pos_u));
            let pv = tape.gather(v, Arc::clone(&ix.pos_v));
            let nu = tape.gather(u, Arc::clone(&ix.neg_u));
            let nv = tape.gather(v, Arc::clone(&ix.neg_v));
            let sp = ranking::score_on_tape(tape, store, &params.ranking, pu, pv, slope);
            let sn = ranking::score_on_tape(tape, store, &params.ranking, nu, nv, slope);
            Some(ranking::margin_loss_on_tape(tape, sp, sn, cfg.gamma))
        }
        None => None,
    };

    let total = match (infomax, ranking) {
        (Some(m), Some(r)) => {
            let m = tape.scale(m, cfg.lambda);
            let r = tape.scale(r, 1.0 - cfg.lambda);
            tape.add(m, r)
        }
        (Some(m), None) => tape.scale(m, cfg.lambda),
        (None, Some(r)) => tape.scale(r, 1.0 - cfg.lambda),
        (None, None) => tape.constant(Tensor::scalar(0.0)),
    };
    Ok(BatchLoss {
        total,
        global,
        infomax,
        ranking,
    })
}

/// Mean batch losses of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub infomax: f64,
    pub ranking: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub store: ParamStore,
    pub config: TrainConfig,
    /// Infer-mode embeddings of the training graph.
    pub u_emb: Tensor,
    pub v_emb: Tensor,
    pub history: Vec<EpochLoss>,
}

const HISTORY_MARKER: &str = "[history]";

impl TrainedModel {
    fn from_store(store: ParamStore, config: TrainConfig, g: &BipartiteGraph, history: Vec<EpochLoss>) -> Result<Self> {
        let params = ModelParams::lookup(&store, &config)?;
        let (u_emb, v_emb) = encode_infer(&store, &params, &config, g)?;
        Ok(TrainedModel {
            store,
            config,
            u_emb,
            v_emb,
            history,
        })
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::lookup(&self.store, &self.config)
    }

    /// Infer-mode embeddings of `g` under this model's parameters.
    pub fn embed(&self, g: &BipartiteGraph) -> Result<(Tensor, Tensor)> {
        encode_infer(&self.store, &self.params()?, &self.config, g)
    }

    /// Pair scorer over the stored embeddings.
    pub fn scorer(&self) -> Result<PairScorer> {
        let p = self.params()?;
        Ok(PairScorer::new(
            &self.u_emb,
            &self.v_emb,
            &self.store,
            &p.ranking,
            self.config.leaky_slope,
        ))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut meta = self.config.to_kv();
        meta.push_str(HISTORY_MARKER);
        meta.push('\n');
        for h in &self.history {
            let _ = writeln!(meta, "{},{},{},{}", h.epoch, h.total, h.infomax, h.ranking);
        }
        checkpoint::encode(&meta, &self.store, &[("emb.u", &self.u_emb), ("emb.v", &self.v_emb)])
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ck = checkpoint::decode(bytes)?;
        let (cfg_text, hist_text) = ck
            .metadata
            .split_once(HISTORY_MARKER)
            .ok_or_else(|| Error::Checkpoint("metadata lacks a loss history".into()))?;
        let config = TrainConfig::from_kv(cfg_text)?;
        let history = hist_text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(parse_loss_row)
            .collect::<Result<Vec<_>>>()?;
        let extra = |name: &str| {
            ck.extras
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
        };
        let u_emb = extra("emb.u")?;
        let v_emb = extra("emb.v")?;
        ModelParams::lookup(&ck.store, &config)?;
        Ok(TrainedModel {
            store: ck.store,
            config,
            u_emb,
            v_emb,
            history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Loss history as CSV `epoch,total,infomax,ranking`.
    pub fn loss_csv(&self) -> String {
        loss_csv(&self.history)
    }
}

fn parse_loss_row(line: &str) -> Result<EpochLoss> {
    let bad = || Error::Checkpoint(format!("malformed loss row `{line}`"));
    let f: Vec<&str> = line.trim().split(',').collect();
    if f.len() != 4 {
        return Err(bad());
    }
    Ok(EpochLoss {
        epoch: f[0].parse().map_err(|_| bad())?,
        total: f[1].parse().map_err(|_| bad())?,
        infomax: f[2].parse().map_err(|_| bad())?,
        ranking: f[3].parse().map_err(|_| bad())?,
    })
}

pub fn loss_csv(history: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,total,infomax,ranking\n");
    for h in history {
        let _ = writeln!(out, "{},{},{},{}", h.epoch, h.total, h.infomax, h.ranking);
    }
    out
}

fn encode_infer(
    store: &ParamStore,
    params: &ModelParams,
    cfg: &TrainConfig,
    g: &BipartiteGraph,
) -> Result<(Tensor, Tensor)> {
    // Infer mode draws nothing from the stream.
    let mut unused = rng::stream(cfg.seed, rng::DROPOUT);
    encoder::encode(
        g,
        store,
        &params.encoder,
        &cfg.encoder_config(),
        Mode::Infer,
        &mut unused,
    )
}

pub fn checkpoint_path(run_dir: &Path, epoch: usize) -> PathBuf {
    run_dir.join(format!("epoch_{epoch}.ckpt"))
}

/// Highest-epoch checkpoint in `run_dir`.
pub fn latest_checkpoint(run_dir: &Path) -> Result<Option<PathBuf>> {
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in fs::read_dir(run_dir)? {
        let path = entry?.path();
        let epoch = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("epoch_")?.strip_suffix(".ckpt")?.parse::<usize>().ok());
        if let Some(e) = epoch {
            if best.as_ref().is_none_or(|(b, _)| e > *b) {
                best = Some((e, path));
            }
        }
    }
    Ok(best.map(|(_, p)| p))
}

pub fn train(split: &EdgeSplit, cfg: &TrainConfig) -> Result<TrainedModel> {
    train_with(split, cfg, None, |_| {})
}

/// Trains and writes `config`, `loss.csv` and periodic checkpoints into
/// `run_dir`.
pub fn train_to_dir(split: &EdgeSplit, cfg: &TrainConfig, run_dir: &Path) -> Result<TrainedModel> {
    train_with(split, cfg, Some(run_dir), |_| {})
}

/// Full training loop. `on_epoch` sees every epoch's losses as they are
/// recorded.
pub fn train_with(
    split: &EdgeSplit,
    cfg: &TrainConfig,
    run_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<TrainedModel> {
    cfg.validate()?;
    let train = &split.train;
    if train.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    if let Some(dir) = run_dir {
        fs::create_dir_all(dir)?;
        checkpoint::write_atomic(&dir.join("config"), cfg.to_kv().as_bytes())?;
    }
    let mut store = ParamStore::new();
    let params = ModelParams::init(&mut store, cfg, train.num_u(), train.num_v());
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut sampler = Sampler::new(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let plan = EpochPlan::sample(train, cfg, &mut sampler)?;
        let (mut total, mut im, mut rk) = (0.0, 0.0, 0.0);
        for b in 0..plan.batches.len() {
            let batch = plan.batch(b, train, cfg, &mut sampler)?;
            let mut tape = Tape::new();
            let loss = batch_loss(&mut tape, &store, &params, train, &plan.corrupted, &batch, cfg)?;
            let value = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
            let (m, r, t) = (value(loss.infomax), value(loss.ranking), tape.value(loss.total).item());
            for (x, term) in [(m, "infomax"), (r, "ranking"), (t, "total")] {
                if !x.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: b, term });
                }
            }
            tape.backward(loss.total, &mut store).map_err(|e| match e {
                Error::Numeric { op } => Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    term: op,
                },
                other => other,
            })?;
            store.adam_step(&adam)?;
            total += t;
            im += m;
            rk += r;
        }
        let n = plan.batches.len() as f64;
        let record = EpochLoss {
            epoch,
            total: total / n,
            infomax: im / n,
            ranking: rk / n,
        };
        history.push(record);
        on_epoch(&record);
        if let Some(dir) = run_dir {
            checkpoint::write_atomic(&dir.join("loss.csv"), loss_csv(&history).as_bytes())?;
            let due = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
            if due && epoch != cfg.epochs {
                TrainedModel::from_store(store.clone(), cfg.clone(), train, history.clone())?
                    .save(checkpoint_path(dir, epoch))?;
            }
        }
    }

    let model = TrainedModel::from_store(store, cfg.clone(), train, history)?;
    if let Some(dir) = run_dir {
        checkpoint::write_atomic(&dir.join("loss.csv"), model.loss_csv().as_bytes())?;
        model.save(checkpoint_path(dir, cfg.epochs))?;
    }
    Ok(model)
}
