//! `bigi`: train, evaluate, embed and analyze bipartite graph embeddings.
//!
//! Training settings resolve in three layers: built-in defaults, then a
//! `key=value` file given with `--config`, then flags. Every flag can also
//! be set through a `BIGI_`-prefixed environment variable, which ranks
//! between the file and the command line.

mod manifest;

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bigi::eval::pairs::pair_scores_csv;
use bigi::eval::{clustering_analysis, dump_pair_scores, link_predict_evaluate, topk_evaluate, LinkPredConfig};
use bigi::trainer::{self, latest_checkpoint};
use bigi::{EdgeFormat, LocalRep, MetricsReport, TrainConfig, TrainedModel};
use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::{DataSpec, Manifest, PreparedData};

#[derive(Parser)]
#[command(name = "bigi", version, about = "Bipartite graph embedding via local-global infomax")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a dataset, train a model and write a run directory.
    Train(Box<TrainArgs>),
    /// Score a trained run on its held-out edges.
    Evaluate(EvaluateArgs),
    /// Export the final embeddings as TSV.
    Embed(EmbedArgs),
    /// Clustering quality of the embeddings and pair-score dumps.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Edge-list file.
    #[arg(long, env = "BIGI_DATA")]
    data: PathBuf,
    /// Optional held-out edge list; when given, no random split is drawn.
    #[arg(long, env = "BIGI_TEST_DATA")]
    test_data: Option<PathBuf>,
    /// `tsv-pair` or `tsv-rated`.
    #[arg(long, env = "BIGI_FORMAT", default_value = "tsv-pair")]
    format: EdgeFormat,
    /// Fraction of edges used for training.
    #[arg(long, env = "BIGI_TRAIN_RATIO", default_value_t = 0.6)]
    train_ratio: f64,
    /// Seed of the train/test split; defaults to the training seed.
    #[arg(long, env = "BIGI_SPLIT_SEED")]
    split_seed: Option<u64>,
}

/// Training hyperparameters, named after the configuration keys.
#[derive(Args, Default)]
struct ConfigArgs {
    /// `key=value` file; flags and environment override it.
    #[arg(long, env = "BIGI_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "BIGI_DIM")]
    dim: Option<usize>,
    #[arg(long, env = "BIGI_DEPTH")]
    depth: Option<usize>,
    #[arg(long, env = "BIGI_LR")]
    lr: Option<f64>,
    #[arg(long, env = "BIGI_EPOCHS")]
    epochs: Option<usize>,
    #[arg(long, env = "BIGI_GAMMA")]
    gamma: Option<f64>,
    #[arg(long, env = "BIGI_BETA")]
    beta: Option<f64>,
    #[arg(long, env = "BIGI_LAMBDA")]
    lambda: Option<f64>,
    /// Enclosing-subgraph radius; must be odd.
    #[arg(long, env = "BIGI_HOP", value_parser = parse_odd)]
    hop: Option<usize>,
    #[arg(long, env = "BIGI_DROPOUT")]
    dropout: Option<f64>,
    #[arg(long, env = "BIGI_LEAKY_SLOPE")]
    leaky_slope: Option<f64>,
    /// Per-side subgraph size cap, 0 for none.
    #[arg(long, env = "BIGI_NEIGHBOR_CAP")]
    neighbor_cap: Option<usize>,
    #[arg(long, env = "BIGI_NEG_PER_POS")]
    neg_per_pos: Option<usize>,
    /// Ranking MLP width, 0 for `dim`.
    #[arg(long, env = "BIGI_HIDDEN")]
    hidden: Option<usize>,
    #[arg(long, env = "BIGI_BATCH_SIZE")]
    batch_size: Option<usize>,
    #[arg(long, env = "BIGI_SEED")]
    seed: Option<u64>,
    /// subgraph, node, pair or subgraph-mean.
    #[arg(long, env = "BIGI_LOCAL_REP")]
    local_rep: Option<LocalRep>,
    #[arg(long, env = "BIGI_EXACT_CORRUPTION", num_args = 0..=1, default_missing_value = "true")]
    exact_corruption: Option<bool>,
    #[arg(long, env = "BIGI_FILTER_NEGATIVES", num_args = 0..=1, default_missing_value = "true")]
    filter_negatives: Option<bool>,
    #[arg(long, env = "BIGI_CHECKPOINT_EVERY")]
    checkpoint_every: Option<usize>,
}

fn parse_odd(s: &str) -> std::result::Result<usize, String> {
    let h: usize = s.parse().map_err(|e| format!("{e}"))?;
    if !h.is_multiple_of(2) {
        Ok(h)
    } else {
        Err(format!("hop must be odd, got {h}"))
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            cfg.apply_kv(&text)
                .with_context(|| format!("in config {}", path.display()))?;
        }
        let flags: [(&str, Option<String>); 18] = [
            ("dim", self.dim.map(|x| x.to_string())),
            ("depth", self.depth.map(|x| x.to_string())),
            ("lr", self.lr.map(|x| x.to_string())),
            ("epochs", self.epochs.map(|x| x.to_string())),
            ("gamma", self.gamma.map(|x| x.to_string())),
            ("beta", self.beta.map(|x| x.to_string())),
            ("lambda", self.lambda.map(|x| x.to_string())),
            ("hop", self.hop.map(|x| x.to_string())),
            ("dropout", self.dropout.map(|x| x.to_string())),
            ("leaky_slope", self.leaky_slope.map(|x| x.to_string())),
            ("neighbor_cap", self.neighbor_cap.map(|x| x.to_string())),
            ("neg_per_pos", self.neg_per_pos.map(|x| x.to_string())),
            ("hidden", self.hidden.map(|x| x.to_string())),
            ("batch_size", self.batch_size.map(|x| x.to_string())),
            ("seed", self.seed.map(|x| x.to_string())),
            ("exact_corruption", self.exact_corruption.map(|x| x.to_string())),
            ("filter_negatives", self.filter_negatives.map(|x| x.to_string())),
            ("checkpoint_every", self.checkpoint_every.map(|x| x.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        if let Some(rep) = self.local_rep {
            cfg.local_rep = rep;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Run directory.
    #[arg(long, env = "BIGI_OUT")]
    out: PathBuf,
    /// Worker cap. Training runs on one thread; the value is recorded.
    #[arg(long, env = "BIGI_THREADS", default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    threads: u32,
    /// Suppress per-epoch progress lines.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    Topk,
    Linkpred,
    All,
}

#[derive(Args)]
struct RunArgs {
    /// Run directory written by `train`.
    #[arg(long, env = "BIGI_RUN")]
    run: PathBuf,
    /// Checkpoint to use instead of the run's latest one.
    #[arg(long, env = "BIGI_CHECKPOINT")]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, env = "BIGI_TASK", value_enum, default_value = "topk")]
    task: Task,
    /// Ranking cutoffs, comma separated.
    #[arg(long = "K", env = "BIGI_K", value_delimiter = ',', default_value = "10")]
    ks: Vec<usize>,
    /// Variant the checkpoint is expected to have been trained with.
    /// subgraph, node, pair or subgraph-mean.
    #[arg(long, env = "BIGI_LOCAL_REP")]
    local_rep: Option<LocalRep>,
    /// Non-edges per positive for link prediction.
    #[arg(long, env = "BIGI_NEG_RATIO", default_value_t = 1)]
    neg_ratio: usize,
    /// Metrics CSV; defaults to `<run>/metrics.csv`.
    #[arg(long, env = "BIGI_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output TSV; defaults to `<run>/embeddings.tsv`.
    #[arg(long, env = "BIGI_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Cluster counts for the Calinski-Harabasz index, comma separated.
    #[arg(long, env = "BIGI_CLUSTERS", value_delimiter = ',', default_value = "2,5,10")]
    clusters: Vec<usize>,
    /// Token pairs `u <tab> v` to score; defaults to the held-out edges.
    #[arg(long, env = "BIGI_PAIRS")]
    pairs: Option<PathBuf>,
    /// Output directory; defaults to the run directory.
    #[arg(long, env = "BIGI_OUT")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(*a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Embed(a) => cmd_embed(a),
        Command::Analyze(a) => cmd_analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let spec = DataSpec {
        data: std::path::absolute(&a.data.data)?,
        test_data: a.data.test_data.as_deref().map(std::path::absolute).transpose()?,
        format: a.data.format,
        train_ratio: a.data.train_ratio,
        split_seed: a.data.split_seed.unwrap_or(cfg.seed),
    };
    let prepared = spec.prepare()?;
    let manifest = Manifest {
        command: "train".into(),
        data: spec,
        out: std::path::absolute(&a.out)?,
        threads: a.threads,
        config: cfg.clone(),
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    manifest.write(&a.out.join(manifest::FILE))?;
    prepared.write_test_edges(&a.out.join("test_edges.tsv"))?;

    let g = &prepared.split.train;
    if !a.quiet {
        eprintln!(
            "train: {} U, {} V, {} train edges, {} test edges",
            g.num_u(),
            g.num_v(),
            g.num_edges(),
            prepared.split.test_edges.len()
        );
    }
    let quiet = a.quiet;
    let model = trainer::train_with(&prepared.split, &cfg, Some(&a.out), |e| {
        if !quiet {
            eprintln!(
                "epoch {:>4}  loss {:.6}  infomax {:.6}  ranking {:.6}",
                e.epoch, e.total, e.infomax, e.ranking
            );
        }
    })?;
    if !a.quiet {
        eprintln!("checkpoint digest {}", model.digest());
    }
    Ok(())
}

struct LoadedRun {
    manifest: Manifest,
    prepared: PreparedData,
    model: TrainedModel,
}

fn load_run(a: &RunArgs) -> Result<LoadedRun> {
    let manifest = Manifest::read(&a.run.join(manifest::FILE))?;
    let ckpt = match &a.checkpoint {
        Some(p) => p.clone(),
        None => latest_checkpoint(&a.run)?.with_context(|| format!("no checkpoint in {}", a.run.display()))?,
    };
    let model = TrainedModel::load(&ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let prepared = manifest.data.prepare()?;
    let g = &prepared.split.train;
    if model.u_emb.rows() != g.num_u() || model.v_emb.rows() != g.num_v() {
        bail!(
            "checkpoint has {} x {} nodes but the dataset has {} x {}",
            model.u_emb.rows(),
            model.v_emb.rows(),
            g.num_u(),
            g.num_v()
        );
    }
    Ok(LoadedRun {
        manifest,
        prepared,
        model,
    })
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let run = load_run(&a.run)?;
    if let Some(want) = a.local_rep {
        if want != run.model.config.local_rep {
            bail!(
                "checkpoint was trained with --local-rep {}, not {want}; the variant is fixed at training time",
                run.model.config.local_rep
            );
        }
    }
    let split = &run.prepared.split;
    let mut report = MetricsReport::new();
    if matches!(a.task, Task::Topk | Task::All) {
        report.merge(&topk_evaluate(&run.model, split, &a.ks)?);
    }
    if matches!(a.task, Task::Linkpred | Task::All) {
        let cfg = LinkPredConfig {
            neg_ratio: a.neg_ratio,
            seed: run.manifest.config.seed,
            ..LinkPredConfig::default()
        };
        report.merge(&link_predict_evaluate(&run.model, split, &cfg)?);
    }
    report.set_meta("local_rep", run.model.config.local_rep.to_string());
    let out = a.out.unwrap_or_else(|| a.run.run.join("metrics.csv"));
    fs::write(&out, report.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    print!("{report}");
    Ok(())
}

fn cmd_embed(a: EmbedArgs) -> Result<()> {
    let run = load_run(&a.run)?;
    let out = a.out.unwrap_or_else(|| a.run.run.join("embeddings.tsv"));
    let ds = &run.prepared.dataset;
    let mut w = BufWriter::new(fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?);
    for (emb, vocab) in [(&run.model.u_emb, &ds.u_vocab), (&run.model.v_emb, &ds.v_vocab)] {
        for i in 0..emb.rows() {
            write!(w, "{}", vocab.token(i as u32))?;
            for x in emb.row(i) {
                write!(w, "\t{x}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    eprintln!(
        "wrote {} U and {} V rows of width {} to {}",
        run.model.u_emb.rows(),
        run.model.v_emb.rows(),
        run.model.u_emb.cols(),
        out.display()
    );
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let run = load_run(&a.run)?;
    let out = a.out.unwrap_or_else(|| a.run.run.clone());
    fs::create_dir_all(&out)?;
    let seed = run.manifest.config.seed;

    let mut report = MetricsReport::new();
    for (side, emb) in [("U", &run.model.u_emb), ("V", &run.model.v_emb)] {
        let ks: Vec<usize> = a.clusters.iter().copied().filter(|&k| k < emb.rows()).collect();
        for (name, value) in clustering_analysis(emb, &ks, seed)?.metrics() {
            report.insert(format!("{side}.{name}"), *value);
        }
    }
    fs::write(out.join("clustering.csv"), report.to_csv())?;
    print!("{report}");

    let ds = &run.prepared.dataset;
    let pairs = match &a.pairs {
        Some(path) => read_token_pairs(path, ds)?,
        None => run.prepared.split.test_edges.clone(),
    };
    let rows = dump_pair_scores(&run.model.scorer()?, &run.prepared.split.train, &pairs)?;
    let csv = pair_scores_csv(
        &rows,
        |u| ds.u_vocab.token(u).to_owned(),
        |v| ds.v_vocab.token(v).to_owned(),
    );
    fs::write(out.join("pair_scores.csv"), csv)?;
    eprintln!("scored {} pairs", rows.len());
    Ok(())
}

fn read_token_pairs(path: &Path, ds: &bigi::graph::Dataset) -> Result<Vec<(u32, u32)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split(['\t', ' ']).filter(|f| !f.is_empty());
        let (Some(u), Some(v)) = (fields.next(), fields.next()) else {
            if line.trim().is_empty() {
                continue;
            }
            bail!("{}:{}: expected two tokens", path.display(), i + 1);
        };
        let u = ds
            .u_vocab
            .get(u)
            .with_context(|| format!("{}:{}: unknown U token `{u}`", path.display(), i + 1))?;
        let v = ds
            .v_vocab
            .get(v)
            .with_context(|| format!("{}:{}: unknown V token `{v}`", path.display(), i + 1))?;
        pairs.push((u, v));
    }
    Ok(pairs)
}
