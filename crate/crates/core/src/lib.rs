//! Bipartite graph embedding through local-global mutual information
//! maximization.
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`]: the bipartite graph, edge-list I/O, splitting, structure
//!   corruption and enclosing-subgraph extraction.
//! - [`numerics`]: dense tensors, a reverse-mode tape, the parameter store
//!   and Adam.
//! - [`encoder`]: the two-hop bipartite encoder.
//! - [`infomax`]: global/local representations, the bilinear
//!   discriminator and the noise-contrastive loss.
//! - [`ranking`]: the MLP pair scorer, head/tail negative sampling and the
//!   margin ranking loss.
//! - [`trainer`]: joint optimization, run configuration and checkpoints.
//! - [`eval`]: top-K ranking metrics, link prediction, clustering analysis
//!   and pair-score dumps.

pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod infomax;
pub mod numerics;
pub mod ranking;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use eval::MetricsReport;
pub use graph::{BipartiteGraph, EdgeFormat, EdgeSplit, SubgraphSample};
pub use numerics::{ParamStore, Tape, Tensor, Var};
pub use trainer::{LocalRep, TrainConfig, TrainedModel};
