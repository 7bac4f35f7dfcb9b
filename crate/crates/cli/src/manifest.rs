//! Run descriptor written next to a run's checkpoints.
//!
//! The manifest is `key=value` text: the dataset descriptor first, then a
//! `[config]` line followed by the resolved training configuration.

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bigi::graph::{split_train_test, Dataset};
use bigi::{EdgeFormat, EdgeSplit, TrainConfig};

pub const FILE: &str = "manifest";
const CONFIG_MARKER: &str = "[config]";

/// Where the edges come from and how they are split.
#[derive(Debug, Clone)]
pub struct DataSpec {
    pub data: PathBuf,
    pub test_data: Option<PathBuf>,
    pub format: EdgeFormat,
    pub train_ratio: f64,
    pub split_seed: u64,
}

pub struct PreparedData {
    pub dataset: Dataset,
    pub split: EdgeSplit,
}

impl DataSpec {
    /// Loads the edge lists and rebuilds the split. Deterministic in the
    /// descriptor.
    pub fn prepare(&self) -> Result<PreparedData> {
        match &self.test_data {
            Some(test) => {
                let (dataset, parts) = Dataset::load_parts(&[&self.data, test], self.format)
                    .with_context(|| format!("loading {} and {}", self.data.display(), test.display()))?;
                let test_edges = parts.into_iter().nth(1).unwrap_or_default();
                let split = EdgeSplit::from_test_edges(&dataset.graph, test_edges, self.split_seed)?;
                Ok(PreparedData { dataset, split })
            }
            None => {
                let dataset = Dataset::load(&self.data, self.format)
                    .with_context(|| format!("loading {}", self.data.display()))?;
                let split = split_train_test(&dataset.graph, self.train_ratio, self.split_seed)?;
                Ok(PreparedData { dataset, split })
            }
        }
    }
}

impl PreparedData {
    /// Held-out edges as `u <tab> v` token pairs.
    pub fn write_test_edges(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
        for &(u, v) in &self.split.test_edges {
            writeln!(
                w,
                "{}\t{}",
                self.dataset.u_vocab.token(u),
                self.dataset.v_vocab.token(v)
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub command: String,
    pub data: DataSpec,
    pub out: PathBuf,
    pub threads: u32,
    pub config: TrainConfig,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(k);
            s.push('=');
            s.push_str(&v);
            s.push('\n');
        };
        line("command", self.command.clone());
        line("data", self.data.data.display().to_string());
        line(
            "test_data",
            self.data
                .test_data
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        line("format", self.data.format.to_string());
        line("train_ratio", self.data.train_ratio.to_string());
        line("split_seed", self.data.split_seed.to_string());
        line("out", self.out.display().to_string());
        line("threads", self.threads.to_string());
        s.push_str(CONFIG_MARKER);
        s.push('\n');
        s.push_str(&self.config.to_kv());
        s
    }

    pub fn parse(text: &str) -> Result<Manifest> {
        let (head, config) = text
            .split_once(&format!("{CONFIG_MARKER}\n"))
            .context("manifest has no [config] section")?;
        let mut fields = std::collections::HashMap::new();
        for line in head.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("bad manifest line `{line}`"))?;
            fields.insert(k.trim(), v.trim());
        }
        let field = |k: &str| fields.get(k).copied().with_context(|| format!("manifest lacks `{k}`"));
        let test_data = field("test_data")?;
        let manifest = Manifest {
            command: field("command")?.to_owned(),
            data: DataSpec {
                data: PathBuf::from(field("data")?),
                test_data: (!test_data.is_empty()).then(|| PathBuf::from(test_data)),
                format: field("format")?.parse()?,
                train_ratio: field("train_ratio")?.parse().context("train_ratio")?,
                split_seed: field("split_seed")?.parse().context("split_seed")?,
            },
            out: PathBuf::from(field("out")?),
            threads: field("threads")?.parse().context("threads")?,
            config: TrainConfig::from_kv(config)?,
        };
        if manifest.command != "train" {
            bail!("unsupported manifest command `{}`", manifest.command);
        }
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        Manifest::parse(&text).with_context(|| format!("in {}", path.display()))
    }
}
