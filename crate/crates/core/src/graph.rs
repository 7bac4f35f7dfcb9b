//! Bipartite graphs, edge-list datasets, train/test splitting, structure
//! corruption and h-hop enclosing subgraphs.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::numerics::Csr;

/// Immutable two-sided sparse adjacency.
///
/// `u_adj` holds, for every U node, the sorted V neighbors; `v_adj` is its
/// transpose. Both are shared behind `Arc` so cloning a graph is cheap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    u_adj: Arc<Csr>,
    v_adj: Arc<Csr>,
}

impl BipartiteGraph {
    /// Builds a graph from `(u, v)` pairs. Duplicates collapse into one
    /// edge.
    pub fn from_edges(num_u: usize, num_v: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let edges: Vec<(u32, u32)> = edges.into_iter().collect();
        if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u as usize >= num_u || v as usize >= num_v) {
            return Err(Error::config(format!(
                "edge ({u}, {v}) out of range for a {num_u}x{num_v} graph"
            )));
        }
        let u_adj = Csr::from_pairs(num_u, num_v, edges);
        let v_adj = u_adj.transpose();
        Ok(BipartiteGraph {
            u_adj: Arc::new(u_adj),
            v_adj: Arc::new(v_adj),
        })
    }

    pub fn num_u(&self) -> usize {
        self.u_adj.rows()
    }

    pub fn num_v(&self) -> usize {
        self.v_adj.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.u_adj.nnz()
    }

    /// Sorted V neighbors of `u`.
    #[inline]
    pub fn u_neighbors(&self, u: u32) -> &[u32] {
        self.u_adj.row(u as usize)
    }

    /// Sorted U neighbors of `v`.
    #[inline]
    pub fn v_neighbors(&self, v: u32) -> &[u32] {
        self.v_adj.row(v as usize)
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.u_neighbors(u).binary_search(&v).is_ok()
    }

    /// Edges in U-major, V-ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_u() as u32).flat_map(move |u| self.u_neighbors(u).iter().map(move |&v| (u, v)))
    }

    pub fn u_adjacency(&self) -> &Arc<Csr> {
        &self.u_adj
    }

    pub fn v_adjacency(&self) -> &Arc<Csr> {
        &self.v_adj
    }

    /// Every absent cell becomes an edge and vice versa.
    pub fn complement(&self) -> BipartiteGraph {
        let mut edges = Vec::with_capacity(self.num_u() * self.num_v() - self.num_edges());
        for u in 0..self.num_u() as u32 {
            let row = self.u_neighbors(u);
            edges.extend(
                (0..self.num_v() as u32)
                    .filter(|v| row.binary_search(v).is_err())
                    .map(|v| (u, v)),
            );
        }
        BipartiteGraph::from_edges(self.num_u(), self.num_v(), edges).expect("indices in range")
    }
}

/// Token-to-index map for one side of a dataset, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn intern(&mut self, token: &str) -> u32 {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len() as u32;
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), i);
        i
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: u32) -> &str {
        &self.tokens[i as usize]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Vocabulary `0..n` with tokens equal to their decimal index.
    pub fn numeric(n: usize) -> Vocab {
        let mut vocab = Vocab::default();
        for i in 0..n {
            vocab.intern(&i.to_string());
        }
        vocab
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeFormat {
    /// `u v` per line.
    TsvPair,
    /// `u v rating [...]`; everything after the second field is ignored.
    TsvRated,
}

impl FromStr for EdgeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv-pair" => Ok(EdgeFormat::TsvPair),
            "tsv-rated" => Ok(EdgeFormat::TsvRated),
            other => Err(Error::config(format!(
                "unknown edge-list format `{other}` (expected tsv-pair or tsv-rated)"
            ))),
        }
    }
}

impl fmt::Display for EdgeFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeFormat::TsvPair => "tsv-pair",
            EdgeFormat::TsvRated => "tsv-rated",
        })
    }
}

/// A graph together with the token maps of both sides.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: BipartiteGraph,
    pub u_vocab: Vocab,
    pub v_vocab: Vocab,
}

impl Dataset {
    /// Loads one edge-list file.
    pub fn load(path: impl AsRef<Path>, format: EdgeFormat) -> Result<Dataset> {
        let (dataset, _) = Self::load_parts(&[path.as_ref()], format)?;
        Ok(dataset)
    }

    /// Loads several edge-list files into one graph with shared token maps.
    /// Also returns each file's edges, so pre-split train/test files can be
    /// reassembled into an [`EdgeSplit`].
    pub fn load_parts(paths: &[&Path], format: EdgeFormat) -> Result<(Dataset, Vec<Vec<(u32, u32)>>)> {
        let mut u_vocab = Vocab::default();
        let mut v_vocab = Vocab::default();
        let mut parts = Vec::with_capacity(paths.len());
        for path in paths {
            let text = fs::read_to_string(path)?;
            let mut edges = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split(['\t', ' ']).filter(|f| !f.is_empty()).collect();
                let ok = match format {
                    EdgeFormat::TsvPair => fields.len() == 2,
                    EdgeFormat::TsvRated => fields.len() >= 3,
                };
                if !ok {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno + 1,
                        msg: format!("expected {} fields, found {}", expected_fields(format), fields.len()),
                    });
                }
                edges.push((u_vocab.intern(fields[0]), v_vocab.intern(fields[1])));
            }
            parts.push(edges);
        }
        if parts.iter().all(Vec::is_empty) {
            return Err(Error::EmptyGraph);
        }
        let graph = BipartiteGraph::from_edges(u_vocab.len(), v_vocab.len(), parts.iter().flatten().copied())?;
        Ok((
            Dataset {
                graph,
                u_vocab,
                v_vocab,
            },
            parts,
        ))
    }

    /// Writes the graph as a `tsv-pair` edge list using the original tokens.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        for (u, v) in self.graph.edges() {
            writeln!(out, "{}\t{}", self.u_vocab.token(u), self.v_vocab.token(v))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Edge set as sorted token pairs; independent of index assignment.
    pub fn token_edges(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<_> = self
            .graph
            .edges()
            .map(|(u, v)| (self.u_vocab.token(u).to_owned(), self.v_vocab.token(v).to_owned()))
            .collect();
        pairs.sort();
        pairs
    }
}

fn expected_fields(format: EdgeFormat) -> &'static str {
    match format {
        EdgeFormat::TsvPair => "2",
        EdgeFormat::TsvRated => "at least 3",
    }
}

/// A train graph over the full node index space plus held-out test edges.
#[derive(Debug, Clone)]
pub struct EdgeSplit {
    pub train: BipartiteGraph,
    pub test_edges: Vec<(u32, u32)>,
    pub seed: u64,
}

impl EdgeSplit {
    /// Builds a split from explicit test edges; every other edge of `graph`
    /// goes to training.
    pub fn from_test_edges(graph: &BipartiteGraph, test_edges: Vec<(u32, u32)>, seed: u64) -> Result<EdgeSplit> {
        let mut test = test_edges;
        test.sort_unstable();
        test.dedup();
        if let Some(&(u, v)) = test.iter().find(|&&(u, v)| !graph.has_edge(u, v)) {
            return Err(Error::config(format!("test edge ({u}, {v}) is not in the graph")));
        }
        let train_edges = graph.edges().filter(|e| test.binary_search(e).is_err());
        let train = BipartiteGraph::from_edges(graph.num_u(), graph.num_v(), train_edges)?;
        Ok(EdgeSplit {
            train,
            test_edges: test,
            seed,
        })
    }
}

/// Uniform edge split: `round(train_ratio * |E|)` edges go to training.
///
/// Nodes left without training edges keep their indices.
pub fn split_train_test(g: &BipartiteGraph, train_ratio: f64, seed: u64) -> Result<EdgeSplit> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::config(format!("train ratio {train_ratio} outside (0, 1)")));
    }
    let n = g.num_edges();
    if n < 2 {
        return Err(Error::config("splitting needs at least two edges"));
    }
    let n_train = ((train_ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = crate::rng::stream(seed, crate::rng::SPLIT);
    let mut in_train = vec![false; n];
    for i in index::sample(&mut rng, n, n_train) {
        in_train[i] = true;
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (i, e) in g.edges().enumerate() {
        if in_train[i] {
            train.push(e);
        } else {
            test.push(e);
        }
    }
    Ok(EdgeSplit {
        train: BipartiteGraph::from_edges(g.num_u(), g.num_v(), train)?,
        test_edges: test,
        seed,
    })
}

/// `A XOR S` with `S_ij ~ Bernoulli(beta)` i.i.d. over all `|U| x |V|` cells.
pub fn corrupt<R: Rng + ?Sized>(g: &BipartiteGraph, beta: f64, rng: &mut R) -> Result<BipartiteGraph> {
    corrupt_counted(g, beta, rng).map(|(graph, _)| graph)
}

/// Like [`corrupt`], also returning the number of flipped cells.
///
/// The flip count is drawn from `Binomial(|U||V|, beta)` and that many
/// distinct cells are chosen uniformly, which has the same law as
/// independent per-cell draws.
pub fn corrupt_counted<R: Rng + ?Sized>(g: &BipartiteGraph, beta: f64, rng: &mut R) -> Result<(BipartiteGraph, usize)> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::config(format!("corruption rate {beta} outside [0, 1]")));
    }
    let (nu, nv) = (g.num_u(), g.num_v());
    let cells = nu * nv;
    let flips = if cells == 0 {
        0
    } else {
        Binomial::new(cells as u64, beta)
            .map_err(|e| Error::config(e.to_string()))?
            .sample(rng) as usize
    };
    if flips == 0 {
        return Ok((g.clone(), 0));
    }
    let mut flipped: Vec<usize> = index::sample(rng, cells, flips).into_vec();
    flipped.sort_unstable();

    let mut edges = Vec::with_capacity(g.num_edges() + flips);
    let mut cursor = 0;
    for u in 0..nu {
        let row = g.u_neighbors(u as u32);
        let start = cursor;
        while cursor < flipped.len() && flipped[cursor] / nv == u {
            cursor += 1;
        }
        let flips_in_row = flipped[start..cursor].iter().map(|c| (c % nv) as u32);
        symmetric_difference(row, flips_in_row, |v| edges.push((u as u32, v)));
    }
    Ok((BipartiteGraph::from_edges(nu, nv, edges)?, flips))
}

fn symmetric_difference(a: &[u32], b: impl Iterator<Item = u32>, mut emit: impl FnMut(u32)) {
    let mut a = a.iter().copied().peekable();
    let mut b = b.peekable();
    loop {
        match (a.peek().copied(), b.peek().copied()) {
            (Some(x), Some(y)) if x == y => {
                a.next();
                b.next();
            }
            (Some(x), Some(y)) if x < y => {
                emit(x);
                a.next();
            }
            (Some(_), Some(y)) => {
                emit(y);
                b.next();
            }
            (Some(x), None) => {
                emit(x);
                a.next();
            }
            (None, Some(y)) => {
                emit(y);
                b.next();
            }
            (None, None) => break,
        }
    }
}

/// Node sets of the h-hop enclosing subgraph around `(center_u, center_v)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphSample {
    pub center_u: u32,
    pub center_v: u32,
    /// V nodes within `hop` of `center_u`.
    pub u_side_neighbors: Vec<u32>,
    /// U nodes within `hop` of `center_v`.
    pub v_side_neighbors: Vec<u32>,
    pub hop: usize,
}

/// Extracts the h-hop enclosing subgraph of `(u, v)`.
///
/// Both centers are always part of the sample, even when `(u, v)` is not an
/// edge. With `cap = Some(c)` each side is down-sampled uniformly to `c`
/// nodes, keeping the opposite center.
pub fn enclosing_subgraph<R: Rng + ?Sized>(
    g: &BipartiteGraph,
    u: u32,
    v: u32,
    hop: usize,
    cap: Option<usize>,
    rng: &mut R,
) -> Result<SubgraphSample> {
    if hop == 0 || hop.is_multiple_of(2) {
        return Err(Error::config(format!("hop must be a positive odd number, got {hop}")));
    }
    if u as usize >= g.num_u() || v as usize >= g.num_v() {
        return Err(Error::usage(format!("node pair ({u}, {v}) out of range")));
    }
    let mut u_side = within_hops(g, Side::U, u, hop);
    let mut v_side = within_hops(g, Side::V, v, hop);
    include_sorted(&mut u_side, v);
    include_sorted(&mut v_side, u);
    if let Some(cap) = cap {
        downsample(&mut u_side, v, cap, rng);
        downsample(&mut v_side, u, cap, rng);
    }
    Ok(SubgraphSample {
        center_u: u,
        center_v: v,
        u_side_neighbors: u_side,
        v_side_neighbors: v_side,
        hop,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    U,
    V,
}

/// Opposite-side nodes at odd distance `<= hop` from `start`, sorted.
fn within_hops(g: &BipartiteGraph, side: Side, start: u32, hop: usize) -> Vec<u32> {
    let neighbors = |s: Side, x: u32| match s {
        Side::U => g.u_neighbors(x),
        Side::V => g.v_neighbors(x),
    };
    if hop == 1 {
        return neighbors(side, start).to_vec();
    }
    let (n_same, n_other) = match side {
        Side::U => (g.num_u(), g.num_v()),
        Side::V => (g.num_v(), g.num_u()),
    };
    let other = match side {
        Side::U => Side::V,
        Side::V => Side::U,
    };
    let mut seen_same = vec![false; n_same];
    let mut seen_other = vec![false; n_other];
    let mut found = Vec::new();
    seen_same[start as usize] = true;
    let mut frontier = vec![start];
    let mut dist = 0;
    while dist < hop && !frontier.is_empty() {
        // same side -> other side (odd distance)
        let mut next = Vec::new();
        for &x in &frontier {
            for &y in neighbors(side, x) {
                if !seen_other[y as usize] {
                    seen_other[y as usize] = true;
                    found.push(y);
                    next.push(y);
                }
            }
        }
        dist += 1;
        if dist >= hop {
            break;
        }
        // other side -> same side (even distance)
        frontier.clear();
        for &y in &next {
            for &x in neighbors(other, y) {
                if !seen_same[x as usize] {
                    seen_same[x as usize] = true;
                    frontier.push(x);
                }
            }
        }
        dist += 1;
    }
    found.sort_unstable();
    found
}

fn include_sorted(list: &mut Vec<u32>, x: u32) {
    if let Err(pos) = list.binary_search(&x) {
        list.insert(pos, x);
    }
}

fn downsample<R: Rng + ?Sized>(list: &mut Vec<u32>, keep: u32, cap: usize, rng: &mut R) {
    if list.len() <= cap || cap == 0 {
        return;
    }
    let others: Vec<u32> = list.iter().copied().filter(|&x| x != keep).collect();
    let mut picked: Vec<u32> = index::sample(rng, others.len(), cap - 1)
        .into_iter()
        .map(|i| others[i])
        .collect();
    picked.push(keep);
    picked.sort_unstable();
    *list = picked;
}

/// Shortest-path distance between `u` and `v`, or `None` when disconnected.
pub fn distance(g: &BipartiteGraph, u: u32, v: u32) -> Option<usize> {
    let mut dist_u = vec![usize::MAX; g.num_u()];
    let mut dist_v = vec![usize::MAX; g.num_v()];
    let mut queue = VecDeque::new();
    dist_u[u as usize] = 0;
    queue.push_back((Side::U, u));
    while let Some((side, x)) = queue.pop_front() {
        match side {
            Side::U => {
                let d = dist_u[x as usize];
                for &y in g.u_neighbors(x) {
                    if dist_v[y as usize] == usize::MAX {
                        dist_v[y as usize] = d + 1;
                        if y == v {
                            return Some(d + 1);
                        }
                        queue.push_back((Side::V, y));
                    }
                }
            }
            Side::V => {
                let d = dist_v[x as usize];
                for &y in g.v_neighbors(x) {
                    if dist_u[y as usize] == usize::MAX {
                        dist_u[y as usize] = d + 1;
                        queue.push_back((Side::U, y));
                    }
                }
            }
        }
    }
    None
}

/// Distances from `u` to every V node, `None` where unreachable.
pub fn distances_from_u(g: &BipartiteGraph, u: u32) -> Vec<Option<usize>> {
    let mut dist_u = vec![usize::MAX; g.num_u()];
    let mut dist_v = vec![usize::MAX; g.num_v()];
    let mut frontier = vec![u];
    dist_u[u as usize] = 0;
    let mut d = 0;
    while !frontier.is_empty() {
        let mut next_v = Vec::new();
        for &x in &frontier {
            for &y in g.u_neighbors(x) {
                if dist_v[y as usize] == usize::MAX {
                    dist_v[y as usize] = d + 1;
                    next_v.push(y);
                }
            }
        }
        let mut next_u = Vec::new();
        for &y in &next_v {
            for &x in g.v_neighbors(y) {
                if dist_u[x as usize] == usize::MAX {
                    dist_u[x as usize] = d + 2;
                    next_u.push(x);
                }
            }
        }
        frontier = next_u;
        d += 2;
    }
    dist_v.into_iter().map(|x| (x != usize::MAX).then_some(x)).collect()
}

#[cfg(test)]
mod tests {
    use std::io::Write as _;

    use proptest::prelude::*;

    use super::*;
    use crate::rng;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn path_graph() -> BipartiteGraph {
        // u0 - v0 - u1 - v1
        BipartiteGraph::from_edges(2, 2, [(0, 0), (1, 0), (1, 1)]).unwrap()
    }

    #[test]
    fn duplicate_lines_collapse() {
        let f = write_tmp("a\tx\na\tx\n");
        let d = Dataset::load(f.path(), EdgeFormat::TsvPair).unwrap();
        assert_eq!((d.graph.num_u(), d.graph.num_v(), d.graph.num_edges()), (1, 1, 1));
    }

    #[test]
    fn tokens_map_in_first_appearance_order() {
        let f = write_tmp("a x\nb x\nb y\n");
        let d = Dataset::load(f.path(), EdgeFormat::TsvPair).unwrap();
        assert_eq!((d.graph.num_u(), d.graph.num_v(), d.graph.num_edges()), (2, 2, 3));
        let x = d.v_vocab.get("x").unwrap();
        let ab: Vec<&str> = d.graph.v_neighbors(x).iter().map(|&u| d.u_vocab.token(u)).collect();
        assert_eq!(ab, ["a", "b"]);
    }

    #[test]
    fn rated_format_ignores_trailing_fields() {
        let f = write_tmp("196\t242\t3\t881250949\n186\t302\t3\t891717742\n");
        let d = Dataset::load(f.path(), EdgeFormat::TsvRated).unwrap();
        assert_eq!(d.graph.num_edges(), 2);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let f = write_tmp("a\tx\nlonely\n");
        let err = Dataset::load(f.path(), EdgeFormat::TsvPair).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().contains(":2:"));
    }

    #[test]
    fn empty_file_is_rejected() {
        let f = write_tmp("\n");
        let err = Dataset::load(f.path(), EdgeFormat::TsvPair).unwrap_err();
        assert_eq!(err.to_string(), "empty graph");
    }

    #[test]
    fn split_sizes_and_determinism() {
        let edges: Vec<_> = (0..100u32).flat_map(|u| (0..10u32).map(move |v| (u, v))).collect();
        let g = BipartiteGraph::from_edges(100, 10, edges).unwrap();
        let a = split_train_test(&g, 0.6, 7).unwrap();
        assert_eq!(a.train.num_edges(), 600);
        assert_eq!(a.test_edges.len(), 400);
        let b = split_train_test(&g, 0.6, 7).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test_edges, b.test_edges);
        let half = split_train_test(&g, 0.5, 3).unwrap();
        assert!(half.train.num_edges().abs_diff(half.test_edges.len()) <= 1);
        assert!(split_train_test(&g, 1.0, 7).is_err());
        assert!(split_train_test(&g, 0.0, 7).is_err());
    }

    #[test]
    fn corruption_limits_are_exact() {
        let g = path_graph();
        let mut r = rng::stream(1, rng::CORRUPTION);
        assert_eq!(corrupt(&g, 0.0, &mut r).unwrap(), g);
        let full = corrupt(&g, 1.0, &mut r).unwrap();
        assert_eq!(full, g.complement());
        assert_eq!(full.edges().collect::<Vec<_>>(), vec![(0, 1)]);
        assert!(corrupt(&g, 1.5, &mut r).is_err());
        assert!(corrupt(&g, -0.1, &mut r).is_err());
    }

    #[test]
    fn star_one_hop() {
        let g = BipartiteGraph::from_edges(1, 3, [(0, 0), (0, 1), (0, 2)]).unwrap();
        let s = enclosing_subgraph(&g, 0, 0, 1, None, &mut rng::stream(0, rng::SUBGRAPH)).unwrap();
        assert_eq!(s.u_side_neighbors, vec![0, 1, 2]);
        assert_eq!(s.v_side_neighbors, vec![0]);
    }

    #[test]
    fn path_three_hops() {
        let s = enclosing_subgraph(&path_graph(), 0, 0, 3, None, &mut rng::stream(0, rng::SUBGRAPH)).unwrap();
        assert_eq!(s.u_side_neighbors, vec![0, 1]);
        assert_eq!(s.v_side_neighbors, vec![0, 1]);
    }

    #[test]
    fn single_edge_and_even_hop() {
        let g = BipartiteGraph::from_edges(1, 1, [(0, 0)]).unwrap();
        let mut r = rng::stream(0, rng::SUBGRAPH);
        let s = enclosing_subgraph(&g, 0, 0, 1, None, &mut r).unwrap();
        assert_eq!((s.u_side_neighbors, s.v_side_neighbors), (vec![0], vec![0]));
        assert!(matches!(
            enclosing_subgraph(&g, 0, 0, 2, None, &mut r),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn cap_keeps_center() {
        let g = BipartiteGraph::from_edges(1, 100, (0..100).map(|v| (0, v))).unwrap();
        let mut r = rng::stream(0, rng::SUBGRAPH);
        for center in [0u32, 57, 99] {
            let s = enclosing_subgraph(&g, 0, center, 1, Some(10), &mut r).unwrap();
            assert_eq!(s.u_side_neighbors.len(), 10);
            assert!(s.u_side_neighbors.contains(&center));
        }
    }

    #[test]
    fn distances() {
        let g = path_graph();
        assert_eq!(distance(&g, 0, 0), Some(1));
        assert_eq!(distance(&g, 0, 1), Some(3));
        let split = BipartiteGraph::from_edges(2, 2, [(0, 0), (1, 1)]).unwrap();
        assert_eq!(distance(&split, 0, 1), None);
    }

    #[test]
    fn write_then_reload_preserves_edges() {
        let f = write_tmp("a\tx\nb\ty\nb\tx\nc\tz\n");
        let d = Dataset::load(f.path(), EdgeFormat::TsvPair).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        d.write(out.path()).unwrap();
        let back = Dataset::load(out.path(), EdgeFormat::TsvPair).unwrap();
        assert_eq!(back.token_edges(), d.token_edges());
        assert_eq!(back.graph.num_edges(), d.graph.num_edges());
    }

    /// Floyd-Warshall over the unified node set.
    fn brute_force_distances(g: &BipartiteGraph) -> Vec<Vec<usize>> {
        let n = g.num_u() + g.num_v();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0;
        }
        for (u, v) in g.edges() {
            let (a, b) = (u as usize, g.num_u() + v as usize);
            d[a][b] = 1;
            d[b][a] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    fn arb_graph() -> impl Strategy<Value = BipartiteGraph> {
        (1usize..=12, 1usize..=12).prop_flat_map(|(nu, nv)| {
            proptest::collection::vec((0..nu as u32, 0..nv as u32), 0..40)
                .prop_map(move |edges| BipartiteGraph::from_edges(nu, nv, edges).unwrap())
        })
    }

    proptest! {
        #[test]
        fn adjacency_invariants(g in arb_graph()) {
            let mut total_v = 0;
            for v in 0..g.num_v() as u32 {
                let row = g.v_neighbors(v);
                prop_assert!(row.windows(2).all(|w| w[0] < w[1]));
                for &u in row {
                    prop_assert!(g.u_neighbors(u).contains(&v));
                }
                total_v += row.len();
            }
            prop_assert_eq!(total_v, g.num_edges());
        }

        #[test]
        fn subgraph_matches_shortest_paths(g in arb_graph(), hop_idx in 0usize..3, seed in 0u64..1000) {
            let hop = 2 * hop_idx + 1;
            let d = brute_force_distances(&g);
            let mut r = rng::stream(seed, rng::SUBGRAPH);
            let u = (seed as usize % g.num_u()) as u32;
            let v = (seed as usize / 7 % g.num_v()) as u32;
            let s = enclosing_subgraph(&g, u, v, hop, None, &mut r).unwrap();
            let mut want_u: Vec<u32> = (0..g.num_v() as u32)
                .filter(|&y| y == v || d[u as usize][g.num_u() + y as usize] <= hop)
                .collect();
            let mut want_v: Vec<u32> = (0..g.num_u() as u32)
                .filter(|&x| x == u || d[g.num_u() + v as usize][x as usize] <= hop)
                .collect();
            want_u.sort_unstable();
            want_v.sort_unstable();
            prop_assert_eq!(s.u_side_neighbors, want_u);
            prop_assert_eq!(s.v_side_neighbors, want_v);
            let bfs = distance(&g, u, v);
            let brute = d[u as usize][g.num_u() + v as usize];
            prop_assert_eq!(bfs, (brute < usize::MAX / 4).then_some(brute));
        }

        #[test]
        fn split_partitions_edges(g in arb_graph(), ratio in 0.05f64..0.95, seed in 0u64..100) {
            prop_assume!(g.num_edges() >= 2);
            let s = split_train_test(&g, ratio, seed).unwrap();
            let mut all: Vec<_> = s.train.edges().chain(s.test_edges.iter().copied()).collect();
            let n = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(all, g.edges().collect::<Vec<_>>());
        }

        #[test]
        fn corruption_limits_hold_for_all_graphs(g in arb_graph(), seed in 0u64..100) {
            let mut r = rng::stream(seed, rng::CORRUPTION);
            prop_assert_eq!(corrupt(&g, 0.0, &mut r).unwrap(), g.clone());
            prop_assert_eq!(corrupt(&g, 1.0, &mut r).unwrap(), g.complement());
        }
    }
}
