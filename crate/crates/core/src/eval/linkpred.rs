//! Link prediction with a logistic classifier on `[u | v]` features.

use std::collections::HashSet;

use rand::Rng;

use super::metrics::{auc_pr, auc_roc};
use super::MetricsReport;
use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, EdgeSplit};
use crate::numerics::tensor::{log_sigmoid, sigmoid};
use crate::numerics::Tensor;
use crate::rng;
use crate::trainer::TrainedModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPredConfig {
    /// Sampled non-edges per positive, for training and test alike.
    pub neg_ratio: usize,
    pub lr: f64,
    pub max_iter: usize,
    /// Stop once the loss improves by less than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LinkPredConfig {
    fn default() -> Self {
        LinkPredConfig {
            neg_ratio: 1,
            lr: 0.1,
            max_iter: 1000,
            tol: 1e-8,
            seed: 1,
        }
    }
}

/// Logistic regression `sigmoid(w . x + b)` over standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct Logistic {
    pub w: Vec<f64>,
    pub b: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
    pub iterations: usize,
}

impl Logistic {
    /// Full-batch gradient descent on the mean log-loss.
    pub fn fit(x: &Tensor, y: &[bool], lr: f64, max_iter: usize, tol: f64) -> Result<Logistic> {
        let (n, d) = (x.rows(), x.cols());
        if n != y.len() || n == 0 {
            return Err(Error::usage("feature and label counts differ"));
        }
        if y.iter().all(|&l| l) || y.iter().all(|&l| !l) {
            return Err(Error::usage("degenerate single-class training set"));
        }
        let mean: Vec<f64> = x.mean_rows().into_vec();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let var = (0..n).map(|i| (x.get(i, j) - mean[j]).powi(2)).sum::<f64>() / n as f64;
                if var > 0.0 {
                    1.0 / var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let z = Tensor::from_vec(
            n,
            d,
            (0..n * d).map(|i| (x.data()[i] - mean[i % d]) * scale[i % d]).collect(),
        );
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut prev = f64::INFINITY;
        let mut iterations = 0;
        let mut gw = vec![0.0; d];
        for _ in 0..max_iter {
            gw.fill(0.0);
            let mut gb = 0.0;
            let mut loss = 0.0;
            for i in 0..n {
                let row = z.row(i);
                let logit = b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                let target = if y[i] { 1.0 } else { 0.0 };
                loss -= if y[i] { log_sigmoid(logit) } else { log_sigmoid(-logit) };
                let err = sigmoid(logit) - target;
                for (g, a) in gw.iter_mut().zip(row) {
                    *g += err * a;
                }
                gb += err;
            }
            loss /= n as f64;
            iterations += 1;
            if !loss.is_finite() {
                return Err(Error::Numeric { op: "logistic" });
            }
            if prev - loss < tol {
                break;
            }
            prev = loss;
            for (wj, g) in w.iter_mut().zip(&gw) {
                *wj -= lr * g / n as f64;
            }
            b -= lr * gb / n as f64;
        }
        Ok(Logistic {
            w,
            b,
            mean,
            scale,
            iterations,
        })
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        let logit = self.b
            + features
                .iter()
                .zip(&self.w)
                .enumerate()
                .map(|(j, (x, w))| (x - self.mean[j]) * self.scale[j] * w)
                .sum::<f64>();
        sigmoid(logit)
    }
}

pub fn link_predict_evaluate(model: &TrainedModel, split: &EdgeSplit, cfg: &LinkPredConfig) -> Result<MetricsReport> {
    link_predict_with(&model.u_emb, &model.v_emb, &split.train, &split.test_edges, cfg)
}

/// Trains on train edges plus sampled train non-edges, then scores test
/// edges against sampled pairs that are neither train nor test edges.
pub fn link_predict_with(
    u_emb: &Tensor,
    v_emb: &Tensor,
    train: &BipartiteGraph,
    test_edges: &[(u32, u32)],
    cfg: &LinkPredConfig,
) -> Result<MetricsReport> {
    if test_edges.is_empty() {
        return Err(Error::usage("link prediction needs test edges"));
    }
    if cfg.neg_ratio == 0 {
        return Err(Error::config("neg_ratio must be at least 1"));
    }
    let mut r = rng::stream(cfg.seed, rng::EVAL);
    let train_pos: Vec<(u32, u32)> = train.edges().collect();
    let train_neg = sample_non_edges(train, &HashSet::new(), train_pos.len() * cfg.neg_ratio, &mut r);

    let mut pairs = train_pos.clone();
    pairs.extend(&train_neg);
    let labels: Vec<bool> = (0..pairs.len()).map(|i| i < train_pos.len()).collect();
    let x = features(u_emb, v_emb, &pairs);
    let clf = Logistic::fit(&x, &labels, cfg.lr, cfg.max_iter, cfg.tol)?;

    let test_set: HashSet<(u32, u32)> = test_edges.iter().copied().collect();
    let test_neg = sample_non_edges(train, &test_set, test_edges.len() * cfg.neg_ratio, &mut r);
    if test_neg.is_empty() {
        return Err(Error::usage("no test-time non-edges available"));
    }
    let score = |pairs: &[(u32, u32)]| {
        let f = features(u_emb, v_emb, pairs);
        (0..pairs.len()).map(|i| clf.predict(f.row(i))).collect::<Vec<_>>()
    };
    let pos = score(test_edges);
    let neg = score(&test_neg);
    let mut report = MetricsReport::new();
    report.insert("AUC-ROC", auc_roc(&pos, &neg)?);
    report.insert("AUC-PR", auc_pr(&pos, &neg)?);
    report.set_meta("classifier_iterations", clf.iterations.to_string());
    Ok(report)
}

fn features(u_emb: &Tensor, v_emb: &Tensor, pairs: &[(u32, u32)]) -> Tensor {
    let d = u_emb.cols() + v_emb.cols();
    let mut data = Vec::with_capacity(pairs.len() * d);
    for &(u, v) in pairs {
        data.extend_from_slice(u_emb.row(u as usize));
        data.extend_from_slice(v_emb.row(v as usize));
    }
    Tensor::from_vec(pairs.len(), d, data)
}

/// Up to `count` uniform pairs that are neither edges of `g` nor in
/// `also_exclude`. Sampling is with replacement; it gives up after a
/// bounded number of rejections on near-complete graphs.
fn sample_non_edges<R: Rng + ?Sized>(
    g: &BipartiteGraph,
    also_exclude: &HashSet<(u32, u32)>,
    count: usize,
    r: &mut R,
) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let budget = 100 * count.max(1);
    while out.len() < count && attempts < budget {
        attempts += 1;
        let pair = (r.random_range(0..g.num_u() as u32), r.random_range(0..g.num_v() as u32));
        if !g.has_edge(pair.0, pair.1) && !also_exclude.contains(&pair) {
            out.push(pair);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_data_is_learned() {
        let x = Tensor::from_rows(&[&[2.0, 0.1], &[1.5, -0.2], &[-1.0, 0.3], &[-2.5, 0.0]]);
        let y = [true, true, false, false];
        let clf = Logistic::fit(&x, &y, 0.1, 1000, 1e-8).unwrap();
        assert!(clf.predict(&[2.0, 0.1]) > 0.5 && clf.predict(&[-2.5, 0.0]) < 0.5);
        assert!(clf.iterations <= 1000);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = Tensor::from_rows(&[&[1.0], &[2.0]]);
        let err = Logistic::fit(&x, &[true, true], 0.1, 10, 1e-8).unwrap_err();
        assert!(err.to_string().contains("single-class"));
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let g = BipartiteGraph::from_edges(2, 2, [(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
        let u = Tensor::identity(2);
        let err = link_predict_with(&u, &u, &g, &[(0, 0)], &LinkPredConfig::default()).unwrap_err();
        assert!(err.to_string().contains("single-class"), "{err}");
    }

    #[test]
    fn threshold_graph_is_predicted() {
        // Edge iff a_u + b_v > 0, which a linear classifier on [a_u | b_v]
        // can represent exactly.
        let n = 24usize;
        let a: Vec<f64> = (0..n).map(|i| i as f64 / n as f64 - 0.5).collect();
        let edges: Vec<(u32, u32)> = (0..n as u32)
            .flat_map(|u| (0..n as u32).map(move |v| (u, v)))
            .filter(|&(u, v)| a[u as usize] + a[v as usize] > 0.0)
            .collect();
        let (test, train): (Vec<_>, Vec<_>) = edges.iter().partition(|&&(u, v)| (u * 7 + v) % 5 == 0);
        let g = BipartiteGraph::from_edges(n, n, train).unwrap();
        let emb = Tensor::from_vec(n, 1, a.clone());
        let report = link_predict_with(&emb, &emb, &g, &test, &LinkPredConfig::default()).unwrap();
        assert!(report.get("AUC-ROC").unwrap() > 0.95, "{report:?}");
        assert!(report.get("AUC-PR").unwrap() > 0.9, "{report:?}");
    }
}
