//! k-means with k-means++ seeding and the Calinski-Harabasz index.

use rand::Rng;

use super::MetricsReport;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng;

pub const RESTARTS: usize = 10;
const MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centroids: Tensor,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::usage(format!("need at least 2 clusters, got {k}")));
    }
    if k >= n {
        return Err(Error::usage(format!("{k} clusters need more than {k} points, got {n}")));
    }
    Ok(())
}

/// Best of `restarts` Lloyd runs by inertia.
pub fn kmeans<R: Rng + ?Sized>(points: &Tensor, k: usize, restarts: usize, rng: &mut R) -> Result<KMeans> {
    check_k(points.rows(), k)?;
    if !points.all_finite() {
        return Err(Error::Numeric { op: "kmeans" });
    }
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, seed_plus_plus(points, k, rng), k);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

fn seed_plus_plus<R: Rng + ?Sized>(points: &Tensor, k: usize, rng: &mut R) -> Tensor {
    let n = points.rows();
    let mut centroids = Tensor::zeros(k, points.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if t < w {
                    idx = i;
                    break;
                }
                t -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    centroids
}

fn lloyd(points: &Tensor, mut centroids: Tensor, k: usize) -> KMeans {
    let (n, d) = (points.rows(), points.cols());
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let best = nearest(points.row(i), &centroids);
            if best != *label {
                *label = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Tensor::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, x) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed an empty cluster at the point farthest from its centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(points.row(a), centroids.row(labels[a]));
                        let db = sq_dist(points.row(b), centroids.row(labels[b]));
                        da.total_cmp(&db)
                    })
                    .unwrap();
                centroids.row_mut(c).copy_from_slice(points.row(far));
            } else {
                for (m, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *m = s / counts[c] as f64;
                }
            }
        }
    }
    let inertia = (0..n).map(|i| sq_dist(points.row(i), centroids.row(labels[i]))).sum();
    KMeans {
        labels,
        centroids,
        inertia,
    }
}

fn nearest(x: &[f64], centroids: &Tensor) -> usize {
    let mut best = (f64::INFINITY, 0);
    for c in 0..centroids.rows() {
        let d = sq_dist(x, centroids.row(c));
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

/// `[tr(B) / (k - 1)] / [tr(W) / (n - k)]`. Returns `+inf` when the
/// within-cluster dispersion is zero.
pub fn calinski_harabasz(points: &Tensor, labels: &[usize], k: usize) -> Result<f64> {
    let (n, d) = (points.rows(), points.cols());
    check_k(n, k)?;
    if labels.len() != n || labels.iter().any(|&l| l >= k) {
        return Err(Error::usage("labels do not match the points"));
    }
    let overall = points.mean_rows();
    let mut sums = Tensor::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, x) in sums.row_mut(l).iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    let mut means = sums;
    for c in 0..k {
        if counts[c] > 0 {
            for m in means.row_mut(c) {
                *m /= counts[c] as f64;
            }
        }
    }
    let between: f64 = (0..k)
        .map(|c| counts[c] as f64 * sq_dist(means.row(c), overall.row(0)))
        .sum();
    let within: f64 = (0..n).map(|i| sq_dist(points.row(i), means.row(labels[i]))).sum();
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}

/// `CHI@k` for every requested `k`, each from the best of
/// [`RESTARTS`] k-means runs.
pub fn clustering_analysis(embeddings: &Tensor, ks: &[usize], seed: u64) -> Result<MetricsReport> {
    let mut report = MetricsReport::new();
    for &k in ks {
        let mut r = rng::stream(seed, rng::EVAL);
        let km = kmeans(embeddings, k, RESTARTS, &mut r)?;
        report.insert(format!("CHI@{k}"), calinski_harabasz(embeddings, &km.labels, k)?);
    }
    Ok(report)
}
