//! Evaluation: top-K ranking, link prediction, clustering and pair-score
//! dumps.

use std::fmt::{self, Write as _};

pub mod cluster;
pub mod linkpred;
pub mod metrics;
pub mod pairs;
pub mod topk;

pub use cluster::clustering_analysis;
pub use linkpred::{link_predict_evaluate, LinkPredConfig};
pub use pairs::{dump_pair_scores, PairScore};
pub use topk::topk_evaluate;

/// Named metric values in insertion order, plus free-form metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    metrics: Vec<(String, f64)>,
    metadata: Vec<(String, String)>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a metric.
    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        let name = name.into();
        match self.metrics.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = value,
            None => self.metrics.push((name, value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn metrics(&self) -> &[(String, f64)] {
        &self.metrics
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.metadata.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.metadata.push((key, value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn metadata(&self) -> &[(String, String)] {
        &self.metadata
    }

    /// Appends `other`'s metrics and metadata, `other` winning on clashes.
    pub fn merge(&mut self, other: &MetricsReport) {
        for (n, v) in &other.metrics {
            self.insert(n.clone(), *v);
        }
        for (k, v) in &other.metadata {
            self.set_meta(k.clone(), v.clone());
        }
    }

    /// CSV `metric,value`. Infinite values print as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (n, v) in &self.metrics {
            let _ = writeln!(out, "{n},{v}");
        }
        out
    }

    /// Parses the output of [`MetricsReport::to_csv`].
    pub fn from_csv(text: &str) -> crate::Result<Self> {
        let mut report = MetricsReport::new();
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("metric,value") {
            return Err(crate::Error::usage("metrics CSV must start with `metric,value`"));
        }
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (n, v) = line
                .split_once(',')
                .ok_or_else(|| crate::Error::usage(format!("malformed metrics row `{line}`")))?;
            let v = v
                .trim()
                .parse()
                .map_err(|_| crate::Error::usage(format!("malformed metric value `{v}`")))?;
            report.insert(n.trim(), v);
        }
        Ok(report)
    }
}

impl fmt::Display for MetricsReport {
    /// Aligned two-column table, metadata first.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .metrics
            .iter()
            .map(|(n, _)| n.len())
            .chain(self.metadata.iter().map(|(k, _)| k.len()))
            .max()
            .unwrap_or(0);
        for (k, v) in &self.metadata {
            writeln!(f, "{k:<width$}  {v}")?;
        }
        for (n, v) in &self.metrics {
            writeln!(f, "{n:<width$}  {v:.4}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_order_and_infinity() {
        let mut r = MetricsReport::new();
        r.insert("NDCG@3", 0.25);
        r.insert("CHI@2", f64::INFINITY);
        r.insert("NDCG@3", 0.5);
        r.set_meta("dataset", "toy");
        let csv = r.to_csv();
        assert_eq!(csv, "metric,value\nNDCG@3,0.5\nCHI@2,inf\n");
        let back = MetricsReport::from_csv(&csv).unwrap();
        assert_eq!(back.metrics(), r.metrics());
        assert!(r.to_string().contains("dataset"));
    }
}
