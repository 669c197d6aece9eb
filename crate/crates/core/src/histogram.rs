use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Binned centroid (or scan-position) counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
    total_generated: u64,
}

impl Histogram {
    pub fn new(bin_edges: Vec<f64>, counts: Vec<u64>, total_generated: u64) -> Result<Self> {
        if bin_edges.len() < 2 {
            return Err(invalid("a histogram needs at least one bin"));
        }
        if counts.len() + 1 != bin_edges.len() {
            return Err(invalid(format!(
                "{} edges cannot bound {} bins",
                bin_edges.len(),
                counts.len()
            )));
        }
        if bin_edges.iter().any(|e| !e.is_finite()) || bin_edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("bin edges must be finite and strictly increasing"));
        }
        let accepted: u64 = counts.iter().sum();
        if accepted > total_generated {
            return Err(invalid(format!(
                "accepted count {accepted} exceeds generated count {total_generated}"
            )));
        }
        Ok(Self {
            bin_edges,
            counts,
            total_generated,
        })
    }

    /// `bins` equal bins of `width` starting at `lo`, all empty.
    pub fn uniform(lo: f64, width: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(width > 0.0) {
            return Err(invalid("uniform histogram needs positive width and at least one bin"));
        }
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        Self::new(edges, vec![0; bins], 0)
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total_generated(&self) -> u64 {
        self.total_generated
    }

    pub fn total_accepted(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Override the generated-event count (e.g. after reading a bare table).
    pub fn with_total_generated(mut self, total_generated: u64) -> Result<Self> {
        if total_generated < self.total_accepted() {
            return Err(invalid("generated count below accepted count"));
        }
        self.total_generated = total_generated;
        Ok(self)
    }

    /// Mean bin width.
    pub fn bin_width(&self) -> f64 {
        (self.bin_edges[self.bin_edges.len() - 1] - self.bin_edges[0]) / self.counts.len() as f64
    }

    pub fn span(&self) -> f64 {
        self.bin_edges[self.bin_edges.len() - 1] - self.bin_edges[0]
    }

    /// Bin containing `x` under the half-open rule.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if x < self.bin_edges[0] || x >= self.bin_edges[self.bin_edges.len() - 1] {
            return None;
        }
        // partition_point gives the first edge > x
        Some(self.bin_edges.partition_point(|&e| e <= x) - 1)
    }

    pub fn non_empty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn mean(&self) -> Option<f64> {
        let total = self.total_accepted();
        if total == 0 {
            return None;
        }
        let s: f64 = self.centers().iter().zip(&self.counts).map(|(x, &c)| x * c as f64).sum();
        Some(s / total as f64)
    }

    /// Same bins, translated by `shift`.
    pub fn translated(&self, shift: f64) -> Self {
        Self {
            bin_edges: self.bin_edges.iter().map(|e| e + shift).collect(),
            counts: self.counts.clone(),
            total_generated: self.total_generated,
        }
    }

    /// Counts multiplied by `k` (generated events too).
    pub fn scaled(&self, k: u64) -> Self {
        Self {
            bin_edges: self.bin_edges.clone(),
            counts: self.counts.iter().map(|c| c * k).collect(),
            total_generated: self.total_generated * k,
        }
    }

    /// Bin-wise sum of two histograms with identical edges.
    pub fn merged(&self, other: &Histogram) -> Result<Self> {
        if self.bin_edges != other.bin_edges {
            return Err(invalid("cannot merge histograms with different bins"));
        }
        Ok(Self {
            bin_edges: self.bin_edges.clone(),
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            total_generated: self.total_generated + other.total_generated,
        })
    }
}
