use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SignalVector;

/// `xᵀξ / (‖x‖ ‖ξ‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(x: &[f64], xi: &[f64]) -> Result<f64> {
    if x.len() != xi.len() {
        return Err(Error::Config(format!("length mismatch: {} vs {}", x.len(), xi.len())));
    }
    let (mut dot, mut nx, mut nxi) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(xi) {
        dot += a * b;
        nx += a * a;
        nxi += b * b;
    }
    if nx == 0.0 || nxi == 0.0 {
        return Err(Error::UndefinedMetric("cosine similarity of a zero vector"));
    }
    Ok((dot / (nx.sqrt() * nxi.sqrt())).clamp(-1.0, 1.0))
}

/// Fraction of coordinates whose estimated support `|x_i| > θ` disagrees with `ξ_i ≠ 0`.
pub fn misclassification_rate(x: &[f64], xi: &SignalVector, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Config(format!("misclassification threshold {theta} must be > 0")));
    }
    let wrong = x
        .iter()
        .zip(&xi.xi)
        .filter(|(a, b)| (a.abs() > theta) != (**b != 0.0))
        .count();
    Ok(wrong as f64 / x.len() as f64)
}

/// Histogram bin edges, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bins {
    edges: Vec<f64>,
    uniform: bool,
}

impl Bins {
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 || !(hi > lo) {
            return Err(Error::Config(format!("invalid uniform bins [{lo}, {hi}] x {n}")));
        }
        let w = (hi - lo) / n as f64;
        let edges = (0..=n).map(|i| lo + i as f64 * w).collect();
        Ok(Bins { edges, uniform: true })
    }

    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("bin edges must be strictly increasing".into()));
        }
        Ok(Bins { edges, uniform: false })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Bin index of `v`; the last bin is closed on the right.
    pub fn locate(&self, v: f64) -> Option<usize> {
        let n = self.len();
        let (lo, hi) = (self.edges[0], self.edges[n]);
        if !(v >= lo && v <= hi) {
            return None;
        }
        let idx = if self.uniform {
            (((v - lo) / (hi - lo)) * n as f64) as usize
        } else {
            self.edges.partition_point(|e| *e <= v).saturating_sub(1)
        };
        Some(idx.min(n - 1))
    }
}

/// Empirical conditional law of `x` given one atom value of `ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomHistogram {
    pub atom: f64,
    pub counts: Vec<u64>,
    /// Coordinates with this atom that fell inside the bin range.
    pub in_range: u64,
    pub outside: u64,
    /// Normalized over in-range points; `None` when no coordinate landed in range.
    pub density: Option<Vec<f64>>,
}

impl AtomHistogram {
    fn empty(atom: f64, bins: usize) -> Self {
        AtomHistogram { atom, counts: vec![0; bins], in_range: 0, outside: 0, density: None }
    }

    pub(crate) fn finalize(&mut self, bins: &Bins) {
        self.density = if self.in_range == 0 {
            None
        } else {
            let n = self.in_range as f64;
            Some(self.counts.iter().zip(bins.widths()).map(|(c, w)| *c as f64 / (n * w)).collect())
        };
    }

    pub(crate) fn merge(&mut self, other: &AtomHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.in_range += other.in_range;
        self.outside += other.outside;
    }
}

/// Histograms of `{x_i : ξ_i = a}` for each atom value `a`.
pub fn joint_histogram(x: &[f64], xi: &SignalVector, atoms: &[f64], bins: &Bins) -> Result<Vec<AtomHistogram>> {
    let mut out: Vec<AtomHistogram> = atoms.iter().map(|&a| AtomHistogram::empty(a, bins.len())).collect();
    for (&xv, &sv) in x.iter().zip(&xi.xi) {
        let Some(slot) = atoms.iter().position(|&a| a == sv) else {
            return Err(Error::Config(format!("signal entry {sv} is not an atom of the prior")));
        };
        let h = &mut out[slot];
        match bins.locate(xv) {
            Some(b) => {
                h.counts[b] += 1;
                h.in_range += 1;
            }
            None => h.outside += 1,
        }
    }
    for h in &mut out {
        h.finalize(bins);
    }
    Ok(out)
}
