//! The online estimator: Oja's rule with an optional elementwise
//! soft-thresholding correction, plus the metrics and Monte Carlo runner
//! built on top of it.

mod metrics;
mod runner;

pub use metrics::{cosine_similarity, joint_histogram, misclassification_rate, AtomHistogram, Bins};
pub use runner::{
    pool_histograms, run_replica, run_trajectory, summarize, HistogramSnapshot, RunSpec, SummaryRow,
    TrajectoryRecord, X0Spec,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparsity-promoting correction `φ` applied through `η(x) = x - φ(x)/p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Threshold {
    /// `φ = 0`: plain Oja.
    None,
    /// `φ(x) = β sgn(x)`, with `sgn(0) = 0`.
    Soft { beta: f64 },
}

impl Threshold {
    pub fn soft(beta: f64) -> Self {
        Threshold::Soft { beta }
    }

    #[inline]
    pub fn phi(&self, x: f64) -> f64 {
        match *self {
            Threshold::None => 0.0,
            Threshold::Soft { beta } => {
                if x > 0.0 {
                    beta
                } else if x < 0.0 {
                    -beta
                } else {
                    0.0
                }
            }
        }
    }

    /// `β`, or zero for plain Oja.
    pub fn beta(&self) -> f64 {
        match *self {
            Threshold::None => 0.0,
            Threshold::Soft { beta } => beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Threshold::Soft { beta } if !(beta >= 0.0) || !beta.is_finite() => {
                Err(Error::Config(format!("threshold beta = {beta} must be >= 0")))
            }
            _ => Ok(()),
        }
    }
}

pub fn phi_eval(x: f64, threshold: Threshold) -> f64 {
    threshold.phi(x)
}

/// Elementwise `η(x) = x - φ(x)/p`.
pub fn eta_map(x: &[f64], threshold: Threshold, p: usize) -> Vec<f64> {
    let inv_p = 1.0 / p as f64;
    x.iter().map(|&v| v - threshold.phi(v) * inv_p).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub tau: f64,
    pub threshold: Threshold,
    pub p: usize,
}

impl AlgoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("step size tau = {} must be > 0", self.tau)));
        }
        if self.p < 2 {
            return Err(Error::Config(format!("dimension p = {} must be at least 2", self.p)));
        }
        self.threshold.validate()
    }
}

/// Current estimate, kept on the sphere `‖x‖² = p`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateState {
    pub x: Vec<f64>,
    pub k: u64,
}

impl EstimateState {
    /// Rescales `x` onto the sphere of radius `√p`.
    pub fn new(mut x: Vec<f64>) -> Result<Self> {
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        if !(norm_sq > 0.0) {
            return Err(Error::DegenerateState { step: 0, replica: None });
        }
        let scale = (x.len() as f64 / norm_sq).sqrt();
        x.iter_mut().for_each(|v| *v *= scale);
        Ok(EstimateState { x, k: 0 })
    }

    /// One update `x̃ = x + (τ/p) y yᵀx`, `x ← √p η(x̃)/‖η(x̃)‖`, in place.
    pub fn step(&mut self, y: &[f64], cfg: &AlgoConfig) -> Result<()> {
        debug_assert_eq!(y.len(), self.x.len());
        let p = self.x.len() as f64;
        let inv_p = 1.0 / p;
        let dot = lane_dot(y, &self.x);
        let coef = cfg.tau * inv_p * dot;
        for (xi, yi) in self.x.iter_mut().zip(y) {
            *xi += coef * yi;
        }
        if let Threshold::Soft { beta } = cfg.threshold {
            let shift = beta * inv_p;
            for v in self.x.iter_mut() {
                // branch-free sgn: signs of fresh iterates are unpredictable
                *v -= shift * (((*v > 0.0) as i32 - (*v < 0.0) as i32) as f64);
            }
        }
        let norm_sq = lane_dot(&self.x, &self.x);
        self.k += 1;
        if !(norm_sq > 0.0) || !norm_sq.is_finite() {
            return Err(Error::DegenerateState { step: self.k, replica: None });
        }
        let scale = (p / norm_sq).sqrt();
        self.x.iter_mut().for_each(|v| *v *= scale);
        Ok(())
    }
}

/// `Σ aᵢbᵢ` with four interleaved partial sums.
#[inline]
fn lane_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(u, v)| u * v).sum();
    for (u, v) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += u[l] * v[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Functional form of [`EstimateState::step`].
pub fn oist_step(state: &EstimateState, y: &[f64], cfg: &AlgoConfig) -> Result<EstimateState> {
    let mut next = state.clone();
    next.step(y, cfg)?;
    Ok(next)
}
