//! Monte Carlo replicas of the online estimator.
//!
//! Each replica draws its own spike `ξ` and initial estimate `x₀`, then
//! consumes `⌊p·t_max⌋` fresh samples without ever storing them. Replicas are
//! independent and run in parallel; every record is a deterministic function
//! of `(seed, replica)`.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{cosine_similarity, joint_histogram, misclassification_rate, AtomHistogram, Bins};
use super::{AlgoConfig, EstimateState};
use crate::error::{Error, Result};
use crate::model::{draw_signal_with, fill_sample, Prior, SampleStreamConfig};
use crate::rng::{stream, Purpose};

/// Law of the i.i.d. entries of the initial estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct X0Spec {
    pub mean: f64,
    pub variance: f64,
}

impl Default for X0Spec {
    fn default() -> Self {
        X0Spec { mean: std::f64::consts::FRAC_1_SQRT_2, variance: 0.5 }
    }
}

impl X0Spec {
    /// Limiting initial overlap `E[x] E[ξ] / √(E x² · E ξ²)`.
    pub fn expected_overlap(&self, prior: &Prior) -> f64 {
        self.mean * prior.mean() / (self.mean * self.mean + self.variance).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub prior: Prior,
    pub stream: SampleStreamConfig,
    pub algo: AlgoConfig,
    pub x0: X0Spec,
    pub t_max: f64,
    /// Rescaled times at which `Q` and the misclassification rate are recorded.
    pub record_times: Vec<f64>,
    /// Rescaled times at which per-atom histograms are recorded.
    pub histogram_times: Vec<f64>,
    pub bins: Bins,
    pub theta: f64,
    pub replicas: usize,
}

impl RunSpec {
    /// Defaults for a given prior: 101 bins on `[-2, 2 + 1/√ρ]`, `θ = 1/(2√ρ)`.
    pub fn with_defaults(prior: Prior, stream: SampleStreamConfig, algo: AlgoConfig, t_max: f64) -> Result<Self> {
        let rho = prior.rho();
        let bins = Bins::uniform(-2.0, 2.0 + 1.0 / rho.sqrt(), 101)?;
        Ok(RunSpec {
            prior,
            stream,
            algo,
            x0: X0Spec::default(),
            t_max,
            record_times: vec![0.0, t_max],
            histogram_times: Vec::new(),
            bins,
            theta: 0.5 / rho.sqrt(),
            replicas: 1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.stream.validate()?;
        self.algo.validate()?;
        if self.algo.p != self.stream.p {
            return Err(Error::Config(format!(
                "algorithm dimension {} differs from stream dimension {}",
                self.algo.p, self.stream.p
            )));
        }
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return Err(Error::Config(format!("t_max = {} must be >= 0", self.t_max)));
        }
        for times in [&self.record_times, &self.histogram_times] {
            if times.iter().any(|t| !(*t >= 0.0 && *t <= self.t_max)) {
                return Err(Error::Config(format!("record times must lie in [0, {}]", self.t_max)));
            }
            if times.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Config("record times must be sorted".into()));
            }
        }
        if !(self.x0.variance >= 0.0) {
            return Err(Error::Config("x0 variance must be >= 0".into()));
        }
        if !(self.theta > 0.0) {
            return Err(Error::Config(format!("misclassification threshold {} must be > 0", self.theta)));
        }
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be >= 1".into()));
        }
        Ok(())
    }

    /// Step index recorded for rescaled time `t`.
    pub fn step_at(&self, t: f64) -> u64 {
        (self.stream.p as f64 * t + 1e-9).floor() as u64
    }

    pub fn total_steps(&self) -> u64 {
        self.step_at(self.t_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSnapshot {
    pub t: f64,
    pub atoms: Vec<AtomHistogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub replica_id: u64,
    pub seed: u64,
    /// Rescaled times `k/p` actually recorded.
    pub times: Vec<f64>,
    pub q_values: Vec<f64>,
    pub misclass: Vec<f64>,
    pub histograms: Vec<HistogramSnapshot>,
}

/// Runs all replicas (in parallel) and returns their records in replica order.
pub fn run_trajectory(spec: &RunSpec) -> Result<Vec<TrajectoryRecord>> {
    spec.validate()?;
    if spec.x0.expected_overlap(&spec.prior) == 0.0 {
        log::warn!("initial estimate law gives zero expected overlap with the spike; the scaling limit assumes Q0 != 0");
    }
    (0..spec.replicas as u64).into_par_iter().map(|r| run_replica(spec, r)).collect()
}

pub fn run_replica(spec: &RunSpec, replica: u64) -> Result<TrajectoryRecord> {
    let p = spec.stream.p;
    let seed = spec.stream.seed;
    let signal = draw_signal_with(&spec.prior, p, &mut stream(seed, replica, Purpose::Signal))?;
    let x0 = {
        let mut rng = stream(seed, replica, Purpose::Initial);
        let law = Normal::new(spec.x0.mean, spec.x0.variance.sqrt())
            .map_err(|e| Error::Config(format!("x0 law: {e}")))?;
        (0..p).map(|_| law.sample(&mut rng)).collect::<Vec<f64>>()
    };
    let mut state = EstimateState::new(x0).map_err(|_| Error::DegenerateState { step: 0, replica: Some(replica) })?;
    let atoms: Vec<f64> = spec.prior.atoms().iter().map(|a| a.value).collect();
    let with_histograms = !spec.histogram_times.is_empty();
    if with_histograms && atoms.is_empty() {
        log::warn!("histograms need a discrete prior; skipping them");
    }

    let mut record = TrajectoryRecord {
        replica_id: replica,
        seed,
        times: Vec::with_capacity(spec.record_times.len()),
        q_values: Vec::with_capacity(spec.record_times.len()),
        misclass: Vec::with_capacity(spec.record_times.len()),
        histograms: Vec::new(),
    };
    let record_steps: Vec<u64> = spec.record_times.iter().map(|&t| spec.step_at(t)).collect();
    let hist_steps: Vec<u64> = spec.histogram_times.iter().map(|&t| spec.step_at(t)).collect();
    let (mut next_rec, mut next_hist) = (0, 0);

    let mut rng = stream(seed, replica, Purpose::Samples);
    let mut y = vec![0.0; p];
    let total = spec.total_steps();
    let mut k = 0u64;
    loop {
        while next_rec < record_steps.len() && record_steps[next_rec] == k {
            record.times.push(k as f64 / p as f64);
            record.q_values.push(cosine_similarity(&state.x, &signal.xi)?);
            record.misclass.push(misclassification_rate(&state.x, &signal, spec.theta)?);
            next_rec += 1;
        }
        while next_hist < hist_steps.len() && hist_steps[next_hist] == k {
            if !atoms.is_empty() {
                record.histograms.push(HistogramSnapshot {
                    t: k as f64 / p as f64,
                    atoms: joint_histogram(&state.x, &signal, &atoms, &spec.bins)?,
                });
            }
            next_hist += 1;
        }
        if k == total {
            break;
        }
        fill_sample(&signal, spec.stream.omega, &mut rng, &mut y);
        state.step(&y, &spec.algo).map_err(|e| match e {
            Error::DegenerateState { step, .. } => Error::DegenerateState { step, replica: Some(replica) },
            other => other,
        })?;
        k += 1;
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t: f64,
    pub q_mean: f64,
    /// Sample standard deviation across replicas (zero for a single replica).
    pub q_std: f64,
    pub n_replicas: usize,
}

impl SummaryRow {
    pub fn std_error(&self) -> f64 {
        self.q_std / (self.n_replicas as f64).sqrt()
    }
}

/// Mean and spread of `Q` across replicas at each recorded time.
pub fn summarize(records: &[TrajectoryRecord]) -> Vec<SummaryRow> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let n = records.len();
    (0..first.times.len())
        .map(|i| {
            let mean = records.iter().map(|r| r.q_values[i]).sum::<f64>() / n as f64;
            let var = if n > 1 {
                records.iter().map(|r| (r.q_values[i] - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            SummaryRow { t: first.times[i], q_mean: mean, q_std: var.sqrt(), n_replicas: n }
        })
        .collect()
}

/// Sums the histogram counts of all replicas at snapshot index `index`.
pub fn pool_histograms(records: &[TrajectoryRecord], index: usize, bins: &Bins) -> Option<Vec<AtomHistogram>> {
    let mut pooled = records.first()?.histograms.get(index)?.atoms.clone();
    for r in &records[1..] {
        for (acc, h) in pooled.iter_mut().zip(&r.histograms.get(index)?.atoms) {
            acc.merge(h);
        }
    }
    for h in &mut pooled {
        h.finalize(bins);
    }
    Some(pooled)
}
