//! Sparse prior on the spike entries and the spiked-covariance sample stream.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_hermite;

const WEIGHT_TOL: f64 = 1e-12;
const MOMENT_TOL: f64 = 1e-10;
const QUADRATURE_MOMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// `(1-ρ) δ(ξ) + ρ δ(ξ - 1/√ρ)`.
    TwoPoint,
    /// `(1-ρ) δ(ξ) + (ρ/2) [δ(ξ - 1/√ρ) + δ(ξ + 1/√ρ)]`.
    SignedTwoPoint,
    /// `(1-ρ) δ(ξ) + ρ N(0, 1/ρ)`.
    BernoulliGaussian,
    /// Arbitrary finite mixture given explicitly.
    DiscreteAtoms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub weight: f64,
}

/// Marginal law of one spike entry: an atom at zero of mass `1-ρ` plus a
/// nonzero part normalized so that `E ξ² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    kind: PriorKind,
    rho: f64,
    /// Empty for `BernoulliGaussian` until discretized.
    atoms: Vec<Atom>,
}

impl Prior {
    pub fn two_point(rho: f64) -> Result<Self> {
        check_rho(rho)?;
        let nz = 1.0 / rho.sqrt();
        let atoms = if rho == 1.0 {
            vec![Atom { value: nz, weight: 1.0 }]
        } else {
            vec![Atom { value: 0.0, weight: 1.0 - rho }, Atom { value: nz, weight: rho }]
        };
        Self::build(PriorKind::TwoPoint, rho, atoms)
    }

    pub fn signed_two_point(rho: f64) -> Result<Self> {
        check_rho(rho)?;
        let nz = 1.0 / rho.sqrt();
        let mut atoms = vec![
            Atom { value: -nz, weight: 0.5 * rho },
            Atom { value: nz, weight: 0.5 * rho },
        ];
        if rho < 1.0 {
            atoms.insert(1, Atom { value: 0.0, weight: 1.0 - rho });
        }
        Self::build(PriorKind::SignedTwoPoint, rho, atoms)
    }

    pub fn bernoulli_gaussian(rho: f64) -> Result<Self> {
        check_rho(rho)?;
        Ok(Prior { kind: PriorKind::BernoulliGaussian, rho, atoms: Vec::new() })
    }

    /// Explicit atoms; `rho` is taken as the total nonzero mass.
    pub fn discrete(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Config("discrete prior needs at least one atom".into()));
        }
        let rho: f64 = atoms.iter().filter(|a| a.value != 0.0).map(|a| a.weight).sum();
        check_rho(rho)?;
        Self::build(PriorKind::DiscreteAtoms, rho, atoms)
    }

    fn build(kind: PriorKind, rho: f64, atoms: Vec<Atom>) -> Result<Self> {
        let prior = Prior { kind, rho, atoms };
        prior.validate()?;
        Ok(prior)
    }

    /// Checks the weight and second-moment invariants.
    pub fn validate(&self) -> Result<()> {
        check_rho(self.rho)?;
        if self.kind == PriorKind::BernoulliGaussian && self.atoms.is_empty() {
            return Ok(());
        }
        if self.atoms.iter().any(|a| !(a.weight >= 0.0) || !a.value.is_finite()) {
            return Err(Error::Config("atom weights must be nonnegative and values finite".into()));
        }
        let total = self.total_weight();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Config(format!("prior weights sum to {total}, not 1")));
        }
        let m2 = self.second_moment();
        if (m2 - 1.0).abs() > MOMENT_TOL {
            return Err(Error::Config(format!("prior second moment is {m2}, not 1")));
        }
        Ok(())
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_discrete(&self) -> bool {
        !self.atoms.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    pub fn second_moment(&self) -> f64 {
        if !self.is_discrete() {
            return 1.0;
        }
        self.atoms.iter().map(|a| a.weight * a.value * a.value).sum()
    }

    pub fn mean(&self) -> f64 {
        if !self.is_discrete() {
            return 0.0;
        }
        self.atoms.iter().map(|a| a.weight * a.value).sum()
    }

    /// Variance of `ξ²`, which controls how fast `‖ξ‖²/p` concentrates.
    pub fn variance_of_square(&self) -> f64 {
        let m4 = match self.kind {
            // E ξ⁴ = ρ · 3/ρ²
            PriorKind::BernoulliGaussian if !self.is_discrete() => 3.0 / self.rho,
            _ => self.atoms.iter().map(|a| a.weight * a.value.powi(4)).sum(),
        };
        m4 - self.second_moment().powi(2)
    }

    /// Draws one entry.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            PriorKind::BernoulliGaussian if !self.is_discrete() => {
                if rng.random::<f64>() < self.rho {
                    let z: f64 = StandardNormal.sample(rng);
                    z / self.rho.sqrt()
                } else {
                    0.0
                }
            }
            _ => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for atom in &self.atoms {
                    acc += atom.weight;
                    if u < acc {
                        return atom.value;
                    }
                }
                self.atoms.last().map(|a| a.value).unwrap_or(0.0)
            }
        }
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("sparsity level rho = {rho} must lie in (0, 1]")))
    }
}

/// Replaces a continuous nonzero law by `n_nodes` Gauss–Hermite atoms.
///
/// Discrete priors are returned unchanged. For Bernoulli–Gaussian the nodes
/// carry total weight `ρ` and are scaled to variance `1/ρ`; an odd rule puts
/// one node at zero, which is merged with the zero atom.
pub fn discretize_prior(prior: &Prior, n_nodes: usize) -> Result<Prior> {
    if n_nodes < 1 {
        return Err(Error::Config("n_nodes must be at least 1".into()));
    }
    if prior.is_discrete() {
        return Ok(prior.clone());
    }
    let rho = prior.rho;
    let rule = gauss_hermite(n_nodes);
    let norm = std::f64::consts::PI.sqrt();
    // ∫ g(x) N(0, σ²) dx = Σ w_i/√π g(√2 σ t_i)
    let scale = (2.0 / rho).sqrt();
    let mut zero_weight = 1.0 - rho;
    let mut atoms = Vec::with_capacity(n_nodes + 1);
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        let value = scale * t;
        let weight = rho * w / norm;
        if value == 0.0 {
            zero_weight += weight;
        } else {
            atoms.push(Atom { value, weight });
        }
    }
    if zero_weight > 0.0 {
        let at = atoms.partition_point(|a| a.value < 0.0);
        atoms.insert(at, Atom { value: 0.0, weight: zero_weight });
    }
    let out = Prior { kind: PriorKind::DiscreteAtoms, rho, atoms };
    let m2 = out.second_moment();
    if (m2 - 1.0).abs() > QUADRATURE_MOMENT_TOL {
        return Err(Error::QuadratureInadequate { second_moment: m2, tolerance: QUADRATURE_MOMENT_TOL });
    }
    let total = out.total_weight();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::Inconsistent(format!("discretized weights sum to {total}")));
    }
    Ok(out)
}

/// The unknown spike `ξ ∈ ℝ^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector {
    pub xi: Vec<f64>,
}

impl SignalVector {
    pub fn p(&self) -> usize {
        self.xi.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.xi.iter().map(|v| v * v).sum()
    }
}

/// Draws `p` i.i.d. entries from the prior, deterministically in `seed`.
pub fn draw_signal(prior: &Prior, p: usize, seed: u64) -> Result<SignalVector> {
    let mut rng = crate::rng::stream(seed, 0, crate::rng::Purpose::Signal);
    draw_signal_with(prior, p, &mut rng)
}

pub fn draw_signal_with<R: Rng + ?Sized>(prior: &Prior, p: usize, rng: &mut R) -> Result<SignalVector> {
    if p < 2 {
        return Err(Error::Config(format!("dimension p = {p} must be at least 2")));
    }
    prior.validate()?;
    Ok(SignalVector { xi: (0..p).map(|_| prior.sample(rng)).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStreamConfig {
    pub omega: f64,
    pub p: usize,
    pub seed: u64,
}

impl SampleStreamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega >= 0.0) || !self.omega.is_finite() {
            return Err(Error::Config(format!("SNR omega = {} must be >= 0", self.omega)));
        }
        if self.p < 2 {
            return Err(Error::Config(format!("dimension p = {} must be at least 2", self.p)));
        }
        Ok(())
    }
}

/// Writes `y = √(ω/p) c ξ + a` into `out` for given draws `c` and `a`.
pub fn compose_sample(signal: &SignalVector, omega: f64, c: f64, a: &[f64], out: &mut [f64]) {
    let s = (omega / signal.p() as f64).sqrt() * c;
    for ((o, xi), ai) in out.iter_mut().zip(&signal.xi).zip(a) {
        *o = s * xi + ai;
    }
}

/// Fills `out` with a fresh spiked-covariance sample.
pub fn fill_sample<R: Rng + ?Sized>(signal: &SignalVector, omega: f64, rng: &mut R, out: &mut [f64]) {
    let c: f64 = StandardNormal.sample(rng);
    let s = (omega / signal.p() as f64).sqrt() * c;
    for (o, xi) in out.iter_mut().zip(&signal.xi) {
        let a: f64 = StandardNormal.sample(rng);
        *o = s * xi + a;
    }
}

/// Fresh sample `y` of length `p`.
pub fn next_sample<R: Rng + ?Sized>(signal: &SignalVector, omega: f64, rng: &mut R) -> Vec<f64> {
    let mut y = vec![0.0; signal.p()];
    fill_sample(signal, omega, rng, &mut y);
    y
}
