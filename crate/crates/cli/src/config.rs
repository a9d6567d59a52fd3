//! Experiment configuration: a TOML key tree whose every field has a default.
//!
//! The defaults reproduce the sparse example of the original study:
//! `ρ = 0.05`, `τ = 0.5`, `β = 0.27`, `ω = 1`, `p = 10⁴`, `x₀ ~ N(1/√2, 1/2)`.

use serde::{Deserialize, Serialize};

use oist_core::model::{discretize_prior, Atom, Prior, SampleStreamConfig};
use oist_core::online::{AlgoConfig, Bins, RunSpec, Threshold, X0Spec};
use oist_core::pde::{FluxScheme, Grid, PdeConfig, TimeStep};
use oist_core::steady::{FixedPointOptions, SteadyConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub algorithm: AlgorithmSection,
    pub initial: InitialSection,
    pub simulation: SimulationSection,
    pub pde: PdeSection,
    pub oja: OjaSection,
    pub steady: SteadySection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorName {
    TwoPoint,
    SignedTwoPoint,
    BernoulliGaussian,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub prior: PriorName,
    pub rho: f64,
    /// Explicit atoms for `prior = "discrete"`.
    pub atoms: Vec<Atom>,
    /// Gauss–Hermite nodes used when a continuous prior enters the PDE or steady state.
    pub quadrature_nodes: usize,
    pub omega: f64,
    pub p: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { prior: PriorName::TwoPoint, rho: 0.05, atoms: Vec::new(), quadrature_nodes: 21, omega: 1.0, p: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdName {
    None,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmSection {
    pub tau: f64,
    pub threshold: ThresholdName,
    pub beta: f64,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        AlgorithmSection { tau: 0.5, threshold: ThresholdName::Soft, beta: 0.27 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub mean: f64,
    pub variance: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        let d = X0Spec::default();
        InitialSection { mean: d.mean, variance: d.variance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub t_max: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Explicit record times; when empty, every `record_interval` from 0 to `t_max`.
    pub record_times: Vec<f64>,
    pub record_interval: f64,
    /// Times of the per-atom histograms (those beyond `t_max` are dropped).
    pub histogram_times: Vec<f64>,
    /// Histogram range; defaults to `[-2, 2 + 1/√ρ]`.
    pub hist_min: Option<f64>,
    pub hist_max: Option<f64>,
    pub hist_bins: usize,
    /// Support-recovery threshold; defaults to `1/(2√ρ)`.
    pub theta: Option<f64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            t_max: 15.0,
            replicas: 120,
            seed: 1,
            record_times: Vec::new(),
            record_interval: 0.5,
            histogram_times: vec![1.0, 15.0],
            hist_min: None,
            hist_max: None,
            hist_bins: 101,
            theta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtSetting {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeSection {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    /// `"auto"` or a fixed step.
    pub dt: DtSetting,
    pub cfl: f64,
    pub t_max: f64,
    /// Times of the density snapshots.
    pub record_times: Vec<f64>,
    /// Spacing of the `(t, Q, R)` series.
    pub series_interval: f64,
    pub scheme: FluxScheme,
}

impl Default for PdeSection {
    fn default() -> Self {
        let g = Grid::default();
        PdeSection {
            x_min: g.x_min,
            x_max: g.x_max,
            n: g.n,
            dt: DtSetting::Named("auto".into()),
            cfl: 0.9,
            t_max: 15.0,
            record_times: vec![1.0, 15.0],
            series_interval: 0.1,
            scheme: FluxScheme::ExponentialFitting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OjaSection {
    /// Initial overlap; defaults to the limit implied by the initial law and prior.
    pub q0: Option<f64>,
    pub t_max: f64,
    pub dt_out: f64,
}

impl Default for OjaSection {
    fn default() -> Self {
        OjaSection { q0: None, t_max: 15.0, dt_out: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadySection {
    /// Starting overlaps `Q₀` (with `R₀ = 0`) of the multi-start iteration.
    pub starts: Vec<f64>,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SteadySection {
    fn default() -> Self {
        let o = FixedPointOptions::default();
        SteadySection { starts: oist_core::steady::SWEEP_STARTS.to_vec(), damping: o.damping, tol: o.tol, max_iter: o.max_iter }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { omega_min: 0.05, omega_max: 1.0, n_points: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: String,
    pub format: Format,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { directory: "out".into(), format: Format::Csv }
    }
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    /// Parses a TOML document, then applies `key.path=value` overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(format!("config: {e}")))
    }

    /// The prior as sampled by the simulator (continuous priors stay continuous).
    pub fn prior(&self) -> Result<Prior, CliError> {
        let m = &self.model;
        let prior = match m.prior {
            PriorName::TwoPoint => Prior::two_point(m.rho),
            PriorName::SignedTwoPoint => Prior::signed_two_point(m.rho),
            PriorName::BernoulliGaussian => Prior::bernoulli_gaussian(m.rho),
            PriorName::Discrete => {
                if m.atoms.is_empty() {
                    return Err(config_err("model.atoms", "a discrete prior needs at least one atom"));
                }
                Prior::discrete(m.atoms.clone())
            }
        };
        prior.map_err(|e| config_err("model", e))
    }

    /// The prior as a finite set of atoms, for the PDE and the steady state.
    pub fn discrete_prior(&self) -> Result<Prior, CliError> {
        discretize_prior(&self.prior()?, self.model.quadrature_nodes).map_err(|e| config_err("model.quadrature_nodes", e))
    }

    pub fn threshold(&self) -> Result<Threshold, CliError> {
        let t = match self.algorithm.threshold {
            ThresholdName::None => Threshold::None,
            ThresholdName::Soft => Threshold::soft(self.algorithm.beta),
        };
        t.validate().map_err(|e| config_err("algorithm.beta", e))?;
        Ok(t)
    }

    pub fn x0(&self) -> X0Spec {
        X0Spec { mean: self.initial.mean, variance: self.initial.variance }
    }

    fn check_initial_overlap(&self, prior: &Prior) -> Result<(), CliError> {
        if self.x0().expected_overlap(prior) == 0.0 {
            return Err(config_err(
                "initial",
                "the initial law gives Q0 = 0 (zero mean or E[xi] = 0); the scaling limit assumes a nonzero initial overlap",
            ));
        }
        Ok(())
    }

    fn check_positive(field: &str, v: f64) -> Result<(), CliError> {
        if !(v > 0.0) || !v.is_finite() {
            return Err(config_err(field, format!("{v} must be a positive number")));
        }
        Ok(())
    }

    pub fn run_spec(&self) -> Result<RunSpec, CliError> {
        let prior = self.prior()?;
        self.check_initial_overlap(&prior)?;
        let s = &self.simulation;
        let m = &self.model;
        let stream = SampleStreamConfig { omega: m.omega, p: m.p, seed: s.seed };
        let algo = AlgoConfig { tau: self.algorithm.tau, threshold: self.threshold()?, p: m.p };
        if !(s.t_max >= 0.0) || !s.t_max.is_finite() {
            return Err(config_err("simulation.t_max", format!("{} must be >= 0", s.t_max)));
        }
        let mut spec = RunSpec::with_defaults(prior, stream, algo, s.t_max).map_err(|e| config_err("model", e))?;
        spec.x0 = self.x0();
        spec.replicas = s.replicas;
        spec.record_times = if s.record_times.is_empty() {
            Self::check_positive("simulation.record_interval", s.record_interval)?;
            let n = (s.t_max / s.record_interval + 1e-9).floor() as usize;
            let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * s.record_interval).collect();
            if (times[n] - s.t_max).abs() > 1e-9 {
                times.push(s.t_max);
            }
            times
        } else {
            s.record_times.clone()
        };
        spec.histogram_times = s.histogram_times.iter().copied().filter(|t| *t <= s.t_max).collect();
        let rho = m.rho;
        let lo = s.hist_min.unwrap_or(-2.0);
        let hi = s.hist_max.unwrap_or(2.0 + 1.0 / rho.sqrt());
        spec.bins = Bins::uniform(lo, hi, s.hist_bins).map_err(|e| config_err("simulation.hist_*", e))?;
        if let Some(theta) = s.theta {
            spec.theta = theta;
        }
        spec.validate().map_err(|e| config_err("simulation", e))?;
        Ok(spec)
    }

    pub fn pde_config(&self) -> Result<PdeConfig, CliError> {
        let p = &self.pde;
        let mut cfg = PdeConfig::new(self.algorithm.tau, self.model.omega, self.threshold()?);
        cfg.grid = Grid::new(p.x_min, p.x_max, p.n).map_err(|e| config_err("pde.grid", e))?;
        cfg.dt = match &p.dt {
            DtSetting::Fixed(dt) => TimeStep::Fixed(*dt),
            DtSetting::Named(name) if name == "auto" => TimeStep::Auto,
            DtSetting::Named(name) => return Err(config_err("pde.dt", format!("expected \"auto\" or a number, got {name:?}"))),
        };
        cfg.cfl = p.cfl;
        cfg.t_max = p.t_max;
        cfg.scheme = p.scheme;
        Self::check_positive("pde.series_interval", p.series_interval)?;
        cfg.series_interval = Some(p.series_interval);
        cfg.validate().map_err(|e| config_err("pde", e))?;
        if p.record_times.iter().any(|t| !(*t >= 0.0 && *t <= p.t_max)) {
            return Err(config_err("pde.record_times", format!("must lie in [0, {}]", p.t_max)));
        }
        self.check_initial_overlap(&self.prior()?)?;
        Ok(cfg)
    }

    pub fn steady_config(&self) -> Result<SteadyConfig, CliError> {
        SteadyConfig::new(self.algorithm.tau, self.model.omega, self.threshold()?).map_err(|e| config_err("algorithm", e))
    }

    pub fn fixed_point_options(&self) -> Result<FixedPointOptions, CliError> {
        let s = &self.steady;
        let opts = FixedPointOptions { damping: s.damping, tol: s.tol, max_iter: s.max_iter, ..FixedPointOptions::default() };
        opts.validate().map_err(|e| config_err("steady", e))?;
        if s.starts.is_empty() {
            return Err(config_err("steady.starts", "needs at least one starting overlap"));
        }
        Ok(opts)
    }

    pub fn sweep_grid(&self) -> Result<Vec<f64>, CliError> {
        let s = &self.sweep;
        if !(s.omega_min >= 0.0) || !(s.omega_max > s.omega_min) || s.n_points < 2 {
            return Err(config_err("sweep", "need 0 <= omega_min < omega_max and n_points >= 2"));
        }
        Ok(oist_core::steady::linspace(s.omega_min, s.omega_max, s.n_points))
    }
}

/// Sets `a.b.c = value` in a TOML table; the value is parsed as TOML, or kept as a string.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set {item:?}: expected key.path=value")))?;
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields one element");
    let mut node = table;
    for key in parents {
        node = node
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--set {item:?}: {key} is not a section")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}
