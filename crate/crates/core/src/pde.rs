//! Limiting drift–diffusion PDE for the conditional densities `P_t(x | ξ)`.
//!
//! For every atom `ξ_j` of the prior the density obeys
//!
//! ```text
//! ∂_t P = -∂_x [Γ(x, ξ_j, Q, R) P] + D(Q) ∂²_x P,   D(Q) = τ²(1 + ωQ²)/2
//! ```
//!
//! and the equations are coupled only through the moments
//! `Q = E_ξ[ξ ∫ x P]` and `R = E_ξ[∫ x φ(x) P]`. The solver is an explicit
//! finite-volume scheme with zero-flux walls: the densities advance with
//! `(Q, R)` frozen at the start of the step, then the moments are refreshed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Atom, Prior};
use crate::online::Threshold;

/// Cells below this value after a step are rounding noise and are clipped to zero.
pub const CLIP_FLOOR: f64 = 1e-14;
/// Distance kept between the outermost atom value and the domain wall.
pub const ATOM_MARGIN: f64 = 3.5;
const MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 50 {
            return Err(Error::Config(format!("grid needs at least 50 cells, got {n}")));
        }
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::Config(format!("grid bounds [{x_min}, {x_max}] are invalid")));
        }
        Ok(Grid { x_min, x_max, n })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    /// Left edge of cell `i`; `interface(n)` is the right wall.
    pub fn interface(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.center(i)).collect()
    }

    /// Same spacing, widened so every atom sits at least `margin` inside the walls.
    pub fn covering(&self, atoms: &[Atom], margin: f64) -> Grid {
        let dx = self.dx();
        let hi_need = atoms.iter().map(|a| a.value).fold(0.0, f64::max) + margin;
        let lo_need = atoms.iter().map(|a| a.value).fold(0.0, f64::min) - margin;
        let add_hi = if hi_need > self.x_max { ((hi_need - self.x_max) / dx).ceil() as usize } else { 0 };
        let add_lo = if lo_need < self.x_min { ((self.x_min - lo_need) / dx).ceil() as usize } else { 0 };
        Grid {
            x_min: self.x_min - add_lo as f64 * dx,
            x_max: self.x_max + add_hi as f64 * dx,
            n: self.n + add_lo + add_hi,
        }
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid { x_min: -6.0, x_max: 8.0, n: 700 }
    }
}

/// Numerical flux used for the drift term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxScheme {
    /// First-order upwinding of `Γ P` plus centered diffusion.
    Upwind,
    /// Scharfetter–Gummel exponential fitting: exact for the zero-flux profile
    /// of a drift that is constant across each interface, and identical to
    /// upwinding when diffusion vanishes.
    ExponentialFitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStep {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeConfig {
    pub tau: f64,
    pub omega: f64,
    pub threshold: Threshold,
    pub grid: Grid,
    pub dt: TimeStep,
    pub t_max: f64,
    pub scheme: FluxScheme,
    /// Fraction of the positivity bound used by `TimeStep::Auto`.
    pub cfl: f64,
    /// Spacing of the `(t, Q, R)` series; `None` records only at snapshot times.
    pub series_interval: Option<f64>,
}

impl PdeConfig {
    pub fn new(tau: f64, omega: f64, threshold: Threshold) -> Self {
        PdeConfig {
            tau,
            omega,
            threshold,
            grid: Grid::default(),
            dt: TimeStep::Auto,
            t_max: 15.0,
            scheme: FluxScheme::ExponentialFitting,
            cfl: 0.9,
            series_interval: Some(0.1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("step size tau = {} must be > 0", self.tau)));
        }
        if !(self.omega >= 0.0) {
            return Err(Error::Config(format!("SNR omega = {} must be >= 0", self.omega)));
        }
        self.threshold.validate()?;
        Grid::new(self.grid.x_min, self.grid.x_max, self.grid.n)?;
        if let TimeStep::Fixed(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("time step dt = {dt} must be > 0")));
            }
        }
        if !(self.t_max >= 0.0) {
            return Err(Error::Config(format!("t_max = {} must be >= 0", self.t_max)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl = {} must lie in (0, 1]", self.cfl)));
        }
        if let Some(s) = self.series_interval {
            if !(s > 0.0) {
                return Err(Error::Config("series interval must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Per-atom densities on a shared grid together with the coupled moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDensitySet {
    pub grid: Grid,
    pub atoms: Vec<Atom>,
    /// `densities[j][i]` is the average of `P(x | ξ_j)` over cell `i`.
    pub densities: Vec<Vec<f64>>,
    pub t: f64,
    pub q: f64,
    pub r: f64,
    /// Number of cells clipped to zero so far.
    pub clipped: u64,
}

impl ConditionalDensitySet {
    /// Builds a set from per-atom cell values, normalizing each and computing `(Q, R)`.
    pub fn from_profiles(grid: Grid, atoms: Vec<Atom>, mut densities: Vec<Vec<f64>>, threshold: Threshold) -> Result<Self> {
        if densities.len() != atoms.len() || densities.iter().any(|d| d.len() != grid.n) {
            return Err(Error::Config("density profiles do not match atoms and grid".into()));
        }
        let dx = grid.dx();
        for d in &mut densities {
            if d.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Config("density profiles must be nonnegative".into()));
            }
            let mass: f64 = d.iter().sum::<f64>() * dx;
            if !(mass > 0.0) {
                return Err(Error::Config("density profile has zero mass".into()));
            }
            d.iter_mut().for_each(|v| *v /= mass);
        }
        let mut set = ConditionalDensitySet { grid, atoms, densities, t: 0.0, q: 0.0, r: 0.0, clipped: 0 };
        let (q, r) = moments(&set, threshold)?;
        set.q = q;
        set.r = r;
        Ok(set)
    }

    pub fn masses(&self) -> Vec<f64> {
        let dx = self.grid.dx();
        self.densities.iter().map(|d| d.iter().sum::<f64>() * dx).collect()
    }

    /// Conditional mean `∫ x P(x | ξ_j) dx` of atom `j`.
    pub fn conditional_mean(&self, j: usize) -> f64 {
        let dx = self.grid.dx();
        self.densities[j].iter().enumerate().map(|(i, p)| self.grid.center(i) * p).sum::<f64>() * dx
    }
}

/// `Γ(x, ξ, Q, R) = τωQξ - φ(x) - x [τωQ² - R + (τ²/2)(1 + ωQ²)]`.
pub fn drift_gamma(x: f64, xi: f64, q: f64, r: f64, tau: f64, omega: f64, threshold: Threshold) -> f64 {
    tau * omega * q * xi - threshold.phi(x) - x * (tau * omega * q * q - r + diffusion_coefficient(q, tau, omega))
}

/// `D(Q) = τ²(1 + ωQ²)/2`.
pub fn diffusion_coefficient(q: f64, tau: f64, omega: f64) -> f64 {
    0.5 * tau * tau * (1.0 + omega * q * q)
}

/// `(Q, R)` by midpoint quadrature over the cells.
pub fn moments(set: &ConditionalDensitySet, threshold: Threshold) -> Result<(f64, f64)> {
    let dx = set.grid.dx();
    let (mut q, mut r) = (0.0, 0.0);
    for (atom, dens) in set.atoms.iter().zip(&set.densities) {
        let (mut mass, mut mx, mut mphi) = (0.0, 0.0, 0.0);
        for (i, p) in dens.iter().enumerate() {
            let x = set.grid.center(i);
            mass += p;
            mx += x * p;
            mphi += x * threshold.phi(x) * p;
        }
        mass *= dx;
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::Inconsistent(format!("density for atom {} has mass {mass}", atom.value)));
        }
        q += atom.weight * atom.value * mx * dx;
        r += atom.weight * mphi * dx;
    }
    Ok((q, r))
}

/// Gaussian `N(mean, variance)` for every atom (the initial estimate is independent of `ξ`).
///
/// The grid is widened first if an atom lies within [`ATOM_MARGIN`] of a wall.
pub fn initial_density(mean: f64, variance: f64, grid: Grid, prior: &Prior, threshold: Threshold) -> Result<ConditionalDensitySet> {
    if !(variance > 0.0) {
        return Err(Error::Config(format!("initial variance {variance} must be > 0")));
    }
    if !prior.is_discrete() {
        return Err(Error::Config("the PDE needs a discrete prior; discretize it first".into()));
    }
    let grid = Grid::new(grid.x_min, grid.x_max, grid.n)?.covering(prior.atoms(), ATOM_MARGIN);
    let s = (2.0 * variance).sqrt();
    let cdf = |x: f64| 0.5 * libm::erfc(-(x - mean) / s);
    let masses: Vec<f64> = (0..grid.n).map(|i| cdf(grid.interface(i + 1)) - cdf(grid.interface(i))).collect();
    let inside: f64 = masses.iter().sum();
    if 1.0 - inside > 1e-6 {
        return Err(Error::Config(format!(
            "grid [{}, {}] loses {:.3e} of the initial Gaussian mass",
            grid.x_min,
            grid.x_max,
            1.0 - inside
        )));
    }
    let profile: Vec<f64> = masses.iter().map(|m| m / grid.dx()).collect();
    let atoms = prior.atoms().to_vec();
    let densities = vec![profile; atoms.len()];
    ConditionalDensitySet::from_profiles(grid, atoms, densities, threshold)
}

/// `B(v) = v / (e^v - 1)`.
#[inline]
fn bernoulli(v: f64) -> f64 {
    if v.abs() < 1e-6 {
        1.0 - 0.5 * v + v * v / 12.0
    } else if v > 700.0 {
        0.0
    } else {
        v / v.exp_m1()
    }
}

/// Outflow coefficients (rate at which cell `i` loses mass per unit density)
/// for one atom; the step is positivity-preserving iff `dt · max ≤ 1`.
fn max_outflow_rate(drift: &[f64], diffusion: f64, dx: f64, scheme: FluxScheme) -> f64 {
    // drift[k] lives on interior interface k + 1/2, k = 0..n-2
    let n = drift.len() + 1;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let right = if i + 1 < n { Some(drift[i]) } else { None };
        let left = if i > 0 { Some(drift[i - 1]) } else { None };
        let rate = match (scheme, diffusion > 0.0) {
            (FluxScheme::ExponentialFitting, true) => {
                let d = diffusion / (dx * dx);
                right.map_or(0.0, |g| d * bernoulli(-g * dx / diffusion))
                    + left.map_or(0.0, |g| d * bernoulli(g * dx / diffusion))
            }
            _ => {
                let d = diffusion / (dx * dx);
                right.map_or(0.0, |g| g.max(0.0) / dx + d) + left.map_or(0.0, |g| (-g).max(0.0) / dx + d)
            }
        };
        worst = worst.max(rate);
    }
    worst
}

/// One explicit step of `∂_t P = -∂_x(Γ P) + D ∂²_x P` with zero-flux walls.
///
/// `drift` holds `Γ` at the `n - 1` interior interfaces.
pub fn advance_fokker_planck(density: &mut [f64], drift: &[f64], diffusion: f64, dx: f64, dt: f64, scheme: FluxScheme) {
    let n = density.len();
    debug_assert_eq!(drift.len() + 1, n);
    let lambda = dt / dx;
    let d = diffusion / dx;
    let mut flux_left = 0.0;
    let mut prev = density[0];
    for i in 0..n {
        let flux_right = if i + 1 < n {
            let (pl, pr) = (prev, density[i + 1]);
            let g = drift[i];
            match scheme {
                FluxScheme::ExponentialFitting if diffusion > 0.0 => {
                    let v = g * dx / diffusion;
                    d * (bernoulli(-v) * pl - bernoulli(v) * pr)
                }
                _ => g.max(0.0) * pl + g.min(0.0) * pr - d * (pr - pl),
            }
        } else {
            0.0
        };
        let next_prev = if i + 1 < n { density[i + 1] } else { 0.0 };
        density[i] = prev - lambda * (flux_right - flux_left);
        flux_left = flux_right;
        prev = next_prev;
    }
}

fn interface_drifts(set: &ConditionalDensitySet, cfg: &PdeConfig, xi: f64, out: &mut Vec<f64>) {
    let grid = &set.grid;
    let dx = grid.dx();
    out.clear();
    for k in 1..grid.n {
        let mut x = grid.interface(k);
        if x.abs() < 1e-9 * dx {
            x = 0.0;
        }
        out.push(drift_gamma(x, xi, set.q, set.r, cfg.tau, cfg.omega, cfg.threshold));
    }
}

/// Largest positivity-preserving step for the current state, with the
/// individual diffusion and advection limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepBounds {
    pub diffusion: f64,
    pub advection: f64,
    pub combined: f64,
}

impl StepBounds {
    /// Names the first bound that `dt` violates.
    pub fn check(&self, dt: f64) -> Result<()> {
        let slack = 1.0 + 1e-12;
        if dt > self.diffusion * slack {
            return Err(Error::StepSize { bound: "diffusion dx^2/(2D)", dt, limit: self.diffusion });
        }
        if dt > self.advection * slack {
            return Err(Error::StepSize { bound: "advection dx/max|Gamma|", dt, limit: self.advection });
        }
        if dt > self.combined * slack {
            return Err(Error::StepSize { bound: "combined advection-diffusion positivity", dt, limit: self.combined });
        }
        Ok(())
    }
}

pub fn step_bounds(set: &ConditionalDensitySet, cfg: &PdeConfig) -> StepBounds {
    let dx = set.grid.dx();
    let diffusion = diffusion_coefficient(set.q, cfg.tau, cfg.omega);
    let mut drift = Vec::with_capacity(set.grid.n);
    let (mut max_rate, mut max_gamma) = (0.0f64, 0.0f64);
    for atom in &set.atoms {
        interface_drifts(set, cfg, atom.value, &mut drift);
        max_rate = max_rate.max(max_outflow_rate(&drift, diffusion, dx, cfg.scheme));
        max_gamma = drift.iter().fold(max_gamma, |m, g| m.max(g.abs()));
    }
    let inv = |r: f64| if r > 0.0 { 1.0 / r } else { f64::INFINITY };
    StepBounds {
        diffusion: inv(2.0 * diffusion / (dx * dx)),
        advection: inv(max_gamma / dx),
        combined: inv(max_rate),
    }
}

/// Advances every density by `dt`, then refreshes `(Q, R)`.
pub fn step_pde(state: &mut ConditionalDensitySet, cfg: &PdeConfig, dt: f64) -> Result<()> {
    step_bounds(state, cfg).check(dt)?;
    let dx = state.grid.dx();
    let diffusion = diffusion_coefficient(state.q, cfg.tau, cfg.omega);
    let mut drift = Vec::with_capacity(state.grid.n);
    for j in 0..state.atoms.len() {
        interface_drifts(state, cfg, state.atoms[j].value, &mut drift);
        let dens = &mut state.densities[j];
        advance_fokker_planck(dens, &drift, diffusion, dx, dt, cfg.scheme);
        let mut clipped = 0;
        for v in dens.iter_mut() {
            if *v < 0.0 {
                if *v < -CLIP_FLOOR {
                    return Err(Error::Inconsistent(format!("density went negative ({v:e}) at t = {}", state.t)));
                }
                *v = 0.0;
                clipped += 1;
            }
        }
        if clipped > 0 {
            let mass: f64 = dens.iter().sum::<f64>() * dx;
            dens.iter_mut().for_each(|v| *v /= mass);
            state.clipped += clipped;
        }
    }
    state.t += dt;
    let (q, r) = moments(state, cfg.threshold)?;
    state.q = q;
    state.r = r;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: f64,
    pub q: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSolution {
    pub snapshots: Vec<ConditionalDensitySet>,
    pub series: Vec<MomentRow>,
    pub steps: u64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub final_state: ConditionalDensitySet,
}

impl PdeSolution {
    /// Linear interpolation of the recorded `Q` series.
    pub fn q_at(&self, t: f64) -> Option<f64> {
        let s = &self.series;
        let k = s.partition_point(|row| row.t < t - 1e-12);
        if k < s.len() && (s[k].t - t).abs() <= 1e-9 {
            return Some(s[k].q);
        }
        if k == 0 || k >= s.len() {
            return None;
        }
        let (a, b) = (s[k - 1], s[k]);
        Some(a.q + (b.q - a.q) * (t - a.t) / (b.t - a.t))
    }
}

/// Integrates from `initial` to `cfg.t_max`, taking snapshots at `record_times`.
pub fn solve_pde(cfg: &PdeConfig, initial: ConditionalDensitySet, record_times: &[f64]) -> Result<PdeSolution> {
    cfg.validate()?;
    if initial.q.abs() < 1e-14 {
        return Err(Error::ZeroInitialOverlap);
    }
    if record_times.iter().any(|t| !(*t >= initial.t && *t <= cfg.t_max)) {
        return Err(Error::Config(format!("record times must lie in [{}, {}]", initial.t, cfg.t_max)));
    }
    let t0 = initial.t;
    let mut stops: Vec<f64> = record_times.to_vec();
    stops.push(cfg.t_max);
    if let Some(h) = cfg.series_interval {
        let n = ((cfg.t_max - t0) / h + 1e-9).floor() as usize;
        stops.extend((1..=n).map(|k| t0 + k as f64 * h));
    }
    stops.sort_by(f64::total_cmp);
    stops.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);

    let mut state = initial;
    let mut out = PdeSolution {
        snapshots: Vec::new(),
        series: vec![MomentRow { t: state.t, q: state.q, r: state.r }],
        steps: 0,
        dt_min: f64::INFINITY,
        dt_max: 0.0,
        final_state: state.clone(),
    };
    let is_record = |t: f64| record_times.iter().any(|r| (r - t).abs() <= 1e-12);
    if is_record(state.t) {
        out.snapshots.push(state.clone());
    }
    for &stop in &stops {
        if stop <= t0 + 1e-12 {
            continue;
        }
        while state.t < stop - 1e-12 {
            let remaining = stop - state.t;
            let bounds = step_bounds(&state, cfg);
            let dt = match cfg.dt {
                TimeStep::Fixed(full) => {
                    // the configured step must be stable even when the last one is shortened
                    bounds.check(full)?;
                    full.min(remaining)
                }
                TimeStep::Auto => {
                    let dt = cfg.cfl * bounds.combined;
                    // avoid a sliver step right before the stop
                    if dt >= remaining { remaining } else if dt > 0.5 * remaining { 0.5 * remaining } else { dt }
                }
            };
            step_pde(&mut state, cfg, dt)?;
            out.steps += 1;
            if dt < remaining {
                out.dt_min = out.dt_min.min(dt);
            }
            out.dt_max = out.dt_max.max(dt);
        }
        state.t = stop;
        out.series.push(MomentRow { t: stop, q: state.q, r: state.r });
        if is_record(stop) {
            out.snapshots.push(state.clone());
        }
    }
    if out.dt_min == f64::INFINITY {
        out.dt_min = out.dt_max;
    }
    out.final_state = state;
    Ok(out)
}
