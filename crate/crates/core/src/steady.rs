//! Stationary states of the limiting PDE.
//!
//! At stationarity every conditional density is a Boltzmann law
//!
//! ```text
//! P(x | ξ) = exp(-[h x² + β|x| - τωQξ x] / g) / Z_ξ
//! g(Q) = τ²(1 + ωQ²)/2,   h(Q, R) = (τωQ² - R + g)/2
//! ```
//!
//! whose moments must reproduce `(Q, R)`. For soft thresholding the moments
//! reduce to the scaled complementary error function, giving a closed
//! two-dimensional fixed-point map. `(Q, R) = (0, τ²/2)` always solves it
//! (`h = 0`, a ξ-independent Laplace law); informative solutions with
//! `Q ≠ 0` appear once the SNR exceeds a critical value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Prior;
use crate::online::Threshold;
use crate::pde::{ConditionalDensitySet, Grid};
use crate::quadrature::{gauss_legendre, integrate};
use crate::special::{f_and_m_scaled, ScaledValue};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyConfig {
    pub tau: f64,
    pub omega: f64,
    pub threshold: Threshold,
}

impl SteadyConfig {
    pub fn new(tau: f64, omega: f64, threshold: Threshold) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Config(format!("step size tau = {tau} must be > 0")));
        }
        if !(omega >= 0.0) {
            return Err(Error::Config(format!("SNR omega = {omega} must be >= 0")));
        }
        threshold.validate()?;
        Ok(SteadyConfig { tau, omega, threshold })
    }

    pub fn beta(&self) -> f64 {
        self.threshold.beta()
    }

    /// Diffusion scale `g(Q)`.
    pub fn g(&self, q: f64) -> f64 {
        0.5 * self.tau * self.tau * (1.0 + self.omega * q * q)
    }

    /// Quadratic coefficient `h(Q, R)`.
    pub fn h(&self, q: f64, r: f64) -> f64 {
        0.5 * (self.tau * self.omega * q * q - r + self.g(q))
    }

    /// The uninformative solution `(0, τ²/2)`.
    pub fn uninformative(&self) -> (f64, f64) {
        (0.0, 0.5 * self.tau * self.tau)
    }
}

/// A stationary conditional density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SteadyDensity {
    /// `exp(-[h x² + β|x| - tilt·x]/g - ln_z)` with `tilt = τωQξ`.
    Boltzmann { g: f64, h: f64, beta: f64, tilt: f64, ln_z: f64 },
    /// `(rate/2) e^{-rate |x|}`, the `h → 0` limit at `Q = 0`.
    Laplace { rate: f64 },
}

impl SteadyDensity {
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            SteadyDensity::Boltzmann { g, h, beta, tilt, ln_z } => {
                (-(h * x * x + beta * x.abs() - tilt * x) / g - ln_z).exp()
            }
            SteadyDensity::Laplace { rate } => 0.5 * rate * (-rate * x.abs()).exp(),
        }
    }

    /// `(E x, E|x|)` in closed form.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            SteadyDensity::Boltzmann { g, h, beta, tilt, .. } => boltzmann_moments(g, h, beta, tilt),
            SteadyDensity::Laplace { rate } => (0.0, 1.0 / rate),
        }
    }

    /// Averages of the density over each grid cell (Gauss–Legendre, split at 0).
    pub fn cell_averages(&self, grid: &Grid) -> Vec<f64> {
        let rule = gauss_legendre(12);
        let dx = grid.dx();
        (0..grid.n)
            .map(|i| {
                let (a, b) = (grid.interface(i), grid.interface(i + 1));
                let mass = if a < 0.0 && b > 0.0 {
                    integrate(|x| self.pdf(x), a, 0.0, 1, &rule) + integrate(|x| self.pdf(x), 0.0, b, 1, &rule)
                } else {
                    integrate(|x| self.pdf(x), a, b, 1, &rule)
                };
                mass / dx
            })
            .collect()
    }
}

/// Lower limits of the two half-line Gaussian integrals, `z_± = (β ± tilt) / (2√(gh))`.
fn z_pair(g: f64, h: f64, beta: f64, tilt: f64) -> (f64, f64) {
    let s = 2.0 * (g * h).sqrt();
    ((beta + tilt) / s, (beta - tilt) / s)
}

fn common_scale(a: &ScaledValue, b: &ScaledValue) -> f64 {
    a.log_scale.max(b.log_scale)
}

fn boltzmann_ln_z(g: f64, h: f64, beta: f64, tilt: f64) -> f64 {
    let (zp, zm) = z_pair(g, h, beta, tilt);
    let (fp, _) = f_and_m_scaled(zp);
    let (fm, _) = f_and_m_scaled(zm);
    let l = common_scale(&fp, &fm);
    0.5 * (g / h).ln() + (0.5 * std::f64::consts::PI).ln() + (fp.rescaled(l) + fm.rescaled(l)).ln() + l
}

/// `E x = √(g/h) (m(z₋) - m(z₊)) / (f(z₊) + f(z₋))`,
/// `E|x| = √(g/h) (m(z₊) + m(z₋)) / (f(z₊) + f(z₋))`, with `m(z) = 1/π - z f(z)`.
fn boltzmann_moments(g: f64, h: f64, beta: f64, tilt: f64) -> (f64, f64) {
    let (zp, zm) = z_pair(g, h, beta, tilt);
    let (fp, mp) = f_and_m_scaled(zp);
    let (fm, mm) = f_and_m_scaled(zm);
    let l = common_scale(&fp, &fm);
    let (fp, mp, fm, mm) = (fp.rescaled(l), mp.rescaled(l), fm.rescaled(l), mm.rescaled(l));
    let scale = (g / h).sqrt();
    let denom = fp + fm;
    (scale * (mm - mp) / denom, scale * (mp + mm) / denom)
}

/// Stationary density of `x` given `ξ` at macroscopic state `(Q, R)`.
pub fn steady_density(xi: f64, q: f64, r: f64, cfg: &SteadyConfig) -> Result<SteadyDensity> {
    let beta = cfg.beta();
    let g = cfg.g(q);
    let h = cfg.h(q, r);
    if h > 0.0 {
        let tilt = cfg.tau * cfg.omega * q * xi;
        let ln_z = boltzmann_ln_z(g, h, beta, tilt);
        return Ok(SteadyDensity::Boltzmann { g, h, beta, tilt, ln_z });
    }
    if q == 0.0 && beta > 0.0 && h > -1e-12 {
        return Ok(SteadyDensity::Laplace { rate: beta / g });
    }
    Err(Error::NonNormalizable { h })
}

/// Stationary densities of every atom as cell averages on `grid`, ready to
/// seed the PDE solver.
pub fn stationary_set(cfg: &SteadyConfig, prior: &Prior, q: f64, r: f64, grid: Grid) -> Result<ConditionalDensitySet> {
    check_prior(prior)?;
    let grid = Grid::new(grid.x_min, grid.x_max, grid.n)?;
    let densities = prior
        .atoms()
        .iter()
        .map(|a| Ok(steady_density(a.value, q, r, cfg)?.cell_averages(&grid)))
        .collect::<Result<Vec<_>>>()?;
    ConditionalDensitySet::from_profiles(grid, prior.atoms().to_vec(), densities, cfg.threshold)
}

/// The uninformative stationary law `(β/τ²) e^{-2β|x|/τ²}`.
pub fn uninformative_density(cfg: &SteadyConfig) -> Result<SteadyDensity> {
    let (q, r) = cfg.uninformative();
    steady_density(0.0, q, r, cfg)
}

fn check_prior(prior: &Prior) -> Result<()> {
    if !prior.is_discrete() {
        return Err(Error::Config("fixed-point equations need a discrete prior; discretize it first".into()));
    }
    Ok(())
}

/// Right-hand side of the fixed-point equations via the closed-form moments.
pub fn fp_rhs(q: f64, r: f64, cfg: &SteadyConfig, prior: &Prior) -> Result<(f64, f64)> {
    check_prior(prior)?;
    let h = cfg.h(q, r);
    if !(h > 0.0) {
        return Err(Error::NonNormalizable { h });
    }
    let g = cfg.g(q);
    let beta = cfg.beta();
    let (mut q_new, mut abs_mean) = (0.0, 0.0);
    for atom in prior.atoms() {
        let (mean, mean_abs) = boltzmann_moments(g, h, beta, cfg.tau * cfg.omega * q * atom.value);
        q_new += atom.weight * atom.value * mean;
        abs_mean += atom.weight * mean_abs;
    }
    Ok((q_new, beta * abs_mean))
}

/// Same map evaluated by direct quadrature of the unnormalized Boltzmann
/// weight, without the error-function reduction. Used as an oracle.
pub fn fp_rhs_quadrature(q: f64, r: f64, cfg: &SteadyConfig, prior: &Prior) -> Result<(f64, f64)> {
    check_prior(prior)?;
    let h = cfg.h(q, r);
    if !(h > 0.0) {
        return Err(Error::NonNormalizable { h });
    }
    let g = cfg.g(q);
    let beta = cfg.beta();
    let (mut q_new, mut abs_mean) = (0.0, 0.0);
    for atom in prior.atoms() {
        let [z, mx, mabs] = boltzmann_quadrature(g, h, beta, cfg.tau * cfg.omega * q * atom.value);
        q_new += atom.weight * atom.value * mx / z;
        abs_mean += atom.weight * mabs / z;
    }
    Ok((q_new, beta * abs_mean))
}

/// `[∫w, ∫x w, ∫|x| w]` for `w = exp(-[h x² + β|x| - tilt·x]/g - shift)`.
fn boltzmann_quadrature(g: f64, h: f64, beta: f64, tilt: f64) -> [f64; 3] {
    let expo = |x: f64| -(h * x * x + beta * x.abs() - tilt * x) / g;
    let right_mode = ((tilt - beta) / (2.0 * h)).max(0.0);
    let left_mode = ((tilt + beta) / (2.0 * h)).min(0.0);
    let shift = expo(right_mode).max(expo(left_mode));
    // beyond the modes the weight falls at least like exp(-h d²/g)
    let reach = (80.0 * g / h).sqrt();
    let (lo, hi) = (left_mode - reach, right_mode + reach);
    let sigma = (g / (2.0 * h)).sqrt();
    let kink = if beta > 0.0 { g / beta } else { f64::INFINITY };
    let width = 0.25 * sigma.min(kink);
    let rule = gauss_legendre(16);
    let mut acc = [0.0; 3];
    for (a, b) in [(lo, 0.0), (0.0, hi)] {
        let panels = (((b - a) / width).ceil() as usize).clamp(8, 2_000_000);
        let w = |x: f64| (expo(x) - shift).exp();
        acc[0] += integrate(w, a, b, panels, &rule);
        acc[1] += integrate(|x| x * w(x), a, b, panels, &rule);
        acc[2] += integrate(|x| x.abs() * w(x), a, b, panels, &rule);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Uninformative,
    Informative,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Uninformative => "uninformative",
            Branch::Informative => "informative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub q: f64,
    pub r: f64,
    /// `max |fp_rhs(Q, R) - (Q, R)|` at the reported point.
    pub residual: f64,
    pub branch: Branch,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    /// Weight of the new iterate, in `(0, 1]`.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Iterates are projected back to `h ≥ h_min`.
    pub h_min: f64,
    /// `|Q| ≤ eps_q` is classified as uninformative.
    pub eps_q: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions { damping: 0.5, tol: 1e-10, max_iter: 10_000, h_min: 1e-8, eps_q: 1e-6 }
    }
}

impl FixedPointOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config(format!("damping {} must lie in (0, 1]", self.damping)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.h_min > 0.0) || !(self.eps_q >= 0.0) {
            return Err(Error::Config("fixed-point tolerances must be positive".into()));
        }
        Ok(())
    }
}

fn branch_of(q: f64, eps_q: f64) -> Branch {
    if q.abs() <= eps_q {
        Branch::Uninformative
    } else {
        Branch::Informative
    }
}

/// Damped iteration `(Q, R) ← (1-λ)(Q, R) + λ fp_rhs(Q, R)`.
///
/// With soft thresholding the uninformative solution sits on the `h = 0`
/// boundary where the map is singular. An iterate pushed onto the `h_min`
/// floor with `|Q| ≤ eps_q` is therefore resolved to the exact solution
/// `(0, τ²/2)` instead of being iterated further.
pub fn solve_fixed_point(cfg: &SteadyConfig, prior: &Prior, init: (f64, f64), opts: &FixedPointOptions) -> Result<FixedPoint> {
    opts.validate()?;
    check_prior(prior)?;
    if !(cfg.h(init.0, init.1) > 0.0) {
        return Err(Error::Config(format!("initial point {init:?} has h <= 0")));
    }
    let lambda = opts.damping;
    let (mut q, mut r) = init;
    let mut best = FixedPoint {
        q,
        r,
        residual: f64::INFINITY,
        branch: branch_of(q, opts.eps_q),
        converged: false,
        iterations: 0,
    };
    for it in 1..=opts.max_iter {
        let mut on_floor = false;
        if cfg.h(q, r) < opts.h_min {
            r = cfg.tau * cfg.omega * q * q + cfg.g(q) - 2.0 * opts.h_min;
            on_floor = true;
        }
        if on_floor && cfg.beta() > 0.0 && q.abs() <= opts.eps_q {
            let (q0, r0) = cfg.uninformative();
            return Ok(FixedPoint { q: q0, r: r0, residual: 0.0, branch: Branch::Uninformative, converged: true, iterations: it });
        }
        let (qn, rn) = fp_rhs(q, r, cfg, prior)?;
        let residual = (qn - q).abs().max((rn - r).abs());
        if residual < best.residual {
            best = FixedPoint { q, r, residual, branch: branch_of(q, opts.eps_q), converged: false, iterations: it };
        }
        if residual <= opts.tol {
            return Ok(FixedPoint { converged: true, ..best });
        }
        q = (1.0 - lambda) * q + lambda * qn;
        r = (1.0 - lambda) * r + lambda * rn;
    }
    best.iterations = opts.max_iter;
    Ok(best)
}

/// Newton's method on `fp_rhs(Q, R) - (Q, R) = 0` with a finite-difference
/// Jacobian and backtracking that keeps `h ≥ h_min` and decreases the residual.
///
/// Damped iteration only finds fixed points that attract the map itself;
/// this also reaches roots where the map is locally expanding.
pub fn newton_fixed_point(cfg: &SteadyConfig, prior: &Prior, init: (f64, f64), opts: &FixedPointOptions) -> Result<FixedPoint> {
    opts.validate()?;
    check_prior(prior)?;
    if !(cfg.h(init.0, init.1) >= opts.h_min) {
        return Err(Error::Config(format!("initial point {init:?} has h below h_min")));
    }
    let resid = |q: f64, r: f64| -> Option<(f64, f64)> {
        if cfg.h(q, r) < opts.h_min {
            return None;
        }
        let (a, b) = fp_rhs(q, r, cfg, prior).ok()?;
        (a.is_finite() && b.is_finite()).then_some((a - q, b - r))
    };
    let norm = |f: (f64, f64)| f.0.abs().max(f.1.abs());
    let (mut q, mut r) = init;
    let Some(mut f) = resid(q, r) else {
        return Err(Error::NonNormalizable { h: cfg.h(q, r) });
    };
    let max_iter = opts.max_iter.min(100);
    for it in 1..=max_iter {
        if norm(f) <= opts.tol {
            return Ok(FixedPoint { q, r, residual: norm(f), branch: branch_of(q, opts.eps_q), converged: true, iterations: it - 1 });
        }
        let eq = 1e-7 * q.abs().max(1e-3);
        let er = -1e-7 * r.abs().max(1e-3);
        let (Some(fq), Some(fr)) = (resid(q + eq, r), resid(q, r + er)) else { break };
        let (j11, j21) = ((fq.0 - f.0) / eq, (fq.1 - f.1) / eq);
        let (j12, j22) = ((fr.0 - f.0) / er, (fr.1 - f.1) / er);
        let det = j11 * j22 - j12 * j21;
        if !(det.abs() > 0.0) || !det.is_finite() {
            break;
        }
        let dq = -(j22 * f.0 - j12 * f.1) / det;
        let dr = -(-j21 * f.0 + j11 * f.1) / det;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let (qn, rn) = (q + step * dq, r + step * dr);
            if let Some(fnew) = resid(qn, rn) {
                if norm(fnew) < norm(f) {
                    accepted = Some((qn, rn, fnew));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((qn, rn, fnew)) = accepted else { break };
        q = qn;
        r = rn;
        f = fnew;
        if it == max_iter && norm(f) <= opts.tol {
            return Ok(FixedPoint { q, r, residual: norm(f), branch: branch_of(q, opts.eps_q), converged: true, iterations: it });
        }
    }
    Ok(FixedPoint { q, r, residual: norm(f), branch: branch_of(q, opts.eps_q), converged: norm(f) <= opts.tol, iterations: max_iter })
}

/// Newton from the informative solution at `from_omega` to `cfg.omega`,
/// halving the SNR step up to `depth` times when a direct jump fails.
fn continue_branch(cfg: &SteadyConfig, prior: &Prior, from: FixedPoint, from_omega: f64, opts: &FixedPointOptions, depth: u32) -> Option<FixedPoint> {
    let direct = newton_fixed_point(cfg, prior, (from.q, from.r), opts).ok();
    if let Some(fp) = direct.filter(|fp| fp.converged && fp.branch == Branch::Informative) {
        return Some(fp);
    }
    if depth == 0 {
        return None;
    }
    let mid = SteadyConfig { omega: 0.5 * (from_omega + cfg.omega), ..*cfg };
    let half = continue_branch(&mid, prior, from, from_omega, opts, depth - 1)?;
    continue_branch(cfg, prior, half, mid.omega, opts, depth - 1)
}

/// One SNR value of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub omega: f64,
    /// Largest converged `|Q*|` over the starts (best iterate if none converged),
    /// reported as exactly 0 on the uninformative branch.
    pub q_star: f64,
    pub converged: bool,
    pub branch: Branch,
    /// Distinct converged solutions found from the starts.
    pub solutions: Vec<FixedPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub points: Vec<SweepPoint>,
    /// Smallest grid SNR with `Q* > eps_pt`.
    pub omega_c: Option<f64>,
    /// Grid spacing just below `omega_c`: the uncertainty of the estimate.
    pub omega_c_uncertainty: Option<f64>,
}

fn informative_q(fp: &FixedPoint) -> f64 {
    match fp.branch {
        Branch::Informative => fp.q.abs(),
        Branch::Uninformative => 0.0,
    }
}

/// `Q*` above this counts as informative when locating the transition.
pub const EPS_PHASE_TRANSITION: f64 = 1e-3;

/// Default informative-side starting overlaps.
pub const SWEEP_STARTS: [f64; 3] = [0.2, 0.5, 0.9];

/// Solves the fixed-point equations at every `ω`.
///
/// Each `ω` is first solved by damped iteration from every start `(Q₀, 0)`.
/// The informative branch is then continued from the largest `ω` downwards
/// with [`newton_fixed_point`], seeded by the solution at the neighbouring
/// grid point, since near the transition the informative roots repel the
/// damped map.
pub fn sweep_omega(
    base: &SteadyConfig,
    prior: &Prior,
    omega_grid: &[f64],
    starts: &[f64],
    opts: &FixedPointOptions,
) -> Result<Sweep> {
    if omega_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("omega grid must be strictly increasing".into()));
    }
    if starts.is_empty() {
        return Err(Error::Config("sweep needs at least one starting overlap".into()));
    }
    let configs = omega_grid
        .iter()
        .map(|&omega| SteadyConfig::new(base.tau, omega, base.threshold))
        .collect::<Result<Vec<_>>>()?;
    let runs = configs
        .par_iter()
        .map(|cfg| {
            starts
                .iter()
                .map(|&q0| solve_fixed_point(cfg, prior, (q0, 0.0), opts))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let add = |set: &mut Vec<FixedPoint>, fp: FixedPoint| {
        if fp.converged && !set.iter().any(|s| (s.q - fp.q).abs() <= 1e-6) {
            set.push(fp);
        }
    };
    let mut solutions: Vec<Vec<FixedPoint>> = runs
        .iter()
        .map(|rs| {
            let mut set = Vec::new();
            rs.iter().for_each(|fp| add(&mut set, *fp));
            set
        })
        .collect();
    let largest = |set: &[FixedPoint]| set.iter().copied().max_by(|a, b| a.q.abs().total_cmp(&b.q.abs()));

    let mut seed: Option<(FixedPoint, f64)> = None;
    for i in (0..configs.len()).rev() {
        if let Some((prev, prev_omega)) = seed {
            if let Some(fp) = continue_branch(&configs[i], prior, prev, prev_omega, opts, 6) {
                add(&mut solutions[i], fp);
            }
        }
        seed = largest(&solutions[i]).filter(|fp| fp.branch == Branch::Informative).map(|fp| (fp, configs[i].omega));
    }

    let points: Vec<SweepPoint> = configs
        .iter()
        .zip(runs)
        .zip(solutions)
        .map(|((cfg, rs), set)| match largest(&set) {
            Some(fp) => SweepPoint { omega: cfg.omega, q_star: informative_q(&fp), converged: true, branch: fp.branch, solutions: set },
            None => {
                let fp = rs.iter().copied().min_by(|a, b| a.residual.total_cmp(&b.residual)).expect("nonempty starts");
                SweepPoint { omega: cfg.omega, q_star: informative_q(&fp), converged: false, branch: fp.branch, solutions: set }
            }
        })
        .collect();
    let idx = points.iter().position(|p| p.converged && p.q_star > EPS_PHASE_TRANSITION);
    let omega_c = idx.map(|i| points[i].omega);
    let omega_c_uncertainty = idx.and_then(|i| (i > 0).then(|| points[i].omega - points[i - 1].omega));
    Ok(Sweep { points, omega_c, omega_c_uncertainty })
}

/// All fixed points found at a single SNR: the multi-start points plus the
/// informative branch continued down from `max(1, 2ω)`.
pub fn solve_at(cfg: &SteadyConfig, prior: &Prior, starts: &[f64], opts: &FixedPointOptions) -> Result<SweepPoint> {
    let anchor = (2.0 * cfg.omega).max(1.0);
    let grid = if cfg.omega > 0.0 { linspace(cfg.omega, anchor, 25) } else { vec![0.0] };
    let mut sweep = sweep_omega(cfg, prior, &grid, starts, opts)?;
    Ok(sweep.points.swap_remove(0))
}

/// `n` equally spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example() -> (SteadyConfig, Prior) {
        (SteadyConfig::new(0.5, 1.0, Threshold::soft(0.27)).unwrap(), Prior::two_point(0.05).unwrap())
    }

    #[test]
    fn laplace_limit() {
        let (cfg, _) = example();
        let d = uninformative_density(&cfg).unwrap();
        assert_relative_eq!(d.moments().1, 1.0 / 2.16, max_relative = 1e-14);
        for x in [-1.0, 0.0, 0.3, 2.0] {
            assert_relative_eq!(d.pdf(x), 1.08 * (-2.16 * f64::abs(x)).exp(), max_relative = 1e-14);
        }
        // identical for every atom
        assert_eq!(steady_density(4.47, 0.0, 0.125, &cfg).unwrap(), d);
    }

    #[test]
    fn gaussian_without_threshold() {
        let cfg = SteadyConfig::new(0.5, 1.0, Threshold::None).unwrap();
        let r = 0.05;
        let d = steady_density(1.0, 0.0, r, &cfg).unwrap();
        let (g, h) = (cfg.g(0.0), cfg.h(0.0, r));
        let var = g / (2.0 * h);
        for x in [-1.0, 0.0, 0.5] {
            let want = (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
            assert_relative_eq!(d.pdf(x), want, max_relative = 1e-13);
        }
    }

    #[test]
    fn non_normalizable() {
        let (cfg, _) = example();
        assert!(matches!(steady_density(1.0, 0.3, 10.0, &cfg), Err(Error::NonNormalizable { .. })));
        assert!(matches!(steady_density(0.0, 0.0, 0.2, &cfg), Err(Error::NonNormalizable { .. })));
    }

    #[test]
    fn density_parity() {
        let (cfg, _) = example();
        for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let a = steady_density(4.47, 0.4, 0.1, &cfg).unwrap().pdf(x);
            let b = steady_density(4.47, -0.4, 0.1, &cfg).unwrap().pdf(-x);
            assert_relative_eq!(a, b, max_relative = 1e-13);
        }
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let (cfg, prior) = example();
        let a = fp_rhs(0.3, 0.1, &cfg, &prior).unwrap();
        let b = fp_rhs_quadrature(0.3, 0.1, &cfg, &prior).unwrap();
        assert!((a.0 - b.0).abs() <= 1e-8 && (a.1 - b.1).abs() <= 1e-8, "{a:?} {b:?}");
    }

    #[test]
    fn map_is_odd_in_q_for_symmetric_priors() {
        let cfg = SteadyConfig::new(0.5, 1.0, Threshold::soft(0.27)).unwrap();
        let prior = Prior::signed_two_point(0.05).unwrap();
        let (qa, ra) = fp_rhs(0.3, 0.1, &cfg, &prior).unwrap();
        let (qb, rb) = fp_rhs(-0.3, 0.1, &cfg, &prior).unwrap();
        assert_relative_eq!(qa, -qb, max_relative = 1e-13);
        assert_relative_eq!(ra, rb, max_relative = 1e-13);
    }

    #[test]
    fn r_tends_to_g_at_the_boundary() {
        let (cfg, prior) = example();
        let g = cfg.g(0.0);
        for delta in [1e-4, 1e-6, 1e-8, 1e-10] {
            let (q, r) = fp_rhs(0.0, g - delta, &cfg, &prior).unwrap();
            assert_eq!(q, 0.0);
            assert!((r - g).abs() < 10.0 * delta, "{delta}: {r}");
        }
    }

    #[test]
    fn domain_error() {
        let (cfg, prior) = example();
        assert!(matches!(fp_rhs(0.0, 0.2, &cfg, &prior), Err(Error::NonNormalizable { .. })));
    }

    #[test]
    fn uninformative_from_boundary_start() {
        let (cfg, prior) = example();
        for omega in [0.1, 0.5, 1.0] {
            let cfg = SteadyConfig { omega, ..cfg };
            let fp = solve_fixed_point(&cfg, &prior, (0.0, 0.125 - 1e-3), &FixedPointOptions::default()).unwrap();
            assert!(fp.converged);
            assert_eq!(fp.branch, Branch::Uninformative);
            assert!(fp.q.abs() <= 1e-6 && (fp.r - 0.125).abs() <= 1e-6);
        }
    }

    #[test]
    fn oja_fixed_point_matches_closed_form() {
        let prior = Prior::two_point(0.05).unwrap();
        for (tau, omega) in [(0.5, 1.0), (0.5, 0.4), (1.0, 2.0)] {
            let cfg = SteadyConfig::new(tau, omega, Threshold::None).unwrap();
            let fp = solve_fixed_point(&cfg, &prior, (0.5, 0.0), &FixedPointOptions::default()).unwrap();
            let want = (omega - tau / 2.0) / (omega * (1.0 + tau / 2.0));
            assert!(fp.converged);
            assert!((fp.q * fp.q - want).abs() <= 1e-6, "{fp:?}");
        }
    }

    #[test]
    fn bad_init_rejected() {
        let (cfg, prior) = example();
        assert!(solve_fixed_point(&cfg, &prior, (0.0, 1.0), &FixedPointOptions::default()).is_err());
        let bg = Prior::bernoulli_gaussian(0.1).unwrap();
        assert!(fp_rhs(0.1, 0.0, &cfg, &bg).is_err());
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(0.05, 1.0, 40);
        assert_eq!(v.len(), 40);
        assert_eq!(v[0], 0.05);
        assert!((v[39] - 1.0).abs() < 1e-15);
    }
    #[test]
    fn newton_reaches_roots_the_damped_map_misses() {
        let prior = Prior::two_point(0.05).unwrap();
        let cfg = SteadyConfig::new(0.5, 0.25, Threshold::soft(0.27)).unwrap();
        let opts = FixedPointOptions::default();
        for q0 in SWEEP_STARTS {
            let damped = solve_fixed_point(&cfg, &prior, (q0, 0.0), &opts).unwrap();
            assert_eq!(damped.branch, Branch::Uninformative);
        }
        let fp = newton_fixed_point(&cfg, &prior, (0.69, 0.159), &opts).unwrap();
        assert!(fp.converged && fp.branch == Branch::Informative, "{fp:?}");
        let (q, r) = fp_rhs(fp.q, fp.r, &cfg, &prior).unwrap();
        assert!((q - fp.q).abs().max((r - fp.r).abs()) <= opts.tol);
    }

    #[test]
    fn newton_agrees_with_damped_where_both_converge() {
        let (cfg, prior) = example();
        let opts = FixedPointOptions::default();
        let a = solve_fixed_point(&cfg, &prior, (0.5, 0.0), &opts).unwrap();
        let b = newton_fixed_point(&cfg, &prior, (0.8, 0.15), &opts).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.q - b.q).abs() < 1e-8 && (a.r - b.r).abs() < 1e-8);
    }

    #[test]
    fn sweep_oja_threshold_within_one_spacing() {
        let prior = Prior::two_point(0.05).unwrap();
        let cfg = SteadyConfig::new(0.5, 1.0, Threshold::None).unwrap();
        let grid = linspace(0.05, 1.0, 40);
        let sw = sweep_omega(&cfg, &prior, &grid, &SWEEP_STARTS, &FixedPointOptions::default()).unwrap();
        let wc = sw.omega_c.unwrap();
        assert!(wc > 0.25 && wc - 0.25 <= sw.omega_c_uncertainty.unwrap(), "{wc}");
        for p in sw.points.iter().filter(|p| p.omega > 0.25) {
            let want = ((p.omega - 0.25) / (p.omega * 1.25)).sqrt();
            assert!((p.q_star - want).abs() < 1e-5, "{} {} {want}", p.omega, p.q_star);
        }
    }

    #[test]
    fn sweep_rejects_unsorted_grid() {
        let (cfg, prior) = example();
        assert!(sweep_omega(&cfg, &prior, &[0.5, 0.4], &SWEEP_STARTS, &FixedPointOptions::default()).is_err());
    }
}
