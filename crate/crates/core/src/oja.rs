//! Closed-form overlap dynamics of plain Oja (`φ = 0`).
//!
//! In the scaling limit the overlap obeys the logistic-type ODE
//! `dQ/dt = α₂ Q - α₁ Q³` with `α₁ = τω(1 + τ/2)` and `α₂ = τ(ω - τ/2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this `|α₂|` the `α₂ = 0` branch of the closed form is used.
pub const ALPHA2_BRANCH_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OjaParams {
    pub tau: f64,
    pub omega: f64,
}

impl OjaParams {
    pub fn new(tau: f64, omega: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Config(format!("step size tau = {tau} must be > 0")));
        }
        if !(omega >= 0.0) || !omega.is_finite() {
            return Err(Error::Config(format!("SNR omega = {omega} must be >= 0")));
        }
        Ok(OjaParams { tau, omega })
    }

    pub fn alpha1(&self) -> f64 {
        self.tau * self.omega * (1.0 + self.tau / 2.0)
    }

    pub fn alpha2(&self) -> f64 {
        self.tau * (self.omega - self.tau / 2.0)
    }

    fn rhs(&self, q: f64) -> f64 {
        self.alpha2() * q - self.alpha1() * q * q * q
    }
}

/// `Q_t` from the closed-form solution, carrying the sign of `Q₀`.
pub fn closed_form_q(t: f64, q0: f64, params: &OjaParams) -> Result<f64> {
    if q0 == 0.0 {
        return Err(Error::ZeroInitialOverlap);
    }
    if !(t >= 0.0) {
        return Err(Error::Config(format!("time t = {t} must be >= 0")));
    }
    let (a1, a2) = (params.alpha1(), params.alpha2());
    let q0_sq = q0 * q0;
    let q_sq = if a2.abs() < ALPHA2_BRANCH_EPS {
        1.0 / (2.0 * a1 * t + 1.0 / q0_sq)
    } else {
        // a₁ + (a₂/Q₀² - a₁) e^{-2a₂t}, rearranged so small α₂ does not cancel
        let decay = (-2.0 * a2 * t).exp();
        a2 / (-a1 * (-2.0 * a2 * t).exp_m1() + a2 / q0_sq * decay)
    };
    Ok(q0.signum() * q_sq.sqrt())
}

/// `lim_{t→∞} |Q_t| = √max{0, (ω - τ/2) / (ω(1 + τ/2))}`.
pub fn steady_state_q(params: &OjaParams) -> f64 {
    if params.omega == 0.0 {
        return 0.0;
    }
    let ratio = (params.omega - params.tau / 2.0) / (params.omega * (1.0 + params.tau / 2.0));
    ratio.max(0.0).sqrt()
}

/// Integrates the overlap ODE with classical RK4 at step `dt`
/// (the last step is shortened to land on `t`).
pub fn ode_q(t: f64, q0: f64, params: &OjaParams, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("ODE step dt = {dt} must be > 0")));
    }
    if !(t >= 0.0) {
        return Err(Error::Config(format!("time t = {t} must be >= 0")));
    }
    let steps = (t / dt).ceil() as u64;
    let mut q = q0;
    let mut s = 0.0;
    for i in 0..steps {
        let h = if i + 1 == steps { t - s } else { dt };
        let k1 = params.rhs(q);
        let k2 = params.rhs(q + 0.5 * h * k1);
        let k3 = params.rhs(q + 0.5 * h * k2);
        let k4 = params.rhs(q + h * k3);
        q += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += h;
    }
    Ok(q)
}

/// `(t, Q_t)` on `[0, t_max]` at spacing `dt_out`.
pub fn closed_form_curve(q0: f64, params: &OjaParams, t_max: f64, dt_out: f64) -> Result<Vec<(f64, f64)>> {
    if !(dt_out > 0.0) || !(t_max >= 0.0) {
        return Err(Error::Config("curve needs t_max >= 0 and dt_out > 0".into()));
    }
    let n = (t_max / dt_out + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| {
            let t = i as f64 * dt_out;
            closed_form_q(t, q0, params).map(|q| (t, q))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn alphas() {
        let p = OjaParams::new(0.5, 1.0).unwrap();
        assert_relative_eq!(p.alpha1(), 0.625);
        assert_relative_eq!(p.alpha2(), 0.375);
        let p0 = OjaParams::new(0.5, 0.0).unwrap();
        assert_eq!(p0.alpha1(), 0.0);
    }

    #[test]
    fn initial_condition() {
        for (tau, omega) in [(0.5, 1.0), (2.0, 1.0)] {
            let p = OjaParams::new(tau, omega).unwrap();
            assert_relative_eq!(closed_form_q(0.0, 0.3, &p).unwrap(), 0.3, max_relative = 1e-15);
            assert_relative_eq!(closed_form_q(0.0, -0.3, &p).unwrap(), -0.3, max_relative = 1e-15);
        }
    }

    #[test]
    fn zero_overlap_rejected() {
        let p = OjaParams::new(0.5, 1.0).unwrap();
        assert_eq!(closed_form_q(1.0, 0.0, &p), Err(Error::ZeroInitialOverlap));
    }

    #[test]
    fn steady_state_values() {
        assert_relative_eq!(steady_state_q(&OjaParams::new(0.5, 1.0).unwrap()), 0.6f64.sqrt(), max_relative = 1e-15);
        assert_eq!(steady_state_q(&OjaParams::new(2.0, 1.0).unwrap()), 0.0);
        assert_eq!(steady_state_q(&OjaParams::new(3.0, 1.0).unwrap()), 0.0);
        assert_eq!(steady_state_q(&OjaParams::new(0.5, 0.0).unwrap()), 0.0);
        assert!((steady_state_q(&OjaParams::new(1e-9, 1.0).unwrap()) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ode_fixed_point_is_stationary() {
        let p = OjaParams::new(0.5, 1.0).unwrap();
        let qs = (p.alpha2() / p.alpha1()).sqrt();
        for t in [0.5, 5.0, 20.0] {
            assert!((ode_q(t, qs, &p, 1e-3).unwrap() - qs).abs() <= 1e-10);
        }
    }

    #[test]
    fn ode_pure_decay_without_signal() {
        let p = OjaParams::new(0.7, 0.0).unwrap();
        for t in [0.5, 3.0, 10.0] {
            let want = 0.4 * (-0.49 * t / 2.0f64).exp();
            assert!((ode_q(t, 0.4, &p, 1e-3).unwrap() - want).abs() <= 1e-8);
        }
    }

    #[test]
    fn branches_agree_near_boundary() {
        // α₂ = τ(ω - τ/2) small but above the switch
        let p_exact = OjaParams::new(2.0, 1.0).unwrap();
        let p_near = OjaParams::new(2.0, 1.0 + 1e-9).unwrap();
        for t in [0.5, 1.0, 5.0] {
            let a = closed_form_q(t, 0.5, &p_exact).unwrap();
            let b = closed_form_q(t, 0.5, &p_near).unwrap();
            assert!((a - b).abs() < 1e-6, "t = {t}: {a} vs {b}");
        }
    }

    #[test]
    fn curve_spacing() {
        let p = OjaParams::new(0.5, 1.0).unwrap();
        let c = closed_form_curve(0.1, &p, 1.0, 0.25).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c[4].0, 1.0);
    }
}
